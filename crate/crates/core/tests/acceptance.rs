//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any failure.

// Negated comparisons make NaN fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::gradcheck::check_variant;
use common::metrics_ref as oracle;
use common::random_pair;
use common::reference_tables::*;
use samttt::harness::dataset::{gen_data, load_split, Split};
use samttt::harness::experiment;
use samttt::harness::report::summarize;
use samttt::harness::ExperimentConfig;
use samttt::metrics::{self, evaluate, MaskPair, MetricReport};
use samttt::model::{Model, Variant};
use samttt::params::fingerprint;
use samttt::probe::{effect_distance, gain_table, ChannelDelta};
use samttt::rng::Prng;
use samttt::rsampc::{RsampcConfig, RsampcStack, MAX_DEPTH};
use samttt::tensor::{prng_fill, Init};
use samttt::ttt::{inner_grad, inner_loss, matvec, ttt_causality_probe, ttt_forward, TttConfig, TttState, ViewProjections};
use samttt::tvm::{haar_dwt2d, haar_idwt2d, seq_flatten, seq_unflatten};
use samttt::{Mode, Tensor};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random(shape: &[usize], rng: &mut Prng, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn ttt_gradient() -> Outcome {
    let start = Instant::now();
    let mut rng = Prng::new(2024);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let c = 1 + trial % 16;
        let w = random(&[c, c], &mut rng, 0.5);
        let x: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let g = inner_grad(&w, &x, &v);
        let h = 1e-5;
        for idx in 0..c * c {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp.data_mut()[idx] += h;
            wm.data_mut()[idx] -= h;
            let fd = (inner_loss(&wp, &x, &v) - inner_loss(&wm, &x, &v)) / (2.0 * h);
            let an = g.data()[idx];
            worst = worst.max(rel_err(fd, an));
        }
    }
    let took = start.elapsed();
    ensure!(worst < 1e-5, "worst relative error {worst:e}");
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(format!("100 instances, worst relative error {worst:.1e}, {:.0} ms", took.as_secs_f64() * 1e3))
}

fn ttt_contracts() -> Outcome {
    let mut rng = Prng::new(5);
    for c in [1, 4, 9, 16] {
        let proj = ViewProjections::<f64>::init(c, c as u64);
        let w0 = random(&[c, c], &mut rng, 0.3);
        let seq = random(&[13, c], &mut rng, 1.0);
        let cfg = TttConfig { inner_lr: 0.0, mini_batch: 4, ..TttConfig::new(c) };
        let out = ttt_forward(&seq, &proj, &cfg, &w0).unwrap();
        for t in 0..13 {
            let x = &seq.data()[t * c..(t + 1) * c];
            let want = matvec(w0.data(), &matvec(proj.theta_q.data(), x));
            ensure!(out.output.data()[t * c..(t + 1) * c] == want[..], "eta=0 output differs at C={c} t={t}");
        }
        ensure!(out.state.weight == w0, "eta=0 moved the hidden state");
    }
    let mut probes = 0;
    for trial in 0..50 {
        let c = 2 + trial % 6;
        let t_len = 3 + trial % 9;
        let proj = ViewProjections::<f64>::init(c, trial as u64);
        let seq = random(&[t_len, c], &mut rng, 1.0);
        let cfg = TttConfig { inner_lr: 0.02, mini_batch: 1 + trial % 4, residual: trial % 2 == 0, ..TttConfig::new(c) };
        let w0 = random(&[c, c], &mut rng, 0.1);
        for t in 0..t_len {
            ensure!(ttt_causality_probe(&seq, &proj, &cfg, &w0, t).unwrap(), "causality broken: trial {trial} t={t}");
            probes += 1;
        }
    }
    for t_len in 1..=20 {
        for b in 1..=7 {
            let c = 3;
            let seq = random(&[t_len, c], &mut rng, 1.0);
            let cfg = TttConfig { inner_lr: 0.01, mini_batch: b, ..TttConfig::new(c) };
            let out = ttt_forward(&seq, &ViewProjections::init(c, 1), &cfg, &Tensor::zeros([c, c])).unwrap();
            ensure!(out.updates == t_len.div_ceil(b), "T={t_len} b={b}: {} updates", out.updates);
        }
    }
    for _ in 0..200 {
        let c = 1 + rng.below(16);
        let mut st = TttState::new(random(&[c, c], &mut rng, 1.0));
        let x: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let eta = rng.next_f64() * 0.999 / (2.0 * x.iter().map(|a| a * a).sum::<f64>());
        let before = inner_loss(&st.weight, &x, &v);
        st.step(&x, &v, eta).unwrap();
        ensure!(inner_loss(&st.weight, &x, &v) <= before + 1e-12, "descent violated");
    }
    Ok(format!("static map bit-exact, {probes} causality probes, update counts, 200 descent steps"))
}

fn haar() -> Outcome {
    let mut rng = Prng::new(1);
    let (mut recon, mut energy) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let rows = 2 * (4 + rng.below(29));
        let cols = 2 * (4 + rng.below(29));
        let x: Tensor<f64> = prng_fill(&[1, 2, rows, cols], i, Init::Uniform(1.0));
        let bands = haar_dwt2d(&x).unwrap();
        recon = recon.max(haar_idwt2d(&bands).unwrap().max_abs_diff(&x).unwrap());
        energy = energy.max((x.sum_sq() - bands.energy()).abs() / x.sum_sq());
    }
    ensure!(recon < 1e-6, "reconstruction error {recon:e}");
    ensure!(energy < 1e-5, "energy error {energy:e}");
    for v in [0.0, 0.7, -3.25, 1e3] {
        let b = haar_dwt2d(&Tensor::<f32>::full([1, 3, 8, 6], v)).unwrap();
        ensure!(b.hh.data().iter().all(|&x| x == 0.0), "hh of constant {v} is nonzero");
    }
    Ok(format!("100 inputs, reconstruction {recon:.1e}, energy {energy:.1e}, constant hh exactly 0"))
}

fn flatten_round_trip() -> Outcome {
    let mut rng = Prng::new(2);
    for i in 0..200 {
        let shape = [1 + rng.below(3), 1 + rng.below(16), 1 + rng.below(33), 1 + rng.below(33)];
        let x: Tensor<f32> = prng_fill(&shape, i, Init::Uniform(5.0));
        let s = seq_flatten(&x).unwrap();
        let back = seq_unflatten(&s, shape[2], shape[3]).unwrap();
        ensure!(back.to_le_bytes() == x.to_le_bytes(), "round trip differs at {shape:?}");
        ensure!(seq_flatten(&back).unwrap().to_le_bytes() == s.to_le_bytes(), "re-flatten differs at {shape:?}");
    }
    Ok("200 shapes bit-exact".into())
}

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig {
        image_size: 32,
        channels: 8,
        steps: 3,
        batch_size: 2,
        train_count: 4,
        test_count: 3,
        probe_count: 2,
        ..ExperimentConfig::default()
    }
}

fn rsampc() -> Outcome {
    let s = RsampcStack::<f32>::init(RsampcConfig { depth: 4, channel_scale: Some(0.1), ..RsampcConfig::new(8, 5) }).unwrap();
    let before = fingerprint(&s.params());
    for i in 0..100 {
        s.apply(&prng_fill(&[2, 8, 6, 6], i, Init::Uniform(1.0)), Mode::Train).unwrap();
    }
    ensure!(fingerprint(&s.params()) == before, "weights moved across 100 applications");
    for i in 0..20 {
        let x: Tensor<f32> = prng_fill(&[2, 8, 4, 4], 500 + i, Init::Uniform(1.0));
        ensure!(s.apply(&x, Mode::Infer).unwrap().to_le_bytes() == x.to_le_bytes(), "infer is not the identity");
    }
    for d in 1..=MAX_DEPTH {
        for eps in [None, Some(0.1)] {
            let st = RsampcStack::<f32>::init(RsampcConfig { depth: d, channel_scale: eps, ..RsampcConfig::new(4, 9) }).unwrap();
            let x: Tensor<f32> = prng_fill(&[2, 4, 5, 7], d as u64, Init::Uniform(1.0));
            ensure!(st.apply(&x, Mode::Train).unwrap().shape() == x.shape(), "shape changed at d={d} eps={eps:?}");
        }
    }
    let cfg = ExperimentConfig { variant: Variant::M2, steps: 25, ..tiny_config() };
    let data = TempDir::new().unwrap();
    gen_data(&cfg.dataset_config(), data.path()).unwrap();
    let (trained, _) = experiment::train_model(&cfg, &load_split(data.path(), Split::Train).unwrap(), |_| {}).unwrap();
    let fresh = Model::<f32>::init(cfg.model_config()).unwrap();
    let stack_fp = |m: &Model<f32>| fingerprint(&m.rsampc().unwrap().params());
    ensure!(stack_fp(&trained) == stack_fp(&fresh), "stack moved during training");
    ensure!(fingerprint(&trained.frozen_params()) == fingerprint(&fresh.frozen_params()), "frozen partition moved");
    Ok("frozen over 100 applications and 25 training steps, infer identity, shapes for d 1..5 x eps".into())
}

fn bits3x3(code: usize) -> Vec<bool> {
    (0..9).map(|i| code >> i & 1 == 1).collect()
}

fn metrics_oracle() -> Outcome {
    let start = Instant::now();
    for p in 0..512 {
        let pred: Vec<f64> = bits3x3(p).iter().map(|&b| b as u8 as f64).collect();
        for g in 0..512 {
            let pair = MaskPair::new(3, 3, pred.clone(), bits3x3(g)).unwrap();
            ensure!(metrics::mae(&pair) == oracle::mae(&pair), "MAE p={p} g={g}");
            ensure!((metrics::f_mean(&pair) - oracle::f_mean(&pair)).abs() < 1e-15, "F_m p={p} g={g}");
        }
    }
    let exhaustive = start.elapsed();
    ensure!(exhaustive < Duration::from_secs(60), "exhaustive pass took {exhaustive:?}");

    let mut rng = Prng::new(7);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let pair = random_pair(&mut rng, 16, 16);
        let r = evaluate(&pair);
        let (em, ex) = oracle::e_measure(&pair);
        for (name, a, b) in [
            ("s_alpha", r.s_alpha, oracle::s_measure(&pair)),
            ("f_beta_w", r.f_beta_w, oracle::weighted_fbeta(&pair)),
            ("e_phi_mean", r.e_phi_mean, em),
            ("e_phi_max", r.e_phi_max, ex),
        ] {
            worst = worst.max((a - b).abs());
            ensure!((a - b).abs() < 1e-6, "case {case} {name}: {a} vs {b}");
        }
    }
    let mut rng = Prng::new(99);
    for i in 0..1000 {
        let (rows, cols) = (1 + rng.below(24), 1 + rng.below(24));
        let r = evaluate(&random_pair(&mut rng, rows, cols));
        for (k, v) in r.values().iter().enumerate() {
            ensure!((0.0..=1.0).contains(v), "fuzz {i}: {} = {v}", MetricReport::COLUMNS[k]);
        }
    }
    Ok(format!(
        "262144 exhaustive pairs in {:.1} s, 100 random pairs worst {worst:.1e}, 1000 fuzzed pairs in range",
        exhaustive.as_secs_f64()
    ))
}

fn probe_tables() -> Outcome {
    let row = |v: &[f64]| v.iter().enumerate().map(|(channel, &delta)| ChannelDelta { channel, delta }).collect::<Vec<_>>();
    let mut worst = 0.0f64;
    for (base, variant, gain, relative) in [
        (&RSAMPC_BASE, &RSAMPC_VARIANT, &RSAMPC_GAIN, &RSAMPC_RELATIVE),
        (&TVM_BASE, &TVM_VARIANT, &TVM_GAIN, &TVM_RELATIVE),
    ] {
        let t = gain_table(&row(base), &row(variant)).unwrap();
        for (i, r) in t.rows.iter().enumerate() {
            ensure!((r.gain - gain[i]).abs() < 1e-9, "gain {i}: {}", r.gain);
            let rel = r.relative.ok_or("relative gain undefined")?;
            worst = worst.max((rel - relative[i]).abs());
            ensure!((rel - relative[i]).abs() <= 0.01, "relative {i}: {rel} vs {}", relative[i]);
        }
        let d = effect_distance(&row(base), &row(variant)).unwrap();
        ensure!(d.effect_distance.is_finite(), "effect distance not finite");
    }
    Ok(format!("10 gains exact, worst relative-gain deviation {worst:.3} points"))
}

fn report_aggregation() -> Outcome {
    let mut lines = Vec::new();
    for (header, rows, expected, places) in [
        (MODULE_HEADER, module_lines(), &MODULE_PN[..], 3),
        (DEPTH_HEADER, depth_lines(), &DEPTH_PN[..], 4),
    ] {
        let groups = summarize(&[table(header, &rows)]).unwrap();
        for &(key, p, n) in expected {
            let g = groups.iter().find(|g| g.key == key).ok_or(format!("missing group {key}"))?;
            let (gp, gn) = (g.p.unwrap(), g.n.unwrap());
            ensure!(rounded(gp, places) == p && rounded(gn, 4) == n, "{key}: P {gp} N {gn}, want {p} {n}");
            if key == "M3" {
                lines.push(format!("M3 P={gp:.4} N={gn:.5}"));
            }
        }
    }
    Ok(format!("4 module and 7 depth settings reproduced, {}", lines.join(" ")))
}

fn smoke() -> Outcome {
    let cfg = ExperimentConfig::default();
    let root = TempDir::new().unwrap();
    let data = root.path().join("data");
    let start = Instant::now();
    gen_data(&cfg.dataset_config(), &data).unwrap();
    let gen = start.elapsed();
    let run = experiment::run_experiment(&cfg, "M3", &data, &root.path().join("run"), |_| {}).unwrap();
    let total = start.elapsed();
    ensure!(run.log.len() == 200, "{} steps logged", run.log.len());
    let first = run.log[0].loss;
    let tail = run.log[190..].iter().map(|l| l.loss).sum::<f64>() / 10.0;
    let reduction = 1.0 - tail / first;
    ensure!(reduction >= 0.5, "loss {first:.4} -> {tail:.4} ({:.1}% reduction)", 100.0 * reduction);
    ensure!(total < Duration::from_secs(300), "took {total:?}");

    let mut worst = 0.0f64;
    for (v, size) in [(Variant::M1, 8), (Variant::M2, 8), (Variant::M3, 8), (Variant::M3, 16)] {
        let r = check_variant(v, size);
        ensure!(r.worst < 1e-4, "{v} {size}x{size}: {}", r.worst_at);
        worst = worst.max(r.worst);
    }
    Ok(format!(
        "loss {first:.3} -> {tail:.3} ({:.0}% reduction), gen {:.1} s + train/eval {:.1} s, test S_alpha {:.3}, gradient check worst {worst:.1e}",
        100.0 * reduction,
        gen.as_secs_f64(),
        (total - gen).as_secs_f64(),
        run.report.s_alpha
    ))
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_commands(root: &Path) -> Result<(), String> {
    let tiny = [
        "--image-size", "32", "--channels", "8", "--steps", "4", "--batch-size", "2", "--train-count", "4",
        "--test-count", "3", "--probe-count", "2",
    ];
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let run = root.join("runs/m3");
    let commands: Vec<Vec<String>> = vec![
        vec!["gen-data".into()],
        vec!["train".into(), "--out".into(), s(run.clone())],
        vec!["ablate".into()],
        vec!["eval".into(), "--checkpoint".into(), s(run.join("model.sttc")), "--out".into(), s(root.join("eval"))],
        vec!["probe".into(), "deltas".into(), "--checkpoint".into(), s(run.join("model.sttc")), "--out".into(), s(root.join("d.csv"))],
        vec!["probe".into(), "gain".into(), "--base".into(), s(root.join("d.csv")), "--variant".into(), s(root.join("d.csv"))],
        vec!["report".into(), "--input".into(), s(run.join("metrics.csv")), "--input".into(), s(run.join("train_log.csv"))],
    ];
    for args in commands {
        let mut full = args.clone();
        if !matches!(args[0].as_str(), "probe" | "report" | "eval") {
            full.extend(tiny.iter().map(|a| a.to_string()));
        }
        let o = Command::new(env!("CARGO_BIN_EXE_samttt")).args(&full).env("SAMTTT_OUT", root).output().map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "{} failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr));
    }
    Ok(())
}

fn determinism() -> Outcome {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_commands(a.path())?;
    run_commands(b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    ensure!(ta.len() == tb.len(), "{} vs {} files", ta.len(), tb.len());
    for ((pa, da), (pb, db)) in ta.iter().zip(&tb) {
        ensure!(pa == pb, "{} vs {}", pa.display(), pb.display());
        ensure!(da == db, "{} differs", pa.display());
    }
    let count = |ext: &str| ta.iter().filter(|(p, _)| p.extension().is_some_and(|e| e == ext)).count();
    Ok(format!(
        "{} artifacts byte-identical across two runs of every command ({} checkpoints, {} csv, {} masks)",
        ta.len(),
        count("sttc"),
        count("csv"),
        count("pgm")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("ttt-gradient", ttt_gradient),
        ("ttt-contracts", ttt_contracts),
        ("haar-dwt", haar),
        ("flatten-round-trip", flatten_round_trip),
        ("rsampc", rsampc),
        ("metrics-oracle", metrics_oracle),
        ("probe-gain-tables", probe_tables),
        ("report-aggregation", report_aggregation),
        ("end-to-end-smoke", smoke),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
