use samttt::rng::Prng;
use samttt::tensor::Tensor;
use samttt::ttt::{
    inner_grad, inner_loss, matvec, ttt_backward, ttt_causality_probe, ttt_forward, TttConfig,
    TttState, ViewProjections,
};

fn random(shape: &[usize], rng: &mut Prng, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn inner_gradient_matches_central_differences() {
    let mut rng = Prng::new(2024);
    for trial in 0..100 {
        let c = 1 + trial % 16;
        let w = random(&[c, c], &mut rng, 0.5);
        let x: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let g = inner_grad(&w, &x, &v);
        let h = 1e-5;
        for idx in 0..c * c {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp.data_mut()[idx] += h;
            wm.data_mut()[idx] -= h;
            let fd = (inner_loss(&wp, &x, &v) - inner_loss(&wm, &x, &v)) / (2.0 * h);
            let an = g.data()[idx];
            // Loss is quadratic in W, so central differences are exact up to rounding.
            assert!(rel_err(fd, an) < 1e-5 || (fd - an).abs() < 1e-8, "trial {trial} idx {idx}: {fd} vs {an}");
        }
    }
}

#[test]
fn descent_for_admissible_step() {
    let mut rng = Prng::new(77);
    for _ in 0..200 {
        let c = 1 + rng.below(16);
        let mut st = TttState::new(random(&[c, c], &mut rng, 1.0));
        let x: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let norm2: f64 = x.iter().map(|a| a * a).sum();
        let eta = rng.next_f64() * 0.999 / (2.0 * norm2);
        let before = inner_loss(&st.weight, &x, &v);
        st.step(&x, &v, eta).unwrap();
        assert!(inner_loss(&st.weight, &x, &v) <= before + 1e-12);
    }
}

#[test]
fn zero_eta_is_static_map() {
    let mut rng = Prng::new(5);
    let c = 6;
    let proj = ViewProjections::<f64>::init(c, 9);
    let w0 = random(&[c, c], &mut rng, 0.3);
    let seq = random(&[11, c], &mut rng, 1.0);
    let cfg = TttConfig { inner_lr: 0.0, mini_batch: 3, ..TttConfig::new(c) };
    let out = ttt_forward(&seq, &proj, &cfg, &w0).unwrap();
    for t in 0..11 {
        let x = &seq.data()[t * c..(t + 1) * c];
        let want = matvec(w0.data(), &matvec(proj.theta_q.data(), x));
        assert_eq!(&out.output.data()[t * c..(t + 1) * c], &want[..]);
    }
    assert_eq!(out.state.weight, w0);
}

#[test]
fn single_token_is_step_then_matmul() {
    let mut rng = Prng::new(6);
    let c = 5;
    let proj = ViewProjections::<f64>::init(c, 3);
    let seq = random(&[1, c], &mut rng, 1.0);
    let cfg = TttConfig { inner_lr: 0.05, ..TttConfig::new(c) };
    let w0 = random(&[c, c], &mut rng, 0.2);
    let out = ttt_forward(&seq, &proj, &cfg, &w0).unwrap();

    let x = seq.data();
    let mut st = TttState::new(w0.clone());
    st.step(&matvec(proj.theta_k.data(), x), &matvec(proj.theta_v.data(), x), 0.05).unwrap();
    let want = matvec(st.weight.data(), &matvec(proj.theta_q.data(), x));
    for (a, b) in out.output.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(out.state.weight.max_abs_diff(&st.weight).unwrap() < 1e-12);
}

#[test]
fn mini_batch_one_is_sequential_and_differs_from_full_batch() {
    let mut rng = Prng::new(8);
    let c = 4;
    let proj = ViewProjections::<f64>::init(c, 4);
    let seq = random(&[8, c], &mut rng, 1.0);
    let w0 = Tensor::zeros([c, c]);
    let eta = 0.05;

    let seq_cfg = TttConfig { inner_lr: eta, mini_batch: 1, ..TttConfig::new(c) };
    let full_cfg = TttConfig { mini_batch: 8, ..seq_cfg };
    let one = ttt_forward(&seq, &proj, &seq_cfg, &w0).unwrap().output;
    let full = ttt_forward(&seq, &proj, &full_cfg, &w0).unwrap().output;
    assert!(one.max_abs_diff(&full).unwrap() > 1e-6);

    // Sequential unroll with explicit single-token steps.
    let mut st = TttState::new(w0.clone());
    for t in 0..8 {
        let x = &seq.data()[t * c..(t + 1) * c];
        st.step(&matvec(proj.theta_k.data(), x), &matvec(proj.theta_v.data(), x), eta).unwrap();
        let z = matvec(st.weight.data(), &matvec(proj.theta_q.data(), x));
        for (a, b) in one.data()[t * c..(t + 1) * c].iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    let frozen = TttConfig { inner_lr: 0.0, ..full_cfg };
    let a = ttt_forward(&seq, &proj, &frozen, &w0).unwrap().output;
    let b = ttt_forward(&seq, &proj, &TttConfig { mini_batch: 1, ..frozen }, &w0).unwrap().output;
    assert_eq!(a, b);
}

#[test]
fn causality() {
    let mut rng = Prng::new(10);
    for trial in 0..50 {
        let c = 2 + trial % 6;
        let t_len = 3 + trial % 9;
        let proj = ViewProjections::<f64>::init(c, trial as u64);
        let seq = random(&[t_len, c], &mut rng, 1.0);
        let cfg = TttConfig { inner_lr: 0.02, mini_batch: 1 + trial % 4, residual: trial % 2 == 0, ..TttConfig::new(c) };
        let w0 = random(&[c, c], &mut rng, 0.1);
        for t in 0..t_len {
            assert!(ttt_causality_probe(&seq, &proj, &cfg, &w0, t).unwrap());
        }
    }
}

#[test]
fn first_token_influences_later_outputs() {
    let mut rng = Prng::new(12);
    let c = 4;
    let proj = ViewProjections::<f64>::init(c, 1);
    let seq = random(&[6, c], &mut rng, 1.0);
    let cfg = TttConfig { inner_lr: 0.05, mini_batch: 1, ..TttConfig::new(c) };
    let w0 = Tensor::zeros([c, c]);
    assert!(ttt_causality_probe(&seq, &proj, &cfg, &w0, 0).unwrap());
    let base = ttt_forward(&seq, &proj, &cfg, &w0).unwrap().output;
    let mut bumped = seq.clone();
    bumped.data_mut()[..c].iter_mut().for_each(|v| *v += 1.0);
    let moved = ttt_forward(&bumped, &proj, &cfg, &w0).unwrap().output;
    assert!(base.data()[c..].iter().zip(&moved.data()[c..]).any(|(a, b)| a != b));
}

#[test]
fn zero_eta_perturbation_is_local() {
    let mut rng = Prng::new(13);
    let c = 3;
    let proj = ViewProjections::<f64>::init(c, 2);
    let seq = random(&[7, c], &mut rng, 1.0);
    let cfg = TttConfig { inner_lr: 0.0, mini_batch: 2, ..TttConfig::new(c) };
    let w0 = random(&[c, c], &mut rng, 0.5);
    let base = ttt_forward(&seq, &proj, &cfg, &w0).unwrap().output;
    for t in 0..7 {
        let mut bumped = seq.clone();
        bumped.data_mut()[t * c..(t + 1) * c].iter_mut().for_each(|v| *v += 1.0);
        let moved = ttt_forward(&bumped, &proj, &cfg, &w0).unwrap().output;
        for s in 0..7 {
            let same = base.data()[s * c..(s + 1) * c] == moved.data()[s * c..(s + 1) * c];
            assert_eq!(same, s != t, "token {s} after perturbing {t}");
        }
    }
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = Prng::new(31);
    for (trial, &(t_len, b, residual)) in [(5, 1, false), (7, 3, false), (6, 6, true), (9, 2, true), (1, 4, false)]
        .iter()
        .enumerate()
    {
        let c = 4;
        let proj = ViewProjections::<f64>::init(c, trial as u64 + 100);
        let seq = random(&[t_len, c], &mut rng, 1.0);
        let w0 = random(&[c, c], &mut rng, 0.2);
        let cfg = TttConfig { inner_lr: 0.03, mini_batch: b, residual, ..TttConfig::new(c) };
        let probe = random(&[t_len, c], &mut rng, 1.0);
        let loss = |s: &Tensor<f64>, p: &ViewProjections<f64>, w: &Tensor<f64>| -> f64 {
            let out = ttt_forward(s, p, &cfg, w).unwrap().output;
            out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let grads = ttt_backward(&seq, &proj, &cfg, &w0, &probe).unwrap();
        let h = 1e-6;
        let check = |an: f64, fd: f64, what: &str| {
            assert!(rel_err(fd, an) < 1e-5 || (fd - an).abs() < 1e-9, "{what}: fd {fd} vs analytic {an}");
        };
        for which in 0..3 {
            for idx in 0..c * c {
                let mut pp = proj.clone();
                let mut pm = proj.clone();
                let (tp, tm, an) = match which {
                    0 => (&mut pp.theta_k, &mut pm.theta_k, grads.theta_k.data()[idx]),
                    1 => (&mut pp.theta_v, &mut pm.theta_v, grads.theta_v.data()[idx]),
                    _ => (&mut pp.theta_q, &mut pm.theta_q, grads.theta_q.data()[idx]),
                };
                tp.data_mut()[idx] += h;
                tm.data_mut()[idx] -= h;
                let fd = (loss(&seq, &pp, &w0) - loss(&seq, &pm, &w0)) / (2.0 * h);
                check(an, fd, &format!("trial {trial} theta{which}[{idx}]"));
            }
        }
        for idx in 0..t_len * c {
            let mut sp = seq.clone();
            let mut sm = seq.clone();
            sp.data_mut()[idx] += h;
            sm.data_mut()[idx] -= h;
            let fd = (loss(&sp, &proj, &w0) - loss(&sm, &proj, &w0)) / (2.0 * h);
            check(grads.input.data()[idx], fd, &format!("trial {trial} x[{idx}]"));
        }
        for idx in 0..c * c {
            let mut wp = w0.clone();
            let mut wm = w0.clone();
            wp.data_mut()[idx] += h;
            wm.data_mut()[idx] -= h;
            let fd = (loss(&seq, &proj, &wp) - loss(&seq, &proj, &wm)) / (2.0 * h);
            check(grads.w0.data()[idx], fd, &format!("trial {trial} w0[{idx}]"));
        }
    }
}
