use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use samttt::harness::dataset::gen_data;
use samttt::harness::experiment::{self, CONFIG_FILE};
use samttt::harness::{report, ExperimentConfig};
use samttt::metrics::MetricReport;
use samttt::model::TrainLog;
use samttt::probe::{self, ProbeMetric, ProbeSet};
use samttt::{Error, Result};

/// Output root used when a path flag is omitted.
const OUT_ENV: &str = "SAMTTT_OUT";

#[derive(Parser)]
#[command(name = "samttt", version, about = "Synthetic camouflage experiments: data, training, evaluation, ablation, probes, reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic dataset.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a variant, evaluate it on the test split and save a checkpoint.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint, or a directory of predicted masks, on the test split.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, conflicts_with = "pred_dir")]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "checkpoint")]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Depth ablation sweep L0..L5 and L4+eps.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Channel-ablation deltas and gain tables.
    Probe {
        #[command(subcommand)]
        command: ProbeCommand,
    },
    /// Aggregate metric CSVs into P/N summaries and SVG plots.
    Report {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Zero each embedding channel of a trained model and record the metric drop.
    Deltas {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated embedding channels to zero; all channels when omitted.
        #[arg(long = "ablate", value_delimiter = ',')]
        ablate: Vec<usize>,
        #[arg(long, default_value = "s_alpha")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: Box<ConfigArgs>,
    },
    /// Gains, relative gains and effect distance between two deltas CSVs.
    Gain {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        variant: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    rsampc_depth: Option<usize>,
    /// Channel-scaling spread, or `none`.
    #[arg(long)]
    rsampc_eps: Option<String>,
    #[arg(long)]
    ttt_eta: Option<f64>,
    #[arg(long)]
    ttt_mini_batch: Option<usize>,
    #[arg(long)]
    ttt_residual: Option<bool>,
    #[arg(long)]
    subbands: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    probe_count: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self, fallback: Option<&Path>) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, fallback) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(path)) if path.exists() => ExperimentConfig::load(path)?,
            _ => ExperimentConfig::default(),
        };
        let flags: [(&str, Option<String>); 19] = [
            ("variant", self.variant.clone()),
            ("image_size", self.image_size.map(|v| v.to_string())),
            ("channels", self.channels.map(|v| v.to_string())),
            ("rsampc_depth", self.rsampc_depth.map(|v| v.to_string())),
            ("rsampc_eps", self.rsampc_eps.clone()),
            ("ttt_eta", self.ttt_eta.map(|v| v.to_string())),
            ("ttt_mini_batch", self.ttt_mini_batch.map(|v| v.to_string())),
            ("ttt_residual", self.ttt_residual.map(|v| v.to_string())),
            ("subbands", self.subbands.clone()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("data_seed", self.data_seed.map(|v| v.to_string())),
            ("model_seed", self.model_seed.map(|v| v.to_string())),
            ("train_count", self.train_count.map(|v| v.to_string())),
            ("test_count", self.test_count.map(|v| v.to_string())),
            ("delta", self.delta.map(|v| v.to_string())),
            ("probe_count", self.probe_count.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn or_root(path: Option<PathBuf>, rel: &str) -> PathBuf {
    path.unwrap_or_else(|| out_root().join(rel))
}

fn print_report(label: &str, r: &MetricReport) {
    let cells: Vec<String> = MetricReport::COLUMNS
        .iter()
        .zip(r.values())
        .map(|(k, v)| format!("{k}={v:.4}"))
        .collect();
    println!("{label}: {}", cells.join(" "));
}

fn progress(prefix: &str) -> impl FnMut(&TrainLog) + '_ {
    move |l| {
        if l.step % 20 == 0 {
            eprintln!("{prefix}step {:>5} loss {:.4} (bce {:.4}, iou {:.4})", l.step, l.loss, l.bce, l.iou);
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { out, cfg } => {
            let cfg = cfg.resolve(None)?;
            let out = or_root(out, "data");
            let meta = gen_data(&cfg.dataset_config(), &out)?;
            println!("wrote {}", meta.display());
        }
        Command::Train { data, out, cfg } => {
            let cfg = cfg.resolve(None)?;
            let out = or_root(out, &format!("runs/{}-{}", cfg.variant, cfg.hash()));
            let setting = cfg.variant.to_string();
            let run = experiment::run_experiment(&cfg, &setting, &or_root(data, "data"), &out, progress(""))?;
            if let (Some(first), Some(last)) = (run.log.first(), run.log.last()) {
                println!("loss {:.4} -> {:.4} over {} steps", first.loss, last.loss, run.log.len());
            }
            print_report(&setting, &run.report);
            println!("wrote {}", out.display());
        }
        Command::Eval { data, checkpoint, pred_dir, out, cfg } => {
            let data = or_root(data, "data");
            if let Some(ck) = checkpoint {
                let cfg = cfg.resolve(ck.parent().map(|d| d.join(CONFIG_FILE)).as_deref())?;
                let out = or_root(out, &format!("eval/{}-{}", cfg.variant, cfg.hash()));
                let r = experiment::eval_checkpoint(&cfg, &ck, &data, &out)?;
                print_report(&cfg.variant.to_string(), &r);
                println!("wrote {}", out.display());
            } else {
                let dir = pred_dir.expect("clap requires --pred-dir without --checkpoint");
                let (_, r) = experiment::eval_pred_dir(&dir, &data)?;
                print_report(&dir.display().to_string(), &r);
            }
        }
        Command::Ablate { data, out, cfg } => {
            let cfg = cfg.resolve(None)?;
            let out = or_root(out, &format!("ablate-{}", cfg.hash()));
            let runs = experiment::ablate(&cfg, &or_root(data, "data"), &out, |name, l| {
                if l.step % 50 == 0 {
                    eprintln!("[{name}] step {:>5} loss {:.4}", l.step, l.loss);
                }
            })?;
            for r in &runs {
                print_report(&r.setting, &r.report);
            }
            println!("wrote {}", out.join(experiment::ABLATION_FILE).display());
        }
        Command::Probe { command } => match command {
            ProbeCommand::Deltas { checkpoint, ablate, metric, out, cfg } => {
                let cfg = cfg.resolve(checkpoint.parent().map(|d| d.join(CONFIG_FILE)).as_deref())?;
                let metric: ProbeMetric = metric.parse()?;
                let model = experiment::load_model(&cfg, &checkpoint)?;
                let probe_set = ProbeSet::synthetic(&cfg.dataset_config(), cfg.probe_count)?;
                let channels = if ablate.is_empty() { (0..cfg.channels).collect() } else { ablate };
                let deltas = probe::channel_ablation(&model, &probe_set, &channels, metric)?;
                let out = or_root(out, &format!("probe/deltas-{}-{}.csv", cfg.variant, cfg.hash()));
                write(&out, &probe::deltas_to_csv(&deltas))?;
                println!("wrote {}", out.display());
            }
            ProbeCommand::Gain { base, variant, out } => {
                let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.into(), source: e });
                let base = probe::deltas_from_csv(&read(&base)?)?;
                let variant = probe::deltas_from_csv(&read(&variant)?)?;
                let rep = probe::effect_distance(&base, &variant)?;
                let out = or_root(out, "probe/gain.csv");
                write(&out, &probe::gain_table_to_csv(&rep.gains))?;
                println!(
                    "spread base {:.6e} variant {:.6e} effect_distance {:.6e}",
                    rep.base_spread, rep.variant_spread, rep.effect_distance
                );
                println!("wrote {}", out.display());
            }
        },
        Command::Report { inputs, out } => {
            for path in report::report(&inputs, &or_root(out, "report"))? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
            eprintln!("error: kind={} msg=\"{msg}\"", e.kind());
            ExitCode::from(2)
        }
    }
}
