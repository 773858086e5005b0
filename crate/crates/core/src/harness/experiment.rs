//! Training runs, evaluation and the depth ablation sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::checkpoint;
use super::config::ExperimentConfig;
use super::dataset::{load_split, Sample, Split};
use super::netpbm::Image8;
use super::report::positive_negative;
use crate::error::{config_err, Error, Result};
use crate::metrics::{aggregate, evaluate, MaskPair, MetricReport};
use crate::model::{BoxPrompt, FrozenFeatures, Model, Optimizer, TrainLog, Variant};
use crate::rng::Prng;
use crate::rsampc::Mode;
use crate::tensor::Tensor;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn box_of(mask: &Tensor<f32>) -> BoxPrompt {
    let (_, _, r, c) = mask.dims4().expect("masks are rank 4");
    BoxPrompt::from_mask(mask.data(), r, c).unwrap_or(BoxPrompt::FULL)
}

/// Train a freshly initialised model. Frozen features of every training
/// image are computed once up front; batches are drawn by reshuffling the
/// training set each epoch. `on_step` sees every log entry as it happens.
pub fn train_model(
    cfg: &ExperimentConfig,
    train: &[Sample],
    mut on_step: impl FnMut(&TrainLog),
) -> Result<(Model<f32>, Vec<TrainLog>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(config_err!("training split is empty"));
    }
    let mut model = Model::<f32>::init(cfg.model_config())?;
    let feats: Vec<FrozenFeatures<f32>> = train
        .par_iter()
        .map(|s| FrozenFeatures::compute(&model, &s.image, Mode::Train))
        .collect::<Result<_>>()?;
    let boxes: Vec<BoxPrompt> = train.iter().map(|s| box_of(&s.mask)).collect();

    let bs = cfg.batch_size.min(train.len());
    let mut rng = Prng::derive(cfg.model_seed, "batches");
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cursor + bs > order.len() {
            order = (0..train.len()).collect();
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let batch_feats = FrozenFeatures::concat(&idx.iter().map(|&i| &feats[i]).collect::<Vec<_>>())?;
        let masks = Tensor::concat_batch(&idx.iter().map(|&i| &train[i].mask).collect::<Vec<_>>())?;
        let batch_boxes: Vec<BoxPrompt> = idx.iter().map(|&i| boxes[i]).collect();
        let out = model.step_frozen(&batch_feats, &masks, &batch_boxes, &mut opt)?;
        let entry = TrainLog {
            step,
            loss: out.loss as f64,
            bce: out.bce as f64,
            iou: out.iou as f64,
        };
        on_step(&entry);
        log.push(entry);
    }
    Ok((model, log))
}

/// 8-bit probability masks for every sample, prompted with the box of its
/// ground truth.
pub fn predict(model: &Model<f32>, samples: &[Sample]) -> Result<Vec<Image8>> {
    samples
        .par_iter()
        .map(|s| {
            let logits = model.forward(&s.image, &[box_of(&s.mask)], Mode::Infer)?;
            let (_, _, r, c) = logits.dims4()?;
            let data = logits
                .data()
                .iter()
                .map(|&z| (255.0 / (1.0 + (-(z as f64)).exp())).round() as u8)
                .collect();
            Image8::new(c, r, 1, data)
        })
        .collect()
}

fn gt_u8(mask: &Tensor<f32>) -> Vec<u8> {
    mask.data().iter().map(|&v| if v > 0.5 { 255 } else { 0 }).collect()
}

pub fn score_predictions(preds: &[Image8], samples: &[Sample]) -> Result<Vec<MetricReport>> {
    if preds.len() != samples.len() {
        return Err(config_err!("{} predictions for {} samples", preds.len(), samples.len()));
    }
    preds
        .par_iter()
        .zip(samples)
        .map(|(p, s)| {
            let (_, _, r, c) = s.mask.dims4()?;
            if (p.height, p.width, p.channels) != (r, c, 1) {
                return Err(config_err!("prediction for {} is {}x{}x{}, mask is {r}x{c}", s.id, p.height, p.width, p.channels));
            }
            Ok(evaluate(&MaskPair::from_u8(r, c, &p.data, &gt_u8(&s.mask))?))
        })
        .collect()
}

fn metric_fields(r: &MetricReport) -> String {
    let cells: Vec<(&str, f64)> = MetricReport::COLUMNS.iter().copied().zip(r.values()).collect();
    let (p, n) = positive_negative(&cells);
    let mut out = String::new();
    for v in r.values() {
        write!(out, ",{v:.6}").expect("writing to a String");
    }
    write!(out, ",{:.6},{:.6}", p.unwrap_or(0.0), n.unwrap_or(0.0)).expect("writing to a String");
    out
}

fn metric_header() -> String {
    format!(",{},P,N", MetricReport::COLUMNS.join(","))
}

pub fn summary_header() -> String {
    format!("setting,variant,split,images,config_hash{}\n", metric_header())
}

pub fn summary_row(setting: &str, cfg: &ExperimentConfig, images: usize, r: &MetricReport) -> String {
    format!("{setting},{},test,{images},{}{}\n", cfg.variant, cfg.hash(), metric_fields(r))
}

pub fn per_image_csv(setting: &str, cfg: &ExperimentConfig, samples: &[Sample], reports: &[MetricReport]) -> String {
    let mut out = format!("id,setting,config_hash{}\n", metric_header());
    for (s, r) in samples.iter().zip(reports) {
        writeln!(out, "{},{setting},{}{}", s.id, cfg.hash(), metric_fields(r)).expect("writing to a String");
    }
    out
}

pub fn train_log_csv(log: &[TrainLog]) -> String {
    let mut out = String::from("step,loss,bce,iou\n");
    for l in log {
        writeln!(out, "{},{:.6},{:.6},{:.6}", l.step, l.loss, l.bce, l.iou).expect("writing to a String");
    }
    out
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub setting: String,
    pub config: ExperimentConfig,
    pub log: Vec<TrainLog>,
    pub per_image: Vec<MetricReport>,
    pub report: MetricReport,
    pub out_dir: PathBuf,
}

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.sttc";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PER_IMAGE_FILE: &str = "per_image.csv";
pub const PREDICTIONS_DIR: &str = "predictions";

fn write_eval(
    out_dir: &Path,
    setting: &str,
    cfg: &ExperimentConfig,
    test: &[Sample],
    preds: &[Image8],
) -> Result<(Vec<MetricReport>, MetricReport)> {
    let per_image = score_predictions(preds, test)?;
    let report = aggregate(&per_image).ok_or_else(|| config_err!("test split is empty"))?;
    let pred_dir = out_dir.join(PREDICTIONS_DIR);
    create_dir(&pred_dir)?;
    for (s, p) in test.iter().zip(preds) {
        p.save(&pred_dir.join(format!("{}.pgm", s.id)))?;
    }
    write_file(&out_dir.join(PER_IMAGE_FILE), per_image_csv(setting, cfg, test, &per_image))?;
    let summary = summary_header() + &summary_row(setting, cfg, test.len(), &report);
    write_file(&out_dir.join(METRICS_FILE), summary)?;
    Ok((per_image, report))
}

/// Train `cfg.variant` on `data/train`, evaluate on `data/test`, and write
/// the config, checkpoint, training log, metric CSVs and predicted masks
/// under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    setting: &str,
    data: &Path,
    out_dir: &Path,
    on_step: impl FnMut(&TrainLog),
) -> Result<RunOutput> {
    let train = load_split(data, Split::Train)?;
    let test = load_split(data, Split::Test)?;
    create_dir(out_dir)?;
    cfg.save(&out_dir.join(CONFIG_FILE))?;
    let (model, log) = train_model(cfg, &train, on_step)?;
    checkpoint::save(&model, &out_dir.join(CHECKPOINT_FILE))?;
    write_file(&out_dir.join(TRAIN_LOG_FILE), train_log_csv(&log))?;
    let preds = predict(&model, &test)?;
    let (per_image, report) = write_eval(out_dir, setting, cfg, &test, &preds)?;
    Ok(RunOutput {
        setting: setting.to_string(),
        config: *cfg,
        log,
        per_image,
        report,
        out_dir: out_dir.to_path_buf(),
    })
}

pub fn load_model(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<Model<f32>> {
    let mut model = Model::init(cfg.model_config())?;
    checkpoint::restore(&mut model, &checkpoint::load(checkpoint_path)?)?;
    Ok(model)
}

/// Evaluate a saved checkpoint on the test split.
pub fn eval_checkpoint(cfg: &ExperimentConfig, checkpoint_path: &Path, data: &Path, out_dir: &Path) -> Result<MetricReport> {
    let model = load_model(cfg, checkpoint_path)?;
    let test = load_split(data, Split::Test)?;
    create_dir(out_dir)?;
    let preds = predict(&model, &test)?;
    Ok(write_eval(out_dir, &cfg.variant.to_string(), cfg, &test, &preds)?.1)
}

/// Score previously written `<id>.pgm` predictions against the test split.
pub fn eval_pred_dir(pred_dir: &Path, data: &Path) -> Result<(Vec<MetricReport>, MetricReport)> {
    let test = load_split(data, Split::Test)?;
    let preds = test
        .iter()
        .map(|s| Image8::load(&pred_dir.join(format!("{}.pgm", s.id))))
        .collect::<Result<Vec<_>>>()?;
    let per_image = score_predictions(&preds, &test)?;
    let report = aggregate(&per_image).ok_or_else(|| config_err!("test split is empty"))?;
    Ok((per_image, report))
}

/// The seven depth-ablation settings: `L0` (no perturbation), `L1`–`L5`
/// (perturbation stack of that depth) and `L4+eps` (depth 4 with channel
/// scaling). All share `base`'s other fields and use no test-time route.
pub fn ablation_settings(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut out = vec![("L0".to_string(), ExperimentConfig { variant: Variant::M1, rsampc_eps: None, ..*base })];
    for d in 1..=crate::rsampc::MAX_DEPTH {
        out.push((format!("L{d}"), ExperimentConfig { variant: Variant::M2, rsampc_depth: d, rsampc_eps: None, ..*base }));
    }
    let eps = base.rsampc_eps.unwrap_or(crate::rsampc::DEFAULT_SCALE_SPREAD);
    out.push(("L4+eps".into(), ExperimentConfig { variant: Variant::M2, rsampc_depth: 4, rsampc_eps: Some(eps), ..*base }));
    out
}

pub const ABLATION_FILE: &str = "ablation.csv";

/// Run every ablation setting into `out_dir/<setting>/` and collect one
/// summary row per setting in `out_dir/ablation.csv`.
pub fn ablate(
    base: &ExperimentConfig,
    data: &Path,
    out_dir: &Path,
    mut on_step: impl FnMut(&str, &TrainLog),
) -> Result<Vec<RunOutput>> {
    create_dir(out_dir)?;
    let mut csv = summary_header();
    let mut runs = Vec::new();
    for (name, cfg) in ablation_settings(base) {
        let run = run_experiment(&cfg, &name, data, &out_dir.join(&name), |l| on_step(&name, l))?;
        csv.push_str(&summary_row(&name, &cfg, run.per_image.len(), &run.report));
        runs.push(run);
    }
    write_file(&out_dir.join(ABLATION_FILE), csv)?;
    Ok(runs)
}
