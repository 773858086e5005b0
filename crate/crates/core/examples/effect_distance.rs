//! Channel ablation on a small trained model, then the effect distance
//! between two variants.

use samttt::harness::dataset::{gen_data, load_split, Split};
use samttt::harness::experiment::train_model;
use samttt::harness::ExperimentConfig;
use samttt::model::Variant;
use samttt::probe::{channel_ablation, effect_distance, ProbeMetric, ProbeSet};

fn main() -> samttt::Result<()> {
    let base = ExperimentConfig { image_size: 64, channels: 8, train_count: 32, test_count: 4, steps: 200, probe_count: 16, ..ExperimentConfig::default() };
    let dir = std::env::temp_dir().join(format!("samttt-probe-{}", base.hash()));
    gen_data(&base.dataset_config(), &dir)?;
    let train = load_split(&dir, Split::Train)?;
    let probe = ProbeSet::synthetic(&base.dataset_config(), base.probe_count)?;
    let channels: Vec<usize> = (0..base.channels).collect();

    let mut rows = Vec::new();
    for variant in [Variant::M1, Variant::M3] {
        let cfg = ExperimentConfig { variant, ..base };
        let (model, _) = train_model(&cfg, &train, |_| {})?;
        let deltas = channel_ablation(&model, &probe, &channels, ProbeMetric::SAlpha)?;
        println!("{variant}: {}", deltas.iter().map(|d| format!("{:+.1e}", d.delta)).collect::<Vec<_>>().join(" "));
        rows.push(deltas);
    }
    let rep = effect_distance(&rows[0], &rows[1])?;
    println!("spread M1 {:+.2e}, M3 {:+.2e}, effect distance {:+.2e}", rep.base_spread, rep.variant_spread, rep.effect_distance);
    Ok(())
}
