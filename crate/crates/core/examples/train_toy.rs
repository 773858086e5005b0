//! Train M3 on a small synthetic set and score it. `cargo run --release --example train_toy [steps]`

use samttt::harness::dataset::{gen_data, load_split, Split};
use samttt::harness::experiment::{predict, score_predictions, train_model};
use samttt::harness::ExperimentConfig;
use samttt::metrics::{aggregate, MetricReport};

fn main() -> samttt::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cfg = ExperimentConfig { image_size: 64, channels: 16, train_count: 32, test_count: 8, steps, ..ExperimentConfig::default() };
    let dir = std::env::temp_dir().join(format!("samttt-toy-{}", cfg.hash()));
    gen_data(&cfg.dataset_config(), &dir)?;
    let (model, log) = train_model(&cfg, &load_split(&dir, Split::Train)?, |l| {
        if l.step % 20 == 0 {
            println!("step {:>4} loss {:.4}", l.step, l.loss);
        }
    })?;
    if let (Some(a), Some(b)) = (log.first(), log.last()) {
        println!("loss {:.4} -> {:.4}", a.loss, b.loss);
    }
    let test = load_split(&dir, Split::Test)?;
    let report = aggregate(&score_predictions(&predict(&model, &test)?, &test)?).expect("non-empty test split");
    for (k, v) in MetricReport::COLUMNS.iter().zip(report.values()) {
        println!("{k:>10} {v:.4}");
    }
    Ok(())
}
