//! Camouflage samples at several contrasts. `cargo run --example synthetic_dataset [out_dir]`

use samttt::harness::dataset::{gen_data, generate_sample, DatasetConfig, Split};

fn main() -> samttt::Result<()> {
    for delta in [0.0, 0.04, 0.15] {
        let cfg = DatasetConfig { image_size: 128, delta, ..DatasetConfig::default() };
        let s = generate_sample(&cfg, Split::Train, 0)?;
        println!(
            "delta {delta:<4}: area {:.3}, object mean {:.4}, background mean {:.4}",
            s.area_fraction, s.fg_mean, s.bg_mean
        );
    }
    if let Some(out) = std::env::args().nth(1) {
        let cfg = DatasetConfig { image_size: 128, train_count: 8, test_count: 4, ..DatasetConfig::default() };
        println!("wrote {}", gen_data(&cfg, out.as_ref())?.display());
    }
    Ok(())
}
