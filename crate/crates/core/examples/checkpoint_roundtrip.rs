//! Save, inspect and restore a model checkpoint.

use samttt::harness::checkpoint;
use samttt::model::{Model, ModelConfig, Variant};

fn main() -> samttt::Result<()> {
    let model = Model::<f32>::init(ModelConfig::new(Variant::M3, 32, 8))?;
    let path = std::env::temp_dir().join("samttt-example.sttc");
    checkpoint::save(&model, &path)?;
    let entries = checkpoint::load(&path)?;
    for e in &entries {
        println!("{:<28} {:<8} {:?}", e.name, if e.frozen { "frozen" } else { "train" }, e.tensor.shape());
    }
    let mut restored = Model::<f32>::init(ModelConfig { seed: 1, ..ModelConfig::new(Variant::M3, 32, 8) })?;
    checkpoint::restore(&mut restored, &entries)?;
    println!("bytes {}, identical after restore: {}", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), checkpoint::encode(&restored.params()) == checkpoint::encode(&model.params()));
    Ok(())
}
