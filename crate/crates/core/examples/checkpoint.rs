//! Saves a model to the binary checkpoint format, reloads it and confirms the
//! predictions are bit-for-bit unchanged.
//!
//! ```bash
//! cargo run -p qacnn --example checkpoint -- [path]
//! ```

use std::path::PathBuf;

use qacnn::checkpoint;
use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::{Model, ModelConfig, Variant};

fn main() -> qacnn::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("qacnn-example.ckpt"));
    let config = ModelConfig::tiny_plus();
    let model = Model::<f32>::init(config.clone(), Variant::WordAttentionOnly, 42)?;
    checkpoint::save(&model, &path)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("wrote {} ({bytes} bytes, {} parameters)", path.display(), model.params.count());
    for (name, t) in model.params.entries() {
        println!("  {name:<28} {:?}", t.shape());
    }

    let loaded = checkpoint::load(&path)?;
    assert_eq!(loaded, model);
    let synth = generate_synthetic(20, &SyntheticConfig::for_model(&config), 0)?;
    for example in synth.corpus.encode(&config, &synth.embeddings)? {
        let a = model.predict(&example, &synth.embeddings)?;
        let b = loaded.predict(&example, &synth.embeddings)?;
        assert_eq!(a.probs.data(), b.probs.data());
    }
    println!("reloaded model predicts identically on 20 questions");
    Ok(())
}
