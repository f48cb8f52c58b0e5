//! Resolves a flat TOML run configuration against its preset and prints every
//! effective setting.
//!
//! ```bash
//! cargo run -p qacnn --example config_file -- [run.toml]
//! ```

use qacnn::cli::settings::ConfigFile;

const SAMPLE: &str = r#"
preset = "tiny_plus"
variant = "sentence_attention_only"
widths = [1, 2, 3]
epochs = 20
dropout_keep = 0.9
"#;

fn main() -> qacnn::Result<()> {
    let file = match std::env::args().nth(1) {
        Some(path) => ConfigFile::load(path.as_ref())?,
        None => ConfigFile::parse(SAMPLE)?,
    };
    let run = file.resolve()?;
    println!("{} parameters per model", qacnn::Model::<f32>::init(run.model.clone(), run.variant, 0)?.params.count());
    print!("{}", run.to_file().to_toml());
    Ok(())
}
