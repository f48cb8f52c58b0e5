//! Runs an untrained model of every variant on one synthetic question and
//! prints the choice probabilities and the attention each width produces.
//!
//! ```bash
//! cargo run -p qacnn --example forward_pass
//! ```

use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::{Model, ModelConfig, Variant};

fn fmt(values: &[f32]) -> String {
    values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

fn main() -> qacnn::Result<()> {
    let config = ModelConfig::tiny_plus();
    let synth = generate_synthetic(1, &SyntheticConfig::for_model(&config), 7)?;
    let record = &synth.corpus.records[0];
    println!("query: {}", record.query);
    for (m, c) in record.choices.iter().enumerate() {
        println!("choice {m}: {c}");
    }
    let example = record.encode(&config, &synth.embeddings)?;

    for variant in Variant::ALL {
        let model = Model::<f32>::init(config.clone(), variant, 1)?;
        let p = model.predict(&example, &synth.embeddings)?;
        println!("\n{variant}: probs [{}] -> choice {}", fmt(p.probs.data()), p.answer());
        for tower in &p.attention {
            if let Some(s) = &tower.sentence {
                println!("  width {} sentence attention [{}]", tower.width, fmt(s.data()));
            }
            println!("  width {} word attention over {} map(s)", tower.width, tower.word.len());
        }
    }
    Ok(())
}
