//! Trains briefly on the synthetic corpus, then prints the attention dump of
//! one held-out question as JSON, next to the sentence that holds its answer.
//!
//! ```bash
//! cargo run --release -p qacnn --example export_attention -- [record index]
//! ```

use qacnn::cli::commands::attention_dump;
use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::training::{fit, prepare, Split};
use qacnn::{ModelConfig, TrainConfig, Variant};

fn main() -> qacnn::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = ModelConfig::tiny_plus();
    let mut synth = generate_synthetic(170, &SyntheticConfig::for_model(&config), 1)?;
    let held_out = synth.split_off(20, Split::Val);
    let table = &synth.embeddings;
    let train = prepare::<f32>(&synth.corpus.encode(&config, table)?, table)?;
    let run = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let model = fit(&train, &[], &config, Variant::Full, &run)?.best;

    let record = &held_out.corpus.records[index % held_out.corpus.len()];
    let planted = held_out.planted[index % held_out.corpus.len()];
    let dump = attention_dump(&model, &record.id, &record.encode(&config, table)?, table)?;
    println!("{}", serde_json::to_string_pretty(&dump).expect("dump serializes"));
    println!("answer is planted in sentence {planted}: {}", record.passage[planted]);
    Ok(())
}
