//! Trains several short runs that differ only in seed and compares each one
//! with their probability-averaged ensemble.
//!
//! ```bash
//! cargo run --release -p qacnn --example ensemble -- [members]
//! ```

use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::training::{ensemble_accuracy, evaluate, fit, prepare, Split};
use qacnn::{ModelConfig, TrainConfig, Variant};

fn main() -> qacnn::Result<()> {
    let members: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let config = ModelConfig::tiny_plus();
    let mut synth = generate_synthetic(150, &SyntheticConfig::for_model(&config), 3)?;
    let held_out = synth.split_off(50, Split::Val);
    let table = &synth.embeddings;
    let train = prepare::<f32>(&synth.corpus.encode(&config, table)?, table)?;
    let val = prepare::<f32>(&held_out.corpus.encode(&config, table)?, table)?;

    let mut models = Vec::new();
    for seed in 0..members {
        let run = TrainConfig { seed, epochs: 6, ..TrainConfig::default() };
        let outcome = fit(&train, &val, &config, Variant::Full, &run)?;
        println!("seed {seed}: held-out accuracy {:.3}", evaluate(&outcome.best, &val)?.accuracy);
        models.push(outcome.best);
    }
    println!("ensemble of {members}: held-out accuracy {:.3}", ensemble_accuracy(&models, &val)?);
    Ok(())
}
