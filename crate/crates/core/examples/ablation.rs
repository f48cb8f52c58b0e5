//! Trains all five architecture variants on the same synthetic corpus and
//! prints their accuracies as a table.
//!
//! ```bash
//! cargo run --release -p qacnn --example ablation -- [seed] [epochs]
//! ```

use qacnn::cli::commands::{ablate_prepared, ablation_to_tsv};
use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::training::{prepare, Split};
use qacnn::{ModelConfig, TrainConfig};

fn main() -> qacnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let config = ModelConfig::tiny_plus();
    let mut synth = generate_synthetic(250, &SyntheticConfig::for_model(&config), seed)?;
    let held_out = synth.split_off(50, Split::Val);
    let table = &synth.embeddings;
    let train = prepare::<f32>(&synth.corpus.encode(&config, table)?, table)?;
    let val = prepare::<f32>(&held_out.corpus.encode(&config, table)?, table)?;

    let run = TrainConfig { seed, epochs, ..TrainConfig::default() };
    print!("{}", ablation_to_tsv(&ablate_prepared(&config, &run, &train, &val)?));
    Ok(())
}
