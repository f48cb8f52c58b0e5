//! Builds the cosine-similarity maps for a hand-written question and prints
//! the passage/query grid of each sentence.
//!
//! ```bash
//! cargo run -p qacnn --example similarity_maps
//! ```

use qacnn::embeddings::tokenize_and_pad;
use qacnn::similarity::build_maps;
use qacnn::{EmbeddingTable, ModelConfig};

fn main() -> qacnn::Result<()> {
    let table = EmbeddingTable::from_entries(
        3,
        [
            ("cat", vec![1.0, 0.2, 0.0]),
            ("dog", vec![0.9, 0.4, 0.0]),
            ("sat", vec![0.0, 1.0, 0.1]),
            ("ran", vec![0.1, 0.8, 0.3]),
            ("mat", vec![0.0, 0.1, 1.0]),
            ("park", vec![0.2, 0.0, 0.9]),
            ("where", vec![0.5, 0.5, 0.5]),
        ]
        .map(|(w, v)| (w.to_string(), v)),
    )?;
    let config = ModelConfig {
        passage_sentences: 2,
        sentence_words: 4,
        query_words: 3,
        choice_words: 1,
        choices: 2,
        kernels: 2,
        widths: vec![1],
        embedding_dim: 3,
        tie_stage1_kernels: None,
    };
    let passage = ["The cat sat on the mat".to_string(), "A dog ran".to_string()];
    let example = tokenize_and_pad(&passage, "where cat sat", &["mat".into(), "park".into()], Some(0), &config, &table)?;
    let maps = build_maps::<f64>(&example, &table)?;

    for n in 0..maps.sentences() {
        println!("sentence {n}: query rows x passage columns");
        let grid = maps.pq_sentence(n);
        for row in grid.data().chunks(config.sentence_words) {
            println!("  {}", row.iter().map(|v| format!("{v:6.3}")).collect::<Vec<_>>().join(" "));
        }
    }
    for m in 0..maps.choices() {
        let grid = maps.pc_sentence(m, 0);
        println!("choice {m} vs sentence 0: {:?}", grid.data().iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    Ok(())
}
