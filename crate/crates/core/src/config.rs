//! Model shape configuration.

use serde::{Deserialize, Serialize};

use crate::error::{QacnnError, Result};

/// Grid extents and layer sizes for one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sentences per passage after padding (N).
    pub passage_sentences: usize,
    /// Words per passage sentence after padding (I).
    pub sentence_words: usize,
    /// Words per query after padding (J).
    pub query_words: usize,
    /// Words per answer choice after padding (K).
    pub choice_words: usize,
    /// Answer choices per question (M).
    pub choices: usize,
    /// Kernels per convolution bank (l).
    pub kernels: usize,
    /// Kernel widths; each width gets its own convolution tower.
    pub widths: Vec<usize>,
    pub embedding_dim: usize,
    /// Share one kernel bank between the query and choice maps in the first
    /// representation stage. `None` ties exactly when query and choice lengths agree.
    #[serde(default)]
    pub tie_stage1_kernels: Option<bool>,
}

impl ModelConfig {
    /// Full-size grid: 101 sentences of 100 words, 50-word queries and choices,
    /// 128 kernels at widths 1, 3 and 5.
    pub fn paper(choices: usize, embedding_dim: usize) -> Self {
        ModelConfig {
            passage_sentences: 101,
            sentence_words: 100,
            query_words: 50,
            choice_words: 50,
            choices,
            kernels: 128,
            widths: vec![1, 3, 5],
            embedding_dim,
            tie_stage1_kernels: None,
        }
    }

    /// Smallest configuration used for gradient checks and oracle comparisons.
    pub fn tiny() -> Self {
        ModelConfig {
            passage_sentences: 3,
            sentence_words: 4,
            query_words: 3,
            choice_words: 3,
            choices: 2,
            kernels: 2,
            widths: vec![2],
            embedding_dim: 4,
            tie_stage1_kernels: None,
        }
    }

    /// Desk-scale configuration for the synthetic corpus.
    pub fn tiny_plus() -> Self {
        ModelConfig {
            passage_sentences: 8,
            sentence_words: 12,
            query_words: 8,
            choice_words: 6,
            choices: 4,
            kernels: 16,
            widths: vec![1, 3],
            embedding_dim: 32,
            tie_stage1_kernels: None,
        }
    }

    pub fn ties_stage1_kernels(&self) -> bool {
        self.tie_stage1_kernels
            .unwrap_or(self.query_words == self.choice_words)
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("passage_sentences", self.passage_sentences),
            ("sentence_words", self.sentence_words),
            ("query_words", self.query_words),
            ("choice_words", self.choice_words),
            ("kernels", self.kernels),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(QacnnError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.choices < 2 {
            return Err(QacnnError::Config("choices must be at least 2".into()));
        }
        if self.widths.is_empty() {
            return Err(QacnnError::Config("at least one kernel width is required".into()));
        }
        let limit = self.sentence_words.min(self.passage_sentences);
        for &d in &self.widths {
            if d == 0 || d > limit {
                return Err(QacnnError::Config(format!(
                    "kernel width {d} must lie in 1..={limit} (min of sentence_words and passage_sentences)"
                )));
            }
        }
        let mut sorted = self.widths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.widths.len() {
            return Err(QacnnError::Config(format!("duplicate kernel widths in {:?}", self.widths)));
        }
        if self.tie_stage1_kernels == Some(true) && self.query_words != self.choice_words {
            return Err(QacnnError::Config(format!(
                "cannot tie first-stage kernels: query_words {} != choice_words {}",
                self.query_words, self.choice_words
            )));
        }
        Ok(())
    }
}
