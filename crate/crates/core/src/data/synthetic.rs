//! Synthetic corpora with a planted answer sentence.
//!
//! Each record's query names two *key* tokens. Exactly one passage sentence (the
//! planted sentence) contains those keys immediately followed by the correct
//! choice's answer tokens. Every distractor choice also appears in the passage,
//! in its own sentence, but next to different keys. Answer tokens of distractors
//! never occur in the planted sentence. Remaining words are fillers.
//!
//! Finding the answer therefore needs the query: lexical overlap with the
//! passage alone cannot separate the choices.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::corpus::{Corpus, QaRecord};
use crate::config::ModelConfig;
use crate::embeddings::EmbeddingTable;
use crate::error::{QacnnError, Result};
use crate::training::Split;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub key_tokens: usize,
    pub answer_tokens: usize,
    pub filler_tokens: usize,
    /// Tokens used only in queries (`what`-like words).
    pub query_words: usize,
    pub choices: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub embedding_dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig::for_model(&ModelConfig::tiny_plus())
    }
}

impl SyntheticConfig {
    /// Sized so every sentence, query and choice fits `model`'s grid untruncated.
    pub fn for_model(model: &ModelConfig) -> Self {
        SyntheticConfig {
            key_tokens: 40,
            answer_tokens: 40,
            filler_tokens: 60,
            query_words: 4,
            choices: model.choices,
            min_sentences: model.choices.max(2),
            max_sentences: model.passage_sentences.max(model.choices),
            min_words: 6.min(model.sentence_words),
            max_words: model.sentence_words,
            embedding_dim: model.embedding_dim,
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.key_tokens + self.answer_tokens + self.filler_tokens + self.query_words
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QacnnError::Config(format!("synthetic corpus: {m}")));
        if self.vocabulary_size() < 50 {
            return bad("vocabulary must have at least 50 tokens");
        }
        if self.choices < 2 {
            return bad("need at least 2 choices");
        }
        if self.min_sentences < self.choices || self.max_sentences < self.min_sentences {
            return bad("sentence range must be ordered and allow one sentence per choice");
        }
        if self.min_words < 4 || self.max_words < self.min_words {
            return bad("sentences need at least 4 words (2 keys + 2 answer tokens)");
        }
        if self.key_tokens < 2 * self.choices || self.answer_tokens < 2 * self.choices {
            return bad("key and answer pools need 2 tokens per choice");
        }
        if self.filler_tokens == 0 || self.query_words == 0 || self.embedding_dim == 0 {
            return bad("filler pool, query words and embedding dim must be non-empty");
        }
        Ok(())
    }

    fn pool(&self, prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// A generated corpus with its ground truth and the embeddings it was built for.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Index of the planted sentence in each record's passage.
    pub planted: Vec<usize>,
    pub embeddings: EmbeddingTable,
}

impl SyntheticCorpus {
    /// Splits off the last `n` records (and their ground truth) as a new corpus.
    pub fn split_off(&mut self, n: usize, split: Split) -> SyntheticCorpus {
        let at = self.corpus.records.len().saturating_sub(n);
        SyntheticCorpus {
            corpus: Corpus {
                split,
                records: self.corpus.records.split_off(at),
            },
            planted: self.planted.split_off(at),
            embeddings: self.embeddings.clone(),
        }
    }
}

/// Gaussian embeddings for every token of `config`'s vocabulary.
pub fn synthetic_embeddings(config: &SyntheticConfig, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e3b0_0000_0001);
    let tokens = config
        .pool("q", config.query_words)
        .into_iter()
        .chain(config.pool("k", config.key_tokens))
        .chain(config.pool("a", config.answer_tokens))
        .chain(config.pool("f", config.filler_tokens));
    let entries: Vec<(String, Vec<f64>)> = tokens
        .map(|t| {
            let v = (0..config.embedding_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            (t, v)
        })
        .collect();
    EmbeddingTable::from_entries(config.embedding_dim, entries)
}

fn distinct<'a>(pool: &'a [String], n: usize, rng: &mut impl Rng) -> Vec<&'a String> {
    pool.choose_multiple(rng, n).collect()
}

/// Generates `num` records deterministically from `seed`.
pub fn generate_synthetic(num: usize, config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    config.validate()?;
    let keys = config.pool("k", config.key_tokens);
    let answers = config.pool("a", config.answer_tokens);
    let fillers = config.pool("f", config.filler_tokens);
    let qwords = config.pool("q", config.query_words);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut records = Vec::with_capacity(num);
    let mut planted = Vec::with_capacity(num);
    for r in 0..num {
        let m = config.choices;
        let sentences = rng.random_range(config.min_sentences..=config.max_sentences);
        let key_pairs: Vec<&String> = distinct(&keys, 2 * m, &mut rng);
        let answer_pairs: Vec<&String> = distinct(&answers, 2 * m, &mut rng);
        let label = rng.random_range(0..m);
        // Sentence slots: choice j's key/answer block lives in sentence `slots[j]`.
        let mut order: Vec<usize> = (0..sentences).collect();
        order.shuffle(&mut rng);
        let slots = &order[..m];

        let mut passage = Vec::with_capacity(sentences);
        for s in 0..sentences {
            let len = rng.random_range(config.min_words..=config.max_words);
            let mut words: Vec<&str> = (0..len)
                .map(|_| fillers.choose(&mut rng).expect("non-empty pool").as_str())
                .collect();
            if let Some(j) = slots.iter().position(|&slot| slot == s) {
                let at = rng.random_range(0..=len - 4);
                let block = [
                    key_pairs[2 * j],
                    key_pairs[2 * j + 1],
                    answer_pairs[2 * j],
                    answer_pairs[2 * j + 1],
                ];
                for (i, w) in block.into_iter().enumerate() {
                    words[at + i] = w.as_str();
                }
            }
            passage.push(words.join(" "));
        }

        // Block 0 is the queried one. It is shown at position `label`; the
        // distractor blocks fill the other positions in random order.
        let mut shown: Vec<usize> = (1..m).collect();
        shown.shuffle(&mut rng);
        shown.insert(label, 0);
        let choices = shown
            .iter()
            .map(|&j| format!("{} {}", answer_pairs[2 * j], answer_pairs[2 * j + 1]))
            .collect();
        let query = format!(
            "{} {} {}",
            qwords.choose(&mut rng).expect("non-empty pool"),
            key_pairs[0],
            key_pairs[1]
        );
        planted.push(slots[0]);
        records.push(QaRecord {
            id: format!("syn-{seed}-{r:05}"),
            passage,
            query,
            choices,
            answer: Some(label),
        });
    }
    Ok(SyntheticCorpus {
        corpus: Corpus {
            split: Split::Train,
            records,
        },
        planted,
        embeddings: synthetic_embeddings(config, seed)?,
    })
}
