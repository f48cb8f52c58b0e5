//! The attention CNN over similarity maps and its prediction head.
//!
//! For each kernel width the model runs one tower:
//!
//! 1. per passage sentence, a word-level attention map from the passage–query
//!    map, and query-/choice-based sentence features from both maps, the choice
//!    side weighted by the attention;
//! 2. over the sentence features, a sentence-level attention map from the
//!    query side and a passage representation per choice from the choice side,
//!    again weighted by the attention.
//!
//! Tower outputs are summed across widths and scored per choice by a shared
//! two-layer head; a softmax over choices gives the answer distribution.

mod forward;
pub mod layers;
pub mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::layers::{
    combine_widths, predict_head, stage1_attention, stage1_representation, stage2_attention,
    stage2_representation,
};
pub use self::params::{layout, Bank, HeadBanks, ParamSet, QacnnParams, WidthBanks};

use crate::config::ModelConfig;
use crate::embeddings::{EmbeddingTable, EncodedExample};
use crate::error::{QacnnError, Result};
use crate::real::Real;
use crate::similarity::{build_maps, SimilarityMaps};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::training::dropout::Dropout;

/// Architecture variant: the full model or one of the ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Passage treated as one long sentence; word-level stage only.
    OneStage,
    /// No attention at either level; the query-side passage representation is
    /// concatenated to each choice's before the head.
    NoAttention,
    WordAttentionOnly,
    SentenceAttentionOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::OneStage,
        Variant::NoAttention,
        Variant::WordAttentionOnly,
        Variant::SentenceAttentionOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::OneStage => "one_stage",
            Variant::NoAttention => "no_attention",
            Variant::WordAttentionOnly => "word_attention_only",
            Variant::SentenceAttentionOnly => "sentence_attention_only",
        }
    }

    pub fn word_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::OneStage | Variant::WordAttentionOnly)
    }

    pub fn sentence_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::SentenceAttentionOnly)
    }

    pub fn two_stage(self) -> bool {
        self != Variant::OneStage
    }

    /// Whether query-based sentence features are computed at all.
    pub fn query_path(self) -> bool {
        self.sentence_attention() || self.concatenates_query()
    }

    pub fn concatenates_query(self) -> bool {
        self == Variant::NoAttention
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = QacnnError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                QacnnError::InvalidArgument(format!(
                    "unknown variant `{s}` (expected one of: {})",
                    Variant::ALL.map(Variant::name).join(", ")
                ))
            })
    }
}

/// Attention maps produced by the tower of one kernel width.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerAttention<S> {
    pub width: usize,
    /// Word-level map per passage sentence, each of length `I − d + 1`. The
    /// one-stage variant has a single map over the whole passage. Empty when
    /// word attention is disabled.
    pub word: Vec<S>,
    /// Sentence-level map of length `N − d + 1`.
    pub sentence: Option<S>,
}

/// Model output for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    /// Probability per choice.
    pub probs: Tensor<T>,
    pub attention: Vec<TowerAttention<Tensor<T>>>,
}

impl<T: Real> Prediction<T> {
    pub fn answer(&self) -> usize {
        self.probs.argmax()
    }
}

/// Result of a training forward/backward pass on one example.
#[derive(Debug)]
pub struct ExampleGradient<T> {
    pub loss: T,
    pub probs: Tensor<T>,
    pub grads: QacnnParams<T>,
}

/// A configured model with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub variant: Variant,
    pub params: QacnnParams<T>,
}

impl<T: Real> Model<T> {
    pub fn init(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        let params = QacnnParams::init(&config, variant, seed)?;
        Ok(Model {
            config,
            variant,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, variant: Variant, params: QacnnParams<T>) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config, variant)?;
        Ok(Model {
            config,
            variant,
            params,
        })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            variant: self.variant,
            params: self.params.cast(),
        }
    }

    /// Checks that `maps` has the grid this model expects.
    pub fn check_maps(&self, maps: &SimilarityMaps<T>) -> Result<()> {
        let c = &self.config;
        let pq_ok = maps.pq.shape() == [c.passage_sentences, c.query_words, c.sentence_words];
        let pc_ok = maps.pc.len() == c.choices
            && maps
                .pc
                .iter()
                .all(|m| m.shape() == [c.passage_sentences, c.choice_words, c.sentence_words]);
        if !(pq_ok && pc_ok) {
            return Err(QacnnError::shape(
                "similarity maps",
                format!(
                    "pq {:?} with {} choice maps does not fit N={}, J={}, K={}, I={}, M={}",
                    maps.pq.shape(),
                    maps.pc.len(),
                    c.passage_sentences,
                    c.query_words,
                    c.choice_words,
                    c.sentence_words,
                    c.choices
                ),
            ));
        }
        Ok(())
    }

    /// Builds the similarity maps for `example` and runs [`Model::predict_maps`].
    pub fn predict(&self, example: &EncodedExample, table: &EmbeddingTable) -> Result<Prediction<T>> {
        example.validate(&self.config, table)?;
        let maps = build_maps(example, table)?;
        self.predict_maps(&maps)
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn predict_maps(&self, maps: &SimilarityMaps<T>) -> Result<Prediction<T>> {
        self.check_maps(maps)?;
        let mut tape = Tape::new();
        let vars = self.params.map(|t| tape.constant(t.clone()));
        let graph = forward::build(&mut tape, &vars, maps, &self.config, self.variant, None)?;
        Ok(Prediction {
            probs: tape.value(graph.probs).clone(),
            attention: graph
                .attention
                .iter()
                .map(|t| TowerAttention {
                    width: t.width,
                    word: t.word.iter().map(|&v| tape.value(v).clone()).collect(),
                    sentence: t.sentence.map(|v| tape.value(v).clone()),
                })
                .collect(),
        })
    }

    /// Cross-entropy loss for `label` and its gradient with respect to every
    /// parameter. Pass a [`Dropout`] for a training-mode pass.
    pub fn gradient(
        &self,
        maps: &SimilarityMaps<T>,
        label: usize,
        dropout: Option<&mut Dropout>,
    ) -> Result<ExampleGradient<T>> {
        self.check_maps(maps)?;
        let mut tape = Tape::new();
        let vars = self.params.map(|t| tape.param(t.clone()));
        let graph = forward::build(&mut tape, &vars, maps, &self.config, self.variant, dropout)?;
        let loss = tape.nll(graph.probs, label)?;
        let grads = tape.backward(loss)?;
        Ok(ExampleGradient {
            loss: tape.value(loss).data()[0],
            probs: tape.value(graph.probs).clone(),
            grads: vars.map(|&v| grads.wrt(&tape, v)),
        })
    }

    /// Loss for `label` without gradients, plus the smallest distance of any
    /// ReLU input or max-pool winner from a kink.
    pub fn loss_with_margin(&self, maps: &SimilarityMaps<T>, label: usize) -> Result<(T, T)> {
        self.check_maps(maps)?;
        let mut tape = Tape::new();
        let vars = self.params.map(|t| tape.param(t.clone()));
        let graph = forward::build(&mut tape, &vars, maps, &self.config, self.variant, None)?;
        let loss = tape.nll(graph.probs, label)?;
        Ok((tape.value(loss).data()[0], tape.kink_margin()))
    }
}
