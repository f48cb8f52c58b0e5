//! Flat TOML run configuration.
//!
//! Every key is optional. Model keys default to the chosen `preset`
//! (`paper` unless given); training keys default to [`TrainConfig::default`].
//!
//! ```toml
//! preset = "tiny_plus"
//! kernels = 32
//! widths = [1, 3]
//! variant = "full"
//! learning_rate = 0.001
//! epochs = 30
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{QacnnError, Result};
use crate::model::Variant;
use crate::training::{AdamConfig, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 101×100 passages, 50-word queries and choices, 5 choices, 300-d embeddings.
    #[default]
    Paper,
    Tiny,
    TinyPlus,
}

impl Preset {
    pub fn model(self) -> ModelConfig {
        match self {
            Preset::Paper => ModelConfig::paper(5, 300),
            Preset::Tiny => ModelConfig::tiny(),
            Preset::TinyPlus => ModelConfig::tiny_plus(),
        }
    }
}

/// The configuration file as written, before defaults are applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passage_sentences: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_words: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_words: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choice_words: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_stage1_kernels: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_keep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| QacnnError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| QacnnError::io(path, e))?;
        toml::from_str(&text).map_err(|e| QacnnError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Applies defaults and validates.
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = self.preset.unwrap_or_default().model();
        let model = ModelConfig {
            passage_sentences: self.passage_sentences.unwrap_or(base.passage_sentences),
            sentence_words: self.sentence_words.unwrap_or(base.sentence_words),
            query_words: self.query_words.unwrap_or(base.query_words),
            choice_words: self.choice_words.unwrap_or(base.choice_words),
            choices: self.choices.unwrap_or(base.choices),
            kernels: self.kernels.unwrap_or(base.kernels),
            widths: self.widths.clone().unwrap_or(base.widths),
            embedding_dim: self.embedding_dim.unwrap_or(base.embedding_dim),
            tie_stage1_kernels: self.tie_stage1_kernels.or(base.tie_stage1_kernels),
        };
        let d = TrainConfig::default();
        let train = TrainConfig {
            adam: AdamConfig {
                learning_rate: self.learning_rate.unwrap_or(d.adam.learning_rate),
                beta1: self.beta1.unwrap_or(d.adam.beta1),
                beta2: self.beta2.unwrap_or(d.adam.beta2),
                epsilon: self.adam_epsilon.unwrap_or(d.adam.epsilon),
            },
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            dropout_keep: self.dropout_keep.unwrap_or(d.dropout_keep),
            seed: self.seed.unwrap_or(d.seed),
            patience: self.patience.unwrap_or(d.patience),
            threads: None,
        };
        let run = RunConfig {
            model,
            train,
            variant: self.variant.unwrap_or_default(),
        };
        run.validate()?;
        Ok(run)
    }
}

/// Fully resolved model and training settings for one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub variant: Variant,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// The same settings as an explicit flat file (every key present).
    pub fn to_file(&self) -> ConfigFile {
        let m = &self.model;
        let t = &self.train;
        ConfigFile {
            preset: None,
            passage_sentences: Some(m.passage_sentences),
            sentence_words: Some(m.sentence_words),
            query_words: Some(m.query_words),
            choice_words: Some(m.choice_words),
            choices: Some(m.choices),
            kernels: Some(m.kernels),
            widths: Some(m.widths.clone()),
            embedding_dim: Some(m.embedding_dim),
            tie_stage1_kernels: m.tie_stage1_kernels,
            variant: Some(self.variant),
            learning_rate: Some(t.adam.learning_rate),
            beta1: Some(t.adam.beta1),
            beta2: Some(t.adam.beta2),
            adam_epsilon: Some(t.adam.epsilon),
            batch_size: Some(t.batch_size),
            epochs: Some(t.epochs),
            dropout_keep: Some(t.dropout_keep),
            seed: Some(t.seed),
            patience: Some(t.patience),
        }
    }
}
