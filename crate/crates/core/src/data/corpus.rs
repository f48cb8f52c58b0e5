//! The neutral `qacnn-json` corpus format.
//!
//! A corpus file is a JSON array of objects:
//!
//! ```json
//! [{"id": "q1", "passage": ["First sentence.", "Second."], "query": "Who?",
//!   "choices": ["A", "B", "C"], "answer": 1}]
//! ```
//!
//! `answer` is optional (absent for unlabeled test questions).

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ModelConfig;
use crate::embeddings::{tokenize, tokenize_and_pad, EmbeddingTable, EncodedExample};
use crate::error::{QacnnError, Result};
use crate::training::Split;

/// One multiple-choice question over a passage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub passage: Vec<String>,
    pub query: String,
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<usize>,
}

impl QaRecord {
    pub fn encode(&self, config: &ModelConfig, table: &EmbeddingTable) -> Result<EncodedExample> {
        tokenize_and_pad(&self.passage, &self.query, &self.choices, self.answer, config, table)
            .map_err(|e| QacnnError::Data(format!("record {}: {e}", self.id)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub records: Vec<QaRecord>,
}

fn schema(index: usize, key: &str, message: impl Into<String>) -> QacnnError {
    QacnnError::Schema {
        index,
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_record(index: usize, value: &Value) -> Result<QaRecord> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema(index, "<record>", "expected a JSON object"))?;
    let field = |key: &str| obj.get(key).ok_or_else(|| schema(index, key, "missing"));
    let string = |key: &str| -> Result<String> {
        field(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| schema(index, key, "expected a string"))
    };
    let strings = |key: &str| -> Result<Vec<String>> {
        field(key)?
            .as_array()
            .ok_or_else(|| schema(index, key, "expected an array of strings"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(index, key, "expected an array of strings"))
            })
            .collect()
    };
    let id = string("id")?;
    let passage = strings("passage")?;
    let query = string("query")?;
    let choices = strings("choices")?;
    if choices.len() < 2 {
        return Err(schema(index, "choices", format!("need at least 2 choices, got {}", choices.len())));
    }
    let answer = match obj.get("answer") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let a = v
                .as_u64()
                .ok_or_else(|| schema(index, "answer", "expected a non-negative integer"))? as usize;
            if a >= choices.len() {
                return Err(schema(
                    index,
                    "answer",
                    format!("{a} is out of range for {} choices", choices.len()),
                ));
            }
            Some(a)
        }
    };
    Ok(QaRecord {
        id,
        passage,
        query,
        choices,
        answer,
    })
}

impl Corpus {
    pub fn from_json(text: &str, split: Split) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| QacnnError::Data(format!("invalid JSON: {e}")))?;
        let items = root
            .as_array()
            .ok_or_else(|| QacnnError::Data("top level must be an array of records".into()))?;
        let records = items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_record(i, v))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(schema(i, "id", format!("duplicate id `{}`", r.id)));
            }
        }
        Ok(Corpus { split, records })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize") + "\n"
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QaRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Every distinct token in passages, queries and choices.
    pub fn vocabulary(&self) -> HashSet<String> {
        let mut vocab = HashSet::new();
        for r in &self.records {
            for text in r.passage.iter().chain(std::iter::once(&r.query)).chain(&r.choices) {
                vocab.extend(tokenize(text));
            }
        }
        vocab
    }

    pub fn encode(&self, config: &ModelConfig, table: &EmbeddingTable) -> Result<Vec<EncodedExample>> {
        self.records.iter().map(|r| r.encode(config, table)).collect()
    }
}

/// Reads one `qacnn-json` split file.
pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| QacnnError::io(path, e))?;
    Corpus::from_json(&text, split)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, corpus.to_json()).map_err(|e| QacnnError::io(path, e))
}
