//! Per-epoch metric log.
//!
//! One JSON object per line:
//! `{"epoch":3,"split":"val","loss":0.4121,"accuracy":0.87}`.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QacnnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricLog {
    pub records: Vec<MetricRecord>,
}

impl MetricLog {
    pub fn push(&mut self, r: MetricRecord) {
        self.records.push(r);
    }

    pub fn last(&self, split: Split) -> Option<&MetricRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }

    pub fn to_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("metric record serializes") + "\n")
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| QacnnError::Data(format!("metric log line {}: {e}", i + 1)))
            })
            .collect::<Result<_>>()?;
        Ok(MetricLog { records })
    }

    /// Appends every record to `path`.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| QacnnError::io(path, e))?;
        f.write_all(self.to_lines().as_bytes())
            .map_err(|e| QacnnError::io(path, e))
    }
}
