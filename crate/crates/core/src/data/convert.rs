//! Adapters from distributed corpus layouts to `qacnn-json`.
//!
//! # MovieQA (plot-only)
//!
//! ```text
//! <source>/qa.json           [{"qid", "question", "answers": [5], "correct_index"?, "imdb_key"}, ...]
//! <source>/splits.json       {"train": [imdb_key, ...], "val": [...], "test": [...]}
//! <source>/plot/<key>.wiki   plot synopsis, one or more sentences per line
//! ```
//!
//! Plot lines are split again with [`split_sentences`]. Questions whose movie has
//! no plot file, or whose movie is in no split, are skipped and counted.
//!
//! # MCTest
//!
//! ```text
//! <source>/<name>.{train,dev,test}.tsv   23 tab-separated columns per story
//! <source>/<name>.{train,dev,test}.ans   one line per story, 4 tab-separated letters A-D
//! ```
//!
//! Columns are: id, properties, story, then four blocks of
//! `question, answer A, answer B, answer C, answer D`. The story uses the
//! literal escapes `\newline` and `\tab`. Question prefixes `one:` and
//! `multiple:` are dropped. `dev` files become the `val` split. A missing
//! `.ans` file yields unlabeled records; malformed rows are skipped and counted.
//!
//! Output is `train.json`, `val.json`, `test.json` and `conversion_report.json`
//! in the output directory; records are sorted by id so reruns are byte-identical.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::corpus::{write_corpus, Corpus, QaRecord};
use crate::embeddings::split_sentences;
use crate::error::{QacnnError, Result};
use crate::training::Split;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    MovieQa,
    McTest,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::MovieQa => "movieqa",
            SourceKind::McTest => "mctest",
        })
    }
}

impl FromStr for SourceKind {
    type Err = QacnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movieqa" => Ok(SourceKind::MovieQa),
            "mctest" => Ok(SourceKind::McTest),
            other => Err(QacnnError::InvalidArgument(format!(
                "unknown corpus kind `{other}` (expected movieqa or mctest)"
            ))),
        }
    }
}

/// Counts written alongside the converted splits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub kind: Option<SourceKind>,
    /// Records written per split.
    pub written: BTreeMap<String, usize>,
    /// Skipped questions by reason.
    pub skipped: BTreeMap<String, usize>,
}

impl ConversionReport {
    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }

    fn skip(&mut self, reason: &str) {
        *self.skipped.entry(reason.to_string()).or_default() += 1;
    }
}

/// Converted splits, always all three (possibly empty).
#[derive(Clone, Debug)]
pub struct Converted {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
    pub report: ConversionReport,
}

impl Converted {
    fn new(kind: SourceKind) -> Self {
        let empty = |split| Corpus {
            split,
            records: Vec::new(),
        };
        Converted {
            train: empty(Split::Train),
            val: empty(Split::Val),
            test: empty(Split::Test),
            report: ConversionReport {
                kind: Some(kind),
                ..Default::default()
            },
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Corpus {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    fn finish(mut self) -> Self {
        for split in [Split::Train, Split::Val, Split::Test] {
            let c = self.split_mut(split);
            c.records.sort_by(|a, b| a.id.cmp(&b.id));
            let n = c.records.len();
            self.report.written.insert(split.to_string(), n);
        }
        self
    }

    /// Writes the three split files and the report into `out`.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out).map_err(|e| QacnnError::io(out, e))?;
        let mut paths = Vec::new();
        for c in [&self.train, &self.val, &self.test] {
            let p = out.join(format!("{}.json", c.split));
            write_corpus(c, &p)?;
            paths.push(p);
        }
        let p = out.join("conversion_report.json");
        let text = serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n";
        fs::write(&p, text).map_err(|e| QacnnError::io(&p, e))?;
        paths.push(p);
        Ok(paths)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| QacnnError::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> QacnnError {
    QacnnError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    }
}

/// Reads `source` as `kind` and returns the converted splits (nothing is written).
pub fn convert_external(source: &Path, kind: SourceKind) -> Result<Converted> {
    if !source.is_dir() {
        return Err(QacnnError::io(
            source,
            std::io::Error::new(std::io::ErrorKind::NotFound, "source directory not found"),
        ));
    }
    match kind {
        SourceKind::MovieQa => convert_movieqa(source),
        SourceKind::McTest => convert_mctest(source),
    }
}

#[derive(Deserialize)]
struct MovieQaQuestion {
    qid: String,
    question: String,
    answers: Vec<String>,
    #[serde(default)]
    correct_index: Option<usize>,
    imdb_key: String,
}

fn plot_sentences(text: &str) -> Vec<String> {
    text.lines()
        .flat_map(split_sentences)
        .filter(|s| !s.is_empty())
        .collect()
}

fn convert_movieqa(source: &Path) -> Result<Converted> {
    let qa_path = source.join("qa.json");
    let questions: Vec<MovieQaQuestion> =
        serde_json::from_str(&read(&qa_path)?).map_err(|e| json_error(&qa_path, e))?;
    let splits_path = source.join("splits.json");
    let splits: HashMap<String, Vec<String>> =
        serde_json::from_str(&read(&splits_path)?).map_err(|e| json_error(&splits_path, e))?;
    let mut movie_split = HashMap::new();
    for (name, keys) in &splits {
        let split = match name.as_str() {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            _ => continue,
        };
        for k in keys {
            movie_split.insert(k.clone(), split);
        }
    }

    let mut out = Converted::new(SourceKind::MovieQa);
    let mut plots: HashMap<String, Option<Vec<String>>> = HashMap::new();
    for q in questions {
        let Some(&split) = movie_split.get(&q.imdb_key) else {
            out.report.skip("movie_not_in_any_split");
            continue;
        };
        let plot = plots.entry(q.imdb_key.clone()).or_insert_with(|| {
            fs::read_to_string(source.join("plot").join(format!("{}.wiki", q.imdb_key)))
                .ok()
                .map(|t| plot_sentences(&t))
                .filter(|s| !s.is_empty())
        });
        let Some(passage) = plot.clone() else {
            out.report.skip("missing_plot");
            continue;
        };
        if q.answers.len() < 2 || q.correct_index.is_some_and(|a| a >= q.answers.len()) {
            out.report.skip("malformed_question");
            continue;
        }
        out.split_mut(split).records.push(QaRecord {
            id: q.qid,
            passage,
            query: q.question,
            choices: q.answers,
            answer: q.correct_index,
        });
    }
    Ok(out.finish())
}

fn mctest_split(file_name: &str) -> Option<(String, Split)> {
    let stem = file_name.strip_suffix(".tsv")?;
    let (base, split) = stem.rsplit_once('.')?;
    let split = match split {
        "train" => Split::Train,
        "dev" => Split::Val,
        "test" => Split::Test,
        _ => return None,
    };
    Some((base.to_string(), split))
}

fn unescape_story(story: &str) -> String {
    story.replace("\\newline", "\n").replace("\\tab", " ")
}

fn strip_question_prefix(q: &str) -> &str {
    let q = q.trim();
    q.strip_prefix("one:")
        .or_else(|| q.strip_prefix("multiple:"))
        .unwrap_or(q)
        .trim()
}

fn convert_mctest(source: &Path) -> Result<Converted> {
    let mut files: Vec<PathBuf> = fs::read_dir(source)
        .map_err(|e| QacnnError::io(source, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    files.sort();

    let mut out = Converted::new(SourceKind::McTest);
    for tsv in files {
        let name = tsv.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let Some((_, split)) = mctest_split(&name) else {
            continue;
        };
        let answers: Option<Vec<Vec<String>>> = {
            let ans = tsv.with_extension("ans");
            if ans.exists() {
                Some(
                    read(&ans)?
                        .lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| l.split('\t').map(|s| s.trim().to_string()).collect())
                        .collect(),
                )
            } else {
                None
            }
        };
        let text = read(&tsv)?;
        let rows = text.lines().filter(|l| !l.trim().is_empty());
        for (row_index, line) in rows.enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 23 {
                out.report.skip("malformed_row");
                continue;
            }
            let story_id = cols[0].trim();
            let passage: Vec<String> = unescape_story(cols[2])
                .lines()
                .flat_map(split_sentences)
                .collect();
            if passage.is_empty() {
                out.report.skip("missing_plot");
                continue;
            }
            let letters = answers.as_ref().map(|a| a.get(row_index));
            for qi in 0..4 {
                let block = &cols[3 + qi * 5..8 + qi * 5];
                let answer = match letters {
                    None => None,
                    Some(None) => {
                        out.report.skip("missing_answer");
                        continue;
                    }
                    Some(Some(row)) => match row.get(qi).map(String::as_str) {
                        Some("A") => Some(0),
                        Some("B") => Some(1),
                        Some("C") => Some(2),
                        Some("D") => Some(3),
                        _ => {
                            out.report.skip("missing_answer");
                            continue;
                        }
                    },
                };
                out.split_mut(split).records.push(QaRecord {
                    id: format!("{story_id}.q{}", qi + 1),
                    passage: passage.clone(),
                    query: strip_question_prefix(block[0]).to_string(),
                    choices: block[1..].iter().map(|c| c.trim().to_string()).collect(),
                    answer,
                });
            }
        }
    }
    Ok(out.finish())
}
