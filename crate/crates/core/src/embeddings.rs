//! Frozen word vectors, tokenization and padding onto the fixed grid.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{QacnnError, Result};

pub type TokenId = u32;

/// Padding id; its vector is all zeros.
pub const PAD: TokenId = 0;
/// Shared id for every out-of-vocabulary word.
pub const OOV: TokenId = 1;

const PAD_TOKEN: &str = "<pad>";
const OOV_TOKEN: &str = "<unk>";
const OOV_SEED: u64 = 0x0_5eed_00f;
const OOV_SCALE: f64 = 0.1;

/// Word vectors keyed by token id. Rows are never updated after loading.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<f64>,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Later duplicates of a token
    /// are ignored.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(QacnnError::InvalidArgument("embedding dim must be positive".into()));
        }
        let mut table = Self::with_reserved(dim);
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(QacnnError::InvalidArgument(format!(
                    "vector for `{token}` has {} entries, expected {dim}",
                    vector.len()
                )));
            }
            table.insert(token, &vector);
        }
        Ok(table)
    }

    fn with_reserved(dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(OOV_SEED);
        let oov: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-OOV_SCALE..OOV_SCALE))
            .collect();
        let mut table = EmbeddingTable {
            dim,
            vectors: Vec::new(),
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        table.insert(PAD_TOKEN.to_string(), &vec![0.0; dim]);
        table.insert(OOV_TOKEN.to_string(), &oov);
        table
    }

    fn insert(&mut self, token: String, vector: &[f64]) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        self.vectors.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows including PAD and OOV.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn vector(&self, id: TokenId) -> Option<&[f64]> {
        let i = id as usize;
        (i < self.tokens.len()).then(|| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Returns a copy with every row multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Writes every row except PAD and OOV in GloVe text format.
    pub fn write_glove(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| QacnnError::io(path, e))?;
        let mut out = BufWriter::new(file);
        for id in 2..self.tokens.len() {
            let mut line = self.tokens[id].clone();
            for v in self.vector(id as TokenId).unwrap_or_default() {
                line.push(' ');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}").map_err(|e| QacnnError::io(path, e))?;
        }
        out.flush().map_err(|e| QacnnError::io(path, e))
    }
}

/// Reads a GloVe text file: one token followed by its space-separated
/// components per line. The dimension comes from the first line. When `vocab`
/// is given, only those tokens are kept.
pub fn load_glove(path: &Path, vocab: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| QacnnError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut table: Option<EmbeddingTable> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| QacnnError::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let parse_err = |message: String| QacnnError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("bad component `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let t = match table.as_mut() {
            Some(t) => t,
            None => {
                if values.is_empty() {
                    return Err(parse_err("first line has no vector components".into()));
                }
                table.insert(EmbeddingTable::with_reserved(values.len()))
            }
        };
        if values.len() != t.dim {
            return Err(parse_err(format!(
                "dimension {} does not match {} from the first line",
                values.len(),
                t.dim
            )));
        }
        if vocab.is_some_and(|v| !v.contains(token)) {
            continue;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(format!("non-finite component for `{token}`")));
        }
        t.insert(token.to_string(), &values);
    }
    table.ok_or_else(|| QacnnError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "file contains no vectors".into(),
    })
}

const DETACHED: &[char] = &[',', '.', ';', ':', '?', '!', '"', '\'', '(', ')'];

/// Lowercases and splits on whitespace, emitting each of `, . ; : ? ! " ' ( )`
/// as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars().flat_map(char::to_lowercase) {
            if DETACHED.contains(&ch) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Splits running text after `.`, `?` or `!` when whitespace follows.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        current.push(ch);
        if matches!(ch, '.' | '?' | '!') && chars.peek().is_some_and(|c| c.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                sentences.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        sentences.push(s.to_string());
    }
    sentences
}

/// One question as padded token-id grids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    /// `N × I`
    pub passage: Vec<Vec<TokenId>>,
    /// `J`
    pub query: Vec<TokenId>,
    /// `M × K`
    pub choices: Vec<Vec<TokenId>>,
    pub label: Option<usize>,
}

impl EncodedExample {
    /// Checks extents against `config` and ids against `table`.
    pub fn validate(&self, config: &ModelConfig, table: &EmbeddingTable) -> Result<()> {
        let grid_ok = self.passage.len() == config.passage_sentences
            && self.passage.iter().all(|s| s.len() == config.sentence_words)
            && self.query.len() == config.query_words
            && self.choices.len() == config.choices
            && self.choices.iter().all(|c| c.len() == config.choice_words);
        if !grid_ok {
            return Err(QacnnError::shape(
                "encoded example",
                format!(
                    "grid does not match config (N={}, I={}, J={}, K={}, M={})",
                    config.passage_sentences,
                    config.sentence_words,
                    config.query_words,
                    config.choice_words,
                    config.choices
                ),
            ));
        }
        let rows = table.len() as TokenId;
        let all_ids = self
            .passage
            .iter()
            .flatten()
            .chain(&self.query)
            .chain(self.choices.iter().flatten());
        if let Some(bad) = all_ids.copied().find(|&id| id >= rows) {
            return Err(QacnnError::InvalidArgument(format!(
                "token id {bad} is outside the embedding table ({rows} rows)"
            )));
        }
        if let Some(label) = self.label {
            if label >= config.choices {
                return Err(QacnnError::InvalidArgument(format!(
                    "label {label} out of range for {} choices",
                    config.choices
                )));
            }
        }
        Ok(())
    }
}

fn pad_row(tokens: &[String], width: usize, table: &EmbeddingTable) -> Vec<TokenId> {
    let mut row: Vec<TokenId> = tokens.iter().take(width).map(|t| table.id(t)).collect();
    row.resize(width, PAD);
    row
}

/// Tokenizes one question and fits it onto the configured grid: extra sentences
/// and words are truncated, missing ones filled with PAD, unknown words map to OOV.
pub fn tokenize_and_pad(
    passage: &[String],
    query: &str,
    choices: &[String],
    label: Option<usize>,
    config: &ModelConfig,
    table: &EmbeddingTable,
) -> Result<EncodedExample> {
    if choices.is_empty() {
        return Err(QacnnError::InvalidArgument("question has no answer choices".into()));
    }
    if choices.len() != config.choices {
        return Err(QacnnError::InvalidArgument(format!(
            "question has {} choices but the model expects {}",
            choices.len(),
            config.choices
        )));
    }
    let query_tokens = tokenize(query);
    if query_tokens.is_empty() {
        return Err(QacnnError::InvalidArgument("query is empty".into()));
    }
    let sentences: Vec<Vec<String>> = passage
        .iter()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(QacnnError::InvalidArgument("passage has no non-empty sentence".into()));
    }

    let mut grid: Vec<Vec<TokenId>> = sentences
        .iter()
        .take(config.passage_sentences)
        .map(|s| pad_row(s, config.sentence_words, table))
        .collect();
    grid.resize(config.passage_sentences, vec![PAD; config.sentence_words]);

    let example = EncodedExample {
        passage: grid,
        query: pad_row(&query_tokens, config.query_words, table),
        choices: choices
            .iter()
            .map(|c| pad_row(&tokenize(c), config.choice_words, table))
            .collect(),
        label,
    };
    example.validate(config, table)?;
    Ok(example)
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use super::*;

    fn table(words: &[&str]) -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), vec![1.0, i as f64])),
        )
        .unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            passage_sentences: 2,
            sentence_words: 5,
            query_words: 5,
            choice_words: 3,
            choices: 2,
            kernels: 1,
            widths: vec![1],
            embedding_dim: 2,
            tie_stage1_kernels: None,
        }
    }

    fn glove_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_line_glove() {
        let f = glove_file("a 1 0\nb 0 1\n");
        let t = load_glove(f.path(), None).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 4);
        assert_eq!(t.vector(PAD).unwrap(), &[0.0, 0.0]);
        assert_eq!(t.vector(t.id("a")).unwrap(), &[1.0, 0.0]);
        assert_eq!(t.vector(t.id("b")).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn vocab_filter_keeps_only_requested_tokens() {
        let f = glove_file("a 1 0\nb 0 1\n");
        let vocab: HashSet<String> = ["a".to_string()].into();
        let t = load_glove(f.path(), Some(&vocab)).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.contains("a") && !t.contains("b"));
    }

    #[test]
    fn inconsistent_dimension_names_the_line() {
        let f = glove_file("a 1 0\nb 0 1 2\n");
        let err = load_glove(f.path(), None).unwrap_err();
        assert!(matches!(err, QacnnError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_glove(Path::new("/nonexistent/glove.txt"), None).unwrap_err();
        assert!(matches!(err, QacnnError::Io { .. }));
    }

    #[test]
    fn tokenizer_detaches_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Harry's (wand) broke, then?"),
            ["harry", "'", "s", "(", "wand", ")", "broke", ",", "then", "?"]
        );
    }

    #[test]
    fn sentence_splitter_needs_trailing_whitespace() {
        assert_eq!(
            split_sentences("He left. Was it 3.5 miles? Yes!"),
            ["He left.", "Was it 3.5 miles?", "Yes!"]
        );
    }

    #[test]
    fn short_sentence_is_right_padded() {
        let t = table(&["w1", "w2", "w3", "q", "c"]);
        let ex = tokenize_and_pad(
            &["w1 w2 w3".into()],
            "q",
            &["c".into(), "c".into()],
            None,
            &small_config(),
            &t,
        )
        .unwrap();
        assert_eq!(ex.passage[0], vec![t.id("w1"), t.id("w2"), t.id("w3"), PAD, PAD]);
        assert_eq!(ex.passage[1], vec![PAD; 5]);
    }

    #[test]
    fn long_query_is_truncated() {
        let words = ["a", "b", "c", "d", "e", "f", "g"];
        let t = table(&words);
        let ex = tokenize_and_pad(
            &["a".into()],
            &words.join(" "),
            &["a".into(), "b".into()],
            None,
            &small_config(),
            &t,
        )
        .unwrap();
        let expected: Vec<TokenId> = words[..5].iter().map(|w| t.id(w)).collect();
        assert_eq!(ex.query, expected);
    }

    #[test]
    fn unknown_words_map_to_oov() {
        let t = table(&["a"]);
        let ex = tokenize_and_pad(
            &["a zzz".into()],
            "a",
            &["a".into(), "b".into()],
            None,
            &small_config(),
            &t,
        )
        .unwrap();
        assert_eq!(ex.passage[0][..2], [t.id("a"), OOV]);
        assert_eq!(ex.choices[1][0], OOV);
    }

    #[test]
    fn empty_query_or_no_choices_rejected() {
        let t = table(&["a"]);
        let cfg = small_config();
        assert!(tokenize_and_pad(&["a".into()], "  ", &["a".into(), "a".into()], None, &cfg, &t).is_err());
        assert!(tokenize_and_pad(&["a".into()], "a", &[], None, &cfg, &t).is_err());
    }

    #[test]
    fn paper_grid_extents() {
        let t = table(&["a"]);
        let cfg = ModelConfig::paper(5, 2);
        let choices: Vec<String> = (0..5).map(|_| "a".to_string()).collect();
        let ex = tokenize_and_pad(&["a a".into()], "a", &choices, Some(0), &cfg, &t).unwrap();
        assert_eq!(ex.passage.len(), 101);
        assert!(ex.passage.iter().all(|s| s.len() == 100));
        assert_eq!(ex.query.len(), 50);
        assert_eq!(ex.choices.len(), 5);
        assert!(ex.choices.iter().all(|c| c.len() == 50));
    }
}
