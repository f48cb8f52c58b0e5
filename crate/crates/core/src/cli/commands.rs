//! Command implementations. Each returns a structured result and writes its
//! artifacts into the output directory when one is given.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::settings::RunConfig;
use crate::checkpoint;
use crate::config::ModelConfig;
use crate::data::{convert_external, generate_synthetic, load_corpus, Corpus, ConversionReport, SourceKind, SyntheticConfig};
use crate::embeddings::{load_glove, EmbeddingTable, EncodedExample};
use crate::error::{QacnnError, Result};
use crate::gradcheck::{gradcheck, GradCheckOptions, GradCheckReport};
use crate::model::{Model, Variant};
use crate::training::{
    check_compatible, ensemble_predict, evaluate, fit, prepare, LabeledMaps, Split, TrainConfig,
};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| QacnnError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| QacnnError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

/// Loads the embedding rows needed by `corpora` and checks their width.
pub fn load_embeddings(path: &Path, corpora: &[&Corpus], model: &ModelConfig) -> Result<EmbeddingTable> {
    let mut vocab = HashSet::new();
    for c in corpora {
        vocab.extend(c.vocabulary());
    }
    let table = load_glove(path, Some(&vocab))?;
    if table.dim() != model.embedding_dim {
        return Err(QacnnError::Config(format!(
            "{} has {}-dimensional vectors but the model expects embedding_dim = {}",
            path.display(),
            table.dim(),
            model.embedding_dim
        )));
    }
    Ok(table)
}

fn encode(corpus: &Corpus, model: &ModelConfig, table: &EmbeddingTable) -> Result<Vec<LabeledMaps<f32>>> {
    prepare(&corpus.encode(model, table)?, table)
}

fn require_labels(corpus: &Corpus, path: &Path) -> Result<()> {
    match corpus.records.iter().position(|r| r.answer.is_none()) {
        Some(i) => Err(QacnnError::Data(format!(
            "{}: record {i} (`{}`) has no answer; this command needs a labeled split",
            path.display(),
            corpus.records[i].id
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub epochs_run: usize,
}

/// Trains one model and writes `model.ckpt`, `metrics.jsonl` and `config.toml` into `out`.
pub fn cmd_train(
    run: &RunConfig,
    data: &Path,
    val: Option<&Path>,
    embeddings: &Path,
    out: &Path,
) -> Result<TrainSummary> {
    let train_corpus = load_corpus(data, Split::Train)?;
    require_labels(&train_corpus, data)?;
    let val_corpus = val.map(|p| load_corpus(p, Split::Val)).transpose()?;
    if let (Some(c), Some(p)) = (&val_corpus, val) {
        require_labels(c, p)?;
    }
    let mut corpora = vec![&train_corpus];
    corpora.extend(&val_corpus);
    let table = load_embeddings(embeddings, &corpora, &run.model)?;
    let train = encode(&train_corpus, &run.model, &table)?;
    let val = match &val_corpus {
        Some(c) => encode(c, &run.model, &table)?,
        None => Vec::new(),
    };

    let outcome = fit(&train, &val, &run.model, run.variant, &run.train)?;
    let ckpt = out.join("model.ckpt");
    fs::create_dir_all(out).map_err(|e| QacnnError::io(out, e))?;
    checkpoint::save(&outcome.best, &ckpt)?;
    write_text(&out.join("metrics.jsonl"), &outcome.log.to_lines())?;
    write_text(&out.join("config.toml"), &run.to_file().to_toml())?;
    Ok(TrainSummary {
        variant: run.variant,
        checkpoint: ckpt,
        best_epoch: outcome.best_epoch,
        best_accuracy: outcome.best_accuracy,
        epochs_run: outcome.epochs_run,
    })
}

fn load_models(checkpoints: &[PathBuf]) -> Result<Vec<Model<f32>>> {
    if checkpoints.is_empty() {
        return Err(QacnnError::InvalidArgument("at least one --checkpoint is required".into()));
    }
    let models = checkpoints.iter().map(|p| checkpoint::load(p)).collect::<Result<Vec<_>>>()?;
    check_compatible(&models)?;
    Ok(models)
}

#[derive(Clone, Debug, Serialize)]
pub struct AccuracyLine {
    pub name: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub data: PathBuf,
    pub models: Vec<AccuracyLine>,
    /// Present when more than one checkpoint was given.
    pub ensemble: Option<AccuracyLine>,
}

impl EvalReport {
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, l: &AccuracyLine| {
            let _ = writeln!(s, "{:<40} accuracy {:.4} ({}/{})", l.name, l.accuracy, l.correct, l.total);
        };
        for m in &self.models {
            line(&mut s, m);
        }
        if let Some(e) = &self.ensemble {
            line(&mut s, e);
        }
        s
    }
}

/// Accuracy of each checkpoint, and of their probability average when there are several.
pub fn cmd_eval(checkpoints: &[PathBuf], data: &Path, embeddings: &Path) -> Result<EvalReport> {
    let models = load_models(checkpoints)?;
    let corpus = load_corpus(data, Split::Test)?;
    require_labels(&corpus, data)?;
    let config = &models[0].config;
    let table = load_embeddings(embeddings, &[&corpus], config)?;
    let examples = encode(&corpus, config, &table)?;
    let total = examples.len();

    let mut lines = Vec::new();
    for (m, path) in models.iter().zip(checkpoints) {
        let mut correct = 0;
        for ex in &examples {
            if Some(m.predict_maps(&ex.maps)?.answer()) == ex.label {
                correct += 1;
            }
        }
        lines.push(AccuracyLine {
            name: format!("model {}", path.display()),
            correct,
            total,
            accuracy: correct as f64 / total.max(1) as f64,
        });
    }
    let ensemble = if models.len() > 1 {
        let mut correct = 0;
        for ex in &examples {
            if Some(ensemble_predict(&models, &ex.maps)?.argmax()) == ex.label {
                correct += 1;
            }
        }
        Some(AccuracyLine {
            name: format!("ensemble of {}", models.len()),
            correct,
            total,
            accuracy: correct as f64 / total.max(1) as f64,
        })
    } else {
        None
    };
    Ok(EvalReport {
        data: data.to_path_buf(),
        models: lines,
        ensemble,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictionRow {
    pub id: String,
    pub probs: Vec<f64>,
    pub predicted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<usize>,
}

/// Choice probabilities per record, averaged over all checkpoints.
pub fn cmd_predict(checkpoints: &[PathBuf], data: &Path, embeddings: &Path) -> Result<Vec<PredictionRow>> {
    let models = load_models(checkpoints)?;
    let corpus = load_corpus(data, Split::Test)?;
    let config = &models[0].config;
    let table = load_embeddings(embeddings, &[&corpus], config)?;
    let examples = encode(&corpus, config, &table)?;
    corpus
        .records
        .iter()
        .zip(&examples)
        .map(|(r, ex)| {
            let p = ensemble_predict(&models, &ex.maps)?;
            Ok(PredictionRow {
                id: r.id.clone(),
                predicted: p.argmax(),
                probs: p.into_data(),
                answer: r.answer,
            })
        })
        .collect()
}

pub fn predictions_to_lines(rows: &[PredictionRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}

/// Finite-difference check of every parameter bank. A failing bank is an error
/// carrying the bank names; the report is returned alongside for printing.
pub fn cmd_gradcheck(run: &RunConfig, dropout: bool) -> Result<GradCheckReport> {
    let options = GradCheckOptions {
        variant: run.variant,
        seed: run.train.seed,
        dropout,
        ..GradCheckOptions::default()
    };
    gradcheck(&run.model, &options)
}

pub fn gradcheck_to_lines(report: &GradCheckReport) -> String {
    let mut s = String::new();
    for b in &report.banks {
        let _ = writeln!(
            s,
            "{:<28} {:>6} params  max rel {:.3e}  max abs {:.3e}  {}",
            b.name,
            b.size,
            b.max_relative_error,
            b.max_absolute_error,
            if b.passed { "pass" } else { "FAIL" }
        );
    }
    let _ = writeln!(
        s,
        "{}: {} (tolerance {:.0e}, kink margin {:.2e})",
        report.variant,
        if report.passed() { "all banks pass" } else { "FAILED" },
        report.tolerance,
        report.kink_margin
    );
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub val_accuracy: f64,
    pub train_accuracy: f64,
    pub best_epoch: usize,
}

pub fn ablation_to_tsv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant\tval_accuracy\ttrain_accuracy\tbest_epoch\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{:.4}\t{:.4}\t{}", r.variant, r.val_accuracy, r.train_accuracy, r.best_epoch);
    }
    s
}

/// Trains every variant with the same data, settings and seed.
pub fn ablate_prepared(
    model: &ModelConfig,
    train_config: &TrainConfig,
    train: &[LabeledMaps<f32>],
    val: &[LabeledMaps<f32>],
) -> Result<Vec<AblationRow>> {
    Variant::ALL
        .iter()
        .map(|&variant| {
            let outcome = fit(train, val, model, variant, train_config)?;
            Ok(AblationRow {
                variant,
                val_accuracy: evaluate(&outcome.best, val)?.accuracy,
                train_accuracy: evaluate(&outcome.best, train)?.accuracy,
                best_epoch: outcome.best_epoch,
            })
        })
        .collect()
}

pub fn cmd_ablate(run: &RunConfig, data: &Path, val: &Path, embeddings: &Path) -> Result<Vec<AblationRow>> {
    let train_corpus = load_corpus(data, Split::Train)?;
    let val_corpus = load_corpus(val, Split::Val)?;
    require_labels(&train_corpus, data)?;
    require_labels(&val_corpus, val)?;
    if val_corpus.is_empty() {
        return Err(QacnnError::Data(format!("{}: validation split is empty", val.display())));
    }
    let table = load_embeddings(embeddings, &[&train_corpus, &val_corpus], &run.model)?;
    let train = encode(&train_corpus, &run.model, &table)?;
    let val = encode(&val_corpus, &run.model, &table)?;
    ablate_prepared(&run.model, &run.train, &train, &val)
}

#[derive(Clone, Debug, Serialize)]
pub struct WordAttentionDump {
    /// Passage sentence the map belongs to; absent for the one-stage variant,
    /// whose single map spans the whole flattened passage.
    pub sentence: Option<usize>,
    pub tokens: Vec<String>,
    /// Position `i` covers `tokens[i..i + width]`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerDump {
    pub width: usize,
    /// Sentence-level map; position `n` covers sentences `n..n + width`.
    pub sentence_attention: Option<Vec<f64>>,
    pub peak_sentence: Option<usize>,
    /// Word-level map of the peak sentence, or of every sentence when there is
    /// no sentence-level attention.
    pub word_attention: Vec<WordAttentionDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttentionDump {
    pub id: String,
    pub variant: Variant,
    pub query: Vec<String>,
    pub choices: Vec<Vec<String>>,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub answer: Option<usize>,
    pub towers: Vec<TowerDump>,
}

fn token_row(table: &EmbeddingTable, ids: &[u32]) -> Vec<String> {
    ids.iter().map(|&id| table.token(id).unwrap_or("<unk>").to_string()).collect()
}

fn to_f64(t: &crate::Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Attention maps of one model for one record, with the aligned tokens.
pub fn attention_dump(
    model: &Model<f32>,
    id: &str,
    example: &EncodedExample,
    table: &EmbeddingTable,
) -> Result<AttentionDump> {
    let p = model.predict(example, table)?;
    let towers = p
        .attention
        .iter()
        .map(|t| {
            let peak = t.sentence.as_ref().map(|s| s.argmax());
            let word_attention = if model.variant == Variant::OneStage {
                t.word
                    .iter()
                    .map(|w| WordAttentionDump {
                        sentence: None,
                        tokens: token_row(table, &example.passage.concat()),
                        values: to_f64(w),
                    })
                    .collect()
            } else {
                t.word
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| peak.is_none_or(|k| k == *n))
                    .map(|(n, w)| WordAttentionDump {
                        sentence: Some(n),
                        tokens: token_row(table, &example.passage[n]),
                        values: to_f64(w),
                    })
                    .collect()
            };
            TowerDump {
                width: t.width,
                sentence_attention: t.sentence.as_ref().map(to_f64),
                peak_sentence: peak,
                word_attention,
            }
        })
        .collect();
    Ok(AttentionDump {
        id: id.to_string(),
        variant: model.variant,
        query: token_row(table, &example.query),
        choices: example.choices.iter().map(|c| token_row(table, c)).collect(),
        probs: to_f64(&p.probs),
        predicted: p.answer(),
        answer: example.label,
        towers,
    })
}

pub fn cmd_export_attention(
    checkpoint_path: &Path,
    record_id: &str,
    data: &Path,
    embeddings: &Path,
    out: &Path,
) -> Result<(AttentionDump, PathBuf)> {
    let model = checkpoint::load(checkpoint_path)?;
    let corpus = load_corpus(data, Split::Test)?;
    let record = corpus.get(record_id).ok_or_else(|| {
        QacnnError::InvalidArgument(format!("no record with id `{record_id}` in {}", data.display()))
    })?;
    let single = Corpus {
        split: corpus.split,
        records: vec![record.clone()],
    };
    let table = load_embeddings(embeddings, &[&single], &model.config)?;
    let example = record.encode(&model.config, &table)?;
    let dump = attention_dump(&model, record_id, &example, &table)?;
    let safe: String = record_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    let path = out.join(format!("attention_{safe}.json"));
    write_json(&path, &dump)?;
    Ok((dump, path))
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerateSummary {
    pub train: PathBuf,
    pub val: PathBuf,
    pub embeddings: PathBuf,
    pub planted: PathBuf,
    pub config: PathBuf,
    pub train_records: usize,
    pub val_records: usize,
}

/// Writes a synthetic corpus sized for `run.model`: `train.json`, `val.json`,
/// `embeddings.txt` (GloVe format), `planted.json` and a matching `config.toml`.
pub fn cmd_generate(run: &RunConfig, records: usize, held_out: usize, out: &Path) -> Result<GenerateSummary> {
    if held_out > records {
        return Err(QacnnError::InvalidArgument(format!(
            "held-out count {held_out} exceeds the {records} generated records"
        )));
    }
    let synth = SyntheticConfig::for_model(&run.model);
    let mut corpus = generate_synthetic(records, &synth, run.train.seed)?;
    let mut val = corpus.split_off(held_out, Split::Val);
    val.corpus.split = Split::Val;

    fs::create_dir_all(out).map_err(|e| QacnnError::io(out, e))?;
    let summary = GenerateSummary {
        train: out.join("train.json"),
        val: out.join("val.json"),
        embeddings: out.join("embeddings.txt"),
        planted: out.join("planted.json"),
        config: out.join("config.toml"),
        train_records: corpus.corpus.len(),
        val_records: val.corpus.len(),
    };
    write_text(&summary.train, &corpus.corpus.to_json())?;
    write_text(&summary.val, &val.corpus.to_json())?;
    corpus.embeddings.write_glove(&summary.embeddings)?;
    let planted: std::collections::BTreeMap<&str, usize> = corpus
        .corpus
        .records
        .iter()
        .zip(&corpus.planted)
        .chain(val.corpus.records.iter().zip(&val.planted))
        .map(|(r, &p)| (r.id.as_str(), p))
        .collect();
    write_json(&summary.planted, &planted)?;
    write_text(&summary.config, &run.to_file().to_toml())?;
    Ok(summary)
}

pub fn cmd_convert(source: &Path, kind: SourceKind, out: &Path) -> Result<ConversionReport> {
    let converted = convert_external(source, kind)?;
    converted.write(out)?;
    Ok(converted.report)
}

/// Writes `text` to `out/name` when an output directory is set.
pub(crate) fn maybe_write(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => write_text(&dir.join(name), text),
        None => Ok(()),
    }
}

pub(crate) fn maybe_write_json(out: Option<&Path>, name: &str, value: &impl Serialize) -> Result<()> {
    match out {
        Some(dir) => write_json(&dir.join(name), value),
        None => Ok(()),
    }
}
