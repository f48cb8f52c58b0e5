//! The `qacnn` command line.
//!
//! ```text
//! qacnn train    --config run.toml --data train.json [--val val.json] --embeddings glove.txt --out runs/a
//! qacnn eval     --checkpoint a.ckpt [--checkpoint b.ckpt ...] --data val.json --embeddings glove.txt
//! qacnn predict  --checkpoint a.ckpt --data test.json --embeddings glove.txt --out preds
//! qacnn gradcheck [--config tiny.toml] [--variant full]
//! qacnn ablate   --config run.toml --data train.json --val val.json --embeddings glove.txt --out ablation
//! qacnn export-attention --checkpoint a.ckpt --id q17 --data val.json --embeddings glove.txt --out maps
//! qacnn generate --out synth [--records 250 --held-out 50]
//! qacnn convert  --source MovieQA/data --kind movieqa --out corpus
//! qacnn replay   --manifest runs/a/manifest.json [--out runs/a2]
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure. `QACNN_THREADS` caps the worker threads used in training.

pub mod commands;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use self::commands::*;
use self::manifest::{Job, RunManifest};
use self::settings::{ConfigFile, Preset, RunConfig};
use crate::data::SourceKind;
use crate::error::{QacnnError, Result};
use crate::model::Variant;

#[derive(Debug, Parser)]
#[command(name = "qacnn", version, about = "Query-based attention CNN for multiple-choice reading comprehension")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// full, one_stage, no_attention, word_attention_only or sentence_attention_only.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share first-stage kernels between query and choice maps (needs equal lengths).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tie_stage1_kernels: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self, default_preset: Preset) -> Result<RunConfig> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile {
                preset: Some(default_preset),
                ..Default::default()
            },
        };
        if self.variant.is_some() {
            file.variant = self.variant;
        }
        if self.seed.is_some() {
            file.seed = self.seed;
        }
        if self.tie_stage1_kernels.is_some() {
            file.tie_stage1_kernels = self.tie_stage1_kernels;
        }
        file.resolve()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model; writes a checkpoint, metric log and manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Labeled training split (qacnn-json).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// GloVe text file.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of one or more checkpoints (and their ensemble).
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choice probabilities per record, averaged over the checkpoints.
    Predict {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences (tiny preset by default).
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
        /// Request dropout during the check (always rejected).
        #[arg(long)]
        dropout: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all five variants under one seed and tabulate validation accuracy.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump attention maps and aligned tokens for one record.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with planted answers (tiny_plus preset by default).
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 250)]
        records: usize,
        #[arg(long, default_value_t = 50)]
        held_out: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a MovieQA or MCTest distribution to qacnn-json.
    Convert {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        kind: SourceKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (defaults to the recorded one).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Reads `QACNN_THREADS`; unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("QACNN_THREADS") {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| QacnnError::InvalidArgument(format!("QACNN_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

impl Command {
    /// The job, its resolved configuration and output directory.
    fn plan(self) -> Result<(Job, RunConfig, Option<PathBuf>)> {
        let neutral = || ConfigFile::default().resolve();
        Ok(match self {
            Command::Train {
                config,
                data,
                val,
                embeddings,
                out,
            } => (Job::Train { data, val, embeddings }, config.resolve(Preset::Paper)?, Some(out)),
            Command::Eval {
                checkpoints,
                data,
                embeddings,
                out,
            } => (
                Job::Eval {
                    checkpoints,
                    data,
                    embeddings,
                },
                neutral()?,
                out,
            ),
            Command::Predict {
                checkpoints,
                data,
                embeddings,
                out,
            } => (
                Job::Predict {
                    checkpoints,
                    data,
                    embeddings,
                },
                neutral()?,
                out,
            ),
            Command::Gradcheck { config, dropout, out } => {
                (Job::Gradcheck { dropout }, config.resolve(Preset::Tiny)?, out)
            }
            Command::Ablate {
                config,
                data,
                val,
                embeddings,
                out,
            } => (Job::Ablate { data, val, embeddings }, config.resolve(Preset::Paper)?, Some(out)),
            Command::ExportAttention {
                checkpoint,
                id,
                data,
                embeddings,
                out,
            } => (
                Job::ExportAttention {
                    checkpoint,
                    record_id: id,
                    data,
                    embeddings,
                },
                neutral()?,
                Some(out),
            ),
            Command::Generate {
                config,
                records,
                held_out,
                out,
            } => (Job::Generate { records, held_out }, config.resolve(Preset::TinyPlus)?, Some(out)),
            Command::Convert { source, kind, out } => (Job::Convert { source, kind }, neutral()?, Some(out)),
            Command::Replay { manifest, out } => {
                let m = RunManifest::load(&manifest)?;
                m.config.validate()?;
                let out = out.unwrap_or(m.out);
                (m.job, m.config, Some(out))
            }
        })
    }
}

/// Runs `job`, writing the manifest into `out` first. Progress goes to stdout.
pub fn execute(job: Job, mut run: RunConfig, out: Option<&Path>) -> Result<()> {
    run.train.threads = threads_from_env()?;
    if let Some(dir) = out {
        RunManifest::new(job.clone(), run.clone(), dir.to_path_buf()).write(dir)?;
    }
    match job {
        Job::Train { data, val, embeddings } => {
            let out = out.expect("train has an output directory");
            let s = cmd_train(&run, &data, val.as_deref(), &embeddings, out)?;
            println!(
                "trained {} model: best epoch {} of {} (accuracy {:.4}); checkpoint {}",
                s.variant,
                s.best_epoch,
                s.epochs_run,
                s.best_accuracy,
                s.checkpoint.display()
            );
        }
        Job::Eval {
            checkpoints,
            data,
            embeddings,
        } => {
            let report = cmd_eval(&checkpoints, &data, &embeddings)?;
            print!("{}", report.to_lines());
            maybe_write_json(out, "eval_report.json", &report)?;
        }
        Job::Predict {
            checkpoints,
            data,
            embeddings,
        } => {
            let rows = cmd_predict(&checkpoints, &data, &embeddings)?;
            let lines = predictions_to_lines(&rows);
            match out {
                Some(_) => println!("{} predictions", rows.len()),
                None => print!("{lines}"),
            }
            maybe_write(out, "predictions.jsonl", &lines)?;
        }
        Job::Gradcheck { dropout } => {
            let started = Instant::now();
            let report = cmd_gradcheck(&run, dropout)?;
            print!("{}", gradcheck_to_lines(&report));
            println!("elapsed {:.2?}", started.elapsed());
            maybe_write_json(out, "gradcheck.json", &report)?;
            if !report.passed() {
                return Err(QacnnError::Numeric(format!(
                    "gradient check failed for {}",
                    report.failing().join(", ")
                )));
            }
        }
        Job::Ablate { data, val, embeddings } => {
            let rows = cmd_ablate(&run, &data, &val, &embeddings)?;
            let table = ablation_to_tsv(&rows);
            print!("{table}");
            maybe_write(out, "ablation.tsv", &table)?;
        }
        Job::ExportAttention {
            checkpoint,
            record_id,
            data,
            embeddings,
        } => {
            let out = out.expect("export has an output directory");
            let (dump, path) = cmd_export_attention(&checkpoint, &record_id, &data, &embeddings, out)?;
            println!(
                "{}: predicted choice {} ({} towers) -> {}",
                dump.id,
                dump.predicted,
                dump.towers.len(),
                path.display()
            );
        }
        Job::Generate { records, held_out } => {
            let out = out.expect("generate has an output directory");
            let s = cmd_generate(&run, records, held_out, out)?;
            println!(
                "wrote {} training and {} held-out records to {}",
                s.train_records,
                s.val_records,
                out.display()
            );
        }
        Job::Convert { source, kind } => {
            let out = out.expect("convert has an output directory");
            let report = cmd_convert(&source, kind, out)?;
            for (split, n) in &report.written {
                println!("{split}: {n} records");
            }
            println!("skipped: {}", report.total_skipped());
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let (job, config, out) = cli.command.plan()?;
    execute(job, config, out.as_deref())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
