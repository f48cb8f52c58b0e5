use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qacnn::checkpoint;
use qacnn::cli::commands::{ablate_prepared, cmd_eval, cmd_export_attention, cmd_generate, cmd_train, AttentionDump};
use qacnn::cli::settings::ConfigFile;
use qacnn::data::{generate_synthetic, SyntheticConfig};
use qacnn::gradcheck::{gradcheck_with, GradCheckOptions};
use qacnn::training::{prepare, MetricLog, Split};
use qacnn::{Model, ModelConfig, QacnnError, TrainConfig, Variant};

fn qacnn(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qacnn"))
        .args(args)
        .env("QACNN_THREADS", "1")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a tiny_plus config with the given extra lines and a synthetic corpus next to it.
fn corpus_dir(extra: &str, records: usize, held_out: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, format!("preset = \"tiny_plus\"\n{extra}")).unwrap();
    let run = ConfigFile::load(&config).unwrap().resolve().unwrap();
    cmd_generate(&run, records, held_out, dir.path()).unwrap();
    (dir, config)
}

#[test]
fn missing_data_path_exits_nonzero_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/train.json");
    let (code, _, err) = qacnn(&[
        "train",
        "--data",
        s(&missing),
        "--embeddings",
        s(&missing),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qacnn(&["frobnicate"]).0, 1);
    assert_eq!(qacnn(&["gradcheck", "--variant", "most"]).0, 1);
    let (code, _, err) = qacnn(&["gradcheck", "--dropout"]);
    assert_eq!(code, 1);
    assert!(err.contains("dropout"), "{err}");
    assert_eq!(qacnn(&["--help"]).0, 0);
}

#[test]
fn oversize_gradcheck_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("big.toml");
    fs::write(&config, "preset = \"paper\"\n").unwrap();
    let (code, _, err) = qacnn(&["gradcheck", "--config", s(&config)]);
    assert_eq!(code, 1);
    assert!(err.contains("parameters"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "preset = \"tiny\"\nlearning_rat = 0.1\n").unwrap();
    let (code, _, err) = qacnn(&["gradcheck", "--config", s(&config)]);
    assert_eq!(code, 1);
    assert!(err.contains("learning_rat"), "{err}");
}

#[test]
fn gradcheck_command_passes_on_tiny() {
    let (code, out, err) = qacnn(&["gradcheck", "--variant", "sentence_attention_only"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("all banks pass"), "{out}");
}

#[test]
fn corrupted_backward_is_caught_and_named() {
    let config = ModelConfig::tiny();
    let report = gradcheck_with(&config, &GradCheckOptions::default(), |g| {
        for (name, bank) in g.entries_mut() {
            if name == "d2.sent_att.kernels" {
                bank.data_mut()[0] = bank.data()[0] * 1.5 + 0.1;
            }
        }
    })
    .unwrap();
    assert_eq!(report.failing(), vec!["d2.sent_att.kernels"]);
}

#[test]
fn variant_flag_tags_the_checkpoint() {
    let (dir, config) = corpus_dir("epochs = 2\n", 40, 10);
    let out = dir.path().join("one");
    let (code, stdout, err) = qacnn(&[
        "train",
        "--config",
        s(&config),
        "--variant",
        "one_stage",
        "--data",
        s(&dir.path().join("train.json")),
        "--embeddings",
        s(&dir.path().join("embeddings.txt")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("one_stage"), "{stdout}");
    let model = checkpoint::load(&out.join("model.ckpt")).unwrap();
    assert_eq!(model.variant, Variant::OneStage);
    assert!(out.join("manifest.json").exists());
    assert!(!model.params.entries().iter().any(|(n, _)| n.contains("sent_")));
}

#[test]
fn untrained_model_scores_near_chance_with_five_choices() {
    let (dir, config) = corpus_dir("choices = 5\n", 1000, 0);
    let run = ConfigFile::load(&config).unwrap().resolve().unwrap();
    let labels: Vec<usize> = qacnn::data::load_corpus(&dir.path().join("train.json"), Split::Train)
        .unwrap()
        .records
        .iter()
        .map(|r| r.answer.unwrap())
        .collect();
    for m in 0..5 {
        let share = labels.iter().filter(|&&l| l == m).count() as f64 / 1000.0;
        assert!((share - 0.2).abs() < 0.05, "label {m} share {share}");
    }
    let ckpt = dir.path().join("init.ckpt");
    checkpoint::save(&Model::<f32>::init(run.model, Variant::Full, 5).unwrap(), &ckpt).unwrap();
    let report = cmd_eval(&[ckpt], &dir.path().join("train.json"), &dir.path().join("embeddings.txt")).unwrap();
    let acc = report.models[0].accuracy;
    assert_eq!(report.models[0].total, 1000);
    assert!((acc - 0.2).abs() <= 0.05, "untrained accuracy {acc}");
}

#[test]
fn eight_checkpoints_report_an_ensemble_line() {
    let (dir, config) = corpus_dir("", 30, 0);
    let run = ConfigFile::load(&config).unwrap().resolve().unwrap();
    let mut args = vec!["eval".to_string()];
    for seed in 0..8 {
        let p = dir.path().join(format!("m{seed}.ckpt"));
        checkpoint::save(&Model::<f32>::init(run.model.clone(), Variant::Full, seed).unwrap(), &p).unwrap();
        args.extend(["--checkpoint".into(), s(&p).into()]);
    }
    args.extend(["--data".into(), s(&dir.path().join("train.json")).into()]);
    args.extend(["--embeddings".into(), s(&dir.path().join("embeddings.txt")).into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let (code, out, err) = qacnn(&args);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 9, "{out}");
    assert!(out.lines().last().unwrap().starts_with("ensemble of 8"), "{out}");
}

#[test]
fn eval_rejects_checkpoints_with_different_configs() {
    let (dir, _) = corpus_dir("", 10, 0);
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    checkpoint::save(&Model::<f32>::init(ModelConfig::tiny_plus(), Variant::Full, 0).unwrap(), &a).unwrap();
    let mut other = ModelConfig::tiny_plus();
    other.kernels = 8;
    checkpoint::save(&Model::<f32>::init(other, Variant::Full, 0).unwrap(), &b).unwrap();
    let err = cmd_eval(&[a, b], &dir.path().join("train.json"), &dir.path().join("embeddings.txt")).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn ablation_has_five_rows_and_repeats_exactly() {
    let model = ModelConfig::tiny_plus();
    let mut s = generate_synthetic(50, &SyntheticConfig::for_model(&model), 4).unwrap();
    let val = s.split_off(15, Split::Val);
    let table = &s.embeddings;
    let train = prepare::<f32>(&s.corpus.encode(&model, table).unwrap(), table).unwrap();
    let val = prepare::<f32>(&val.corpus.encode(&model, table).unwrap(), table).unwrap();
    let config = TrainConfig {
        epochs: 3,
        threads: Some(1),
        ..TrainConfig::default()
    };
    let a = ablate_prepared(&model, &config, &train, &val).unwrap();
    let b = ablate_prepared(&model, &config, &train, &val).unwrap();
    assert_eq!(a.len(), 5);
    assert_eq!(a.iter().map(|r| r.variant).collect::<Vec<_>>(), Variant::ALL.to_vec());
    assert_eq!(a, b);
}

#[test]
fn exported_attention_has_valid_lengths_and_range() {
    let (dir, _) = corpus_dir("", 20, 0);
    let model = ModelConfig::tiny_plus();
    let ckpt = dir.path().join("m.ckpt");
    checkpoint::save(&Model::<f32>::init(model.clone(), Variant::Full, 2).unwrap(), &ckpt).unwrap();
    let data = dir.path().join("train.json");
    let emb = dir.path().join("embeddings.txt");
    let id = qacnn::data::load_corpus(&data, Split::Train).unwrap().records[3].id.clone();
    let (dump, path) = cmd_export_attention(&ckpt, &id, &data, &emb, dir.path()).unwrap();
    let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back["id"], id.as_str());
    check_dump(&dump, &model);

    let err = cmd_export_attention(&ckpt, "no-such-id", &data, &emb, dir.path()).unwrap_err();
    assert!(matches!(err, QacnnError::InvalidArgument(_)));
}

fn check_dump(dump: &AttentionDump, model: &ModelConfig) {
    assert_eq!(dump.towers.len(), model.widths.len());
    let open = |v: &f64| *v > 0.0 && *v < 1.0;
    for t in &dump.towers {
        let sent = t.sentence_attention.as_ref().unwrap();
        assert_eq!(sent.len(), model.passage_sentences - t.width + 1);
        assert!(sent.iter().all(open));
        assert_eq!(t.word_attention.len(), 1);
        let w = &t.word_attention[0];
        assert_eq!(w.sentence, t.peak_sentence);
        assert_eq!(w.tokens.len(), model.sentence_words);
        assert_eq!(w.values.len(), model.sentence_words - t.width + 1);
        assert!(w.values.iter().all(open));
    }
    assert!((dump.probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn replay_reproduces_training_and_model_learns_toy_task() {
    let (dir, config) = corpus_dir("epochs = 30\n", 120, 30);
    let data = dir.path().join("train.json");
    let val = dir.path().join("val.json");
    let emb = dir.path().join("embeddings.txt");
    let first = dir.path().join("first");
    let (code, _, err) = qacnn(&[
        "train",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--val",
        s(&val),
        "--embeddings",
        s(&emb),
        "--out",
        s(&first),
    ]);
    assert_eq!(code, 0, "{err}");
    let second = dir.path().join("second");
    let (code, _, err) = qacnn(&["replay", "--manifest", s(&first.join("manifest.json")), "--out", s(&second)]);
    assert_eq!(code, 0, "{err}");
    let metrics = |d: &Path| fs::read_to_string(d.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics(&first), metrics(&second));
    assert_eq!(fs::read(first.join("model.ckpt")).unwrap(), fs::read(second.join("model.ckpt")).unwrap());
    let log = MetricLog::parse(&metrics(&first)).unwrap();
    assert!(!log.records.is_empty());

    let report = cmd_eval(&[first.join("model.ckpt")], &data, &emb).unwrap();
    assert_eq!(report.models[0].accuracy, 1.0, "{}", report.to_lines());
}

#[test]
fn in_process_train_writes_artifacts() {
    let (dir, config) = corpus_dir("epochs = 1\n", 20, 0);
    let run = ConfigFile::load(&config).unwrap().resolve().unwrap();
    let out = dir.path().join("run");
    let summary = cmd_train(&run, &dir.path().join("train.json"), None, &dir.path().join("embeddings.txt"), &out).unwrap();
    assert_eq!(summary.epochs_run, 1);
    for f in ["model.ckpt", "metrics.jsonl", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let written = ConfigFile::load(&out.join("config.toml")).unwrap().resolve().unwrap();
    assert_eq!(written.model, run.model);
}
