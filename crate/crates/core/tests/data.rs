use std::fs;
use std::path::Path;

use proptest::prelude::*;
use qacnn::data::{
    convert_external, generate_synthetic, load_corpus, write_corpus, Corpus, QaRecord, SourceKind, SyntheticConfig,
};
use qacnn::embeddings::tokenize;
use qacnn::training::Split;
use qacnn::{ModelConfig, QacnnError};

fn record() -> impl Strategy<Value = QaRecord> {
    (
        "[a-z0-9]{1,6}",
        prop::collection::vec("[A-Za-z ,.?]{0,20}", 0..4),
        "[A-Za-z ?]{1,20}",
        prop::collection::vec("[a-z ]{0,10}", 2..6),
        any::<prop::sample::Index>(),
        any::<bool>(),
    )
        .prop_map(|(id, passage, query, choices, idx, labeled)| QaRecord {
            id,
            passage,
            query,
            answer: labeled.then(|| idx.index(choices.len())),
            choices,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_is_identity(records in prop::collection::vec(record(), 0..6)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<QaRecord> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let corpus = Corpus { split: Split::Val, records };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("val.json");
        write_corpus(&corpus, &path).unwrap();
        prop_assert_eq!(load_corpus(&path, Split::Val).unwrap(), corpus);
    }
}

fn load_text(text: &str) -> qacnn::Result<Corpus> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, text).unwrap();
    load_corpus(&path, Split::Train)
}

#[test]
fn schema_errors_name_record_and_key() {
    let cases = [
        (r#"[{"id": "a", "passage": [], "query": "q"}]"#, 0, "choices"),
        (r#"[{"id": "a", "passage": [], "query": "q", "choices": ["x", "y"]}, {"id": "b", "passage": "flat", "query": "q", "choices": ["x", "y"]}]"#, 1, "passage"),
        (r#"[{"id": 3, "passage": [], "query": "q", "choices": ["x", "y"]}]"#, 0, "id"),
        (r#"[{"id": "a", "passage": [], "query": "q", "choices": ["x"]}]"#, 0, "choices"),
        (r#"[{"id": "a", "passage": [], "query": "q", "choices": ["x", "y"], "answer": -1}]"#, 0, "answer"),
    ];
    for (text, want_index, want_key) in cases {
        match load_text(text).unwrap_err() {
            QacnnError::Schema { index, key, .. } => {
                assert_eq!((index, key.as_str()), (want_index, want_key), "{text}");
            }
            e => panic!("{text}: unexpected {e}"),
        }
    }
    assert!(matches!(load_text("{}"), Err(QacnnError::Data(_))));
    assert!(matches!(load_text("[1,"), Err(QacnnError::Data(_))));
}

fn movieqa_fixture(dir: &Path, with_orphan: bool) {
    fs::create_dir_all(dir.join("plot")).unwrap();
    let mut qa = vec![serde_json::json!({
        "qid": "train:1", "question": "Who rescues the cat?",
        "answers": ["Ann", "Bob", "Cy", "Dee", "Eve"], "correct_index": 1,
        "imdb_key": "tt001", "video_clips": [], "plot_alignment": [0]
    })];
    if with_orphan {
        qa.push(serde_json::json!({
            "qid": "val:7", "question": "Where?", "answers": ["a", "b", "c", "d", "e"],
            "correct_index": 0, "imdb_key": "tt404"
        }));
    }
    fs::write(dir.join("qa.json"), serde_json::to_string(&qa).unwrap()).unwrap();
    fs::write(
        dir.join("splits.json"),
        r#"{"train": ["tt001"], "val": ["tt404"], "test": []}"#,
    )
    .unwrap();
    fs::write(
        dir.join("plot/tt001.wiki"),
        "A cat is stuck in a tree. Bob climbs up.\nBob rescues the cat!\n",
    )
    .unwrap();
}

#[test]
fn movieqa_single_movie_fixture() {
    let src = tempfile::tempdir().unwrap();
    movieqa_fixture(src.path(), false);
    let out = convert_external(src.path(), SourceKind::MovieQa).unwrap();
    assert_eq!(out.train.len(), 1);
    let r = &out.train.records[0];
    assert_eq!(r.id, "train:1");
    assert_eq!(r.passage, vec!["A cat is stuck in a tree.", "Bob climbs up.", "Bob rescues the cat!"]);
    assert_eq!(r.choices.len(), 5);
    assert_eq!(r.answer, Some(1));
    assert_eq!(out.report.total_skipped(), 0);
}

#[test]
fn movieqa_orphan_is_skipped_and_counted() {
    let src = tempfile::tempdir().unwrap();
    movieqa_fixture(src.path(), true);
    let out = convert_external(src.path(), SourceKind::MovieQa).unwrap();
    assert_eq!(out.val.len(), 0);
    assert_eq!(out.report.skipped.get("missing_plot"), Some(&1));
    assert_eq!(out.report.written["train"], 1);
}

#[test]
fn conversion_is_byte_identical_on_rerun() {
    let src = tempfile::tempdir().unwrap();
    movieqa_fixture(src.path(), true);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let paths = convert_external(src.path(), SourceKind::MovieQa).unwrap().write(a.path()).unwrap();
    convert_external(src.path(), SourceKind::MovieQa).unwrap().write(b.path()).unwrap();
    assert_eq!(paths.len(), 4);
    for p in paths {
        let name = p.file_name().unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let reloaded = load_corpus(&a.path().join("train.json"), Split::Train).unwrap();
    assert_eq!(reloaded.len(), 1);
}

fn mctest_row(id: &str) -> String {
    let mut cols = vec![
        id.to_string(),
        "Author: x;Work Time(s): 1".to_string(),
        "Tom had a red ball.\\newline He gave it to Sue. Sue was happy.".to_string(),
    ];
    for q in 0..4 {
        cols.push(format!("one: Question {q}?"));
        cols.extend(["red", "blue", "green", "Sue"].map(String::from));
    }
    cols.join("\t")
}

#[test]
fn mctest_fixture_passes_four_choices_through() {
    let src = tempfile::tempdir().unwrap();
    fs::write(
        src.path().join("mc160.dev.tsv"),
        format!("{}\n{}\nbroken\trow\n", mctest_row("mc160.dev.0"), mctest_row("mc160.dev.1")),
    )
    .unwrap();
    fs::write(src.path().join("mc160.dev.ans"), "A\tD\tB\tC\nC\tC\tA\tB\n").unwrap();
    fs::write(src.path().join("mc160.test.tsv"), format!("{}\n", mctest_row("mc160.test.0"))).unwrap();
    let out = convert_external(src.path(), SourceKind::McTest).unwrap();
    assert_eq!(out.val.len(), 8);
    assert_eq!(out.test.len(), 4);
    assert_eq!(out.report.skipped.get("malformed_row"), Some(&1));
    let q = out.val.get("mc160.dev.0.q2").unwrap();
    assert_eq!(q.query, "Question 1?");
    assert_eq!(q.choices.len(), 4);
    assert_eq!(q.answer, Some(3));
    assert_eq!(q.passage, vec!["Tom had a red ball.", "He gave it to Sue.", "Sue was happy."]);
    assert!(out.test.records.iter().all(|r| r.answer.is_none()));
}

#[test]
fn missing_source_is_an_io_error() {
    assert!(matches!(
        convert_external(Path::new("/no/such/movieqa"), SourceKind::MovieQa),
        Err(QacnnError::Io { .. })
    ));
}

#[test]
fn synthetic_records_are_solvable_by_overlap() {
    let config = SyntheticConfig::for_model(&ModelConfig::tiny_plus());
    assert!(config.vocabulary_size() >= 50);
    let s = generate_synthetic(200, &config, 11).unwrap();
    assert_eq!(s.corpus.len(), 200);
    for (r, &planted) in s.corpus.records.iter().zip(&s.planted) {
        let keys: Vec<String> = tokenize(&r.query)[1..].to_vec();
        let sentences: Vec<Vec<String>> = r.passage.iter().map(|p| tokenize(p)).collect();
        let holding: Vec<usize> = (0..sentences.len())
            .filter(|&n| keys.iter().all(|k| sentences[n].contains(k)))
            .collect();
        assert_eq!(holding, vec![planted], "{r:?}");
        let overlaps: Vec<usize> = r
            .choices
            .iter()
            .map(|c| tokenize(c).iter().filter(|t| sentences[planted].contains(t)).count())
            .collect();
        let best = *overlaps.iter().max().unwrap();
        assert_eq!(overlaps.iter().filter(|&&o| o == best).count(), 1);
        assert_eq!(overlaps.iter().position(|&o| o == best), r.answer);
        assert!(r.passage.len() >= 4 && r.passage.len() <= 8);
        assert!(sentences.iter().all(|s| s.len() <= 12));
        for c in &r.choices {
            assert!(sentences.iter().any(|s| tokenize(c).iter().all(|t| s.contains(t))));
        }
    }
    let labels: Vec<usize> = s.corpus.records.iter().filter_map(|r| r.answer).collect();
    for m in 0..4 {
        assert!(labels.iter().filter(|&&l| l == m).count() > 20);
    }
}

#[test]
fn synthetic_corpus_encodes_without_oov() {
    let model = ModelConfig::tiny_plus();
    let s = generate_synthetic(30, &SyntheticConfig::for_model(&model), 2).unwrap();
    for e in s.corpus.encode(&model, &s.embeddings).unwrap() {
        assert!(e.passage.iter().flatten().chain(&e.query).all(|&id| id != qacnn::embeddings::OOV));
    }
}
