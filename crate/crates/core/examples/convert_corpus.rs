//! Converts a MovieQA or MCTest distribution to qacnn-json. Without arguments
//! it converts a two-story MCTest sample written to a temporary directory.
//!
//! ```bash
//! cargo run -p qacnn --example convert_corpus -- <source dir> <movieqa|mctest> <out dir>
//! ```

use std::path::PathBuf;

use qacnn::data::{convert_external, SourceKind};

fn sample_row(id: &str) -> String {
    let mut cols = vec![
        id.to_string(),
        "Author: sample".to_string(),
        "Mia found a shell on the beach.\\newline She gave it to her brother.".to_string(),
    ];
    for q in ["What did Mia find?", "Who got the shell?", "Where was Mia?", "What did Mia do?"] {
        cols.push(format!("one: {q}"));
        cols.extend(["a shell", "her brother", "the beach", "gave it away"].map(String::from));
    }
    cols.join("\t")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (source, kind, out) = if let [source, kind, out] = args.as_slice() {
        (PathBuf::from(source), kind.parse::<SourceKind>()?, PathBuf::from(out))
    } else {
        let dir = std::env::temp_dir().join("qacnn-convert-sample");
        let src = dir.join("mctest");
        std::fs::create_dir_all(&src)?;
        let rows = format!("{}\n{}\n", sample_row("mc160.train.0"), sample_row("mc160.train.1"));
        std::fs::write(src.join("mc160.train.tsv"), rows)?;
        std::fs::write(src.join("mc160.train.ans"), "A\tB\tC\tD\nA\tB\tC\tD\n")?;
        (src, SourceKind::McTest, dir.join("out"))
    };

    let converted = convert_external(&source, kind)?;
    for path in converted.write(&out)? {
        println!("wrote {}", path.display());
    }
    for (split, n) in &converted.report.written {
        println!("{split}: {n} records");
    }
    for (reason, n) in &converted.report.skipped {
        println!("skipped {n} ({reason})");
    }
    Ok(())
}
