//! Corpus files, external-format converters and the synthetic generator.

mod convert;
mod corpus;
mod synthetic;

pub use self::convert::{convert_external, ConversionReport, Converted, SourceKind};
pub use self::corpus::{load_corpus, write_corpus, Corpus, QaRecord};
pub use self::synthetic::{generate_synthetic, synthetic_embeddings, SyntheticConfig, SyntheticCorpus};
