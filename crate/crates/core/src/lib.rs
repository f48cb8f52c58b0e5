pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod real;
pub mod similarity;
pub mod tape;
pub mod tensor;
pub mod training;

pub use config::ModelConfig;
pub use embeddings::{EmbeddingTable, EncodedExample};
pub use error::{QacnnError, Result};
pub use model::{Model, Prediction, Variant};
pub use real::Real;
pub use similarity::SimilarityMaps;
pub use tensor::Tensor;
pub use training::TrainConfig;
