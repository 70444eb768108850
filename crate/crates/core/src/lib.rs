//! Trend tracking over time-sliced opinion corpora: dynamic topic models fitted by
//! variational EM with Kalman smoothing, incremental slice updates, sentiment
//! aggregation over topics, and topic-space embeddings.

pub mod analytics;
pub mod corpus;
pub mod dtm;
pub mod error;
pub mod exports;
pub mod incremental;
pub mod kalman;
pub mod lda;
pub mod sentiment;
pub mod synthetic;

pub use error::{Error, Result};
