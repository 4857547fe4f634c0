//! Document relation learning with embedding difference vectors.
//!
//! Documents are composed into dense vectors from pretrained word
//! embeddings ([`composer`]), pairs of documents are represented by the
//! offset between their vectors ([`relation`]), and a linear SVM trained by
//! dual coordinate descent ([`svm`]) classifies those offsets. [`metrics`]
//! and [`pipeline`] implement the duplicate-detection (ROC AUC) and
//! dialogue-act (micro-F1) evaluation protocols.

pub mod composer;
pub mod config;
pub mod embedding;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod relation;
pub mod svm;
pub mod synth;

pub use composer::{Document, DocumentVector, SifParams};
pub use config::RunConfig;
pub use embedding::{EmbeddingFormat, EmbeddingTable, TokenFrequency};
pub use error::{Error, Result};
pub use metrics::{EvalReport, Task};
pub use relation::{DiffMode, RelationInstance, RelationPair, SplitSpec};
pub use svm::{SvmModel, SvmParams};
