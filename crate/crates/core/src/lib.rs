//! Source tracing for codec-based deepfake speech.
//!
//! Utterances are classified along the three axes of a neural audio codec
//! taxonomy (quantizer, auxiliary objective, decoder) alongside a binary
//! bona fide / spoof decision. The crate covers the whole experiment loop:
//! codec registry and manifests, a deterministic synthetic corpus, a shared
//! front-end with per-task heads trained on a weighted multi-task loss,
//! inference with root-product score fusion, and EER / weighted-F1 reports.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scoring;
pub mod seed;
pub mod taxonomy;
pub mod trainer;

pub use error::{Error, Result};
pub use taxonomy::{
    task_classes, AuxClass, CodecRegistry, CodecSpec, DecClass, Origin, TaskKind, TaxonomyLabel, VqClass, BONAFIDE,
};
