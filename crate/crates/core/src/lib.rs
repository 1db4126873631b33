//! Toolkit for building and probing unanswerable visual questions.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`data`] holds the corpus model (`VqaInstance`, `PerturbationRecord`),
//!   JSONL I/O, the binary-answer filter and dataset splitting.
//! * [`text`] rewrites questions: noun replacement with embedding
//!   neighbours (filtered by a language-model score) and rule-based negation.
//! * [`image`] swaps, masks or copy-moves image content.
//! * [`annotation`] turns perturbations into labeling tasks, ingests worker
//!   responses and derives majority-vote consensus plus analytics.
//! * [`selective`] implements the abstaining classifier (answer head plus a
//!   selection function) and threshold calibration.
//! * [`eval`] builds protocol prompts, parses model replies and computes the
//!   accuracy / F1 / out-of-scope metrics.

pub mod annotation;
pub mod data;
pub mod eval;
pub mod image;
pub mod normalize;
pub mod selective;
pub mod text;

pub use annotation::{
    AnnotationTask, AnnotatorResponse, ConsensusAnswer, ConsensusLabel, ConsensusOutcome,
};
pub use data::{AnswerType, DatasetSplit, PerturbationKind, PerturbationRecord, Split, VqaInstance};
pub use eval::{MetricReport, ParsedResponse, Protocol, ShotConfig, Verdict};
pub use image::{BBox, ConceptSet, ImageEmbedding, ObjectDetection, OverlapScore};
pub use selective::{AnswerDistribution, FusedFeature, SelectiveConfig, SelectiveOutput, Variant};
pub use text::{EmbeddingTable, LmScorer, ReplacementCandidate};
