//! Quantification of cognitive-load cues in explanation dialogues.
//!
//! The crate ingests dependency-parsed transcripts (CoNLL-U), quantized
//! explainee gaze streams and understanding-state annotations, and turns each
//! annotated utterance (plus its neighbours) into four cue values:
//!
//! * information value: mean surprisal of the explainer's words,
//! * gaze entropy: mean negative log-probability of the aligned gaze labels,
//! * syntactic complexity score, built from length, head count and depth,
//! * average dependency length.
//!
//! On top of the feature table it runs Kruskal-Wallis / Dunn statistics and
//! trains random-forest, gradient-boosted and linear fusion classifiers.

pub mod app;
pub mod classify;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod lm;
pub mod pipeline;
pub mod stats;
pub mod syntax;
pub mod synth;

pub use corpus::{
    ContextWindow, GazeSample, Speaker, Token, UnderstandingAnnotation, UnderstandingState,
    Utterance,
};
pub use error::{Error, Result};
pub use lm::NGramModel;
pub use pipeline::{Cue, FeatureRecord};
