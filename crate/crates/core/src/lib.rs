//! Bi-level reward learning from a demonstration video.
//!
//! An upper-level visual backend compares expert and learner frame sequences
//! and writes improvement feedback; a lower-level backend turns that feedback
//! into an updated reward program, which is trained against with a
//! cross-entropy policy optimizer and scored with the normalized expert score.

pub mod digest;
pub mod env;
pub mod eval;
pub mod feedback;
pub mod lang;
pub mod orchestrator;
pub mod trainer;
