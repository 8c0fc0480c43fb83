//! Localize-then-answer pipeline over precomputed frame
//! features: a keyframe localizer and an answerer sharing one frozen
//! backbone, chained forward for inference and in reverse for
//! pseudo-label refinement, plus moment retrieval and evaluation.

pub mod answerer;
pub mod backbone;
pub mod chain;
pub mod datamodel;
pub mod error;
pub mod harness;
pub mod localizer;
pub mod moment;
pub mod text;

pub use error::{Error, Result};
