//! Discursive distributed topic model: a globally normalized log-bilinear
//! model of reply trees with binary comment-level and thread-level topic bits.
//!
//! * [`corpus`]: text pipeline, vocabulary, thread trees, synthetic corpora
//! * [`model`]: parameters, energy, variants, checkpoints
//! * [`inference`]: mean-field fits of the posterior and joint families
//! * [`training`]: gradient estimates and Adam
//! * [`eval`]: enumeration oracles, AIS perplexity, downstream tasks
//! * [`cli`]: the `ddtm` command line

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod math;
pub mod model;
pub mod sampling;
pub mod training;

pub use corpus::{CommentBag, Corpus, Thread, ThreadShape, Vocabulary};
pub use error::{Error, Result};
pub use inference::{JointMF, MfSchedule, PosteriorMF};
pub use model::{HiddenAssignment, HiddenConfig, ModelParams, Variant};
