//! Goal-conditioned next-service recommendation for DAG-structured workflows.
//!
//! The pipeline builds a service knowledge graph from a workflow repository,
//! turns it into composition paths, embeds workflow goals with paragraph
//! vectors and trains a goal-gated LSTM with attention to predict the next
//! service after an anchor.

pub mod error;
pub mod evaluation;
pub mod goalvec;
pub mod math;
pub mod pathgen;
pub mod pipeline;
pub mod provenance;
pub mod recommender;
pub mod seqmodel;
pub mod skg;
pub mod synthetic;
pub mod vocab;

pub use error::{Error, Result};
