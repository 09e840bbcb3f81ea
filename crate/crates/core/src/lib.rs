//! Relational memory network for bAbI question answering.
//!
//! The crate is split along the pipeline:
//!
//! - [`tensor`]: dense arrays and a reverse-mode differentiation tape.
//! - [`corpus`]: bAbI task-file parsing, vocabularies, truncation, batching.
//! - [`model`]: the entity/relational memory network forward pass and checkpoints.
//! - [`train`]: loss, gradient clipping, Adam, and the training/selection protocol.
//! - [`experiment`]: orchestration behind the `relnet` command-line tool.

pub mod corpus;
pub mod experiment;
pub mod model;
pub mod tensor;
pub mod train;
