//! Retrieval-based short-text conversation.
//!
//! A message is answered by retrieving stored (post, comment) pairs,
//! scoring each with an ensemble of matching models and returning the
//! best-ranked comment. The crate contains the corpus tooling, the
//! retrievers, every matcher and its trainer, the RankingSVM ensemble,
//! the evaluation protocol and model persistence.

pub mod corpus;
pub mod deepmatch;
pub mod engine;
pub mod eval;
pub mod features;
pub mod index;
pub mod latent;
pub mod pipeline;
pub mod ranker;
pub mod synthetic;
pub mod topicword;
pub mod translm;

mod error;
pub mod math;

pub use error::{Error, Result};
