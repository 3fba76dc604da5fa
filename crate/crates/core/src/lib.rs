//! Sense-level vocabulary for masked language models: WordNet parsing, sense
//! embeddings, input-space mapping, cloze probing and triple extraction.

pub mod embedding;
pub mod error;
pub mod lm;
pub mod ontology;
pub mod sampling;
pub mod triple;
pub mod sense;
pub mod mapper;
pub mod probe;
pub mod extraction;

pub use error::{Error, Result};
