//! Ontology embeddings pretrained by maximizing the satisfiability of
//! first-order axioms, and a medication-recommendation harness to evaluate
//! them.

pub mod axioms;
pub mod checks;
pub mod ehr;
pub mod error;
pub mod grounding;
pub mod logic;
pub mod metrics;
pub mod ontology;
pub mod pipeline;
pub mod optim;
pub mod recommender;
pub mod report;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
