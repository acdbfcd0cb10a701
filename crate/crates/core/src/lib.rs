//! Context-aware dialogue state tracking.
//!
//! Each (slot, value) candidate of the ontology is scored as a binary
//! decision from four pieces of evidence: the antecedent user utterance
//! where the slot last changed, the previous value of the slot, a gated
//! fusion of the previous system utterance with the current user utterance,
//! and the system acts. See the crate README for the data formats and the
//! command-line driver.

pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod params;
pub mod scorers;
pub mod state;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
