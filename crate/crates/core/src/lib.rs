//! Probabilistic cross-impact balance scenario analysis: consistency and
//! succession on judgement matrices, Monte Carlo pathway ensembles,
//! ensemble statistics, candidate screening, persona-weighted ranking and
//! translation of qualitative pathways into model inputs.

pub mod analytics;
pub mod engine;
pub mod ensemble_file;
pub mod error;
pub mod fixtures;
pub mod mcda;
pub mod model;
pub mod pipeline;
pub mod quantify;
pub mod simulate;
pub mod uncertainty;

pub use error::{Error, Result};
