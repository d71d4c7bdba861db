//! Learn-then-optimize placement of public-access defibrillators (AEDs).
//!
//! The pipeline bins geographic sites and cardiac-arrest incidents onto a
//! hexagonal grid, fits an MLP that predicts per-cell incident counts from
//! feature counts, attributes predictions to features and individual sites
//! with Shapley values, scores candidate AED sites by their attributed
//! density, and selects sites by a spacing-constrained integer program.
//! Plans are evaluated by historical coverage and a logistic survival model.

pub mod artifact;
pub mod config;
pub mod datahub;
pub mod density;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod geogrid;
pub mod optimizer;
pub mod pipeline;
pub mod riskmodel;
pub mod seed;

pub use error::{Error, Result};
