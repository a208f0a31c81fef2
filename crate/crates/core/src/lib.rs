//! Bell-test simulator: contextual hidden-variable models, coincidence
//! post-selection, CHSH and no-signalling estimation, and a coupling
//! feasibility checker for four ±1 variables.

pub mod coupling;
pub mod enumerate;
pub mod error;
pub mod estimators;
pub mod model;
pub mod modelfile;
pub mod quantum;
pub mod sampling;
pub mod scenarios;
mod simplex;
pub mod streams;

pub use error::{Error, Result};
