//! Analytic process models by symbolic regression, and model-based value
//! iteration on top of them.

pub mod baseline;
pub mod error;
pub mod evolve;
pub mod dynamics;
pub mod experiments;
pub mod expr;
pub mod model;
pub mod rl;
pub mod seed;

pub use error::{Error, Result};
