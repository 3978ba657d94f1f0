//! Adaptive refinement of gas network simulations that switch between a
//! hierarchy of pipe models.
//!
//! The crate is organised bottom-up:
//!
//! - [`hierarchy`]: the three pipe-flow models (isothermal Euler, semilinear,
//!   algebraic), the real-gas equation of state and the implicit box scheme.
//! - [`error_model`]: prediction of model and discretisation errors under a
//!   refinement scheme.
//! - [`cost`]: the power-law cost functional per model level.
//! - [`strategies`]: individual-bounds, maximal-error and maximal
//!   error-to-cost refinement, plus exhaustive oracles.
//! - [`experiment`]: the randomised strategy comparison.
//! - [`network`]: adaptive simulation of a pipe network window by window.

pub mod cost;
pub mod error;
pub mod error_model;
pub mod experiment;
pub mod hierarchy;
pub mod level;
pub mod network;
pub mod numfmt;
pub mod strategies;

pub use cost::CostParams;
pub use error::{Error, Result};
pub use error_model::{ErrorTriple, StrategyConfig};
pub use level::ModelLevel;
pub use strategies::{PipeRefinementState, Refinement, RefinementScheme, Strategy};
