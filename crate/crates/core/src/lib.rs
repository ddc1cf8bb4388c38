//! Optimal group-size allocation for two treatment groups random coefficient
//! regression models.
//!
//! * [`model`]: closed-form BLUE, BLUP and MSE matrix.
//! * [`oracle`]: dense Henderson mixed-model equations used as a reference.
//! * [`criteria`]: A- and D-criteria in the allocation rate, optimal rates and
//!   efficiencies.
//! * [`sweep`]: parameter sweeps over the rescaled dispersion.
//! * [`sim`]: Monte Carlo validation.
//! * [`check`]: closed form vs oracle equivalence sweep.

pub mod check;
pub mod criteria;
pub mod data;
pub mod error;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod sim;
pub mod sweep;

pub use criteria::{CriterionKind, Method, OptimizationResult};
pub use data::{Group, ObservationSet};
pub use error::{RcrError, Result};
pub use model::{ApproxDesign, ExactDesign, ModelParams, MseMatrix};
