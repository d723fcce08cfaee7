//! Omega-ratio optimization of a defined-contribution pension fund under a
//! Value-at-Risk constraint.
//!
//! The terminal wealth problem is linearized (fractional programming),
//! dualized in the budget and VaR constraints, and solved pointwise through
//! the concave envelope of the linearized reward. The resulting payoff is
//! replicated in closed form.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod market;
pub mod multipliers;
pub mod normal;
pub mod preferences;
pub mod quadrature;
pub mod replicate;
mod roots;
pub mod scenarios;

pub use envelope::{classify_and_solve, pointwise_opt, BranchKind, CaseLabel, PiecewiseSolution};
pub use error::{Error, Result};
pub use market::{FeasibilityReport, FeasibilityVerdict, KernelLaw, MarketParams};
pub use multipliers::{solve, ExistenceVerdict, Moments, SolverResult};
pub use preferences::{LinearizedObjective, PenaltyShape, PreferencePair};
pub use quadrature::QuadratureSpec;
