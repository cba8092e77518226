//! Asymptotically optimal no-trade regions for investors with constant
//! relative risk aversion facing a small fixed cost per trade.
//!
//! The fixed cost λ enters only through `λ / wealth`: the region around the
//! Merton weights has width of order `(λ/z)^{1/4}` and the certainty-equivalent
//! welfare loss is of order `(λ/z)^{1/2}`.
//!
//! - [`model`]: market, preferences and the frictionless Merton solution.
//! - [`corrector1d`]: closed-form correctors for one risky asset.
//! - [`ellipsoid`]: Riccati equation and the no-trade ellipsoid for d assets.
//! - [`policy`]: boundaries, equivalent proportional cost, welfare loss, rebalancing.
//! - [`simulate`]: Monte Carlo evaluation of the policy.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod corrector1d;
pub mod ellipsoid;
pub mod error;
pub mod model;
pub mod policy;
pub mod report;
pub mod simulate;
pub mod stats;

pub use corrector1d::{corrector_coeffs, u0_1d, Corrector1D, CorrectorCoeffs};
pub use ellipsoid::{ellipsoid_solution, rescaled_matrices, solve_riccati, NoTradeEllipsoid};
pub use error::{Error, Result};
pub use model::{merton_solution, MarketParams, MertonSolution, Preferences};
pub use policy::{
    certainty_equivalent_loss, equivalent_proportional_cost, nt_contains, rebalance_target,
    trading_boundaries_1d, PortfolioState,
};
pub use simulate::{
    estimate_welfare, scaling_study, simulate_path, width_sweep, SimConfig, SimResult, TailMode,
};
