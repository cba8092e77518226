//! The almost-optimal trading policy and the headline economic quantities.

use nalgebra::DVector;

use crate::corrector1d::Corrector1D;
use crate::ellipsoid::NoTradeEllipsoid;
use crate::error::{bad_input, Error, Result};
use crate::model::MertonSolution;

/// Safe position `x` and risky positions `y`, all in currency.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    pub x: f64,
    pub y: DVector<f64>,
}

impl PortfolioState {
    pub fn new(x: f64, y: DVector<f64>) -> Self {
        PortfolioState { x, y }
    }

    /// State with total wealth `z` split according to `weights`.
    pub fn from_weights(z: f64, weights: &DVector<f64>) -> Self {
        let y = weights * z;
        PortfolioState { x: z - y.sum(), y }
    }

    pub fn wealth(&self) -> f64 {
        self.x + self.y.sum()
    }

    pub fn weights(&self) -> DVector<f64> {
        &self.y / self.wealth()
    }
}

/// Membership in the no-trade region π_m + (λ/z)^{1/4} 𝒥 (strict interior).
pub fn nt_contains(state: &PortfolioState, e: &NoTradeEllipsoid, lambda: f64) -> Result<bool> {
    let z = state.wealth();
    if !(z > 0.0) {
        return Err(bad_input(format!("wealth must be positive, got {z}")));
    }
    if !(lambda > 0.0) {
        return Err(bad_input(format!("fixed cost must be positive, got {lambda}")));
    }
    if state.y.len() != e.dim() {
        return Err(Error::DimensionError(format!(
            "state has {} risky positions, region has {}",
            state.y.len(),
            e.dim()
        )));
    }
    let dev = state.weights() - &e.pi_m;
    Ok(e.quadratic_form(&dev) < (lambda / z).sqrt())
}

fn check_scalar_inputs(sol: &MertonSolution, z: f64, lambda: f64) -> Result<f64> {
    if sol.dim() != 1 {
        return Err(Error::DimensionError(format!(
            "expected a single risky asset, got {}",
            sol.dim()
        )));
    }
    if !(z > 0.0) {
        return Err(bad_input(format!("wealth must be positive, got {z}")));
    }
    if !(lambda >= 0.0) {
        return Err(bad_input(format!("fixed cost must be nonnegative, got {lambda}")));
    }
    Ok(sol.pi_m[0])
}

/// Lower and upper risky weight of the single-asset no-trade interval.
pub fn trading_boundaries_1d(sol: &MertonSolution, z: f64, lambda: f64) -> Result<(f64, f64)> {
    let pi = check_scalar_inputs(sol, z, lambda)?;
    let half = (12.0 / sol.gamma() * (pi * (1.0 - pi)).powi(2) * lambda / z).powf(0.25);
    Ok((pi - half, pi + half))
}

/// Proportional cost that leads to the same leading-order region and welfare
/// loss as the fixed cost λ at wealth z.
pub fn equivalent_proportional_cost(sol: &MertonSolution, z: f64, lambda: f64) -> Result<f64> {
    let pi = check_scalar_inputs(sol, z, lambda)?;
    let pq2 = (pi * (1.0 - pi)).powi(2);
    if pq2 == 0.0 {
        return Err(Error::DegenerateRegion("Merton weight is 0 or 1".into()));
    }
    Ok((1024.0 * sol.gamma() / (3.0 * pq2)).powf(0.25) * (lambda / z).powf(0.75))
}

/// Leading-order certainty-equivalent loss as a fraction of wealth.
pub fn certainty_equivalent_loss(sol: &MertonSolution, e: &NoTradeEllipsoid, z: f64, lambda: f64) -> Result<f64> {
    if !(z > 0.0) || !(lambda >= 0.0) {
        return Err(bad_input("wealth must be positive and cost nonnegative"));
    }
    Ok(e.u0 * sol.c_m.powf(sol.gamma()) * (lambda / z).sqrt())
}

/// Same as [`certainty_equivalent_loss`] with the closed-form single-asset u₀.
pub fn certainty_equivalent_loss_1d(sol: &MertonSolution, z: f64, lambda: f64) -> Result<f64> {
    check_scalar_inputs(sol, z, lambda)?;
    let u0 = Corrector1D::from_solution(sol)?.u0(sol.c_m, sol.c_m_double)?;
    Ok(u0 * sol.c_m.powf(sol.gamma()) * (lambda / z).sqrt())
}

/// Pays λ and moves the remaining wealth to the Merton weights.
pub fn rebalance_target(state: &PortfolioState, pi_m: &DVector<f64>, lambda: f64) -> Result<PortfolioState> {
    let z = state.wealth();
    if !(z > lambda) {
        return Err(Error::Insolvent { wealth: z, cost: lambda });
    }
    Ok(PortfolioState::from_weights(z - lambda, pi_m))
}
