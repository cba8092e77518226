//! Market and preference parameters and the frictionless Merton solution.
//!
//! Everything downstream (correctors, the ellipsoid, the simulator) consumes a
//! [`MertonSolution`], which bundles the validated inputs together with the
//! frictionless target weights, consumption rate and value coefficient.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{bad_input, Error, Result};

/// Relative threshold below which the smallest singular value of α counts as zero.
pub const ALPHA_SINGULARITY_RTOL: f64 = 1e-12;

/// Constant-coefficient market: a safe asset paying `r` and `d` geometric
/// Brownian motions with drift `mu` and volatility matrix `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    r: f64,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    cov: DMatrix<f64>,
}

impl MarketParams {
    pub fn new(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(bad_input("mu must contain at least one asset"));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionError(format!(
                "sigma is {}x{} but mu has {} entries",
                sigma.nrows(),
                sigma.ncols(),
                d
            )));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(bad_input(format!("r must be positive, got {r}")));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(bad_input("mu and sigma must be finite"));
        }
        // A zero excess return is let through here; it surfaces later as a
        // degenerate (zero-width) no-trade region.
        if let Some(i) = mu.iter().position(|&m| m < r) {
            return Err(bad_input(format!(
                "expected excess return of asset {i} is negative (mu = {}, r = {r})",
                mu[i]
            )));
        }
        let cov = &sigma * sigma.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(cov.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= 1e-14 * max {
            return Err(bad_input(
                "sigma * sigma^T is not positive definite (degenerate volatility)",
            ));
        }
        Ok(MarketParams { r, mu, sigma, cov })
    }

    /// Single risky asset with scalar volatility.
    pub fn single(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::new(
            r,
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, sigma),
        )
    }

    /// Builds σ = diag(vols) · chol(corr), with `chol` the lower Cholesky factor.
    pub fn from_vols_corr(r: f64, mu: DVector<f64>, vols: &[f64], corr: DMatrix<f64>) -> Result<Self> {
        let d = vols.len();
        if corr.nrows() != d || corr.ncols() != d {
            return Err(Error::DimensionError(format!(
                "corr is {}x{} but {} vols were given",
                corr.nrows(),
                corr.ncols(),
                d
            )));
        }
        if vols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(bad_input("vols must be positive"));
        }
        for i in 0..d {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(bad_input(format!("corr[{i}][{i}] must be 1")));
            }
            for j in 0..i {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 {
                    return Err(bad_input("corr must be symmetric"));
                }
            }
        }
        let chol = corr
            .cholesky()
            .ok_or_else(|| bad_input("corr is not positive definite"))?;
        let sigma = DMatrix::from_diagonal(&DVector::from_row_slice(vols)) * chol.l();
        Self::new(r, mu, sigma)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Σ = σσᵀ.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn excess_returns(&self) -> DVector<f64> {
        self.mu.map(|m| m - self.r)
    }

    /// (μ − r1)ᵀ Σ⁻¹ (μ − r1).
    pub fn squared_sharpe(&self) -> f64 {
        let ex = self.excess_returns();
        let w = self.solve_cov(&ex);
        ex.dot(&w)
    }

    fn solve_cov(&self, rhs: &DVector<f64>) -> DVector<f64> {
        // Positive definiteness was checked at construction.
        self.cov
            .clone()
            .cholesky()
            .expect("covariance is positive definite")
            .solve(rhs)
    }
}

/// CRRA preferences: relative risk aversion `gamma` and impatience `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preferences {
    gamma: f64,
    beta: f64,
}

impl Preferences {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(bad_input(format!("gamma must be positive, got {gamma}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(bad_input(format!("beta must be positive, got {beta}")));
        }
        Ok(Preferences { gamma, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_log(&self) -> bool {
        self.gamma == 1.0
    }

    /// Utility of a consumption rate.
    pub fn utility(&self, c: f64) -> f64 {
        if self.is_log() {
            c.ln()
        } else {
            c.powf(1.0 - self.gamma) / (1.0 - self.gamma)
        }
    }
}

/// Frictionless optimal consumption rate per unit of wealth for risk aversion `gamma`.
pub fn consumption_rate(market: &MarketParams, gamma: f64, beta: f64) -> f64 {
    let s = market.squared_sharpe();
    beta / gamma + (1.0 - 1.0 / gamma) * (market.r() + s / (2.0 * gamma))
}

/// The frictionless optimum together with the inputs it was derived from.
#[derive(Debug, Clone)]
pub struct MertonSolution {
    pub market: MarketParams,
    pub prefs: Preferences,
    /// Target risky weights π_m.
    pub pi_m: DVector<f64>,
    /// Consumption propensity c_m(γ).
    pub c_m: f64,
    /// c_m evaluated at doubled risk aversion; may be nonpositive.
    pub c_m_double: f64,
    /// Marginal value coefficient: v_z(z) = v0 · z^{-γ}.
    pub v0: f64,
    /// (I − π_m 1ᵀ) diag(π_m) σ.
    pub alpha: DMatrix<f64>,
    pub is_log: bool,
}

pub fn merton_solution(market: &MarketParams, prefs: &Preferences) -> Result<MertonSolution> {
    MertonSolution::new(market, prefs)
}

impl MertonSolution {
    pub fn new(market: &MarketParams, prefs: &Preferences) -> Result<Self> {
        let gamma = prefs.gamma();
        let pi_m = merton_weights(market, gamma);
        let c_m = if prefs.is_log() {
            prefs.beta()
        } else {
            consumption_rate(market, gamma, prefs.beta())
        };
        if !(c_m > 0.0) {
            return Err(Error::InfiniteValue(format!(
                "consumption rate c_m = {c_m} is not positive"
            )));
        }
        let c_m_double = consumption_rate(market, 2.0 * gamma, prefs.beta());
        let alpha = alpha_matrix(&pi_m, market.sigma());
        let sv = alpha.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin < ALPHA_SINGULARITY_RTOL * smax {
            return Err(Error::DegenerateRegion(format!(
                "alpha is singular (singular values in [{smin:e}, {smax:e}]); \
                 every asset needs a nonzero position and the safe weight must be nonzero"
            )));
        }
        Ok(MertonSolution {
            market: market.clone(),
            prefs: *prefs,
            pi_m,
            c_m,
            c_m_double,
            v0: c_m.powf(-gamma),
            alpha,
            is_log: prefs.is_log(),
        })
    }

    pub fn dim(&self) -> usize {
        self.pi_m.len()
    }

    pub fn gamma(&self) -> f64 {
        self.prefs.gamma()
    }

    /// Frictionless value function v(z).
    pub fn value(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(bad_input(format!("wealth must be positive, got {z}")));
        }
        Ok(self.value_unchecked(z))
    }

    pub(crate) fn value_unchecked(&self, z: f64) -> f64 {
        let beta = self.prefs.beta();
        if self.is_log {
            let m = &self.market;
            (beta * z).ln() / beta + (m.r() + 0.5 * m.squared_sharpe() - beta) / (beta * beta)
        } else {
            let g = self.gamma();
            z.powf(1.0 - g) * self.v0 / (1.0 - g)
        }
    }

    /// v_z(z) = v0 z^{-γ}.
    pub fn marginal_value(&self, z: f64) -> f64 {
        self.v0 * z.powf(-self.gamma())
    }

    /// v_zz(z) = −γ v0 z^{-γ-1}.
    pub fn marginal_value_slope(&self, z: f64) -> f64 {
        -self.gamma() * self.v0 * z.powf(-self.gamma() - 1.0)
    }

    /// |σᵀπ_m|², the instantaneous variance of frictionless log-wealth.
    pub fn portfolio_variance(&self) -> f64 {
        (self.market.sigma().transpose() * &self.pi_m).norm_squared()
    }

    /// Eigenvalue of the frictionless wealth generator on the monomial z^p.
    pub fn nu(&self, p: f64) -> f64 {
        let m = &self.market;
        let drift = self.pi_m.dot(&m.excess_returns());
        self.prefs.beta() - p * m.r() - p * drift - 0.5 * p * (p - 1.0) * self.portfolio_variance()
            + p * self.c_m
    }

    /// Ratio of largest to smallest singular value of α.
    pub fn alpha_condition_number(&self) -> f64 {
        let sv = self.alpha.singular_values();
        sv.max() / sv.min()
    }
}

pub fn nu_exponent(sol: &MertonSolution, p: f64) -> f64 {
    sol.nu(p)
}

pub fn frictionless_value(sol: &MertonSolution, z: f64) -> Result<f64> {
    sol.value(z)
}

/// π_m = Σ⁻¹(μ − r1)/γ.
pub fn merton_weights(market: &MarketParams, gamma: f64) -> DVector<f64> {
    market.solve_cov(&market.excess_returns()) / gamma
}

pub fn alpha_matrix(pi: &DVector<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = pi.len();
    let ones = DVector::from_element(d, 1.0);
    let proj = DMatrix::identity(d, d) - pi * ones.transpose();
    proj * DMatrix::from_diagonal(pi) * sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> (MarketParams, Preferences) {
        (
            MarketParams::single(0.01, 0.05, 0.2).unwrap(),
            Preferences::new(2.0, 0.1).unwrap(),
        )
    }

    #[test]
    fn single_asset_merton_weight() {
        let m = MarketParams::single(0.02, 0.10, 0.16).unwrap();
        let p = Preferences::new(6.0, 0.05).unwrap();
        let sol = merton_solution(&m, &p).unwrap();
        assert!((sol.pi_m[0] - 0.08 / (6.0 * 0.0256)).abs() < 1e-15);
        assert!((sol.pi_m[0] - 0.5208).abs() < 1e-4);
    }

    #[test]
    fn two_asset_merton_weights() {
        let m = MarketParams::new(
            0.03,
            DVector::from_element(2, 0.08),
            DMatrix::from_diagonal_element(2, 2, 0.4),
        )
        .unwrap();
        let sol = merton_solution(&m, &Preferences::new(2.0, 0.1).unwrap()).unwrap();
        for w in sol.pi_m.iter() {
            assert!((w - 5.0 / 32.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_excess_return_is_degenerate() {
        let m = MarketParams::single(0.03, 0.03, 0.2).unwrap();
        let err = merton_solution(&m, &Preferences::new(2.0, 0.1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DegenerateRegion(_)));
    }

    #[test]
    fn negative_consumption_is_infinite_value() {
        // γ < 1 with low impatience makes c_m negative.
        let m = MarketParams::single(0.05, 0.15, 0.2).unwrap();
        let err = merton_solution(&m, &Preferences::new(0.5, 0.01).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InfiniteValue(_)));
    }

    #[test]
    fn rejects_bad_markets() {
        assert!(MarketParams::single(0.0, 0.05, 0.2).is_err());
        assert!(MarketParams::single(0.01, 0.005, 0.2).is_err());
        assert!(MarketParams::single(0.01, 0.05, 0.0).is_err());
        assert!(matches!(
            MarketParams::new(0.01, DVector::from_element(2, 0.05), DMatrix::identity(3, 3)),
            Err(Error::DimensionError(_))
        ));
        assert!(Preferences::new(0.0, 0.1).is_err());
        assert!(Preferences::new(2.0, -0.1).is_err());
    }

    #[test]
    fn desk_value() {
        let (m, p) = desk();
        let sol = merton_solution(&m, &p).unwrap();
        // c_m from its definition: β/γ + (1 − 1/γ)(r + S/(2γ)), S = (0.04/0.2)^2.
        let s: f64 = (0.04f64 / 0.2).powi(2);
        let c = 0.1 / 2.0 + 0.5 * (0.01 + s / 4.0);
        assert!((sol.c_m - c).abs() < 1e-15);
        assert!((sol.c_m - 0.06).abs() < 1e-15);
        assert!((sol.value(1.0).unwrap() + 1.0 / 0.0036).abs() < 1e-9);
        assert!(sol.value(0.0).is_err());
    }

    #[test]
    fn log_value_at_inverse_beta() {
        let m = MarketParams::single(0.01, 0.05, 0.2).unwrap();
        let p = Preferences::new(1.0, 0.1).unwrap();
        let sol = merton_solution(&m, &p).unwrap();
        assert_eq!(sol.c_m, 0.1);
        let expected = (0.01 + 0.04f64.powi(2) / (2.0 * 0.04) - 0.1) / 0.01;
        assert!((sol.value(10.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn nu_at_zero_is_beta() {
        let (m, p) = desk();
        let sol = merton_solution(&m, &p).unwrap();
        assert_eq!(sol.nu(0.0), 0.1);
    }

    #[test]
    fn nu_matches_doubled_risk_aversion() {
        let (m, p) = desk();
        let sol = merton_solution(&m, &p).unwrap();
        assert!((sol.nu(0.5 - 2.0) - 0.03625).abs() < 1e-15);
        assert!((sol.c_m_double - 0.03625).abs() < 1e-15);
    }

    #[test]
    fn vols_corr_matches_explicit_sigma() {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.44, 0.44, 1.0]);
        let m = MarketParams::from_vols_corr(0.03, DVector::from_element(2, 0.08), &[0.3, 0.3], corr)
            .unwrap();
        let c = m.covariance();
        assert!((c[(0, 0)] - 0.09).abs() < 1e-15);
        assert!((c[(0, 1)] - 0.44 * 0.09).abs() < 1e-15);
    }
}
