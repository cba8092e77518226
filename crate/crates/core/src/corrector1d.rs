//! Closed-form correctors for a single risky asset.
//!
//! Inside the no-trade interval the first corrector is the even quartic
//! `w(z, ξ) = A(z)ξ² − B(z)ξ⁴`; outside it equals `v_z(z)`. The coefficients
//! follow from matching powers of ξ in the corrector equation, smooth pasting
//! `∂_ξ w = 0` and value matching `w = v_z` at `ξ = ±ξ₀(z)`. Here ξ is the
//! deviation of the risky position from its frictionless target, in currency
//! units divided by λ^{1/4}.
//!
//! All coefficients are evaluated from the general-utility expressions in
//! terms of `v_z`, `v_zz`, `θ(z) = π_m z` and `θ_z = π_m`, so they serve as an
//! independent check on the multivariate Riccati route in [`crate::ellipsoid`].

use crate::error::{bad_input, Error, Result};
use crate::model::MertonSolution;

/// Scalar inputs of the one-dimensional corrector problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrector1D {
    pub sigma: f64,
    pub pi: f64,
    pub gamma: f64,
    /// v_z(z) = v0 · z^{-γ}.
    pub v0: f64,
}

/// Corrector coefficients at a fixed wealth level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorCoeffs {
    pub a_coef: f64,
    pub b_coef: f64,
    pub xi0: f64,
    pub a: f64,
}

impl Corrector1D {
    pub fn from_solution(sol: &MertonSolution) -> Result<Self> {
        if sol.dim() != 1 {
            return Err(Error::DimensionError(format!(
                "closed-form corrector needs one risky asset, got {}",
                sol.dim()
            )));
        }
        Ok(Corrector1D {
            sigma: sol.market.sigma()[(0, 0)].abs(),
            pi: sol.pi_m[0],
            gamma: sol.gamma(),
            v0: sol.v0,
        })
    }

    /// Builds the corrector from raw parameters; unlike [`MertonSolution`]
    /// this admits the degenerate weights 0 and 1.
    pub fn from_parts(sigma: f64, pi: f64, gamma: f64, v0: f64) -> Self {
        Corrector1D { sigma, pi, gamma, v0 }
    }

    fn v_z(&self, z: f64) -> f64 {
        self.v0 * z.powf(-self.gamma)
    }

    fn neg_v_zz(&self, z: f64) -> f64 {
        self.gamma * self.v0 * z.powf(-self.gamma - 1.0)
    }

    /// α(z) = σ θ(z)(1 − θ_z(z)); may be negative under leverage.
    pub fn alpha(&self, z: f64) -> f64 {
        self.sigma * self.pi * z * (1.0 - self.pi)
    }

    /// First-corrector constant a(z) = v_z |α| σ √(−v_zz / (3 v_z)).
    pub fn a(&self, z: f64) -> f64 {
        let vz = self.v_z(z);
        vz * self.alpha(z).abs() * self.sigma * (self.neg_v_zz(z) / (3.0 * vz)).sqrt()
    }

    pub fn b_coef(&self, z: f64) -> f64 {
        let al = self.alpha(z);
        if al == 0.0 {
            return f64::INFINITY;
        }
        self.sigma * self.sigma * self.neg_v_zz(z) / (12.0 * al * al)
    }

    pub fn a_coef(&self, z: f64) -> f64 {
        let al = self.alpha(z);
        if al == 0.0 {
            return f64::INFINITY;
        }
        self.a(z) / (al * al)
    }

    /// Half-width of the no-trade interval in deviation units.
    pub fn xi0(&self, z: f64) -> f64 {
        let theta = self.pi * z;
        let risk_tolerance = self.v_z(z) / self.neg_v_zz(z);
        (12.0 * risk_tolerance * theta * theta * (1.0 - self.pi).powi(2)).powf(0.25)
    }

    pub fn coeffs(&self, z: f64) -> Result<CorrectorCoeffs> {
        if !(z > 0.0) {
            return Err(bad_input(format!("wealth must be positive, got {z}")));
        }
        Ok(CorrectorCoeffs {
            a_coef: self.a_coef(z),
            b_coef: self.b_coef(z),
            xi0: self.xi0(z),
            a: self.a(z),
        })
    }

    /// The piecewise first corrector w(z, ξ).
    pub fn w(&self, z: f64, xi: f64) -> f64 {
        let xi0 = self.xi0(z);
        if xi.abs() >= xi0 {
            return self.v_z(z);
        }
        let x2 = xi * xi;
        self.a_coef(z) * x2 - self.b_coef(z) * x2 * x2
    }

    /// Residual of the first corrector equation inside the no-trade interval:
    /// −½σ²ξ²(−v_zz) − ½α² w_ξξ + a(z).
    pub fn interior_residual(&self, z: f64, xi: f64) -> f64 {
        let al = self.alpha(z);
        let w_xixi = 2.0 * self.a_coef(z) - 12.0 * self.b_coef(z) * xi * xi;
        -0.5 * self.sigma * self.sigma * xi * xi * self.neg_v_zz(z) - 0.5 * al * al * w_xixi
            + self.a(z)
    }

    /// Welfare coefficient u₀ from the explicit formula.
    pub fn u0(&self, c_m: f64, c_m_double: f64) -> Result<f64> {
        if !(c_m_double > 0.0) {
            return Err(Error::InfiniteValue(format!(
                "c_m(2γ) = {c_m_double} is not positive"
            )));
        }
        let pq = self.pi * (1.0 - self.pi);
        Ok(self.sigma * self.sigma * (self.gamma / 3.0 * pq * pq).sqrt() * c_m.powf(-self.gamma)
            / c_m_double)
    }
}

pub fn corrector_coeffs(sol: &MertonSolution, z: f64) -> Result<CorrectorCoeffs> {
    Corrector1D::from_solution(sol)?.coeffs(z)
}

pub fn w_1d(c: &Corrector1D, z: f64, xi: f64) -> f64 {
    c.w(z, xi)
}

/// u₀ for a single risky asset.
pub fn u0_1d(sol: &MertonSolution) -> Result<f64> {
    Corrector1D::from_solution(sol)?.u0(sol.c_m, sol.c_m_double)
}

/// u₀ through the second corrector equation: a₀ / ν_{1/2−γ}, where
/// a(z) = a₀ z^{1/2−γ}.
pub fn u0_1d_via_generator(sol: &MertonSolution) -> Result<f64> {
    let c = Corrector1D::from_solution(sol)?;
    let p = 0.5 - sol.gamma();
    let nu = sol.nu(p);
    if !(nu > 0.0) {
        return Err(Error::InfiniteValue(format!("generator eigenvalue {nu} is not positive")));
    }
    Ok(c.a(1.0) / nu)
}

/// Maximal deviation from the frictionless share holding, in number of
/// shares, written through the portfolio gamma d⟨φ⟩/d⟨S⟩ = θ²(1−θ_z)²/S⁴.
pub fn share_halfwidth(sol: &MertonSolution, z: f64, price: f64, lambda: f64) -> Result<f64> {
    let c = Corrector1D::from_solution(sol)?;
    if !(z > 0.0 && price > 0.0 && lambda >= 0.0) {
        return Err(bad_input("wealth and price must be positive, cost nonnegative"));
    }
    let theta = c.pi * z;
    let portfolio_gamma = (theta * (1.0 - c.pi)).powi(2) / price.powi(4);
    let risk_tolerance = c.v_z(z) / c.neg_v_zz(z);
    Ok((12.0 * risk_tolerance * portfolio_gamma * lambda).powf(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{merton_solution, MarketParams, Preferences};

    fn desk() -> MertonSolution {
        let m = MarketParams::single(0.01, 0.05, 0.2).unwrap();
        merton_solution(&m, &Preferences::new(2.0, 0.1).unwrap()).unwrap()
    }

    /// Solves value matching for a(z) by bisection, with B from coefficient
    /// comparison and ξ₀ from smooth pasting.
    fn brute_force_xi0(c: &Corrector1D, z: f64) -> f64 {
        let alpha2 = c.alpha(z).powi(2);
        let b = c.sigma * c.sigma * c.gamma * c.v0 * z.powf(-c.gamma - 1.0) / (12.0 * alpha2);
        let vz = c.v0 * z.powf(-c.gamma);
        let excess = |a: f64| {
            let acoef = a / alpha2;
            let x2 = acoef / (2.0 * b);
            acoef * x2 - b * x2 * x2 - vz
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while excess(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let acoef = 0.5 * (lo + hi) / alpha2;
        (acoef / (2.0 * b)).sqrt()
    }

    #[test]
    fn xi0_matches_brute_force_root() {
        let c = Corrector1D::from_solution(&desk()).unwrap();
        for z in [0.3, 1.0, 17.0, 5000.0] {
            let xi0 = c.xi0(z);
            assert!((xi0 / brute_force_xi0(&c, z) - 1.0).abs() < 1e-10);
            assert!((xi0 / (0.78254 * z.powf(0.75)) - 1.0).abs() < 1e-5);
            assert!((xi0 - 0.375f64.powf(0.25) * z.powf(0.75)).abs() < 1e-12 * xi0);
        }
    }

    #[test]
    fn full_risky_investment_has_no_region() {
        let c = Corrector1D::from_parts(0.2, 1.0, 2.0, 1.0);
        assert_eq!(c.xi0(3.0), 0.0);
        assert_eq!(c.u0(0.06, 0.03).unwrap(), 0.0);
    }

    #[test]
    fn pasting_conditions() {
        let c = Corrector1D::from_solution(&desk()).unwrap();
        let z = 2.5;
        let xi0 = c.xi0(z);
        let vz = c.v_z(z);
        assert_eq!(c.w(z, 0.0), 0.0);
        let inner = c.a_coef(z) * xi0 * xi0 - c.b_coef(z) * xi0.powi(4);
        assert!((inner / vz - 1.0).abs() < 1e-12);
        let slope = 2.0 * c.a_coef(z) * xi0 - 4.0 * c.b_coef(z) * xi0.powi(3);
        assert!(slope.abs() < 1e-12 * c.a_coef(z) * xi0);
        assert!((xi0 * xi0 - c.a_coef(z) / (2.0 * c.b_coef(z))).abs() < 1e-12 * xi0 * xi0);
    }

    #[test]
    fn u0_desk_value_and_routes() {
        let sol = desk();
        let u0 = u0_1d(&sol).unwrap();
        let hand = 0.04 * (2.0f64 / 3.0 * 0.0625).sqrt() * (1.0 / 0.0036) / 0.03625;
        assert!((u0 / hand - 1.0).abs() < 1e-12);
        assert!((u0 - 62.57).abs() < 0.01);
        let other = u0_1d_via_generator(&sol).unwrap();
        assert!((u0 / other - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_multiple_assets() {
        use nalgebra::{DMatrix, DVector};
        let m = MarketParams::new(0.01, DVector::from_element(2, 0.05), DMatrix::identity(2, 2) * 0.3)
            .unwrap();
        let sol = merton_solution(&m, &Preferences::new(2.0, 0.1).unwrap()).unwrap();
        assert!(matches!(corrector_coeffs(&sol, 1.0), Err(Error::DimensionError(_))));
        assert!(corrector_coeffs(&desk(), -1.0).is_err());
    }
}
