//! Multivariate first corrector and the no-trade ellipsoid.
//!
//! With CRRA utility the first corrector rescales to a wealth-free problem in
//! `ρ = z^{-3/4} ξ`, solved by `W(ρ) = 1 − (ρᵀMρ − 1)²` inside the ellipsoid
//! `{ρᵀMρ < 1}` provided M solves the algebraic Riccati equation
//!
//! ```text
//! 4 M Tr[AM] + 8 MAM = γ Σ
//! ```
//!
//! where `A = (I − π1ᵀ) diag(π) Σ diag(π) (I − π1ᵀ)ᵀ`. The loss constant of the
//! rescaled problem is `2 Tr[AM]`.
//!
//! The solver whitens A, after which the rescaled unknown commutes with the
//! transformed Σ and the equation splits into scalar quadratics coupled only
//! through the trace `t = Σ mᵢ`; the trace is found by bisection and the
//! result refined by Newton steps on the original equation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{bad_input, Error, Result};
use crate::model::MertonSolution;

pub const RICCATI_RESIDUAL_TOL: f64 = 1e-10;
const BISECTION_MAX_ITER: usize = 200;
const BISECTION_ABS_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 8;

#[derive(Debug, Clone)]
pub struct NoTradeEllipsoid {
    /// Shape matrix of 𝒥 = {ρ : ρᵀMρ < 1}.
    pub m: DMatrix<f64>,
    /// Rescaled diffusion matrix A.
    pub a: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub pi_m: DVector<f64>,
    pub gamma: f64,
    /// Normalized loss constant 2 Tr[AM].
    pub a0_tilde: f64,
    /// a(z) = a0 · z^{1/2−γ}, i.e. v0 · a0_tilde.
    pub a0: f64,
    /// Welfare coefficient: u(z) = u0 · z^{1/2−γ}.
    pub u0: f64,
    /// Relative Frobenius residual of the Riccati equation.
    pub residual: f64,
}

/// Returns `(A, Σ)`.
pub fn rescaled_matrices(sol: &MertonSolution) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sigma = sol.market.covariance().clone();
    let d = sol.dim();
    let ones = DVector::from_element(d, 1.0);
    let proj = DMatrix::identity(d, d) - &sol.pi_m * ones.transpose();
    let left = proj * DMatrix::from_diagonal(&sol.pi_m);
    let a = &left * &sigma * left.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.clone().symmetric_eigenvalues();
    let (min, max) = (eig.min(), eig.max());
    if !(max > 0.0) || min <= 1e-14 * max {
        return Err(Error::DegenerateRegion(format!(
            "rescaled diffusion matrix is singular (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    Ok((a, sigma))
}

/// Relative residual ‖4M Tr[AM] + 8MAM − γΣ‖_F / ‖γΣ‖_F.
pub fn riccati_residual(m: &DMatrix<f64>, a: &DMatrix<f64>, sigma: &DMatrix<f64>, gamma: f64) -> f64 {
    let tr = (a * m).trace();
    let lhs = m * (4.0 * tr) + (m * a * m) * 8.0;
    let rhs = sigma * gamma;
    (lhs - &rhs).norm() / rhs.norm()
}

fn check_square_symmetric(name: &str, x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionError(format!("{name} must be {d}x{d}")));
    }
    let scale = x.norm().max(f64::MIN_POSITIVE);
    if (x - x.transpose()).norm() > 1e-12 * scale {
        return Err(bad_input(format!("{name} must be symmetric")));
    }
    Ok(())
}

pub fn solve_riccati(a: &DMatrix<f64>, sigma: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    check_square_symmetric("A", a, d)?;
    check_square_symmetric("Sigma", sigma, d)?;
    if !(gamma > 0.0) {
        return Err(bad_input("gamma must be positive"));
    }

    // A = Q diag(ζ) Qᵀ; with D = diag(√ζ), M̃ = D QᵀMQ D turns the equation
    // into 4 Tr[M̃] M̃ + 8 M̃² = γ Σ̃ with Σ̃ = D QᵀΣQ D.
    let ea = SymmetricEigen::new(a.clone());
    if ea.eigenvalues.iter().any(|&z| !(z > 0.0)) {
        return Err(bad_input("A must be positive definite"));
    }
    let q = ea.eigenvectors;
    let root = ea.eigenvalues.map(f64::sqrt);
    let d_half = DMatrix::from_diagonal(&root);
    let d_inv_half = DMatrix::from_diagonal(&root.map(|x| 1.0 / x));
    let sigma_t = &d_half * q.transpose() * sigma * &q * &d_half;
    let sigma_t = (&sigma_t + sigma_t.transpose()) * 0.5;

    let es = SymmetricEigen::new(sigma_t);
    let s = es.eigenvalues;
    if s.iter().any(|&x| !(x > 0.0)) {
        return Err(bad_input("Sigma must be positive definite"));
    }
    let gs: Vec<f64> = s.iter().map(|&x| gamma * x).collect();
    let m_of = |t: f64, g: f64| (-t + (t * t + 2.0 * g).sqrt()) / 4.0;
    let excess = |t: f64| gs.iter().map(|&g| m_of(t, g)).sum::<f64>() - t;

    let mut lo = 0.0;
    let mut hi: f64 = gs.iter().map(|&g| (g / 8.0).sqrt()).sum();
    if !(excess(lo) > 0.0 && excess(hi) <= 0.0) {
        return Err(Error::NoConvergence { iterations: 0 });
    }
    let mut converged = false;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= BISECTION_ABS_TOL {
            converged = true;
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: BISECTION_MAX_ITER });
    }
    let t = 0.5 * (lo + hi);
    let mt = DVector::from_iterator(d, gs.iter().map(|&g| m_of(t, g)));
    let p = es.eigenvectors;
    let m_tilde = &p * DMatrix::from_diagonal(&mt) * p.transpose();
    let m = &q * &d_inv_half * m_tilde * &d_inv_half * q.transpose();
    let m = polish(&m, a, sigma, gamma);

    let residual = riccati_residual(&m, a, sigma, gamma);
    if !(residual <= RICCATI_RESIDUAL_TOL) {
        return Err(Error::ResidualTooLarge { residual, tolerance: RICCATI_RESIDUAL_TOL });
    }
    Ok(m)
}

/// Newton steps on the untransformed equation. The back-transformation above
/// loses accuracy when A is ill-conditioned; a few steps recover it.
fn polish(m0: &DMatrix<f64>, a: &DMatrix<f64>, sigma: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let d = m0.nrows();
    let f = |m: &DMatrix<f64>| m * (4.0 * (a * m).trace()) + (m * a * m) * 8.0 - sigma * gamma;
    let mut best = (m0 + m0.transpose()) * 0.5;
    let mut best_res = riccati_residual(&best, a, sigma, gamma);
    let mut m = best.clone();
    for _ in 0..NEWTON_MAX_ITER {
        let tr = (a * &m).trace();
        let am = a * &m;
        let ma = &m * a;
        let mut jac = DMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let mut h = DMatrix::zeros(d, d);
                h[(i, j)] = 1.0;
                let dh = &h * (4.0 * tr) + &m * (4.0 * (a * &h).trace()) + (&h * &am + &ma * &h) * 8.0;
                jac.set_column(j * d + i, &DVector::from_column_slice(dh.as_slice()));
            }
        }
        let rhs = DVector::from_column_slice(f(&m).as_slice());
        let Some(step) = jac.lu().solve(&rhs) else { break };
        let next = &m - DMatrix::from_column_slice(d, d, step.as_slice());
        m = (&next + next.transpose()) * 0.5;
        let res = riccati_residual(&m, a, sigma, gamma);
        if !res.is_finite() {
            break;
        }
        if res < best_res {
            best = m.clone();
            best_res = res;
        }
        if res <= f64::EPSILON * 4.0 {
            break;
        }
    }
    best
}

pub fn ellipsoid_solution(sol: &MertonSolution) -> Result<NoTradeEllipsoid> {
    let (a, sigma) = rescaled_matrices(sol)?;
    let gamma = sol.gamma();
    let m = solve_riccati(&a, &sigma, gamma)?;
    let residual = riccati_residual(&m, &a, &sigma, gamma);
    let a0_tilde = 2.0 * (&a * &m).trace();
    let nu = sol.nu(0.5 - gamma);
    if !(nu > 0.0) {
        return Err(Error::InfiniteValue(format!(
            "generator eigenvalue at 1/2 - gamma is {nu}; c_m(2 gamma) must be positive"
        )));
    }
    let a0 = sol.v0 * a0_tilde;
    Ok(NoTradeEllipsoid {
        m,
        a,
        sigma,
        pi_m: sol.pi_m.clone(),
        gamma,
        a0_tilde,
        a0,
        u0: a0 / nu,
        residual,
    })
}

impl NoTradeEllipsoid {
    pub fn dim(&self) -> usize {
        self.pi_m.len()
    }

    pub fn quadratic_form(&self, rho: &DVector<f64>) -> f64 {
        rho.dot(&(&self.m * rho))
    }

    /// Rescaled corrector W(ρ): 1 − (ρᵀMρ − 1)² inside 𝒥, 1 outside.
    pub fn w(&self, rho: &DVector<f64>) -> f64 {
        let q = self.quadratic_form(rho);
        if q >= 1.0 {
            1.0
        } else {
            1.0 - (q - 1.0).powi(2)
        }
    }

    /// Analytic Hessian of the interior branch of W.
    pub fn w_hessian(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let q = self.quadratic_form(rho);
        let mr = &self.m * rho;
        &self.m * (-4.0 * (q - 1.0)) - (&mr * mr.transpose()) * 8.0
    }

    /// −½γ ρᵀΣρ − ½Tr[A W_ρρ] + 2Tr[AM]; zero inside 𝒥.
    pub fn corrector_residual(&self, rho: &DVector<f64>) -> f64 {
        let h = self.w_hessian(rho);
        -0.5 * self.gamma * rho.dot(&(&self.sigma * rho)) - 0.5 * (&self.a * h).trace()
            + self.a0_tilde
    }

    /// Distance from π_m to the boundary of the weight-space region along the
    /// unit direction `dir`, at wealth z and cost λ.
    pub fn radius(&self, dir: &DVector<f64>, z: f64, lambda: f64) -> f64 {
        let u = dir.normalize();
        (lambda / z).powf(0.25) / self.quadratic_form(&u).sqrt()
    }

    /// Points on the boundary of π_m + (λ/z)^{1/4} 𝒥 in risky-weight space,
    /// tagged with their polar angle about π_m.
    ///
    /// For two assets these are `n` points at equally spaced angles; otherwise
    /// the 2d extremes along the principal axes of M (and `n` is only checked).
    pub fn boundary_points(&self, z: f64, lambda: f64, n: usize) -> Result<Vec<(f64, DVector<f64>)>> {
        if n < 3 {
            return Err(bad_input(format!("need at least 3 boundary points, got {n}")));
        }
        if !(z > 0.0) || !(lambda > 0.0) {
            return Err(bad_input("wealth and cost must be positive"));
        }
        let d = self.dim();
        if d == 2 {
            Ok((0..n)
                .map(|k| {
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let dir = DVector::from_vec(vec![angle.cos(), angle.sin()]);
                    let p = &self.pi_m + &dir * self.radius(&dir, z, lambda);
                    (angle, p)
                })
                .collect())
        } else {
            let eig = SymmetricEigen::new(self.m.clone());
            let mut out = Vec::with_capacity(2 * d);
            for i in 0..d {
                let axis = eig.eigenvectors.column(i).into_owned();
                let r = self.radius(&axis, z, lambda);
                for sign in [1.0, -1.0] {
                    let p = &self.pi_m + &axis * (sign * r);
                    let angle = if d == 1 { if sign > 0.0 { 0.0 } else { std::f64::consts::PI } } else { f64::NAN };
                    out.push((angle, p));
                }
            }
            Ok(out)
        }
    }
}

pub fn w_function(e: &NoTradeEllipsoid, rho: &DVector<f64>) -> f64 {
    e.w(rho)
}
