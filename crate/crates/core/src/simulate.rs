//! Monte Carlo evaluation of the almost-optimal impulse policy.
//!
//! Each path evolves the risky positions with exact log-normal steps and the
//! safe position with an Euler step, consumes `c_m Z` and trades back to the
//! Merton weights (paying λ) whenever the grid-sampled state has left the
//! no-trade ellipsoid. Wealth at or below `η λ` triggers liquidation followed
//! by deterministic consumption at half the interest rate.
//!
//! Welfare losses are tiny next to the spread of discounted utility, so every
//! path also carries a frictionless benchmark driven by the same Brownian
//! increments and rebalanced to π_m at every step. Both utilities are reduced
//! by the discrete martingale `Σ e^{-βt} v_z(Z) Yᵀσ ΔW`, which has mean zero
//! and absorbs most of the first-order noise. The loss estimate is the mean of
//! the paired, control-adjusted differences; discretization effects common to
//! both paths cancel in the difference.
//!
//! Randomness: ChaCha8 keyed by `seed` with the path index as stream number,
//! so results do not depend on the number of worker threads, and comparisons
//! across costs or region widths see identical noise.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{ellipsoid_solution, NoTradeEllipsoid};
use crate::error::{bad_input, Error, Result};
use crate::model::{MarketParams, MertonSolution, Preferences};
use crate::stats::{mean_stderr, ols, pairwise_sum};

pub const RNG_NAME: &str = "ChaCha8Rng(seed, stream = path index) + ziggurat StandardNormal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Add e^{-βT} v(Z_T) at the horizon.
    FrictionlessValue,
    Zero,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub market: MarketParams,
    pub prefs: Preferences,
    /// Fixed cost per trade, in currency.
    pub lambda: f64,
    pub z0: f64,
    /// Initial risky weights; `None` starts at π_m.
    pub initial_weights: Option<DVector<f64>>,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Liquidate once wealth is at or below `eta * lambda`.
    pub eta: f64,
    pub tail_mode: TailMode,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
}

impl SimConfig {
    /// Configuration with the default grid, horizon and liquidation threshold.
    pub fn new(market: MarketParams, prefs: Preferences, lambda: f64, z0: f64) -> Result<Self> {
        let horizon = default_horizon(prefs.beta());
        let mut cfg = SimConfig {
            market,
            prefs,
            lambda,
            z0,
            initial_weights: None,
            dt: 1.0 / 2520.0,
            horizon,
            n_paths: 10_000,
            seed: 0,
            eta: 2.0,
            tail_mode: TailMode::FrictionlessValue,
            threads: 0,
        };
        if lambda > 0.0 && z0 > 0.0 {
            let sol = MertonSolution::new(&cfg.market, &cfg.prefs)?;
            let e = ellipsoid_solution(&sol)?;
            cfg.dt = default_dt(&e, lambda, z0);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(bad_input(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) {
            return Err(bad_input(format!(
                "horizon {} must be at least one step {}",
                self.horizon, self.dt
            )));
        }
        if self.n_paths < 1 {
            return Err(bad_input("n_paths must be at least 1"));
        }
        if !(self.eta >= 2.0) {
            return Err(bad_input(format!("eta must be at least 2, got {}", self.eta)));
        }
        if !(self.lambda > 0.0) {
            return Err(bad_input(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.z0 > self.eta * self.lambda) {
            return Err(bad_input(format!(
                "initial wealth {} must exceed the liquidation level {}",
                self.z0,
                self.eta * self.lambda
            )));
        }
        if let Some(w) = &self.initial_weights {
            if w.len() != self.market.dim() {
                return Err(Error::DimensionError(format!(
                    "initial_weights has {} entries, market has {} assets",
                    w.len(),
                    self.market.dim()
                )));
            }
        }
        let (r, beta, gamma) = (self.market.r(), self.prefs.beta(), self.prefs.gamma());
        if !(beta - (1.0 - gamma) * r / 2.0 > 0.0) {
            return Err(Error::InfiniteValue(
                "liquidation tail utility diverges: beta - (1 - gamma) r / 2 <= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Horizon at which discounting has fallen to 10⁻⁴.
pub fn default_horizon(beta: f64) -> f64 {
    1e4f64.ln() / beta
}

/// Expected time for the weight deviation to leave the region, starting from π_m:
/// `(λ/z)^{1/2} / Tr[AM]`.
pub fn mean_exit_time(e: &NoTradeEllipsoid, lambda: f64, z: f64) -> f64 {
    (lambda / z).sqrt() / (&e.a * &e.m).trace()
}

/// min(1/2520, τ̄/50) with τ̄ the mean exit time at the initial wealth.
pub fn default_dt(e: &NoTradeEllipsoid, lambda: f64, z0: f64) -> f64 {
    (1.0 / 2520.0f64).min(mean_exit_time(e, lambda, z0) / 50.0)
}

/// Utility of consuming at half the interest rate forever after liquidating
/// into a safe position `x_after`.
pub fn liquidation_tail_utility(prefs: &Preferences, market: &MarketParams, x_after: f64) -> Result<f64> {
    if !(x_after > 0.0) {
        return Err(bad_input(format!("post-liquidation wealth must be positive, got {x_after}")));
    }
    let (r, beta, gamma) = (market.r(), prefs.beta(), prefs.gamma());
    let c0 = 0.5 * r * x_after;
    if prefs.is_log() {
        return Ok(c0.ln() / beta + r / (2.0 * beta * beta));
    }
    let rate = beta - (1.0 - gamma) * r / 2.0;
    if !(rate > 0.0) {
        return Err(Error::InfiniteValue(format!(
            "beta - (1 - gamma) r / 2 = {rate} is not positive"
        )));
    }
    Ok(prefs.utility(c0) / rate)
}

/// One policy evaluated on a path: a fixed cost and a scaling of the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyVariant {
    pub lambda: f64,
    /// Multiplies the constant 12/γ of the single-asset half-width, so the
    /// region's width scales with its fourth root.
    pub width_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// Raw discounted utility of the policy, tail included.
    pub utility: f64,
    /// Policy utility minus its martingale control.
    pub adjusted_utility: f64,
    /// Frictionless benchmark utility minus its martingale control.
    pub benchmark_utility: f64,
    pub n_trades: u64,
    pub liquidated: bool,
    /// Wealth at the horizon, or safe wealth right after liquidation.
    pub z_t: f64,
}

impl PathOutcome {
    /// Paired, control-adjusted welfare loss on this path.
    pub fn loss(&self) -> f64 {
        self.benchmark_utility - self.adjusted_utility
    }
}

/// Events reported to a path observer, for the first policy variant only.
#[derive(Debug, Clone)]
pub enum TraceEvent {
    /// One grid step without intervention; positions before and after.
    Step {
        t: f64,
        x_before: f64,
        y_before: Vec<f64>,
        x_after: f64,
        y_after: Vec<f64>,
        growth: Vec<f64>,
    },
    Trade { t: f64, wealth_before: f64, x: f64, y: Vec<f64> },
    Liquidation { t: f64, wealth_before: f64, x_after: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub lambda: f64,
    pub width_multiplier: f64,
    /// Estimated expected discounted utility, v(z0) − welfare_loss.
    pub j_hat: f64,
    /// Standard error of j_hat (and of welfare_loss).
    pub stderr: f64,
    pub welfare_loss: f64,
    pub trades_per_year: f64,
    pub trades_per_year_stderr: f64,
    pub liquidation_fraction: f64,
    pub n_paths_effective: usize,
    /// Plain sample mean of raw path utilities and its standard error.
    pub j_raw: f64,
    pub j_raw_stderr: f64,
    pub frictionless_value: f64,
    #[serde(skip)]
    pub path_losses: Vec<f64>,
    #[serde(skip)]
    pub path_utilities: Vec<f64>,
}

/// Mean and standard error of the per-path loss differences `a − b`.
pub fn paired_difference(a: &SimResult, b: &SimResult) -> Result<(f64, f64)> {
    if a.path_losses.len() != b.path_losses.len() {
        return Err(bad_input("paired comparison needs equal path counts"));
    }
    let diff: Vec<f64> = a.path_losses.iter().zip(&b.path_losses).map(|(x, y)| x - y).collect();
    Ok(mean_stderr(&diff))
}

/// Precomputed state shared by every path of one configuration.
pub struct Simulator {
    cfg: SimConfig,
    sol: MertonSolution,
    region: NoTradeEllipsoid,
    n_steps: usize,
    /// (μᵢ − ½Σᵢᵢ) dt.
    drift: Vec<f64>,
    /// σ √dt, row-major.
    vol: Vec<f64>,
    pi: Vec<f64>,
    m: Vec<f64>,
    /// c_m^{1−γ}/(1−γ): U(c_m z) = util_scale · z^{1−γ} for γ ≠ 1.
    util_scale: f64,
}

struct PolicyState {
    x: f64,
    y: Vec<f64>,
    alive: bool,
    j: f64,
    control: f64,
    n_trades: u64,
    liquidated: bool,
    z_t: f64,
    threshold_sq: f64,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let sol = MertonSolution::new(&cfg.market, &cfg.prefs)?;
        let region = ellipsoid_solution(&sol)?;
        let d = sol.dim();
        let dt = cfg.dt;
        let n_steps = ((cfg.horizon / dt).round() as usize).max(1);
        let cov = cfg.market.covariance();
        let drift = (0..d).map(|i| (cfg.market.mu()[i] - 0.5 * cov[(i, i)]) * dt).collect();
        let sigma = cfg.market.sigma();
        let mut vol = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                vol.push(sigma[(i, j)] * dt.sqrt());
            }
        }
        let mut m = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                m.push(region.m[(i, j)]);
            }
        }
        let g = cfg.prefs.gamma();
        let util_scale = if sol.is_log { 0.0 } else { sol.c_m.powf(1.0 - g) / (1.0 - g) };
        Ok(Simulator {
            pi: sol.pi_m.iter().copied().collect(),
            cfg: cfg.clone(),
            sol,
            region,
            n_steps,
            drift,
            vol,
            m,
            util_scale,
        })
    }

    pub fn solution(&self) -> &MertonSolution {
        &self.sol
    }

    pub fn region(&self) -> &NoTradeEllipsoid {
        &self.region
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Simulated horizon, a whole number of steps.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.cfg.dt
    }

    /// (U(c_m z), v_z(z)) sharing one power evaluation.
    #[inline]
    fn utility_and_marginal(&self, z: f64) -> (f64, f64) {
        if self.sol.is_log {
            ((self.sol.c_m * z).ln(), self.sol.v0 / z)
        } else {
            let zp = z.powf(-self.cfg.prefs.gamma());
            (self.util_scale * z * zp, self.sol.v0 * zp)
        }
    }

    fn tail(&self, t: f64, z: f64) -> f64 {
        match self.cfg.tail_mode {
            TailMode::FrictionlessValue => (-self.cfg.prefs.beta() * t).exp() * self.sol.value_unchecked(z),
            TailMode::Zero => 0.0,
        }
    }

    fn rng(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(path_index);
        rng
    }

    fn outside(&self, y: &[f64], z: f64, threshold_sq: f64) -> bool {
        let d = y.len();
        let mut q = 0.0;
        for i in 0..d {
            let di = y[i] / z - self.pi[i];
            let mut row = 0.0;
            for j in 0..d {
                row += self.m[i * d + j] * (y[j] / z - self.pi[j]);
            }
            q += di * row;
        }
        // Inside iff q < c^{1/2} (λ/z)^{1/2}, i.e. q² z < c λ (q ≥ 0).
        !(q * q * z < threshold_sq)
    }

    /// Runs one path for every variant on shared noise.
    pub fn run_path(&self, path_index: u64, variants: &[PolicyVariant]) -> Result<Vec<PathOutcome>> {
        self.run_path_observed(path_index, variants, &mut |_| {})
    }

    pub fn run_path_observed<F>(&self, path_index: u64, variants: &[PolicyVariant], observer: &mut F) -> Result<Vec<PathOutcome>>
    where
        F: FnMut(TraceEvent),
    {
        let cfg = &self.cfg;
        let d = self.pi.len();
        let dt = cfg.dt;
        let (r, beta, c_m) = (cfg.market.r(), cfg.prefs.beta(), self.sol.c_m);
        let pi_sum: f64 = self.pi.iter().sum();
        let z0 = cfg.z0;
        let w0: Vec<f64> = match &cfg.initial_weights {
            Some(w) => w.iter().copied().collect(),
            None => self.pi.clone(),
        };

        let mut states: Vec<PolicyState> = Vec::with_capacity(variants.len());
        for (k, v) in variants.iter().enumerate() {
            if !(v.lambda > 0.0 && v.width_multiplier > 0.0) {
                return Err(bad_input("policy variants need positive cost and width multiplier"));
            }
            if !(z0 > cfg.eta * v.lambda) {
                return Err(bad_input(format!(
                    "initial wealth {z0} must exceed the liquidation level {}",
                    cfg.eta * v.lambda
                )));
            }
            let y: Vec<f64> = w0.iter().map(|w| w * z0).collect();
            let mut s = PolicyState {
                x: z0 - y.iter().sum::<f64>(),
                y,
                alive: true,
                j: 0.0,
                control: 0.0,
                n_trades: 0,
                liquidated: false,
                z_t: z0,
                threshold_sq: v.width_multiplier * v.lambda,
            };
            if self.outside(&s.y, z0, s.threshold_sq) {
                let z1 = z0 - v.lambda;
                if !(z1 > 0.0) {
                    return Err(Error::Insolvent { wealth: z0, cost: v.lambda });
                }
                for i in 0..d {
                    s.y[i] = self.pi[i] * z1;
                }
                s.x = z1 * (1.0 - pi_sum);
                s.n_trades += 1;
                if k == 0 {
                    observer(TraceEvent::Trade { t: 0.0, wealth_before: z0, x: s.x, y: s.y.clone() });
                }
            }
            states.push(s);
        }

        // Frictionless benchmark, rebalanced to π_m at every step.
        let mut zs = z0;
        let mut js = 0.0;
        let mut control_s = 0.0;

        let mut rng = self.rng(path_index);
        let mut eps = vec![0.0; d];
        let mut shock = vec![0.0; d];
        let mut growth = vec![0.0; d];

        for n in 0..self.n_steps {
            let t = n as f64 * dt;
            let disc = (-beta * t).exp();
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(&mut rng);
            }
            for i in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    s += self.vol[i * d + j] * eps[j];
                }
                shock[i] = s;
                growth[i] = (self.drift[i] + s).exp();
            }

            {
                let (u, vz) = self.utility_and_marginal(zs);
                js += disc * u * dt;
                let mut exposure = 0.0;
                let mut risky = 0.0;
                for i in 0..d {
                    let yi = self.pi[i] * zs;
                    exposure += yi * shock[i];
                    risky += yi * growth[i];
                }
                control_s += disc * vz * exposure;
                let xs = zs * (1.0 - pi_sum);
                zs = xs + (r * xs - c_m * zs) * dt + risky;
            }

            let t_next = (n + 1) as f64 * dt;
            for (k, (s, v)) in states.iter_mut().zip(variants).enumerate() {
                if !s.alive {
                    continue;
                }
                let z = s.x + s.y.iter().sum::<f64>();
                let (u, vz) = self.utility_and_marginal(z);
                s.j += disc * u * dt;
                let mut exposure = 0.0;
                for i in 0..d {
                    exposure += s.y[i] * shock[i];
                }
                s.control += disc * vz * exposure;

                let x_before = s.x;
                let y_before = if k == 0 { s.y.clone() } else { Vec::new() };
                for i in 0..d {
                    s.y[i] *= growth[i];
                }
                s.x += (r * s.x - c_m * z) * dt;
                let z_new = s.x + s.y.iter().sum::<f64>();
                if k == 0 {
                    observer(TraceEvent::Step {
                        t,
                        x_before,
                        y_before,
                        x_after: s.x,
                        y_after: s.y.clone(),
                        growth: growth.clone(),
                    });
                }

                if z_new <= cfg.eta * v.lambda {
                    let x_after = z_new - v.lambda;
                    if !(x_after > 0.0) {
                        return Err(Error::Insolvent { wealth: z_new, cost: v.lambda });
                    }
                    let tail = liquidation_tail_utility(&cfg.prefs, &cfg.market, x_after)?;
                    s.j += (-beta * t_next).exp() * tail;
                    s.alive = false;
                    s.liquidated = true;
                    s.z_t = x_after;
                    if k == 0 {
                        observer(TraceEvent::Liquidation { t: t_next, wealth_before: z_new, x_after });
                    }
                    continue;
                }
                if self.outside(&s.y, z_new, s.threshold_sq) {
                    let z1 = z_new - v.lambda;
                    if !(z1 > 0.0) {
                        return Err(Error::Insolvent { wealth: z_new, cost: v.lambda });
                    }
                    for i in 0..d {
                        s.y[i] = self.pi[i] * z1;
                    }
                    s.x = z1 * (1.0 - pi_sum);
                    s.n_trades += 1;
                    if k == 0 {
                        observer(TraceEvent::Trade { t: t_next, wealth_before: z_new, x: s.x, y: s.y.clone() });
                    }
                }
            }
        }

        let horizon = self.horizon();
        let benchmark = js + self.tail(horizon, zs) - control_s;
        Ok(states
            .into_iter()
            .map(|mut s| {
                if s.alive {
                    let z = s.x + s.y.iter().sum::<f64>();
                    s.j += self.tail(horizon, z);
                    s.z_t = z;
                }
                PathOutcome {
                    utility: s.j,
                    adjusted_utility: s.j - s.control,
                    benchmark_utility: benchmark,
                    n_trades: s.n_trades,
                    liquidated: s.liquidated,
                    z_t: s.z_t,
                }
            })
            .collect())
    }

    /// Runs all paths (in parallel) for every variant.
    pub fn run(&self, variants: &[PolicyVariant]) -> Result<Vec<SimResult>> {
        let n = self.cfg.n_paths;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| bad_input(format!("cannot start worker pool: {e}")))?;
        let per_path: Vec<Vec<PathOutcome>> = pool.install(|| {
            (0..n as u64)
                .into_par_iter()
                .map(|i| self.run_path(i, variants))
                .collect::<Result<Vec<_>>>()
        })?;
        let v_z0 = self.sol.value_unchecked(self.cfg.z0);
        let horizon = self.horizon();
        Ok(variants
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let outcomes: Vec<&PathOutcome> = per_path.iter().map(|p| &p[k]).collect();
                let losses: Vec<f64> = outcomes.iter().map(|o| o.loss()).collect();
                let utilities: Vec<f64> = outcomes.iter().map(|o| o.utility).collect();
                let trades: Vec<f64> = outcomes.iter().map(|o| o.n_trades as f64 / horizon).collect();
                let liq: Vec<f64> = outcomes.iter().map(|o| if o.liquidated { 1.0 } else { 0.0 }).collect();
                let (loss, loss_se) = mean_stderr(&losses);
                let (j_raw, j_raw_se) = mean_stderr(&utilities);
                let (tpy, tpy_se) = mean_stderr(&trades);
                SimResult {
                    lambda: v.lambda,
                    width_multiplier: v.width_multiplier,
                    j_hat: v_z0 - loss,
                    stderr: loss_se,
                    welfare_loss: loss,
                    trades_per_year: tpy,
                    trades_per_year_stderr: tpy_se,
                    liquidation_fraction: pairwise_sum(&liq) / n as f64,
                    n_paths_effective: n,
                    j_raw,
                    j_raw_stderr: j_raw_se,
                    frictionless_value: v_z0,
                    path_losses: losses,
                    path_utilities: utilities,
                }
            })
            .collect())
    }
}

/// Simulates a single path of the configured policy.
pub fn simulate_path(cfg: &SimConfig, path_index: u64) -> Result<PathOutcome> {
    let sim = Simulator::new(cfg)?;
    let out = sim.run_path(path_index, &[PolicyVariant { lambda: cfg.lambda, width_multiplier: 1.0 }])?;
    Ok(out[0])
}

pub fn estimate_welfare(cfg: &SimConfig) -> Result<SimResult> {
    let sim = Simulator::new(cfg)?;
    let mut out = sim.run(&[PolicyVariant { lambda: cfg.lambda, width_multiplier: 1.0 }])?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingStudy {
    pub results: Vec<SimResult>,
    /// Leading-order prediction λ^{1/2} u₀ z0^{1/2−γ} for each cost.
    pub predicted_losses: Vec<f64>,
    pub loss_slope: f64,
    pub trade_slope: f64,
}

/// Estimates welfare losses across fixed costs with common random numbers and
/// fits log-log slopes against λ.
pub fn scaling_study(cfg: &SimConfig, lambdas: &[f64]) -> Result<ScalingStudy> {
    if lambdas.len() < 3 {
        return Err(bad_input("scaling study needs at least 3 cost levels"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(bad_input("costs must be positive"));
    }
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(0.0, f64::max);
    if (hi / lo).log10() < 1.5 - 1e-12 {
        return Err(bad_input("costs must span at least 1.5 decades"));
    }
    let mut base = cfg.clone();
    base.lambda = hi;
    let sim = Simulator::new(&base)?;
    let variants: Vec<PolicyVariant> = lambdas
        .iter()
        .map(|&lambda| PolicyVariant { lambda, width_multiplier: 1.0 })
        .collect();
    let results = sim.run(&variants)?;

    let g = cfg.prefs.gamma();
    let u0 = sim.region().u0;
    let predicted_losses = lambdas.iter().map(|l| l.sqrt() * u0 * cfg.z0.powf(0.5 - g)).collect();

    let log_l: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let mut log_loss = Vec::with_capacity(results.len());
    let mut log_trades = Vec::with_capacity(results.len());
    for r in &results {
        if !(r.welfare_loss > 0.0) || !(r.trades_per_year > 0.0) {
            return Err(Error::NonPositiveEstimate(format!(
                "lambda = {}: loss {} and trade rate {} must be positive to fit a power law",
                r.lambda, r.welfare_loss, r.trades_per_year
            )));
        }
        log_loss.push(r.welfare_loss.ln());
        log_trades.push(r.trades_per_year.ln());
    }
    Ok(ScalingStudy {
        results,
        predicted_losses,
        loss_slope: ols(&log_l, &log_loss).0,
        trade_slope: ols(&log_l, &log_trades).0,
    })
}

/// Welfare losses when the single-asset half-width constant 12/γ is scaled by
/// each multiplier, all on common random numbers.
pub fn width_sweep(cfg: &SimConfig, multipliers: &[f64]) -> Result<Vec<SimResult>> {
    if cfg.market.dim() != 1 {
        return Err(Error::DimensionError("width sweep is defined for a single risky asset".into()));
    }
    if multipliers.is_empty() || multipliers.iter().any(|c| !(*c > 0.0)) {
        return Err(bad_input("multipliers must be positive"));
    }
    let sim = Simulator::new(cfg)?;
    let variants: Vec<PolicyVariant> = multipliers
        .iter()
        .map(|&c| PolicyVariant { lambda: cfg.lambda, width_multiplier: c })
        .collect();
    sim.run(&variants)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(lambda: f64) -> SimConfig {
        let m = MarketParams::single(0.01, 0.05, 0.2).unwrap();
        let p = Preferences::new(2.0, 0.1).unwrap();
        let mut cfg = SimConfig::new(m, p, lambda, 1.0).unwrap();
        cfg.dt = 1.0 / 50.0;
        cfg.horizon = 5.0;
        cfg.n_paths = 64;
        cfg.seed = 7;
        cfg
    }

    /// Trapezoidal quadrature of ∫ e^{-βt} U(c_t) dt on a long grid.
    fn tail_by_quadrature(gamma: f64, beta: f64, r: f64, x: f64) -> f64 {
        let (t_max, n) = (600.0, 2_000_000);
        let h = t_max / n as f64;
        let f = |t: f64| {
            let c: f64 = 0.5 * r * x * (0.5 * r * t).exp();
            let u = if gamma == 1.0 { c.ln() } else { c.powf(1.0 - gamma) / (1.0 - gamma) };
            (-beta * t).exp() * u
        };
        let mut s = 0.5 * (f(0.0) + f(t_max));
        for i in 1..n {
            s += f(i as f64 * h);
        }
        s * h
    }

    #[test]
    fn tail_utility_closed_form() {
        let m = MarketParams::single(0.02, 0.05, 0.2).unwrap();
        let p = Preferences::new(2.0, 0.1).unwrap();
        let tail = liquidation_tail_utility(&p, &m, 100.0).unwrap();
        assert!((tail + 1.0 / 0.11).abs() < 1e-12);
        let quad = tail_by_quadrature(2.0, 0.1, 0.02, 100.0);
        assert!((tail - quad).abs() < 1e-8);
        assert!(liquidation_tail_utility(&p, &m, 200.0).unwrap() > tail);
        assert!(liquidation_tail_utility(&p, &m, 0.0).is_err());

        let log = Preferences::new(1.0, 0.1).unwrap();
        let t = liquidation_tail_utility(&log, &m, 2.0 / 0.02).unwrap();
        assert!((t - 0.02 / (2.0 * 0.01)).abs() < 1e-12);
        let quad = tail_by_quadrature(1.0, 0.1, 0.02, 100.0);
        assert!((t - quad).abs() < 1e-8);
    }

    #[test]
    fn tail_diverges_for_patient_investor() {
        let m = MarketParams::single(0.05, 0.1, 0.2).unwrap();
        let p = Preferences::new(0.2, 0.01).unwrap();
        assert!(matches!(liquidation_tail_utility(&p, &m, 1.0), Err(Error::InfiniteValue(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = desk(1e-3);
        cfg.n_paths = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = desk(1e-3);
        cfg.eta = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = desk(1e-3);
        cfg.horizon = cfg.dt / 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = desk(1e-3);
        cfg.initial_weights = Some(DVector::from_element(2, 0.5));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_grid() {
        let m = MarketParams::single(0.01, 0.05, 0.2).unwrap();
        let p = Preferences::new(2.0, 0.1).unwrap();
        let cfg = SimConfig::new(m, p, 1e-4, 1.0).unwrap();
        assert!((cfg.horizon - 1e4f64.ln() / 0.1).abs() < 1e-12);
        assert!((-0.1 * cfg.horizon).exp() <= 1e-4 + 1e-16);
        assert_eq!(cfg.dt, 1.0 / 2520.0);
        // Tiny costs shrink the step below 1/2520.
        let cfg = SimConfig::new(cfg.market.clone(), p, 1e-12, 1.0).unwrap();
        assert!(cfg.dt < 1.0 / 2520.0);
    }

    #[test]
    fn mean_exit_time_single_asset() {
        let m = MarketParams::single(0.01, 0.05, 0.2).unwrap();
        let sol = MertonSolution::new(&m, &Preferences::new(2.0, 0.1).unwrap()).unwrap();
        let e = ellipsoid_solution(&sol).unwrap();
        let (lambda, z) = (1e-4f64, 1.0f64);
        let half = (12.0 / 2.0 * 0.0625 * lambda / z).powf(0.25);
        let weight_var = 0.04 * 0.0625;
        assert!((mean_exit_time(&e, lambda, z) - half * half / weight_var).abs() < 1e-12);
    }

    #[test]
    fn single_path_matches_estimate() {
        let mut cfg = desk(1e-3);
        cfg.n_paths = 1;
        let res = estimate_welfare(&cfg).unwrap();
        let path = simulate_path(&cfg, 0).unwrap();
        assert_eq!(res.welfare_loss, path.loss());
        assert_eq!(res.j_raw, path.utility);
        assert_eq!(res.trades_per_year, path.n_trades as f64 / 5.0);
        assert_eq!(res.stderr, 0.0);
    }

    #[test]
    fn prefix_of_paths_is_stable() {
        let cfg = desk(1e-3);
        let a = estimate_welfare(&cfg).unwrap();
        let mut big = cfg.clone();
        big.n_paths = 2 * cfg.n_paths;
        let b = estimate_welfare(&big).unwrap();
        assert_eq!(a.path_utilities[..], b.path_utilities[..cfg.n_paths]);
        assert_eq!(a.path_losses[..], b.path_losses[..cfg.n_paths]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = desk(1e-3);
        cfg.threads = 1;
        let a = estimate_welfare(&cfg).unwrap();
        cfg.threads = 3;
        let b = estimate_welfare(&cfg).unwrap();
        assert_eq!(a.path_losses, b.path_losses);
        assert_eq!(a.welfare_loss.to_bits(), b.welfare_loss.to_bits());
    }

    #[test]
    fn trades_land_on_merton_weights_and_steps_self_finance() {
        let cfg = desk(1e-3);
        let sim = Simulator::new(&cfg).unwrap();
        let variant = [PolicyVariant { lambda: cfg.lambda, width_multiplier: 1.0 }];
        let (r, c_m, dt) = (0.01, sim.solution().c_m, cfg.dt);
        let mut n_trades = 0;
        for path in 0..10 {
            sim.run_path_observed(path, &variant, &mut |ev| match ev {
                TraceEvent::Trade { x, y, wealth_before, .. } => {
                    n_trades += 1;
                    let z = x + y.iter().sum::<f64>();
                    assert!((z - (wealth_before - cfg.lambda)).abs() <= 1e-14 * z);
                    assert!((y[0] / z - 0.5).abs() < 1e-14);
                }
                TraceEvent::Step { x_before, y_before, x_after, y_after, growth, .. } => {
                    let z_before = x_before + y_before[0];
                    let pnl = y_before[0] * (growth[0] - 1.0) + r * x_before * dt;
                    let expected = z_before + pnl - c_m * z_before * dt;
                    let z_after = x_after + y_after[0];
                    assert!((z_after - expected).abs() <= 1e-10 * expected.abs());
                }
                TraceEvent::Liquidation { .. } => {}
            })
            .unwrap();
        }
        assert!(n_trades > 0);
    }

    #[test]
    fn frictionless_limit() {
        let mut cfg = desk(1e-12);
        cfg.n_paths = 200;
        let res = estimate_welfare(&cfg).unwrap();
        // The loss scale here is ~ u0 * 1e-6; anything of that order is "zero".
        assert!(res.welfare_loss.abs() < 1e-3 + 3.0 * res.stderr);
        // Raw mean (with truncated horizon) still tracks v(z0) statistically.
        let rel = (res.j_raw - res.frictionless_value).abs() / res.frictionless_value.abs();
        assert!(rel < 0.05, "relative gap {rel}");
    }

    #[test]
    fn starting_outside_trades_immediately() {
        let mut cfg = desk(1e-3);
        cfg.initial_weights = Some(DVector::from_element(1, 0.9));
        let sim = Simulator::new(&cfg).unwrap();
        let mut first = None;
        sim.run_path_observed(0, &[PolicyVariant { lambda: 1e-3, width_multiplier: 1.0 }], &mut |ev| {
            if first.is_none() {
                first = Some(ev);
            }
        })
        .unwrap();
        assert!(matches!(first, Some(TraceEvent::Trade { t, .. }) if t == 0.0));
    }
}
