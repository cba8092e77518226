//! JSON run configuration.
//!
//! Market keys: `r`, `mu`, and either `sigma` (row-major d×d) or `vols` with
//! `corr`, in which case σ = diag(vols)·chol(corr). Preference keys: `gamma`,
//! `beta`. Everything else is optional and only read by the commands that need
//! it (wealth, cost, simulation grid, study lists).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::model::{MarketParams, Preferences};
use crate::simulate::{SimConfig, TailMode};

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub r: f64,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vols: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<Vec<Vec<f64>>>,
    pub gamma: f64,
    pub beta: f64,

    /// Fixed cost per trade.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Current (or initial) wealth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_mode: Option<TailMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<f64>>,
}

fn matrix(name: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>, Error> {
    if rows.len() != d || rows.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionError(format!("{name} must be a {d}x{d} array")));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.iter().flatten().copied()))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                ConfigError::Parse(inner.to_string())
            } else {
                ConfigError::Parse(format!("key `{path}`: {inner}"))
            }
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn market(&self) -> Result<MarketParams, Error> {
        let d = self.mu.len();
        let mu = DVector::from_vec(self.mu.clone());
        match (&self.sigma, &self.vols, &self.corr) {
            (Some(s), None, None) => MarketParams::new(self.r, mu, matrix("sigma", s, d)?),
            (None, Some(v), Some(c)) => {
                if v.len() != d {
                    return Err(Error::DimensionError(format!("vols must have {d} entries")));
                }
                MarketParams::from_vols_corr(self.r, mu, v, matrix("corr", c, d)?)
            }
            (None, Some(v), None) if d == 1 && v.len() == 1 => {
                MarketParams::from_vols_corr(self.r, mu, v, DMatrix::identity(1, 1))
            }
            _ => Err(Error::BadInput(
                "give either `sigma`, or `vols` together with `corr`".into(),
            )),
        }
    }

    pub fn preferences(&self) -> Result<Preferences, Error> {
        Preferences::new(self.gamma, self.beta)
    }

    /// Simulation settings: explicit keys override the defaults of [`SimConfig::new`].
    pub fn sim_config(&self) -> Result<SimConfig, Error> {
        let lambda = self.lambda.ok_or_else(|| Error::BadInput("missing `lambda`".into()))?;
        let z0 = self.wealth.ok_or_else(|| Error::BadInput("missing `wealth`".into()))?;
        let mut cfg = SimConfig::new(self.market()?, self.preferences()?, lambda, z0)?;
        if let Some(w) = &self.initial_weights {
            cfg.initial_weights = Some(DVector::from_vec(w.clone()));
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.n_paths {
            cfg.n_paths = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.tail_mode {
            cfg.tail_mode = v;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sigma_form() {
        let c = RunConfig::from_json(r#"{"r":0.01,"mu":[0.05],"sigma":[[0.2]],"gamma":2,"beta":0.1}"#)
            .unwrap();
        assert_eq!(c.market().unwrap().sigma()[(0, 0)], 0.2);
    }

    #[test]
    fn parses_vols_corr_form() {
        let c = RunConfig::from_json(
            r#"{"r":0.03,"mu":[0.08,0.08],"vols":[0.4,0.4],"corr":[[1,0.44],[0.44,1]],"gamma":2,"beta":0.1}"#,
        )
        .unwrap();
        let m = c.market().unwrap();
        assert!((m.covariance()[(0, 1)] - 0.44 * 0.16).abs() < 1e-15);
    }

    #[test]
    fn parse_error_names_key() {
        let err = RunConfig::from_json(r#"{"r":0.01,"mu":[0.05],"sigma":[[0.2]],"gamma":"two","beta":0.1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = RunConfig::from_json(r#"{"r":0.01,"mu":[0.05],"sigma":[[0.2]],"gamma":2,"beta":0.1,"lamda":1}"#)
            .unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn ambiguous_volatility_is_rejected() {
        let c = RunConfig::from_json(
            r#"{"r":0.01,"mu":[0.05],"sigma":[[0.2]],"vols":[0.2],"corr":[[1]],"gamma":2,"beta":0.1}"#,
        )
        .unwrap();
        assert!(c.market().is_err());
    }

    #[test]
    fn sim_overrides() {
        let c = RunConfig::from_json(
            r#"{"r":0.01,"mu":[0.05],"sigma":[[0.2]],"gamma":2,"beta":0.1,
                "lambda":1e-4,"wealth":1,"dt":0.01,"n_paths":5,"seed":9,"tail_mode":"zero"}"#,
        )
        .unwrap();
        let s = c.sim_config().unwrap();
        assert_eq!((s.dt, s.n_paths, s.seed, s.tail_mode), (0.01, 5, 9, TailMode::Zero));
    }
}
