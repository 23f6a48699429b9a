//! JSON run configuration.
//!
//! Exactly one of `sigma`, `factor` or the pair `correlation` + `scales`
//! describes the covariance. `cone`, when present, maps the problem to the
//! orthant first.

use conehit::nalgebra::DMatrix;
use conehit::{PdMatrix, ProblemSpec, Sampler, SimMode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<Vec<Vec<f64>>>,
    /// Evaluator grid, and the simulation ladder in validate mode.
    #[serde(default = "default_u")]
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub pickands: PickandsSettings,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub rqmc: RqmcSettings,
}

fn default_u() -> Vec<f64> {
    vec![2.0, 3.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PickandsSettings {
    /// Increasing horizons `T`; the last one is reported.
    pub t_ladder: Vec<f64>,
    /// Grid steps on the last rung; `δ = T_last/n_steps` on every rung.
    pub n_steps: usize,
    pub n_paths: usize,
    pub sampler: Sampler,
}

impl Default for PickandsSettings {
    fn default() -> Self {
        Self { t_ladder: vec![2.0, 4.0, 8.0, 16.0], n_steps: 512, n_paths: 20_000, sampler: Sampler::Mixture }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub horizon_factor: f64,
    pub n_steps_per_unit: usize,
    pub n_paths: usize,
    pub mode: SimMode,
    /// Level for the passage-time comparison; the largest `u` by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passage_u: Option<f64>,
    /// Write one CSV row per path of the passage-time run.
    pub raw_samples: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon_factor: 3.0,
            n_steps_per_unit: 256,
            n_paths: 20_000,
            mode: SimMode::Tilted,
            passage_u: None,
            raw_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RqmcSettings {
    pub points: usize,
    pub shifts: usize,
}

impl Default for RqmcSettings {
    fn default() -> Self {
        let d = conehit::RqmcOptions::default();
        Self { points: d.points, shifts: d.shifts }
    }
}

fn missing(field: &str) -> CliError {
    CliError::config("CONFIG_MISSING_FIELD", format!("required field `{field}` is missing"))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::config("CONFIG_INVALID", msg)
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("`{name}` must be a nonempty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| invalid(format!("config is not valid: {e}")))
    }

    fn sigma(&self) -> Result<PdMatrix, CliError> {
        let given = [self.sigma.is_some(), self.factor.is_some(), self.correlation.is_some()];
        match given.iter().filter(|&&g| g).count() {
            0 => return Err(missing("sigma")),
            1 => {}
            _ => {
                return Err(CliError::config(
                    "CONFIG_CONFLICT",
                    "give exactly one of `sigma`, `factor`, `correlation`",
                ))
            }
        }
        if self.scales.is_some() != self.correlation.is_some() {
            return Err(match self.correlation {
                Some(_) => missing("scales"),
                None => CliError::config("CONFIG_CONFLICT", "`scales` requires `correlation`"),
            });
        }
        if let Some(rows) = &self.sigma {
            return Ok(PdMatrix::new(matrix(rows, "sigma")?)?);
        }
        if let Some(rows) = &self.factor {
            return Ok(PdMatrix::from_factor(&matrix(rows, "factor")?)?);
        }
        let r = matrix(self.correlation.as_ref().expect("checked above"), "correlation")?;
        let s = self.scales.as_ref().expect("checked above");
        if s.len() != r.nrows() || s.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("`scales` must be positive and match `correlation`"));
        }
        if (0..r.nrows()).any(|i| (r[(i, i)] - 1.0).abs() > 1e-12) {
            return Err(invalid("`correlation` must have a unit diagonal"));
        }
        Ok(PdMatrix::new(DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| s[i] * r[(i, j)] * s[j]))?)
    }

    /// Builds the problem and checks every setting; nothing is computed yet.
    /// Every failure here exits with 2.
    pub fn resolve(&self) -> Result<ProblemSpec, CliError> {
        self.checked().map_err(CliError::in_config)
    }

    fn checked(&self) -> Result<ProblemSpec, CliError> {
        let sigma = self.sigma()?;
        let alpha = self.alpha.clone().ok_or_else(|| missing("alpha"))?;
        let mu = self.mu.clone().ok_or_else(|| missing("mu"))?;
        let spec = match &self.cone {
            Some(rows) => ProblemSpec::with_cone(sigma, alpha, mu, &matrix(rows, "cone")?)?,
            None => ProblemSpec::new(sigma, alpha, mu)?,
        };
        if self.u.is_empty() || self.u.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            return Err(invalid("`u` must be a nonempty list of positive levels"));
        }
        let p = &self.pickands;
        if p.t_ladder.is_empty() || p.t_ladder.windows(2).any(|w| w[1] <= w[0]) || !(p.t_ladder[0] > 0.0) {
            return Err(invalid("`pickands.t_ladder` must be positive and strictly increasing"));
        }
        if p.n_steps == 0 || p.n_paths == 0 {
            return Err(invalid("`pickands.n_steps` and `pickands.n_paths` must be positive"));
        }
        let s = &self.sim;
        let sim = conehit::SimConfig {
            u: s.passage_u.unwrap_or(1.0),
            horizon_factor: s.horizon_factor,
            n_steps_per_unit: s.n_steps_per_unit,
            n_paths: s.n_paths,
            ..Default::default()
        };
        sim.validate()?;
        if self.rqmc.points == 0 || self.rqmc.shifts < 2 {
            return Err(invalid("`rqmc.points` must be positive and `rqmc.shifts` at least 2"));
        }
        if self.workers == Some(0) {
            return Err(invalid("`workers` must be positive"));
        }
        Ok(spec)
    }
}
