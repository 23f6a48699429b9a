//! Monte Carlo for the Pickands-type constant
//! `H_I = lim_T H_I(T)/T`, `H_I(T) = ∫ e^{a·x} P(∃t ≤ T: W(t) > x) dx`,
//! where `W = (X − μt)_I` and `a = Σ_II⁻¹b_I/t₀`.
//!
//! For one discretised path the `x`-integral is exact:
//! `∫ e^{a·x} 1{∃k: x < W_k} dx = HV({e^{a∘W_k}}) / ∏a_i`.
//!
//! `e^{a·W(t) − κt}` with `κ = aᵀΣa/2 − a·μ` is a mean-one martingale
//! (`κ = 0` at the minimiser `t₀`). The default sampler draws a grid index `k`
//! uniformly, tilts the path by `Σa` up to `t_k` and weights by the inverse of
//! the mixture density `(n+1)⁻¹ Σ_j e^{a·W_j − κt_j}`. Each path contributes a
//! bounded, unbiased value.
//!
//! Coarser grids `{n/2, n/4}` reuse every second and fourth point of the same
//! path. Combining the three levels cancels the `√δ` and `δ` terms of the
//! discretisation bias.

mod hypervolume;

pub use hypervolume::{hypervolume, log_weighted_lower_set_integral, weighted_lower_set_integral};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::g_analysis::GAnalysis;
use crate::linalg::{dot, PdMatrix};
use crate::parallel::{chunk_rng, map_chunks, Welford};

pub const DEFAULT_LADDER: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Uniform mixture of exponential tilts over the grid.
    #[default]
    Mixture,
    /// Paths under the original measure.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickandsInput {
    pub sigma_ii: PdMatrix,
    pub mu_i: Vec<f64>,
    pub a: Vec<f64>,
    pub t: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl PickandsInput {
    pub fn from_analysis(g: &GAnalysis, t: f64, n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            sigma_ii: g.sigma_ii(),
            mu_i: g.mu_i(),
            a: g.pickands_weight(),
            t,
            n_steps,
            n_paths,
            seed,
            sampler: Sampler::Mixture,
            workers: 1,
        }
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn delta(&self) -> f64 {
        self.t / self.n_steps as f64
    }

    /// `aᵀΣa/2 − a·μ`.
    pub fn kappa(&self) -> f64 {
        0.5 * dot(&self.a, &self.sigma_ii.mul_vec(&self.a)) - dot(&self.a, &self.mu_i)
    }

    /// `t₀^{m−1}μ_IᵀΣ_II⁻¹b_I / (16∏(Σ_II⁻¹b_I)_i) = (μ·a)/(16∏a)`.
    pub fn lower_bound(&self) -> f64 {
        dot(&self.mu_i, &self.a) / (16.0 * self.a.iter().product::<f64>())
    }

    fn validate(&self) -> Result<()> {
        let m = self.sigma_ii.dim();
        if self.mu_i.len() != m || self.a.len() != m {
            return Err(Error::DimensionMismatch("sigma_ii, mu_i and a disagree".into()));
        }
        if self.a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidGrid("the weight a must be strictly positive".into()));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidGrid(format!("T must be positive, got {}", self.t)));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidGrid("need at least two paths".into()));
        }
        Ok(())
    }
}

/// One grid of the coupled refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub n_steps: usize,
    pub delta: f64,
    pub ht: f64,
    pub stderr: f64,
}

/// `H(T)/T` at one rung of the `T`-ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub t: f64,
    pub ht_over_t: f64,
    pub h: f64,
    pub h_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickandsEstimate {
    /// `H(T)` on the finest grid.
    pub ht: f64,
    pub stderr: f64,
    pub t: f64,
    pub ht_over_t: f64,
    pub lower_bound: f64,
    /// Kish effective sample size of the finest-grid contributions.
    pub n_effective: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub delta: f64,
    pub sampler: Sampler,
    /// Finest first.
    pub levels: Vec<GridLevel>,
    pub extrapolated_ht: Option<f64>,
    pub extrapolated_stderr: Option<f64>,
    /// Reported `H_I`: extrapolated when three levels exist, else finest, divided by `T`.
    pub h: f64,
    pub h_stderr: f64,
    pub ladder: Vec<LadderPoint>,
    /// `h` never increases along the ladder.
    pub monotone: bool,
}

/// Lagrange weights at `h = 0` for nodes `h ∝ √δ` at `δ, 2δ, 4δ`.
fn richardson_weights() -> [f64; 3] {
    let h = [1.0, 2f64.sqrt(), 2.0];
    let mut w = [0.0; 3];
    for i in 0..3 {
        w[i] = (0..3).filter(|&j| j != i).map(|j| -h[j] / (h[i] - h[j])).product();
    }
    w
}

#[derive(Debug, Clone, Default)]
struct ChunkStats {
    levels: Vec<Welford>,
    rich: Welford,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn simulate_chunk(inp: &PickandsInput, chunk: u64, paths: std::ops::Range<usize>, strides: &[usize]) -> Result<ChunkStats> {
    let m = inp.m();
    let n = inp.n_steps;
    let delta = inp.delta();
    let sd = delta.sqrt();
    let kappa = inp.kappa();
    let tilt: Vec<f64> = inp.sigma_ii.mul_vec(&inp.a).iter().map(|v| v * delta).collect();
    let drift: Vec<f64> = inp.mu_i.iter().map(|v| -v * delta).collect();
    let log_n1 = ((n + 1) as f64).ln();
    let weights = richardson_weights();

    let mut rng = chunk_rng(inp.seed, chunk);
    let mut stats = ChunkStats { levels: vec![Welford::default(); strides.len()], rich: Welford::default() };
    let mut path = vec![0.0; (n + 1) * m];
    let mut exponent = vec![0.0; n + 1];
    let mut z = vec![0.0; m];
    let mut step = vec![0.0; m];
    let mut sub = Vec::with_capacity((n + 1) * m);
    let mut vals = vec![0.0; strides.len()];

    for _ in paths {
        let k = match inp.sampler {
            Sampler::Mixture => rng.random_range(0..=n),
            Sampler::Plain => 0,
        };
        for j in 1..=n {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            inp.sigma_ii.chol_mul(&z, &mut step);
            for i in 0..m {
                let mut inc = sd * step[i] + drift[i];
                if j <= k {
                    inc += tilt[i];
                }
                path[j * m + i] = path[(j - 1) * m + i] + inc;
            }
        }
        let log_lr = match inp.sampler {
            Sampler::Mixture => {
                for j in 0..=n {
                    exponent[j] = dot(&inp.a, &path[j * m..(j + 1) * m]) - kappa * delta * j as f64;
                }
                log_n1 - log_sum_exp(&exponent)
            }
            Sampler::Plain => 0.0,
        };
        for (l, &s) in strides.iter().enumerate() {
            let v = if s == 1 {
                log_weighted_lower_set_integral(&path, &inp.a)?
            } else {
                sub.clear();
                for j in (0..=n).step_by(s) {
                    sub.extend_from_slice(&path[j * m..(j + 1) * m]);
                }
                log_weighted_lower_set_integral(&sub, &inp.a)?
            };
            vals[l] = (v + log_lr).exp();
            stats.levels[l].push(vals[l]);
        }
        if strides.len() == 3 {
            stats.rich.push(weights.iter().zip(&vals).map(|(w, v)| w * v).sum());
        }
    }
    Ok(stats)
}

/// `H(T)` on one grid, with the coupled coarse levels when `n_steps` is a
/// multiple of four.
pub fn estimate_ht(inp: &PickandsInput) -> Result<PickandsEstimate> {
    inp.validate()?;
    let strides: Vec<usize> = if inp.n_steps % 4 == 0 { vec![1, 2, 4] } else { vec![1] };
    let chunks = map_chunks(inp.n_paths, inp.workers.max(1), |c, r| simulate_chunk(inp, c, r, &strides));
    let mut levels = vec![Welford::default(); strides.len()];
    let mut rich = Welford::default();
    for c in chunks {
        let c = c?;
        levels.iter_mut().zip(&c.levels).for_each(|(a, b)| a.merge(b));
        rich.merge(&c.rich);
    }

    let fine = levels[0];
    let ess = {
        let (n, mean, var) = (fine.n as f64, fine.mean, fine.variance());
        let second = var * (n - 1.0) / n + mean * mean;
        if second > 0.0 { (n * mean * mean / second).floor() as usize } else { fine.n as usize }
    };
    let grid: Vec<GridLevel> = strides
        .iter()
        .zip(&levels)
        .map(|(&s, w)| GridLevel {
            n_steps: inp.n_steps / s,
            delta: inp.delta() * s as f64,
            ht: w.mean,
            stderr: w.stderr(),
        })
        .collect();
    let (ext, ext_se) = if strides.len() == 3 { (Some(rich.mean), Some(rich.stderr())) } else { (None, None) };
    let (h, h_se) = match ext {
        Some(e) => (e / inp.t, rich.stderr() / inp.t),
        None => (fine.mean / inp.t, fine.stderr() / inp.t),
    };
    Ok(PickandsEstimate {
        ht: fine.mean,
        stderr: fine.stderr(),
        t: inp.t,
        ht_over_t: fine.mean / inp.t,
        lower_bound: inp.lower_bound(),
        n_effective: ess,
        n_paths: inp.n_paths,
        n_steps: inp.n_steps,
        delta: inp.delta(),
        sampler: inp.sampler,
        levels: grid,
        extrapolated_ht: ext,
        extrapolated_stderr: ext_se,
        h,
        h_stderr: h_se,
        ladder: Vec::new(),
        monotone: true,
    })
}

/// Runs [`estimate_ht`] along `ladder` with the grid spacing of `base` held
/// fixed and the same seed at every rung; reports the top rung.
pub fn estimate_h(base: &PickandsInput, ladder: &[f64]) -> Result<PickandsEstimate> {
    base.validate()?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("T-ladder must be nonempty and strictly increasing".into()));
    }
    let delta = base.delta();
    let mut points = Vec::with_capacity(ladder.len());
    let mut top = None;
    for &t in ladder {
        let steps = (t / delta).round();
        if steps < 1.0 || (steps * delta - t).abs() > 1e-9 * t {
            return Err(Error::InvalidGrid(format!("T = {t} is not a multiple of δ = {delta}")));
        }
        let est = estimate_ht(&PickandsInput { t, n_steps: steps as usize, ..base.clone() })?;
        points.push(LadderPoint { t, ht_over_t: est.ht_over_t, h: est.h, h_stderr: est.h_stderr });
        top = Some(est);
    }
    let mut est = top.expect("nonempty ladder");
    let mut monotone = true;
    for w in points.windows(2) {
        let rise = w[1].h - w[0].h;
        let se = w[0].h_stderr.hypot(w[1].h_stderr);
        if rise > 0.0 {
            monotone = false;
        }
        if rise > 3.0 * se {
            return Err(Error::NonConvergent(format!(
                "H(T)/T rises from {:.5} at T = {} to {:.5} at T = {} (σ = {se:.2e})",
                w[0].h, w[0].t, w[1].h, w[1].t
            )));
        }
    }
    est.ladder = points;
    est.monotone = monotone;
    Ok(est)
}

/// `t₀^{m−1}μ_IᵀΣ_II⁻¹b_I / (16∏_{i∈I}(Σ_II⁻¹b_I)_i)`.
pub fn lower_bound_h(analysis: &GAnalysis) -> f64 {
    let m = analysis.m() as i32;
    let lambda = analysis.lambda();
    analysis.t0.powi(m - 1) * dot(&analysis.mu_i(), lambda) / (16.0 * lambda.iter().product::<f64>())
}

/// Plain Monte Carlo for `∫ e^{a·x} P(W(t) > x) dx` at a single time `t`;
/// the exact value is `e^{κt}/∏a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleTime {
    pub mean: f64,
    pub stderr: f64,
    pub exact: f64,
}

pub fn single_time_integral(inp: &PickandsInput, t: f64) -> Result<SingleTime> {
    inp.validate()?;
    if !(t > 0.0) {
        return Err(Error::InvalidGrid(format!("single time must be positive, got {t}")));
    }
    let m = inp.m();
    let log_prod_a: f64 = inp.a.iter().map(|v| v.ln()).sum();
    let chunks = map_chunks(inp.n_paths, inp.workers.max(1), |c, r| {
        let mut rng = chunk_rng(inp.seed, c);
        let mut z = vec![0.0; m];
        let mut w = vec![0.0; m];
        let mut acc = Welford::default();
        for _ in r {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            inp.sigma_ii.chol_mul(&z, &mut w);
            let e: f64 = (0..m).map(|i| inp.a[i] * (t.sqrt() * w[i] - inp.mu_i[i] * t)).sum();
            acc.push((e - log_prod_a).exp());
        }
        acc
    });
    let mut total = Welford::default();
    chunks.iter().for_each(|c| total.merge(c));
    Ok(SingleTime {
        mean: total.mean,
        stderr: total.stderr(),
        exact: (inp.kappa() * t - log_prod_a).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d(t: f64, n_steps: usize, n_paths: usize) -> PickandsInput {
        PickandsInput {
            sigma_ii: PdMatrix::identity(1),
            mu_i: vec![1.0],
            a: vec![2.0],
            t,
            n_steps,
            n_paths,
            seed: 3,
            sampler: Sampler::Mixture,
            workers: 1,
        }
    }

    #[test]
    fn richardson_weights_sum_to_one_and_kill_linear_terms() {
        let w = richardson_weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let h = [1.0, 2f64.sqrt(), 2.0];
        assert!(w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-13);
        assert!(w.iter().zip(&h).map(|(a, b)| a * b * b).sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn unit_martingale_and_lower_bound() {
        let inp = unit_1d(1.0, 4, 10);
        assert!(inp.kappa().abs() < 1e-15);
        assert!((inp.lower_bound() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(estimate_ht(&unit_1d(1.0, 0, 10)), Err(Error::InvalidGrid(_))));
        let e = estimate_h(&unit_1d(1.0, 8, 10), &[1.0, 0.5]);
        assert!(matches!(e, Err(Error::InvalidGrid(_))));
        let e = estimate_h(&unit_1d(1.0, 8, 10), &[1.0, 1.01]);
        assert!(matches!(e, Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn coarse_levels_never_exceed_fine() {
        let est = estimate_ht(&unit_1d(2.0, 64, 2000)).unwrap();
        assert_eq!(est.levels.len(), 3);
        assert!(est.levels[0].ht >= est.levels[1].ht && est.levels[1].ht >= est.levels[2].ht);
        // the t = 0 point alone contributes 1/∏a
        assert!(est.levels[2].ht >= 0.5);
    }
}
