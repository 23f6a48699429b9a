//! Direct simulation of `τ_u = inf{t : X(t) − μt > αu}` on a uniform grid.
//!
//! Every path owns the ChaCha8 stream `path_id` under the run seed, so
//! estimates do not depend on the worker count and runs that differ only in
//! `u` share their noise path by path.
//!
//! Tilted mode adds the drift `b̃/t₀` (that is `Σθ` with `θ = Σ⁻¹b̃/t₀`) over
//! the whole horizon and weights a hit by the likelihood ratio at the hitting
//! time. Since `θᵀΣθ/2 = θᵀμ` at `t₀`, that ratio is `e^{−θ·(X(τ)−μτ)} ≤ e^{−ĝu/2}`.
//! Hits are also recorded on the sub-grids of stride 2 and 4 of the same
//! path, which gives the δ-refinement diagnostics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{AsymptoticResult, PassageTimeLaw};
use crate::error::{Error, Result};
use crate::g_analysis::GAnalysis;
use crate::linalg::dot;
use crate::parallel::{chunk_rng, map_chunks, Welford};

/// Strides of the coupled coarse grids.
pub const STRIDES: [usize; 3] = [1, 2, 4];
const MIN_ESS: f64 = 50.0;
const MIN_HITS: usize = 200;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Crude,
    #[default]
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub u: f64,
    /// Paths run on `[0, horizon_factor·t₀·u]`.
    pub horizon_factor: f64,
    pub n_steps_per_unit: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub mode: SimMode,
    pub workers: usize,
    /// Keep one [`RawRow`] per path.
    pub keep_rows: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            u: 3.0,
            horizon_factor: 3.0,
            n_steps_per_unit: 256,
            n_paths: 20_000,
            seed: 0,
            mode: SimMode::Tilted,
            workers: 1,
            keep_rows: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.u > 0.0 && self.u.is_finite()) {
            return bad(format!("u must be positive and finite, got {}", self.u));
        }
        if !(self.horizon_factor >= 2.0 && self.horizon_factor.is_finite()) {
            return bad(format!("horizon_factor must be at least 2, got {}", self.horizon_factor));
        }
        if self.n_paths == 0 || self.n_steps_per_unit == 0 {
            return bad("n_paths and n_steps_per_unit must be positive".into());
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n_steps_per_unit as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub path_id: usize,
    pub hit: bool,
    pub tau: Option<f64>,
    /// `ln dP/dQ` at the stopping time; 0 in crude mode.
    pub log_likelihood_ratio: f64,
}

/// Estimate on a coarser sub-grid of the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub delta: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub n_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub u: f64,
    pub mode: SimMode,
    pub p_hat: f64,
    pub stderr: f64,
    /// `ln p_hat`, finite even where `p_hat` underflows.
    pub log_p_hat: f64,
    pub n_hits: usize,
    pub n_paths: usize,
    /// Kish effective sample size of the path weights.
    pub ess: f64,
    pub horizon: f64,
    pub delta: f64,
    /// Hitting times of the hitting paths, in path order.
    pub passage_samples: Vec<f64>,
    /// Likelihood ratios of `passage_samples` relative to their largest value; 1 in crude mode.
    pub passage_weights: Vec<f64>,
    /// Weighted KS distance of the standardized passage times to the limit law.
    pub ks_vs_limit: Option<f64>,
    /// Same paths observed at `2δ` and `4δ`.
    pub refinement: Vec<RefinementLevel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows: Option<Vec<RawRow>>,
}

struct Plan {
    d: usize,
    sd: f64,
    /// Per-step deterministic increment of `X − μt`.
    drift: Vec<f64>,
    theta: Vec<f64>,
    /// `θᵀΣθ·δ/2`.
    half_quad: f64,
    level: Vec<f64>,
    total_steps: usize,
    delta: f64,
}

impl Plan {
    fn new(analysis: &GAnalysis, cfg: &SimConfig) -> Self {
        let spec = &analysis.spec;
        let d = spec.dim();
        let delta = cfg.delta();
        let horizon = cfg.horizon_factor * analysis.t0 * cfg.u;
        let base: Vec<f64> = spec.mu().iter().map(|m| -m * delta).collect();
        let (theta, drift, half_quad) = match cfg.mode {
            SimMode::Crude => (vec![0.0; d], base, 0.0),
            SimMode::Tilted => {
                let shift: Vec<f64> = analysis.qp_at_t0.b_tilde.iter().map(|b| b / analysis.t0).collect();
                let theta = spec.sigma().solve(&shift);
                let on = base.iter().zip(&shift).map(|(o, s)| o + s * delta).collect();
                let half_quad = 0.5 * dot(&theta, &shift) * delta;
                (theta, on, half_quad)
            }
        };
        Self {
            d,
            sd: delta.sqrt(),
            drift,
            theta,
            half_quad,
            level: spec.alpha().iter().map(|a| a * cfg.u).collect(),
            total_steps: (horizon / delta).ceil() as usize,
            delta,
        }
    }
}

/// First hit per stride: `(step, ln dP/dQ at that step)`.
struct Outcome {
    hits: [Option<(usize, f64)>; 3],
    final_log_lr: f64,
}

fn run_path(plan: &Plan, analysis: &GAnalysis, seed: u64, path_id: usize, z: &mut [f64], inc: &mut [f64], y: &mut [f64]) -> Outcome {
    let sigma = analysis.spec.sigma();
    let mut rng = chunk_rng(seed, path_id as u64);
    y.iter_mut().for_each(|v| *v = 0.0);
    let mut log_lr = 0.0;
    let mut hits = [None; 3];
    let mut open = STRIDES.len();
    for k in 1..=plan.total_steps {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        sigma.chol_mul(z, inc);
        let mut noise_dot = 0.0;
        let mut above = true;
        for i in 0..plan.d {
            let w = plan.sd * inc[i];
            noise_dot += plan.theta[i] * w;
            y[i] += w + plan.drift[i];
            above &= y[i] > plan.level[i];
        }
        log_lr -= noise_dot + plan.half_quad;
        if above {
            for (l, &s) in STRIDES.iter().enumerate() {
                if hits[l].is_none() && k % s == 0 {
                    hits[l] = Some((k, log_lr));
                    open -= 1;
                }
            }
            if open == 0 {
                break;
            }
        }
    }
    Outcome { hits, final_log_lr: log_lr }
}

#[derive(Default)]
struct ChunkAcc {
    levels: [Welford; 3],
    hits: [usize; 3],
    samples: Vec<(f64, f64)>,
    rows: Vec<RawRow>,
}

/// Estimates `P(u)` for the spec behind `analysis`.
///
/// Weights are accumulated relative to `e^{−ĝu/2}` so that deep tails stay
/// representable; `log_p_hat` carries the scale.
pub fn simulate_p(analysis: &GAnalysis, cfg: &SimConfig) -> Result<SimEstimate> {
    cfg.validate()?;
    let plan = Plan::new(analysis, cfg);
    let shift = match cfg.mode {
        SimMode::Crude => 0.0,
        SimMode::Tilted => -0.5 * analysis.ghat * cfg.u,
    };
    let chunks = map_chunks(cfg.n_paths, cfg.workers.max(1), |_, range| {
        let mut acc = ChunkAcc::default();
        let (mut z, mut inc, mut y) = (vec![0.0; plan.d], vec![0.0; plan.d], vec![0.0; plan.d]);
        for p in range {
            let out = run_path(&plan, analysis, cfg.seed, p, &mut z, &mut inc, &mut y);
            for l in 0..STRIDES.len() {
                let w = match out.hits[l] {
                    Some((_, lr)) => {
                        acc.hits[l] += 1;
                        (lr - shift).exp()
                    }
                    None => 0.0,
                };
                acc.levels[l].push(w);
            }
            if let Some((k, lr)) = out.hits[0] {
                acc.samples.push((k as f64 * plan.delta, lr));
            }
            if cfg.keep_rows {
                acc.rows.push(RawRow {
                    path_id: p,
                    hit: out.hits[0].is_some(),
                    tau: out.hits[0].map(|(k, _)| k as f64 * plan.delta),
                    log_likelihood_ratio: out.hits[0].map_or(out.final_log_lr, |(_, lr)| lr),
                });
            }
        }
        acc
    });

    let mut levels = [Welford::default(); 3];
    let mut hits = [0usize; 3];
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for c in chunks {
        for l in 0..3 {
            levels[l].merge(&c.levels[l]);
            hits[l] += c.hits[l];
        }
        samples.extend(c.samples);
        rows.extend(c.rows);
    }
    let scale = shift.exp();
    let fine = levels[0];
    let n = fine.n as f64;
    let second = fine.variance() * (n - 1.0) / n + fine.mean * fine.mean;
    let ess = if second > 0.0 { n * fine.mean * fine.mean / second } else { 0.0 };
    if cfg.mode == SimMode::Tilted && ess < MIN_ESS {
        return Err(Error::EffectiveSampleTooSmall(ess));
    }
    let top = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(SimEstimate {
        u: cfg.u,
        mode: cfg.mode,
        p_hat: fine.mean * scale,
        stderr: fine.stderr() * scale,
        log_p_hat: fine.mean.ln() + shift,
        n_hits: hits[0],
        n_paths: cfg.n_paths,
        ess,
        horizon: plan.total_steps as f64 * plan.delta,
        delta: plan.delta,
        passage_weights: samples.iter().map(|s| (s.1 - top).exp()).collect(),
        passage_samples: samples.into_iter().map(|s| s.0).collect(),
        ks_vs_limit: None,
        refinement: (1..3)
            .map(|l| RefinementLevel {
                delta: plan.delta * STRIDES[l] as f64,
                p_hat: levels[l].mean * scale,
                stderr: levels[l].stderr() * scale,
                n_hits: hits[l],
            })
            .collect(),
        rows: cfg.keep_rows.then_some(rows),
    })
}

/// `sup_s |F_w(s) − F(s)|` for the weighted empirical CDF `F_w`.
pub fn weighted_ks(samples: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for &i in &idx {
        let f = cdf(samples[i]);
        d = d.max((f - acc / total).abs());
        acc += weights[i];
        d = d.max((acc / total - f).abs());
    }
    d
}

/// Kish effective size `(Σw)²/Σw²`.
pub fn kish(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 { s * s / s2 } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub u: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub log_p_hat: f64,
    /// `P̂(u)`; `None` without a Pickands constant.
    pub p_asymptotic: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
    pub ratio: Option<f64>,
    /// Delta-method standard error of `ratio` from both Monte Carlo sources.
    pub ratio_stderr: Option<f64>,
    /// `|ln ratio|` minus that of the previous row.
    pub trend: Option<f64>,
    pub sim: SimEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub rows: Vec<Theorem1Row>,
    /// `|ln ratio|` never grows by more than two combined standard errors.
    pub toward_one: bool,
    /// Every ratio lies in `[0.5, 2]` and `toward_one` holds.
    pub pass: bool,
}

impl Theorem1Report {
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        self.rows.iter().all(|r| r.ratio.is_some_and(|x| (lo..=hi).contains(&x)))
    }
}

/// Simulates along `us` with `base` and compares with the evaluator.
pub fn validate_theorem1(
    analysis: &GAnalysis,
    ar: &AsymptoticResult,
    us: &[f64],
    base: &SimConfig,
) -> Result<Theorem1Report> {
    let mut rows: Vec<Theorem1Row> = Vec::with_capacity(us.len());
    for &u in us {
        let sim = simulate_p(analysis, &SimConfig { u, ..base.clone() })?;
        let log_asym = ar.log_p_hat(u);
        let ratio = log_asym.map(|la| (sim.log_p_hat - la).exp());
        let ratio_stderr = ratio.map(|r| {
            let rel_sim = sim.stderr / sim.p_hat;
            let rel_h = ar.h.as_ref().map_or(0.0, |h| h.stderr / h.value);
            r * rel_sim.hypot(rel_h)
        });
        let trend = match (ratio, rows.last().and_then(|p| p.ratio)) {
            (Some(r), Some(prev)) => Some(r.ln().abs() - prev.ln().abs()),
            _ => None,
        };
        let band = ar.band(u);
        rows.push(Theorem1Row {
            u,
            p_hat: sim.p_hat,
            stderr: sim.stderr,
            log_p_hat: sim.log_p_hat,
            p_asymptotic: log_asym.map(f64::exp),
            band_lo: band.map(|b| b.0),
            band_hi: band.map(|b| b.1),
            ratio,
            ratio_stderr,
            trend,
            sim,
        });
    }
    let toward_one = rows.windows(2).all(|w| match (w[0].ratio, w[1].ratio, w[0].ratio_stderr, w[1].ratio_stderr) {
        (Some(a), Some(b), Some(sa), Some(sb)) => {
            b.ln().abs() - a.ln().abs() <= 2.0 * (sa / a).hypot(sb / b)
        }
        _ => false,
    });
    let mut report = Theorem1Report { rows, toward_one, pass: false };
    report.pass = toward_one && report.ratios_within(0.5, 2.0);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub u: f64,
    pub ks: f64,
    pub n_hits: usize,
    /// Kish size of the passage weights.
    pub n_effective: f64,
    /// Asymptotic 1% KS critical value `1.628/√n_effective`.
    pub critical_1pct: f64,
    pub sim: SimEstimate,
}

/// Standardized passage times of hitting paths, in sample order.
pub fn standardized_passage(sim: &SimEstimate, law: &PassageTimeLaw) -> Vec<f64> {
    sim.passage_samples.iter().map(|&t| law.standardize(t, sim.u)).collect()
}

/// Weighted KS distance between the simulated conditional passage times and `law`.
pub fn validate_theorem2(analysis: &GAnalysis, law: &PassageTimeLaw, cfg: &SimConfig) -> Result<Theorem2Report> {
    let mut sim = simulate_p(analysis, cfg)?;
    if sim.n_hits < MIN_HITS {
        return Err(Error::TooFewHits(sim.n_hits));
    }
    let s = standardized_passage(&sim, law);
    let ks = weighted_ks(&s, &sim.passage_weights, |x| law.cdf(x));
    sim.ks_vs_limit = Some(ks);
    let n_eff = kish(&sim.passage_weights);
    Ok(Theorem2Report { u: cfg.u, ks, n_hits: sim.n_hits, n_effective: n_eff, critical_1pct: 1.628 / n_eff.sqrt(), sim })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_ks_of_a_perfect_grid_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let w = vec![2.0; n];
        assert!((weighted_ks(&s, &w, |x| x.clamp(0.0, 1.0)) - 0.5 / n as f64).abs() < 1e-12);
        // doubling the weight of the upper half shifts the CDF
        let w2: Vec<f64> = s.iter().map(|&x| if x > 0.5 { 2.0 } else { 1.0 }).collect();
        assert!((weighted_ks(&s, &w2, |x| x.clamp(0.0, 1.0)) - (0.5 - 1.0 / 3.0)).abs() < 2e-3);
    }

    #[test]
    fn kish_size() {
        assert_eq!(kish(&[1.0; 10]), 10.0);
        assert!((kish(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SimConfig { u: 0.0, ..ok.clone() },
            SimConfig { horizon_factor: 1.5, ..ok.clone() },
            SimConfig { n_paths: 0, ..ok.clone() },
            SimConfig { u: f64::NAN, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
