//! Gaussian orthant probabilities and the correction factor `ψ`.
//!
//! `P(Y > l)` for `Y ~ N(m, C)` is computed by separation of variables on the
//! Cholesky factor of `C`. The `k − 1` remaining uniforms are integrated with a
//! randomly shifted Richtmyer lattice under the baker's transform; the spread of
//! the per-shift means gives the standard error.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::g_analysis::GAnalysis;
use crate::linalg::{gather, PdMatrix};
use crate::quadrature::MonotoneCubic;

const PRIMES: [u32; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
pub const MAX_ORTHANT_DIM: usize = PRIMES.len() + 1;
const RIDGE: f64 = 1e-12;

/// `Φ(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `Ψ(x) = 1 − Φ(x)`, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `Φ⁻¹(p)`.
pub fn norm_ppf(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RqmcOptions {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for RqmcOptions {
    fn default() -> Self {
        Self { points: 1 << 13, shifts: 16, seed: 0x5eed_0f_0a7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVec {
    pub mean: Vec<f64>,
    pub cov: PdMatrix,
    /// Set when a ridge of `1e-12·trace/k` was needed for a Cholesky factor.
    pub regularized: bool,
}

impl GaussianVec {
    pub fn new(mean: Vec<f64>, cov: PdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch("mean and covariance disagree".into()));
        }
        Ok(Self { mean, cov, regularized: false })
    }

    /// Accepts a possibly singular covariance; with `regularize` a ridge is
    /// added instead of failing.
    pub fn from_cov(mean: Vec<f64>, cov: DMatrix<f64>, regularize: bool) -> Result<Self> {
        let k = cov.nrows();
        if mean.len() != k {
            return Err(Error::DimensionMismatch("mean and covariance disagree".into()));
        }
        match PdMatrix::new(cov.clone()) {
            Ok(c) => Ok(Self { mean, cov: c, regularized: false }),
            Err(_) if regularize => {
                let ridge = RIDGE * cov.trace().abs().max(f64::MIN_POSITIVE) / k as f64;
                let c = PdMatrix::new(cov + DMatrix::identity(k, k) * ridge).map_err(|_| Error::CovNotPd)?;
                Ok(Self { mean, cov: c, regularized: true })
            }
            Err(_) => Err(Error::CovNotPd),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProb {
    pub p: f64,
    pub err: f64,
}

/// Lattice and shifts bound to one covariance, reusable across thresholds so
/// that nearby thresholds see the same point set.
#[derive(Debug, Clone)]
pub struct OrthantIntegrator {
    chol: DMatrix<f64>,
    generators: Vec<f64>,
    shifts: Vec<Vec<f64>>,
    points: usize,
}

impl OrthantIntegrator {
    pub fn new(cov: &PdMatrix, opts: &RqmcOptions) -> Result<Self> {
        let k = cov.dim();
        if k > MAX_ORTHANT_DIM {
            return Err(Error::DimensionMismatch(format!("orthant dimension {k} exceeds {MAX_ORTHANT_DIM}")));
        }
        if opts.points == 0 || opts.shifts < 2 {
            return Err(Error::DimensionMismatch("need points ≥ 1 and shifts ≥ 2".into()));
        }
        let generators = PRIMES[..k - 1].iter().map(|&p| (p as f64).sqrt().fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let shifts = (0..opts.shifts)
            .map(|_| (0..k - 1).map(|_| rng.random::<f64>()).collect())
            .collect();
        Ok(Self { chol: cov.chol().clone(), generators, shifts, points: opts.points })
    }

    /// `P(Y > lower)` for `Y ~ N(0, C)`.
    pub fn upper_orthant(&self, lower: &[f64]) -> TailProb {
        let k = self.chol.nrows();
        let mut y = vec![0.0; k];
        let mut w = vec![0.0; k.saturating_sub(1)];
        let means: Vec<f64> = self
            .shifts
            .iter()
            .map(|shift| {
                let mut acc = 0.0;
                for n in 0..self.points {
                    for (j, wj) in w.iter_mut().enumerate() {
                        let x = (n as f64 * self.generators[j] + shift[j]).fract();
                        *wj = 1.0 - (2.0 * x - 1.0).abs();
                    }
                    acc += self.sov(lower, &w, &mut y);
                }
                acc / self.points as f64
            })
            .collect();
        let s = means.len() as f64;
        let p = means.iter().sum::<f64>() / s;
        let var = means.iter().map(|m| (m - p) * (m - p)).sum::<f64>() / (s - 1.0);
        TailProb { p, err: (var / s).sqrt() }
    }

    fn sov(&self, lower: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
        let k = self.chol.nrows();
        let mut prod = 1.0;
        for i in 0..k {
            let shift: f64 = (0..i).map(|j| self.chol[(i, j)] * y[j]).sum();
            let tail = norm_sf((lower[i] - shift) / self.chol[(i, i)]);
            prod *= tail;
            if prod <= 0.0 {
                return 0.0;
            }
            if i + 1 < k {
                // Φ⁻¹(d + w(1 − d)) with 1 − d = tail, written through the upper tail
                let q = ((1.0 - w[i]) * tail).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
                y[i] = -norm_ppf(q);
            }
        }
        prod
    }
}

/// `P(gv > lower)` componentwise.
pub fn tail_prob(gv: &GaussianVec, lower: &[f64], opts: &RqmcOptions) -> Result<TailProb> {
    if lower.len() != gv.dim() {
        return Err(Error::DimensionMismatch("threshold and vector disagree".into()));
    }
    let centred: Vec<f64> = lower.iter().zip(&gv.mean).map(|(l, m)| l - m).collect();
    Ok(OrthantIntegrator::new(&gv.cov, opts)?.upper_orthant(&centred))
}

/// `ψ(x) = P(Y_K > c_K·x)` with `Y_K ~ N(0, D_KK)` and
/// `c_K = (μ_K − Σ_KIΣ_II⁻¹μ_I)/√t₀`.
#[derive(Debug, Clone)]
pub enum Psi {
    /// `K = ∅`.
    Unit,
    /// `|K| = 1`: `ψ(x) = Ψ(slope·x)`.
    Scalar { slope: f64 },
    Orthant { threshold: Vec<f64>, integrator: Box<OrthantIntegrator>, regularized: bool },
}

impl Psi {
    pub fn new(analysis: &GAnalysis, opts: &RqmcOptions) -> Result<Self> {
        let k_set = analysis.weakly_essential();
        if k_set.is_empty() {
            return Ok(Psi::Unit);
        }
        let i_set = analysis.essential();
        let sigma = analysis.spec.sigma();
        let sii = analysis.sigma_ii();
        let s_ik = sigma.block(i_set, k_set);
        let x = sii.solve_matrix(&s_ik);
        let d_kk = sigma.block(k_set, k_set) - s_ik.transpose() * &x;
        let d_kk = (&d_kk + d_kk.transpose()) * 0.5;
        let reg = sii.solve(&analysis.mu_i());
        let mu_k = gather(analysis.spec.mu(), k_set);
        let threshold: Vec<f64> = (0..k_set.len())
            .map(|r| {
                let proj: f64 = (0..i_set.len()).map(|c| s_ik[(c, r)] * reg[c]).sum();
                (mu_k[r] - proj) / analysis.t0.sqrt()
            })
            .collect();
        let gv = GaussianVec::from_cov(vec![0.0; k_set.len()], d_kk, true)?;
        if k_set.len() == 1 {
            return Ok(Psi::Scalar { slope: threshold[0] / gv.cov.get(0, 0).sqrt() });
        }
        Ok(Psi::Orthant {
            threshold,
            integrator: Box::new(OrthantIntegrator::new(&gv.cov, opts)?),
            regularized: gv.regularized,
        })
    }

    pub fn eval(&self, x: f64) -> TailProb {
        match self {
            Psi::Unit => TailProb { p: 1.0, err: 0.0 },
            Psi::Scalar { slope } => TailProb { p: norm_sf(slope * x), err: 0.0 },
            Psi::Orthant { threshold, integrator, .. } => {
                let lower: Vec<f64> = threshold.iter().map(|c| c * x).collect();
                integrator.upper_orthant(&lower)
            }
        }
    }

    pub fn regularized(&self) -> bool {
        matches!(self, Psi::Orthant { regularized: true, .. })
    }

    /// Tabulates `ψ` on `knots` equispaced points of `[lo, hi]` when it has no
    /// closed form.
    pub fn cached(self, lo: f64, hi: f64, knots: usize) -> PsiFunction {
        match self {
            Psi::Orthant { .. } => {
                let x: Vec<f64> =
                    (0..knots).map(|i| lo + (hi - lo) * i as f64 / (knots - 1) as f64).collect();
                let y = x.iter().map(|&v| self.eval(v).p).collect();
                PsiFunction::Table(MonotoneCubic::new(x, y))
            }
            exact => PsiFunction::Exact(exact),
        }
    }
}

/// `ψ` ready for repeated evaluation.
#[derive(Debug, Clone)]
pub enum PsiFunction {
    Exact(Psi),
    Table(MonotoneCubic),
}

impl PsiFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PsiFunction::Exact(p) => p.eval(x).p,
            PsiFunction::Table(s) => s.eval(x),
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, PsiFunction::Exact(Psi::Unit))
    }
}

/// `ψ(x)` for one point.
pub fn psi(analysis: &GAnalysis, x: f64) -> Result<f64> {
    Ok(Psi::new(analysis, &RqmcOptions::default())?.eval(x).p)
}
