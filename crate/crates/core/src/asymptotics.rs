//! Exact asymptotics `P(u) ∼ C_I·H_I·u^{(1−m)/2}·e^{−ĝu/2}`, the limiting law
//! of the standardized passage time, and closed-form special cases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::g_analysis::{Classification, GAnalysis, ProblemSpec};
use crate::linalg::dot;
use crate::mvn::{norm_cdf, norm_sf, Psi, PsiFunction, RqmcOptions};
use crate::pickands::PickandsEstimate;
use crate::quadrature::{integrate, panel};

/// Gaussian half-width, in standard deviations, of every ψ-weighted integral.
pub const HALF_WIDTH: f64 = 8.0;
/// ψ knots across `[−HALF_WIDTH, HALF_WIDTH]` in the standardized variable.
/// 128 intervals keep the quadrature panels aligned with the spline pieces.
pub const PSI_KNOTS: usize = 129;
const REL_TOL: f64 = 1e-8;
const ACCEPT_TOL: f64 = 1e-6;
const LAW_PANELS: usize = 256;

/// `ψ` tabulated over the support used by [`compute_ci`] and [`PassageTimeLaw`].
pub fn psi_function(analysis: &GAnalysis, opts: &RqmcOptions) -> Result<PsiFunction> {
    Ok(tabulate_psi(analysis, Psi::new(analysis, opts)?))
}

/// Tabulates an already constructed `ψ` on the same support as [`psi_function`].
pub fn tabulate_psi(analysis: &GAnalysis, psi: Psi) -> PsiFunction {
    let l = HALF_WIDTH * (2.0 / analysis.gtilde).sqrt();
    psi.cached(-l, l, PSI_KNOTS)
}

/// `2^{1−m/2}π^{(1−m)/2}/√(t₀^m·g̃·|Σ_II|)`, the value of `C_I` when `ψ ≡ 1`.
pub fn closed_form_ci(analysis: &GAnalysis) -> f64 {
    let m = analysis.m() as f64;
    let det = analysis.sigma_ii().det();
    2f64.powf(1.0 - m / 2.0) * PI.powf((1.0 - m) / 2.0)
        / (analysis.t0.powf(m) * analysis.gtilde * det).sqrt()
}

/// `C_I = (2πt₀)^{−m/2}|Σ_II|^{−1/2} ∫ e^{−g̃x²/4} ψ(x) dx`.
pub fn compute_ci(analysis: &GAnalysis, psi: &PsiFunction) -> Result<f64> {
    let m = analysis.m() as i32;
    let g = analysis.gtilde;
    let l = HALF_WIDTH * (2.0 / g).sqrt();
    let integral = integrate(|x| (-g * x * x / 4.0).exp() * psi.eval(x), -l, l, REL_TOL, ACCEPT_TOL)?;
    let norm = ((2.0 * PI * analysis.t0).powi(m) * analysis.sigma_ii().det()).sqrt();
    Ok(integral.value / norm)
}

/// Conditional law of `(τ_u − t₀u)/√(2u/g̃)` given `τ_u < ∞`, as `u → ∞`.
#[derive(Debug, Clone)]
pub struct PassageTimeLaw {
    pub t0: f64,
    pub gtilde: f64,
    /// `∫ e^{−x²/2} ψ(√(2/g̃)x) dx`; `√(2π)` when `K = ∅`.
    pub normalizer: f64,
    table: Option<LawTable>,
}

#[derive(Debug, Clone)]
struct LawTable {
    psi: PsiFunction,
    scale: f64,
    /// Unnormalized cumulative integral at the panel edges.
    edges: Vec<f64>,
    cum: Vec<f64>,
}

impl LawTable {
    fn density(&self, y: f64) -> f64 {
        (-y * y / 2.0).exp() * self.psi.eval(self.scale * y)
    }
}

impl PassageTimeLaw {
    pub fn new(analysis: &GAnalysis, psi: PsiFunction) -> Result<Self> {
        let (t0, gtilde) = (analysis.t0, analysis.gtilde);
        if psi.is_unit() {
            return Ok(Self { t0, gtilde, normalizer: (2.0 * PI).sqrt(), table: None });
        }
        let mut table = LawTable { psi, scale: (2.0 / gtilde).sqrt(), edges: Vec::new(), cum: Vec::new() };
        let h = 2.0 * HALF_WIDTH / LAW_PANELS as f64;
        table.edges = (0..=LAW_PANELS).map(|i| -HALF_WIDTH + h * i as f64).collect();
        let mut acc = 0.0;
        table.cum.push(0.0);
        for w in table.edges.windows(2) {
            acc += panel(w[0], w[1], |y| table.density(y));
            table.cum.push(acc);
        }
        let check = integrate(|y| table.density(y), -HALF_WIDTH, HALF_WIDTH, REL_TOL, ACCEPT_TOL)?;
        if (check.value - acc).abs() > ACCEPT_TOL * acc {
            return Err(Error::QuadratureNotConverged(format!(
                "passage-time normalizer {acc:.10} disagrees with refined value {:.10}",
                check.value
            )));
        }
        Ok(Self { t0, gtilde, normalizer: acc, table: Some(table) })
    }

    /// Builds the law with its own ψ table.
    pub fn from_analysis(analysis: &GAnalysis, opts: &RqmcOptions) -> Result<Self> {
        Self::new(analysis, psi_function(analysis, opts)?)
    }

    pub fn is_standard_normal(&self) -> bool {
        self.table.is_none()
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let Some(t) = &self.table else {
            return norm_cdf(s);
        };
        if s <= -HALF_WIDTH {
            return 0.0;
        }
        if s >= HALF_WIDTH {
            return 1.0;
        }
        let j = t.edges.partition_point(|&e| e <= s) - 1;
        let part = panel(t.edges[j], s, |y| t.density(y));
        ((t.cum[j] + part) / self.normalizer).clamp(0.0, 1.0)
    }

    /// `(τ − t₀u)/√(2u/g̃)`.
    pub fn standardize(&self, tau: f64, u: f64) -> f64 {
        (tau - self.t0 * u) / (2.0 * u / self.gtilde).sqrt()
    }

    /// Solves `F(s) = p` by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (-HALF_WIDTH, HALF_WIDTH);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Which route produced an [`AsymptoticResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    Pipeline,
    Oracle2d,
    OracleIndependent,
    OracleNegAssoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HSource {
    /// `m = 1`: `H_I = μ_I`.
    Exact,
    MonteCarlo,
}

/// The Pickands constant entering the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HValue {
    pub value: f64,
    pub stderr: f64,
    pub source: HSource,
    /// The Monte Carlo run behind `value`, or run as a diagnostic when exact.
    pub estimate: Option<PickandsEstimate>,
}

impl HValue {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, source: HSource::Exact, estimate: None }
    }

    pub fn from_estimate(est: PickandsEstimate) -> Self {
        Self { value: est.h, stderr: est.h_stderr, source: HSource::MonteCarlo, estimate: Some(est) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticResult {
    pub derivation: Derivation,
    pub m: usize,
    pub essential: Vec<usize>,
    pub weakly_essential: Vec<usize>,
    pub unessential: Vec<usize>,
    pub classification: Classification,
    pub t0: f64,
    pub ghat: f64,
    pub gtilde: f64,
    pub c_i: f64,
    /// `None` until a Pickands constant is known (`m ≥ 2` without an estimate).
    pub h: Option<HValue>,
}

impl AsymptoticResult {
    /// `ln(C_I·u^{(1−m)/2}·e^{−ĝu/2})`, the evaluator without `H_I`.
    pub fn log_envelope(&self, u: f64) -> f64 {
        self.c_i.ln() + 0.5 * (1.0 - self.m as f64) * u.ln() - 0.5 * self.ghat * u
    }

    pub fn log_p_hat(&self, u: f64) -> Option<f64> {
        self.h.as_ref().map(|h| h.value.ln() + self.log_envelope(u))
    }

    /// `P̂(u) = C_I·H_I·u^{(1−m)/2}·e^{−ĝu/2}`.
    pub fn p_hat(&self, u: f64) -> Option<f64> {
        self.log_p_hat(u).map(f64::exp)
    }

    /// `P̂(u)` with `H_I ± 2·stderr`; the lower end is clamped at zero.
    pub fn band(&self, u: f64) -> Option<(f64, f64)> {
        let h = self.h.as_ref()?;
        let env = self.log_envelope(u).exp();
        Some(((h.value - 2.0 * h.stderr).max(0.0) * env, (h.value + 2.0 * h.stderr) * env))
    }

    pub fn with_h(mut self, h: HValue) -> Self {
        self.h = Some(h);
        self
    }
}

fn from_analysis(analysis: &GAnalysis, c_i: f64, derivation: Derivation) -> AsymptoticResult {
    AsymptoticResult {
        derivation,
        m: analysis.m(),
        essential: analysis.essential().to_vec(),
        weakly_essential: analysis.weakly_essential().to_vec(),
        unessential: analysis.unessential().to_vec(),
        classification: analysis.classification(),
        t0: analysis.t0,
        ghat: analysis.ghat,
        gtilde: analysis.gtilde,
        c_i,
        h: None,
    }
}

/// General pipeline result. `H_I` is exact for `m = 1`; otherwise it comes
/// from `pk`, and is absent without one.
pub fn assemble(
    analysis: &GAnalysis,
    pk: Option<&PickandsEstimate>,
    psi: &PsiFunction,
) -> Result<AsymptoticResult> {
    let c_i = compute_ci(analysis, psi)?;
    let mut res = from_analysis(analysis, c_i, Derivation::Pipeline);
    res.h = if analysis.m() == 1 {
        Some(HValue { estimate: pk.cloned(), ..HValue::exact(analysis.mu_i()[0]) })
    } else {
        pk.cloned().map(HValue::from_estimate)
    };
    Ok(res)
}

/// Closed forms for `d = 2`, unit variances, `μ = (1, 1)`, `α₁ > α₂ > 0`.
///
/// Regimes split at `ρ* = (α₁+α₂)/(2α₁)`; `|ρ − ρ*| ≤ 1e-9(1+ρ*)` counts as
/// the boundary.
pub fn oracle_2d(spec: &ProblemSpec) -> Result<AsymptoticResult> {
    let out = |msg: &str| Error::OutOfScope2D(msg.into());
    if spec.dim() != 2 {
        return Err(out("dimension must be 2"));
    }
    let s = spec.sigma();
    if (s.get(0, 0) - 1.0).abs() > 1e-12 || (s.get(1, 1) - 1.0).abs() > 1e-12 {
        return Err(out("Σ must be a correlation matrix"));
    }
    if spec.mu() != [1.0, 1.0] {
        return Err(out("μ must be (1, 1)"));
    }
    let (a1, a2) = (spec.alpha()[0], spec.alpha()[1]);
    if !(a1 > a2 && a2 > 0.0) {
        return Err(out("requires α₁ > α₂ > 0"));
    }
    let rho = s.get(0, 1);
    let rho_star = (a1 + a2) / (2.0 * a1);
    let boundary = (rho - rho_star).abs() <= 1e-9 * (1.0 + rho_star);
    let res = if rho < rho_star && !boundary {
        let q = a1 * a1 + a2 * a2 - 2.0 * a1 * a2 * rho;
        let t0 = (q / (2.0 * (1.0 - rho))).sqrt();
        let gtilde = 2.0 * q / (t0.powi(3) * (1.0 - rho * rho));
        AsymptoticResult {
            derivation: Derivation::Oracle2d,
            m: 2,
            essential: vec![0, 1],
            weakly_essential: vec![],
            unessential: vec![],
            classification: Classification::Full,
            t0,
            ghat: 2.0 * (a1 + a2 + 2.0 * t0) / (1.0 + rho),
            gtilde,
            c_i: 1.0 / (t0 * t0 * PI * (1.0 - rho * rho) * gtilde).sqrt(),
            h: None,
        }
    } else {
        let (weak, unes, class, c_i) = if boundary {
            // (1/√(2πα₁))∫e^{−x²/(2α₁)}Ψ(cx)dx = 1/2 for any slope c
            (vec![1], vec![], Classification::Breakpoint, 0.5)
        } else {
            (vec![], vec![1], Classification::Reduced, 1.0)
        };
        AsymptoticResult {
            derivation: Derivation::Oracle2d,
            m: 1,
            essential: vec![0],
            weakly_essential: weak,
            unessential: unes,
            classification: class,
            t0: a1,
            ghat: 4.0 * a1,
            gtilde: 2.0 / a1,
            c_i,
            h: Some(HValue::exact(1.0)),
        }
    };
    Ok(res)
}

/// Independent components: `Σ = I`, `α > 0`.
///
/// Coordinates with `μ_j < 0` leave the essential set at `t'_j = α_j/|μ_j|`;
/// the minimizer lies on the first segment whose own optimum `t₀(i)` falls
/// inside it. Landing on `t'_{p−1}` (within `1e-7(1+t')`) puts the group
/// leaving there into `K`.
pub fn oracle_independent(spec: &ProblemSpec) -> Result<AsymptoticResult> {
    let out = |msg: String| Error::OutOfScopeIndependent(msg);
    let d = spec.dim();
    let s = spec.sigma();
    for i in 0..d {
        for j in 0..d {
            if s.get(i, j) != if i == j { 1.0 } else { 0.0 } {
                return Err(out("Σ must be the identity".into()));
            }
        }
    }
    let (alpha, mu) = (spec.alpha(), spec.mu());
    if alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(out("requires α > 0".into()));
    }
    let exit = |j: usize| if mu[j] < 0.0 { alpha[j] / -mu[j] } else { f64::INFINITY };
    let mut instants: Vec<f64> = (0..d).map(exit).filter(|t| t.is_finite()).collect();
    instants.sort_by(f64::total_cmp);
    instants.dedup();
    // t'_0 = 0 < t'_1 < … < t'_l < t'_{l+1} = ∞
    let mut bounds = vec![0.0];
    bounds.extend(&instants);
    bounds.push(f64::INFINITY);
    let near = |a: f64, b: f64| b.is_finite() && (a - b).abs() <= 1e-7 * (1.0 + b);

    for i in 1..bounds.len() {
        let (lo, hi) = (bounds[i - 1], bounds[i]);
        let set: Vec<usize> = (0..d).filter(|&j| exit(j) > lo).collect();
        let (aa, mm) = (sq_norm(alpha, &set), sq_norm(mu, &set));
        if !(mm > 0.0) {
            continue;
        }
        let t_i = (aa / mm).sqrt();
        if near(t_i, hi) || t_i >= hi || (t_i < lo && !near(t_i, lo)) {
            continue;
        }
        let at_junction = i > 1 && near(t_i, lo);
        let t0 = if at_junction { lo } else { t_i };
        let weak: Vec<usize> = if at_junction { (0..d).filter(|&j| exit(j) == lo).collect() } else { vec![] };
        let unes: Vec<usize> = (0..d).filter(|&j| !set.contains(&j) && !weak.contains(&j)).collect();
        let ghat = set.iter().map(|&j| (alpha[j] + mu[j] * t0).powi(2)).sum::<f64>() / t0;
        let gtilde = 2.0 * aa / t0.powi(3);
        let slopes: Vec<f64> = weak.iter().map(|&j| mu[j] / t0.sqrt()).collect();
        let scale = (2.0 * t0.powi(3) / aa).sqrt();
        let integral = integrate(
            |x| (-aa * x * x / (2.0 * t0.powi(3))).exp() * slopes.iter().map(|c| norm_sf(c * x)).product::<f64>(),
            -HALF_WIDTH * scale,
            HALF_WIDTH * scale,
            REL_TOL,
            ACCEPT_TOL,
        )?;
        let m = set.len();
        let h = (m == 1).then(|| HValue::exact(mu[set[0]]));
        let classification = if !weak.is_empty() {
            Classification::Breakpoint
        } else if !unes.is_empty() {
            Classification::Reduced
        } else {
            Classification::Full
        };
        return Ok(AsymptoticResult {
            derivation: Derivation::OracleIndependent,
            m,
            essential: set,
            weakly_essential: weak,
            unessential: unes,
            classification,
            t0,
            ghat,
            gtilde,
            c_i: integral.value / (2.0 * PI * t0).powi(m as i32).sqrt(),
            h,
        });
    }
    Err(out("no segment contains its own minimizer".into()))
}

fn sq_norm(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| v[j] * v[j]).sum()
}

/// Negatively associated components: `Σ⁻¹α > 0` and `Σ⁻¹μ > 0`, so
/// `I = {1,…,d}` and `K = J = ∅`.
pub fn oracle_negassoc(spec: &ProblemSpec) -> Result<AsymptoticResult> {
    let s = spec.sigma();
    let (alpha, mu) = (spec.alpha(), spec.mu());
    let (pa, pm) = (s.solve(alpha), s.solve(mu));
    if pa.iter().chain(&pm).any(|&v| !(v > 0.0)) {
        return Err(Error::OutOfScopeNegAssoc("requires Σ⁻¹α > 0 and Σ⁻¹μ > 0".into()));
    }
    let d = spec.dim();
    let aa = dot(alpha, &pa);
    let t0 = (aa / dot(mu, &pm)).sqrt();
    let b = spec.target(t0);
    let ghat = s.inv_quad(&b, &b) / t0;
    let c_i = (2.0 * PI).powf((1.0 - d as f64) / 2.0) / (t0.powi(d as i32 - 3) * aa * s.det()).sqrt();
    Ok(AsymptoticResult {
        derivation: Derivation::OracleNegAssoc,
        m: d,
        essential: (0..d).collect(),
        weakly_essential: vec![],
        unessential: vec![],
        classification: Classification::Full,
        t0,
        ghat,
        gtilde: 2.0 * aa / t0.powi(3),
        c_i,
        h: (d == 1).then(|| HValue::exact(mu[0])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g_analysis::minimize_g;
    use crate::linalg::PdMatrix;

    fn spec2(rho: f64, a: [f64; 2], m: [f64; 2]) -> ProblemSpec {
        let s = PdMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
        ProblemSpec::new(s, a.to_vec(), m.to_vec()).unwrap()
    }

    #[test]
    fn unit_ci_in_one_dimension() {
        // t₀ = 1, g̃ = 2, Σ_II = 1
        let g = minimize_g(&spec2(0.9, [1.0, 0.5], [1.0, 1.0])).unwrap();
        assert!((g.t0 - 1.0).abs() < 1e-12 && (g.gtilde - 2.0).abs() < 1e-12);
        assert!((closed_form_ci(&g) - 1.0).abs() < 1e-12);
        let psi = psi_function(&g, &RqmcOptions::default()).unwrap();
        assert!((compute_ci(&g, &psi).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_case_halves_the_prefactor() {
        let g = minimize_g(&spec2(0.75, [1.0, 0.5], [1.0, 1.0])).unwrap();
        let psi = psi_function(&g, &RqmcOptions::default()).unwrap();
        assert!((compute_ci(&g, &psi).unwrap() - 0.5).abs() < 1e-9);
        let law = PassageTimeLaw::new(&g, psi).unwrap();
        assert!(!law.is_standard_normal());
        assert!((law.cdf(0.0) - 0.5).abs() > 1e-3);
        let med = law.median();
        assert!((law.cdf(med) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn band_brackets_the_point_evaluator() {
        let g = minimize_g(&spec2(0.0, [1.0, 1.0], [1.0, 1.0])).unwrap();
        let psi = psi_function(&g, &RqmcOptions::default()).unwrap();
        let r = assemble(&g, None, &psi).unwrap();
        assert!(r.p_hat(3.0).is_none() && r.band(3.0).is_none());
        let r = r.with_h(HValue { value: 0.4, stderr: 0.01, source: HSource::MonteCarlo, estimate: None });
        let (lo, hi) = r.band(3.0).unwrap();
        let p = r.p_hat(3.0).unwrap();
        assert!(lo < p && p < hi);
        assert!(((hi - lo) / p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn oracle_preconditions() {
        let s3 = ProblemSpec::new(PdMatrix::identity(3), vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(oracle_2d(&s3), Err(Error::OutOfScope2D(_))));
        assert!(matches!(oracle_2d(&spec2(0.2, [0.5, 1.0], [1.0, 1.0])), Err(Error::OutOfScope2D(_))));
        assert!(matches!(oracle_independent(&spec2(0.2, [1.0, 1.0], [1.0, 1.0])), Err(Error::OutOfScopeIndependent(_))));
        assert!(matches!(oracle_negassoc(&spec2(0.9, [1.0, 0.5], [1.0, 1.0])), Err(Error::OutOfScopeNegAssoc(_))));
    }
}
