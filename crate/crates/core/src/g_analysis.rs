//! Piecewise structure and minimisation of
//! `g(t) = (1/t)·inf_{v ≥ α+μt} vᵀΣ⁻¹v`.
//!
//! On every interval where the essential set of `P_Σ(α+μt)` is a fixed `V`,
//! `g(t) = a/t + c₂ + c·t` with `a = α_VᵀΣ_VV⁻¹α_V`, `c₂ = 2α_VᵀΣ_VV⁻¹μ_V` and
//! `c = μ_VᵀΣ_VV⁻¹μ_V`. The intervals come from linear-in-`t` inequalities, so
//! they are found exactly rather than by scanning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complement, dot, gather, mask_to_indices, PdMatrix};
use crate::qp::{solve_qp, QpSolution, MAX_DIM};

const BREAKPOINT_TOL: f64 = 1e-7;
const COVERAGE_TOL: f64 = 1e-9;

/// Drifted Brownian motion `X(t) − μt` with `Cov X(1) = Σ`, started at `−αu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct ProblemSpec {
    sigma: PdMatrix,
    alpha: Vec<f64>,
    mu: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    sigma: PdMatrix,
    alpha: Vec<f64>,
    mu: Vec<f64>,
}

impl TryFrom<SpecRepr> for ProblemSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        ProblemSpec::new(r.sigma, r.alpha, r.mu)
    }
}

impl From<ProblemSpec> for SpecRepr {
    fn from(s: ProblemSpec) -> Self {
        SpecRepr { sigma: s.sigma, alpha: s.alpha, mu: s.mu }
    }
}

impl ProblemSpec {
    pub fn new(sigma: PdMatrix, alpha: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let d = sigma.dim();
        if alpha.len() != d || mu.len() != d {
            return Err(Error::InvalidProblem(format!(
                "alpha and mu must have length {d}, got {} and {}",
                alpha.len(),
                mu.len()
            )));
        }
        if d > MAX_DIM {
            return Err(Error::InvalidProblem(format!("dimension {d} exceeds {MAX_DIM}")));
        }
        if alpha.iter().chain(&mu).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("alpha and mu must be finite".into()));
        }
        if !alpha.iter().zip(&mu).any(|(&a, &m)| a > 0.0 && m > 0.0) {
            return Err(Error::InvalidProblem(
                "no coordinate has both alpha_i > 0 and mu_i > 0".into(),
            ));
        }
        Ok(Self { sigma, alpha, mu })
    }

    /// `Σ = AAᵀ` for a nonsingular factor `A`.
    pub fn from_factor(factor: &DMatrix<f64>, alpha: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        Self::new(PdMatrix::from_factor(factor)?, alpha, mu)
    }

    /// Hitting the cone `{x : Mx ≥ 0}` is hitting the orthant by `MX(t) − Mμt`
    /// from `−Mαu`.
    pub fn with_cone(
        sigma: PdMatrix,
        alpha: Vec<f64>,
        mu: Vec<f64>,
        cone: &DMatrix<f64>,
    ) -> Result<Self> {
        let d = sigma.dim();
        if cone.nrows() != d || cone.ncols() != d {
            return Err(Error::InvalidProblem(format!("cone matrix must be {d}x{d}")));
        }
        if alpha.len() != d || mu.len() != d {
            return Err(Error::InvalidProblem("alpha and mu must match the cone".into()));
        }
        if cone.clone().lu().determinant().abs() <= f64::EPSILON * cone.amax().powi(d as i32) {
            return Err(Error::InvalidProblem("cone matrix is singular".into()));
        }
        let map = |v: &[f64]| (cone * DVector::from_column_slice(v)).iter().copied().collect();
        Self::new(sigma.congruence(cone)?, map(&alpha), map(&mu))
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn sigma(&self) -> &PdMatrix {
        &self.sigma
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `α + μt`.
    pub fn target(&self, t: f64) -> Vec<f64> {
        self.alpha.iter().zip(&self.mu).map(|(a, m)| a + m * t).collect()
    }
}

/// `g(t) = a/t + c₂ + c·t` on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    #[serde(with = "infinite_as_null")]
    pub hi: f64,
    pub index_set: Vec<usize>,
    pub coeffs: (f64, f64, f64),
}

impl Segment {
    pub fn eval(&self, t: f64) -> f64 {
        let (a, c2, c) = self.coeffs;
        a / t + c2 + c * t
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (a, _, c) = self.coeffs;
        c - a / (t * t)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t < self.hi
    }

    /// Minimiser of the segment polynomial restricted to `[lo, hi]`.
    fn argmin(&self) -> f64 {
        let (a, _, c) = self.coeffs;
        let free = if a <= 0.0 {
            self.lo
        } else if c <= 0.0 {
            self.hi
        } else {
            (a / c).sqrt()
        };
        free.clamp(self.lo, self.hi)
    }
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Where `I` sits relative to the full index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `K = J = ∅`.
    Full,
    /// `J ≠ ∅`, `K = ∅`.
    Reduced,
    /// `K ≠ ∅`.
    Breakpoint,
}

impl Classification {
    pub fn of(sol: &QpSolution) -> Self {
        if !sol.weakly_essential.is_empty() {
            Classification::Breakpoint
        } else if !sol.unessential.is_empty() {
            Classification::Reduced
        } else {
            Classification::Full
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GAnalysis {
    pub spec: ProblemSpec,
    pub segments: Vec<Segment>,
    pub t0: f64,
    pub ghat: f64,
    /// `g_I''(t₀) = 2t₀⁻³·α_IᵀΣ_II⁻¹α_I` on the essential set at `t₀`.
    pub gtilde: f64,
    /// `α + μt₀`.
    pub b: Vec<f64>,
    pub qp_at_t0: QpSolution,
    pub at_breakpoint: bool,
    /// Distance from `t₀` to the nearest junction; `None` with a single segment.
    pub breakpoint_margin: Option<f64>,
    /// `g''(t₀−)` and `g''(t₀+)` from the adjacent segment polynomials.
    pub one_sided_curvature: (f64, f64),
}

impl GAnalysis {
    pub fn essential(&self) -> &[usize] {
        &self.qp_at_t0.essential
    }

    pub fn weakly_essential(&self) -> &[usize] {
        &self.qp_at_t0.weakly_essential
    }

    pub fn unessential(&self) -> &[usize] {
        &self.qp_at_t0.unessential
    }

    pub fn m(&self) -> usize {
        self.essential().len()
    }

    pub fn classification(&self) -> Classification {
        Classification::of(&self.qp_at_t0)
    }

    pub fn sigma_ii(&self) -> PdMatrix {
        self.spec.sigma().sub(self.essential()).expect("principal block of a PD matrix")
    }

    pub fn mu_i(&self) -> Vec<f64> {
        gather(self.spec.mu(), self.essential())
    }

    pub fn b_i(&self) -> Vec<f64> {
        gather(&self.b, self.essential())
    }

    /// `Σ_II⁻¹ b_I`, strictly positive.
    pub fn lambda(&self) -> &[f64] {
        &self.qp_at_t0.lambda
    }

    /// Exponential weight `a = Σ_II⁻¹ b_I / t₀` of the Pickands integrand.
    pub fn pickands_weight(&self) -> Vec<f64> {
        self.lambda().iter().map(|l| l / self.t0).collect()
    }

    /// `(1/t)·P_Σ(α+μt)` through the segment table.
    pub fn eval(&self, t: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .find(|s| s.contains(t))
            .unwrap_or_else(|| self.segments.last().expect("at least one segment"));
        seg.eval(t)
    }
}

/// One linear constraint `p + q·t (> or ≥) 0` restricted to `t > 0`.
fn restrict(lo: &mut f64, hi: &mut f64, p: f64, q: f64, slack: f64) {
    if q > 0.0 {
        *lo = lo.max(-p / q);
    } else if q < 0.0 {
        *hi = hi.min(-p / q);
    } else if p < -slack {
        *hi = f64::NEG_INFINITY;
    }
}

fn subset_interval(spec: &ProblemSpec, set: &[usize]) -> Result<Option<Segment>> {
    let sigma = spec.sigma();
    let sub = sigma.sub(set)?;
    let alpha_v = gather(spec.alpha(), set);
    let mu_v = gather(spec.mu(), set);
    let pa = sub.solve(&alpha_v);
    let pm = sub.solve(&mu_v);

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for (&p, &q) in pa.iter().zip(&pm) {
        // strict positivity; an identically zero multiplier never qualifies
        if p == 0.0 && q == 0.0 {
            return Ok(None);
        }
        restrict(&mut lo, &mut hi, p, q, 0.0);
    }
    for j in complement(spec.dim(), set) {
        let row: Vec<f64> = set.iter().map(|&i| sigma.get(j, i)).collect();
        let p = dot(&row, &pa) - spec.alpha()[j];
        let q = dot(&row, &pm) - spec.mu()[j];
        restrict(&mut lo, &mut hi, p, q, COVERAGE_TOL * (1.0 + spec.alpha()[j].abs()));
    }
    if hi - lo <= COVERAGE_TOL * (1.0 + lo) {
        return Ok(None);
    }
    let coeffs = (dot(&alpha_v, &pa), 2.0 * dot(&alpha_v, &pm), dot(&mu_v, &pm));
    Ok(Some(Segment { lo, hi, index_set: set.to_vec(), coeffs }))
}

/// Essential-set intervals covering `(0, ∞)`, in increasing order.
pub fn compute_segments(spec: &ProblemSpec) -> Result<Vec<Segment>> {
    let d = spec.dim();
    let mut segs = Vec::new();
    for mask in 1u32..(1u32 << d) {
        if let Some(s) = subset_interval(spec, &mask_to_indices(mask, d))? {
            segs.push(s);
        }
    }
    segs.sort_by(|x, y| x.lo.total_cmp(&y.lo));

    let gap = |msg: String| Err(Error::CoverageGap(msg));
    match segs.first() {
        None => return gap("no index set is essential anywhere".into()),
        Some(s) if s.lo > COVERAGE_TOL => return gap(format!("nothing covers (0, {})", s.lo)),
        Some(_) => {}
    }
    for k in 1..segs.len() {
        let (prev_hi, lo) = (segs[k - 1].hi, segs[k].lo);
        if (lo - prev_hi).abs() > COVERAGE_TOL * (1.0 + prev_hi) {
            return gap(format!(
                "segments {:?} and {:?} meet at {prev_hi} and {lo}",
                segs[k - 1].index_set,
                segs[k].index_set
            ));
        }
        segs[k].lo = prev_hi;
    }
    segs[0].lo = 0.0;
    let last = segs.last().expect("nonempty");
    if last.hi.is_finite() {
        return gap(format!("nothing covers ({}, inf)", last.hi));
    }
    Ok(segs)
}

/// `(1/t)·P_Σ(α+μt)` by a direct QP solve.
pub fn eval_g(spec: &ProblemSpec, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidProblem(format!("g is defined for t > 0, got {t}")));
    }
    Ok(solve_qp(spec.sigma(), &spec.target(t))?.value / t)
}

/// Global minimiser `t₀` of `g` with `ĝ`, `g̃` and the index partition at `t₀`.
pub fn minimize_g(spec: &ProblemSpec) -> Result<GAnalysis> {
    let segments = compute_segments(spec)?;
    let (mut t0, mut best) = (f64::NAN, f64::INFINITY);
    for s in &segments {
        let t = s.argmin();
        if t.is_finite() && t > 0.0 {
            let v = s.eval(t);
            if v < best {
                best = v;
                t0 = t;
            }
        }
    }
    if !t0.is_finite() {
        return Err(Error::InvalidProblem("g has no finite positive minimiser".into()));
    }

    let junctions: Vec<f64> = segments[..segments.len() - 1].iter().map(|s| s.hi).collect();
    let nearest = junctions
        .iter()
        .copied()
        .min_by(|x, y| (x - t0).abs().total_cmp(&(y - t0).abs()));
    let breakpoint_margin = nearest.map(|tj| (tj - t0).abs());
    if let Some(tj) = nearest {
        if (t0 - tj).abs() <= BREAKPOINT_TOL * (1.0 + tj) {
            t0 = tj;
        }
    }

    let b = spec.target(t0);
    let qp = solve_qp(spec.sigma(), &b)?;
    let ghat = qp.value / t0;
    let alpha_i = gather(spec.alpha(), &qp.essential);
    let a_i = spec.sigma().sub(&qp.essential)?.inv_quad(&alpha_i, &alpha_i);
    let gtilde = 2.0 * a_i / t0.powi(3);

    let curv = |s: &Segment| 2.0 * s.coeffs.0 / t0.powi(3);
    let left = segments.iter().rev().find(|s| s.lo < t0).map(curv).unwrap_or(gtilde);
    let right = segments.iter().find(|s| s.hi > t0).map(curv).unwrap_or(gtilde);

    Ok(GAnalysis {
        spec: spec.clone(),
        segments,
        t0,
        ghat,
        gtilde,
        b,
        at_breakpoint: !qp.weakly_essential.is_empty(),
        qp_at_t0: qp,
        breakpoint_margin,
        one_sided_curvature: (left, right),
    })
}
