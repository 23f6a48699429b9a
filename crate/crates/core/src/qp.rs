//! The constrained quadratic program `min xᵀM⁻¹x  s.t.  x ≥ b`.
//!
//! The optimizer is characterised by a unique essential index set `I`:
//! `b̃_I = b_I`, `M_II⁻¹ b_I > 0` and `b̃_{Iᶜ} = M_{IᶜI} M_II⁻¹ b_I ≥ b_{Iᶜ}`.
//! For `d ≤ 12` every candidate subset is checked directly; each check is one
//! Cholesky solve of size at most `d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complement, dot, gather, mask_to_indices, PdMatrix};

pub const MAX_DIM: usize = 12;

/// Tolerances used to turn the exact optimality conditions into floating-point tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// `|b̃_j − b_j| ≤ tau_eq·(1 + |b_j|)` counts as equality (weakly essential).
    pub tau_eq: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tau_eq: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub b_tilde: Vec<f64>,
    pub essential: Vec<usize>,
    pub weakly_essential: Vec<usize>,
    pub unessential: Vec<usize>,
    /// `b̃ᵀ M⁻¹ b̃ = b_Iᵀ M_II⁻¹ b_I`.
    pub value: f64,
    /// `M_II⁻¹ b_I`, aligned with `essential`.
    pub lambda: Vec<f64>,
}

impl QpSolution {
    pub fn dim(&self) -> usize {
        self.b_tilde.len()
    }

    /// `x_Iᵀ M_II⁻¹ b_I`, which equals `xᵀ M⁻¹ b̃` for every `x`.
    pub fn quadform(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(dot(&gather(x, &self.essential), &self.lambda))
    }
}

/// Outcome of testing a single candidate index set.
#[derive(Debug, Clone)]
struct Candidate {
    set: Vec<usize>,
    lambda: Vec<f64>,
    b_tilde: Vec<f64>,
}

/// Checks `M_VV⁻¹ b_V > 0` and `M_{VᶜV} M_VV⁻¹ b_V ≥ b_{Vᶜ}` for one subset.
fn check_subset(m: &PdMatrix, b: &[f64], set: &[usize], opts: &QpOptions) -> Result<Option<Candidate>> {
    let d = m.dim();
    let sub = m.sub(set)?;
    let b_v = gather(b, set);
    let lambda = sub.solve(&b_v);
    // Dropping i from V moves b̃_i by λ_i/(M_VV⁻¹)_ii, so a multiplier below
    // this floor is the same event as coordinate i being weakly essential
    // for V \ {i}; the two tests can neither both pass nor both fail.
    let mut unit = vec![0.0; set.len()];
    for (k, &i) in set.iter().enumerate() {
        unit[k] = 1.0;
        let inv_kk = sub.solve(&unit)[k];
        unit[k] = 0.0;
        if lambda[k] <= opts.tau_eq * (1.0 + b[i].abs()) * inv_kk {
            return Ok(None);
        }
    }
    let mut b_tilde = b.to_vec();
    for j in complement(d, set) {
        let row: Vec<f64> = set.iter().map(|&i| m.get(j, i)).collect();
        let v = dot(&row, &lambda);
        if v < b[j] - opts.tau_eq * (1.0 + b[j].abs()) {
            return Ok(None);
        }
        b_tilde[j] = v;
    }
    Ok(Some(Candidate { set: set.to_vec(), lambda, b_tilde }))
}

/// Solves `P_M(b)` and classifies every coordinate as essential, weakly
/// essential or unessential.
pub fn solve_qp(m: &PdMatrix, b: &[f64]) -> Result<QpSolution> {
    solve_qp_with(m, b, &QpOptions::default())
}

pub fn solve_qp_with(m: &PdMatrix, b: &[f64], opts: &QpOptions) -> Result<QpSolution> {
    let d = m.dim();
    if b.len() != d {
        return Err(Error::DimensionMismatch(format!("b has length {}, expected {d}", b.len())));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionMismatch(format!("dimension {d} exceeds {MAX_DIM}")));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("b has non-finite entries".into()));
    }
    if b.iter().all(|&v| v <= 0.0) {
        return Err(Error::InfeasibleSign);
    }

    let mut best: Vec<Candidate> = Vec::new();
    for mask in 1u32..(1u32 << d) {
        let set = mask_to_indices(mask, d);
        if !best.is_empty() && set.len() < best[0].set.len() {
            continue;
        }
        if let Some(c) = check_subset(m, b, &set, opts)? {
            match best.first().map(|c| c.set.len()) {
                Some(n) if c.set.len() > n => best = vec![c],
                Some(n) if c.set.len() == n => best.push(c),
                Some(_) => {}
                None => best.push(c),
            }
        }
    }

    let chosen = match best.len() {
        0 => return Err(Error::NoCandidate),
        1 => best.pop().expect("one candidate"),
        _ => {
            let sets: Vec<String> = best.iter().map(|c| format!("{:?}", c.set)).collect();
            return Err(Error::NumericalAmbiguity(sets.join(" vs ")));
        }
    };

    let mut weak = Vec::new();
    let mut uness = Vec::new();
    for j in complement(d, &chosen.set) {
        if (chosen.b_tilde[j] - b[j]).abs() <= opts.tau_eq * (1.0 + b[j].abs()) {
            weak.push(j);
        } else {
            uness.push(j);
        }
    }
    let value = dot(&gather(b, &chosen.set), &chosen.lambda);
    Ok(QpSolution {
        b_tilde: chosen.b_tilde,
        essential: chosen.set,
        weakly_essential: weak,
        unessential: uness,
        value,
        lambda: chosen.lambda,
    })
}

/// `x_Iᵀ M_II⁻¹ b_I`.
pub fn qp_value_quadform(sol: &QpSolution, x: &[f64]) -> Result<f64> {
    sol.quadform(x)
}
