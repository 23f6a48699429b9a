//! Report schema and plot-data CSVs.
//!
//! Index sets are 1-based here. Every float in a [`Report`] is finite; a
//! quantity that can fail to be finite is an `Option`.

use std::path::Path;

use conehit::path_sim::{RawRow, RefinementLevel};
use conehit::{Classification, Derivation, GAnalysis, HSource, PickandsEstimate, ProblemSpec, QpSolution};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analyze,
    Estimate,
    Validate,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub artifact: String,
    pub library: String,
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub versions: Versions,
    pub mode: Mode,
    pub workers: usize,
    pub input: RunConfig,
    /// Orthant form of the problem after any cone map.
    pub spec: ProblemSpec,
    pub qp: QpSummary,
    pub analysis: AnalysisSummary,
    pub classification: String,
    pub constants: Constants,
    pub pickands: Option<PickandsEstimate>,
    pub evaluator: Vec<EvaluatorRow>,
    pub theorem1: Option<Theorem1Summary>,
    pub theorem2: Option<Theorem2Summary>,
    pub oracle: Vec<OracleCheck>,
}

/// Solution of the quadratic program at `t₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSummary {
    pub b: Vec<f64>,
    pub b_tilde: Vec<f64>,
    pub essential: Vec<usize>,
    pub weakly_essential: Vec<usize>,
    pub unessential: Vec<usize>,
    pub lambda: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub lo: f64,
    /// `None` for the unbounded last segment.
    pub hi: Option<f64>,
    pub index_set: Vec<usize>,
    pub coeffs: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub t0: f64,
    pub ghat: f64,
    pub gtilde: f64,
    pub m: usize,
    pub classification: Classification,
    pub at_breakpoint: bool,
    pub breakpoint_margin: Option<f64>,
    pub one_sided_curvature: (f64, f64),
    pub segments: Vec<SegmentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSummary {
    pub value: f64,
    pub stderr: f64,
    pub source: HSource,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_i: f64,
    /// `C_I` with `ψ ≡ 1`; equal to `c_i` when `K = ∅`.
    pub c_i_closed_form: f64,
    pub psi_regularized: bool,
    pub h: Option<HSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorRow {
    pub u: f64,
    pub p_asymptotic: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
    /// Simulated probability, validate mode only.
    pub p_hat: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub u: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub n_hits: usize,
    pub ess: f64,
    pub horizon: f64,
    pub delta: f64,
    pub p_asymptotic: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_stderr: Option<f64>,
    /// Estimates on the stride-2 and stride-4 sub-grids of the same paths.
    pub refinement: Vec<RefinementLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Summary {
    pub rows: Vec<Theorem1Row>,
    pub toward_one: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Summary {
    pub u: f64,
    pub ks: f64,
    pub n_hits: usize,
    pub n_effective: f64,
    pub critical_1pct: f64,
    pub pass: bool,
    pub horizon: f64,
    pub delta: f64,
    pub limit_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub oracle: Derivation,
    pub sets_match: bool,
    /// Largest relative difference over `t₀`, `ĝ`, `g̃`.
    pub max_rel_diff: f64,
    pub c_i_oracle: f64,
    pub c_i_rel_diff: f64,
    pub c_i_tolerance: f64,
    pub h_rel_diff: Option<f64>,
    pub agree: bool,
}

/// Filters out values that would not survive a JSON round trip.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

impl QpSummary {
    pub fn new(b: &[f64], qp: &QpSolution) -> Self {
        Self {
            b: b.to_vec(),
            b_tilde: qp.b_tilde.clone(),
            essential: one_based(&qp.essential),
            weakly_essential: one_based(&qp.weakly_essential),
            unessential: one_based(&qp.unessential),
            lambda: qp.lambda.clone(),
            value: qp.value,
        }
    }
}

impl AnalysisSummary {
    pub fn new(g: &GAnalysis) -> Self {
        Self {
            t0: g.t0,
            ghat: g.ghat,
            gtilde: g.gtilde,
            m: g.m(),
            classification: g.classification(),
            at_breakpoint: g.at_breakpoint,
            breakpoint_margin: g.breakpoint_margin,
            one_sided_curvature: g.one_sided_curvature,
            segments: g
                .segments
                .iter()
                .map(|s| SegmentSummary {
                    lo: s.lo,
                    hi: finite(s.hi),
                    index_set: one_based(&s.index_set),
                    coeffs: s.coeffs,
                })
                .collect(),
        }
    }
}

/// `"full"`, `"reduced to m=<m>"` or `"breakpoint, |K|=<k>"`.
pub fn classification_label(g: &GAnalysis) -> String {
    match g.classification() {
        Classification::Full => "full".into(),
        Classification::Reduced => format!("reduced to m={}", g.m()),
        Classification::Breakpoint => format!("breakpoint, |K|={}", g.weakly_essential().len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageRow {
    pub s: f64,
    pub f_limit: f64,
    pub f_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub path_id: usize,
    pub hit: u8,
    pub tau: Option<f64>,
    pub log_likelihood_ratio: f64,
}

impl From<&RawRow> for SampleRow {
    fn from(r: &RawRow) -> Self {
        Self { path_id: r.path_id, hit: r.hit as u8, tau: r.tau, log_likelihood_ratio: r.log_likelihood_ratio }
    }
}

/// `s = −4, −3.9, …, 4`.
pub fn passage_grid() -> Vec<f64> {
    (-40..=40).map(|k| k as f64 / 10.0).collect()
}

/// Weighted empirical CDF of `samples` at each point of `grid`.
pub fn weighted_ecdf(samples: &[f64], weights: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = samples.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(grid.len());
    let (mut k, mut acc) = (0, 0.0);
    for &s in grid {
        while k < pairs.len() && pairs[k].0 <= s {
            acc += pairs[k].1;
            k += 1;
        }
        out.push(if total > 0.0 { acc / total } else { 0.0 });
    }
    out
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(e.to_string()))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
}
