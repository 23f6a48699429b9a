use std::path::{Path, PathBuf};

use conehit::{
    assemble, closed_form_ci, estimate_h, lower_bound_h, minimize_g, oracle_2d, oracle_independent,
    oracle_negassoc, tabulate_psi, validate_theorem1, validate_theorem2, AsymptoticResult, Error, GAnalysis,
    HSource, PassageTimeLaw, PickandsInput, Psi, RqmcOptions, SimConfig,
};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::*;

/// Agreement tolerance for reals and for `C_I` when `|K| ≤ 1`.
pub const ORACLE_REL_TOL: f64 = 1e-8;
/// `C_I` tolerance when `ψ` comes from RQMC.
pub const ORACLE_RQMC_TOL: f64 = 1e-4;

/// One invocation of the command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub mode: Mode,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Files a run produces, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub report: Report,
    pub files: Vec<(&'static str, String)>,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) }
}

/// Reads and checks the configuration, then runs `mode`. Nothing is written.
pub fn execute(inv: &Invocation) -> Result<Outputs, CliError> {
    let bytes = std::fs::read(&inv.config)
        .map_err(|e| CliError::config("CONFIG_IO", format!("{}: {e}", inv.config.display())))?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::config("CONFIG_INVALID", "config is not UTF-8"))?;
    let config = RunConfig::parse(&text)?;
    config.resolve()?;
    let seed = match inv.seed.or(config.seed) {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            eprintln!("conehit: no seed given, using --seed {s}");
            s
        }
    };
    let workers = inv.workers.or(config.workers).unwrap_or(1);
    if workers == 0 {
        return Err(CliError::config("CONFIG_INVALID", "worker count must be positive"));
    }
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    run(inv.mode, &config, seed, workers, hash)
}

/// Runs the pipeline on an already parsed configuration.
pub fn run(mode: Mode, config: &RunConfig, seed: u64, workers: usize, config_sha256: String) -> Result<Outputs, CliError> {
    let spec = config.resolve()?;
    let g = minimize_g(&spec)?;
    let rqmc = RqmcOptions { points: config.rqmc.points, shifts: config.rqmc.shifts, seed: seed.wrapping_add(2) };
    let raw_psi = Psi::new(&g, &rqmc)?;
    let psi_regularized = raw_psi.regularized();
    let psi = tabulate_psi(&g, raw_psi);

    let pk = if g.m() >= 2 && matches!(mode, Mode::Estimate | Mode::Validate) {
        let p = &config.pickands;
        let top = *p.t_ladder.last().expect("validated nonempty");
        let base = PickandsInput {
            sampler: p.sampler,
            workers,
            ..PickandsInput::from_analysis(&g, top, p.n_steps, p.n_paths, seed)
        };
        Some(estimate_h(&base, &p.t_ladder)?)
    } else {
        None
    };
    let ar = assemble(&g, pk.as_ref(), &psi)?;

    let mut files = Vec::new();
    let (mut theorem1, mut theorem2) = (None, None);
    let mut sims = vec![None; config.u.len()];
    if mode == Mode::Validate {
        let s = &config.sim;
        let base = SimConfig {
            u: 1.0,
            horizon_factor: s.horizon_factor,
            n_steps_per_unit: s.n_steps_per_unit,
            n_paths: s.n_paths,
            seed: seed.wrapping_add(1),
            mode: s.mode,
            workers,
            keep_rows: false,
        };
        let t1 = validate_theorem1(&g, &ar, &config.u, &base)?;
        for (slot, r) in sims.iter_mut().zip(&t1.rows) {
            *slot = Some((r.p_hat, r.stderr));
        }
        theorem1 = Some(Theorem1Summary {
            rows: t1
                .rows
                .iter()
                .map(|r| Theorem1Row {
                    u: r.u,
                    p_hat: r.p_hat,
                    stderr: r.stderr,
                    n_hits: r.sim.n_hits,
                    ess: r.sim.ess,
                    horizon: r.sim.horizon,
                    delta: r.sim.delta,
                    p_asymptotic: r.p_asymptotic.and_then(finite),
                    ratio: r.ratio.and_then(finite),
                    ratio_stderr: r.ratio_stderr.and_then(finite),
                    refinement: r.sim.refinement.clone(),
                })
                .collect(),
            toward_one: t1.toward_one,
            pass: t1.pass,
        });

        let law = PassageTimeLaw::new(&g, psi.clone())?;
        let u = s.passage_u.unwrap_or_else(|| config.u.iter().copied().fold(f64::MIN, f64::max));
        let t2 = validate_theorem2(&g, &law, &SimConfig { u, keep_rows: s.raw_samples, ..base })?;
        let standardized = conehit::path_sim::standardized_passage(&t2.sim, &law);
        let grid = passage_grid();
        let emp = weighted_ecdf(&standardized, &t2.sim.passage_weights, &grid);
        let rows: Vec<PassageRow> =
            grid.iter().zip(emp).map(|(&s, f)| PassageRow { s, f_limit: law.cdf(s), f_empirical: f }).collect();
        files.push(("passage.csv", csv_string(&rows)?));
        if let Some(raw) = &t2.sim.rows {
            let rows: Vec<SampleRow> = raw.iter().map(SampleRow::from).collect();
            files.push(("samples.csv", csv_string(&rows)?));
        }
        theorem2 = Some(Theorem2Summary {
            u,
            ks: t2.ks,
            n_hits: t2.n_hits,
            n_effective: t2.n_effective,
            critical_1pct: t2.critical_1pct,
            pass: t2.ks <= t2.critical_1pct,
            horizon: t2.sim.horizon,
            delta: t2.sim.delta,
            limit_median: law.median(),
        });
    }

    let oracle = if mode == Mode::Oracle { oracle_checks(&g, &ar, &rqmc)? } else { Vec::new() };

    let evaluator: Vec<EvaluatorRow> = config
        .u
        .iter()
        .zip(&sims)
        .map(|(&u, sim)| {
            let band = ar.band(u);
            EvaluatorRow {
                u,
                p_asymptotic: ar.p_hat(u).and_then(finite),
                band_lo: band.and_then(|b| finite(b.0)),
                band_hi: band.and_then(|b| finite(b.1)),
                p_hat: sim.map(|s| s.0),
                stderr: sim.map(|s| s.1),
            }
        })
        .collect();
    files.insert(0, ("evaluator.csv", csv_string(&evaluator)?));

    let report = Report {
        versions: Versions {
            artifact: env!("CARGO_PKG_VERSION").into(),
            library: conehit::VERSION.into(),
            config_sha256,
            seed,
        },
        mode,
        workers,
        input: config.clone(),
        spec: spec.clone(),
        qp: QpSummary::new(&g.b, &g.qp_at_t0),
        analysis: AnalysisSummary::new(&g),
        classification: classification_label(&g),
        constants: Constants {
            c_i: ar.c_i,
            c_i_closed_form: closed_form_ci(&g),
            psi_regularized,
            h: ar.h.as_ref().map(|h| HSummary {
                value: h.value,
                stderr: h.stderr,
                source: h.source,
                lower_bound: lower_bound_h(&g),
            }),
        },
        pickands: pk,
        evaluator,
        theorem1,
        theorem2,
        oracle,
    };
    Ok(Outputs { report, files })
}

/// Every special-case closed form that applies to `g.spec`, compared with `ar`.
fn oracle_checks(g: &GAnalysis, ar: &AsymptoticResult, rqmc: &RqmcOptions) -> Result<Vec<OracleCheck>, CliError> {
    let candidates = [oracle_2d(&g.spec), oracle_independent(&g.spec), oracle_negassoc(&g.spec)];
    let mut checks = Vec::new();
    for c in candidates {
        let o = match c {
            Ok(o) => o,
            Err(Error::OutOfScope2D(_) | Error::OutOfScopeIndependent(_) | Error::OutOfScopeNegAssoc(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let sets_match = o.essential == ar.essential
            && o.weakly_essential == ar.weakly_essential
            && o.unessential == ar.unessential;
        let max_rel_diff = [(o.t0, ar.t0), (o.ghat, ar.ghat), (o.gtilde, ar.gtilde)]
            .iter()
            .map(|&(a, b)| rel_diff(a, b))
            .fold(0.0, f64::max);
        let c_i_tolerance = if ar.weakly_essential.len() <= 1 { ORACLE_REL_TOL } else { ORACLE_RQMC_TOL };
        let c_i_rel_diff = rel_diff(o.c_i, ar.c_i);
        let h_rel_diff = match (&o.h, &ar.h) {
            (Some(a), Some(b)) if a.source == HSource::Exact && b.source == HSource::Exact => {
                Some(rel_diff(a.value, b.value))
            }
            _ => None,
        };
        let agree = sets_match
            && max_rel_diff <= ORACLE_REL_TOL
            && c_i_rel_diff <= c_i_tolerance
            && h_rel_diff.is_none_or(|d| d <= ORACLE_REL_TOL);
        let check = OracleCheck {
            oracle: o.derivation,
            sets_match,
            max_rel_diff,
            c_i_oracle: o.c_i,
            c_i_rel_diff,
            c_i_tolerance,
            h_rel_diff,
            agree,
        };
        if !agree {
            return Err(CliError::oracle(format!(
                "{:?} oracle disagrees with the pipeline (rqmc seed {}): {check:?}",
                o.derivation, rqmc.seed
            )));
        }
        checks.push(check);
    }
    Ok(checks)
}

/// Runs `inv` and writes `report.json` and the CSVs into `inv.out`.
pub fn run_and_write(inv: &Invocation) -> Result<Report, CliError> {
    let out = execute(inv)?;
    write_outputs(&inv.out, &out)?;
    Ok(out.report)
}

pub fn write_outputs(dir: &Path, out: &Outputs) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| CliError::io(e.to_string()))?;
    write_file(dir, "report.json", &json)?;
    for (name, body) in &out.files {
        write_file(dir, name, body)?;
    }
    Ok(())
}
