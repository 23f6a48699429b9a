use conehit::path_sim::{kish, standardized_passage, weighted_ks};
use conehit::{
    minimize_g, simulate_p, validate_theorem2, Error, GAnalysis, PassageTimeLaw, PdMatrix, ProblemSpec,
    RqmcOptions, SimConfig, SimMode,
};

fn corr2(rho: f64) -> PdMatrix {
    PdMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()
}

fn analysis(rho: f64, alpha: [f64; 2], mu: [f64; 2]) -> GAnalysis {
    minimize_g(&ProblemSpec::new(corr2(rho), alpha.to_vec(), mu.to_vec()).unwrap()).unwrap()
}

fn cfg(u: f64, mode: SimMode, n_paths: usize) -> SimConfig {
    SimConfig { u, mode, n_paths, n_steps_per_unit: 64, seed: 11, ..SimConfig::default() }
}

#[test]
fn identical_across_worker_counts() {
    let g = analysis(0.3, [1.0, 0.6], [1.0, 0.8]);
    let base = SimConfig { keep_rows: true, ..cfg(2.0, SimMode::Tilted, 3000) };
    let one = simulate_p(&g, &base).unwrap();
    for w in [2, 4] {
        assert_eq!(one, simulate_p(&g, &SimConfig { workers: w, ..base.clone() }).unwrap());
    }
    assert_eq!(one.rows.as_ref().unwrap().len(), 3000);
    assert_ne!(one, simulate_p(&g, &SimConfig { seed: 12, ..base }).unwrap());
}

#[test]
fn hits_are_nested_in_u_with_shared_noise() {
    let g = analysis(0.0, [1.0, 0.5], [1.0, 1.0]);
    let (u1, u2) = (0.5, 1.0);
    // equal horizons so both runs draw the same noise for the same steps
    let run = |u: f64, h: f64| {
        let c = SimConfig { horizon_factor: h, keep_rows: true, ..cfg(u, SimMode::Crude, 4000) };
        simulate_p(&g, &c).unwrap()
    };
    let low = run(u1, 3.0 * u2 / u1);
    let high = run(u2, 3.0);
    assert_eq!(low.horizon, high.horizon);
    let (lr, hr) = (low.rows.unwrap(), high.rows.unwrap());
    for (a, b) in lr.iter().zip(&hr) {
        assert!(!b.hit || a.hit, "path {} hits at u₂ but not at u₁", a.path_id);
        if b.hit {
            assert!(a.tau.unwrap() <= b.tau.unwrap());
        }
    }
    assert!(low.p_hat > high.p_hat);
}

#[test]
fn coarser_grids_see_fewer_hits() {
    let g = analysis(0.0, [1.0, 0.5], [1.0, 1.0]);
    let crude = simulate_p(&g, &cfg(1.0, SimMode::Crude, 8000)).unwrap();
    let (r2, r4) = (crude.refinement[0], crude.refinement[1]);
    assert!(crude.n_hits >= r2.n_hits && r2.n_hits >= r4.n_hits);
    assert!(r4.n_hits < crude.n_hits);

    let tilted = simulate_p(&g, &SimConfig { n_steps_per_unit: 256, ..cfg(3.0, SimMode::Tilted, 20000) }).unwrap();
    let (r2, r4) = (tilted.refinement[0], tilted.refinement[1]);
    let (gap1, gap2) = (tilted.p_hat - r2.p_hat, r2.p_hat - r4.p_hat);
    assert!(gap1 > 0.0 && gap2 > gap1, "{} {} {}", tilted.p_hat, r2.p_hat, r4.p_hat);
}

#[test]
fn crude_and_tilted_agree_where_hits_are_plentiful() {
    let g = analysis(0.0, [1.0, 0.5], [1.0, 1.0]);
    let crude = simulate_p(&g, &cfg(0.5, SimMode::Crude, 20000)).unwrap();
    assert!(crude.n_hits >= 1000, "{}", crude.n_hits);
    let tilted = simulate_p(&g, &cfg(0.5, SimMode::Tilted, 20000)).unwrap();
    let z = (crude.p_hat - tilted.p_hat) / crude.stderr.hypot(tilted.stderr);
    assert!(z.abs() < 3.0, "crude {} ± {}, tilted {} ± {}", crude.p_hat, crude.stderr, tilted.p_hat, tilted.stderr);
    assert!(tilted.stderr < crude.stderr);
    assert!((crude.passage_weights.iter().all(|&w| w == 1.0)));
    assert_eq!(crude.passage_samples.len(), crude.n_hits);
}

#[test]
fn one_dimensional_reduction_matches_the_exponential_law() {
    let g = analysis(0.9, [1.0, 0.5], [1.0, 1.0]);
    let est = simulate_p(&g, &SimConfig { n_steps_per_unit: 256, ..cfg(2.0, SimMode::Tilted, 10000) }).unwrap();
    let ratio = est.p_hat / (-4.0f64).exp();
    assert!((0.8..=1.25).contains(&ratio), "{ratio}");
    assert!(est.p_hat <= 1.0 && est.stderr >= 0.0);
    assert!((est.log_p_hat - est.p_hat.ln()).abs() < 1e-12);
}

#[test]
fn tilted_weights_are_bounded_by_the_exponent() {
    let g = analysis(0.2, [1.0, 0.7], [0.9, 1.1]);
    let est = simulate_p(&g, &SimConfig { keep_rows: true, ..cfg(4.0, SimMode::Tilted, 2000) }).unwrap();
    let cap = -0.5 * g.ghat * 4.0;
    for r in est.rows.unwrap().iter().filter(|r| r.hit) {
        assert!(r.log_likelihood_ratio <= cap + 1e-9, "{} > {cap}", r.log_likelihood_ratio);
    }
}

#[test]
fn small_tilted_runs_report_low_effective_size() {
    let g = analysis(0.0, [1.0, 1.0], [1.0, 1.0]);
    let r = simulate_p(&g, &cfg(3.0, SimMode::Tilted, 20));
    assert!(matches!(r, Err(Error::EffectiveSampleTooSmall(_))), "{r:?}");
}

#[test]
fn passage_times_against_the_normal_limit() {
    let g = analysis(0.0, [2.0, 2.0], [2.0, 2.0]);
    let law = PassageTimeLaw::from_analysis(&g, &RqmcOptions::default()).unwrap();
    let c = SimConfig { n_steps_per_unit: 128, ..cfg(5.0, SimMode::Tilted, 5000) };
    let rep = validate_theorem2(&g, &law, &c).unwrap();
    assert!(rep.ks < 0.06, "{rep:?}");
    assert!(rep.n_effective > 500.0);
    assert_eq!(rep.sim.ks_vs_limit, Some(rep.ks));

    // negative control: raw times against Φ
    let raw = weighted_ks(&rep.sim.passage_samples, &rep.sim.passage_weights, |x| law.cdf(x));
    assert!(raw > 5.0 * rep.critical_1pct, "{raw}");
    let s = standardized_passage(&rep.sim, &law);
    assert!(s.iter().all(|v| v.is_finite()));
    assert!(kish(&rep.sim.passage_weights) <= rep.n_hits as f64);

    let few = validate_theorem2(&g, &law, &cfg(5.0, SimMode::Crude, 500));
    assert!(matches!(few, Err(Error::TooFewHits(0))), "{few:?}");
}
