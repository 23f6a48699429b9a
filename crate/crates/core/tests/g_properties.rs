mod common;

use common::{kkt_oracle, random_pd, rel_err};
use conehit::{compute_segments, eval_g, minimize_g, solve_qp, Classification, PdMatrix, ProblemSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_spec(seed: u64, d: usize) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = random_pd(&mut rng, d);
    loop {
        let alpha: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mu: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(s) = ProblemSpec::new(sigma.clone(), alpha, mu) {
            return s;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn g_is_convex(seed in any::<u64>(), d in 1usize..=4, t1 in 0.01f64..10.0, t2 in 0.01f64..10.0) {
        let spec = random_spec(seed, d);
        let mid = eval_g(&spec, 0.5 * (t1 + t2)).unwrap();
        let chord = 0.5 * (eval_g(&spec, t1).unwrap() + eval_g(&spec, t2).unwrap());
        prop_assert!(mid <= chord + 1e-9 * (1.0 + chord.abs()));
    }

    #[test]
    fn junctions_are_c1_and_nested(seed in any::<u64>(), d in 2usize..=4) {
        let spec = random_spec(seed, d);
        let segs = compute_segments(&spec).unwrap();
        for w in segs.windows(2) {
            let tj = w[0].hi;
            for eps in [1e-4, 1e-6] {
                let gap = (eval_g(&spec, tj - eps * tj).unwrap() - eval_g(&spec, tj + eps * tj).unwrap()).abs();
                prop_assert!(gap < 50.0 * eps * (1.0 + w[0].eval(tj).abs()));
            }
            let dl = w[0].derivative(tj);
            let dr = w[1].derivative(tj);
            prop_assert!((dl - dr).abs() < 1e-7 * (1.0 + dl.abs()), "g' jumps at {}: {} vs {}", tj, dl, dr);
            prop_assert!((w[0].eval(tj) - w[1].eval(tj)).abs() < 1e-9 * (1.0 + w[0].eval(tj).abs()));

            let at = solve_qp(spec.sigma(), &spec.target(tj)).unwrap();
            let mut upper = at.essential.clone();
            upper.extend(&at.weakly_essential);
            for s in w {
                prop_assert!(at.essential.iter().all(|i| s.index_set.contains(i)));
                prop_assert!(s.index_set.iter().all(|i| upper.contains(i)));
            }
        }
    }

    #[test]
    fn minimiser_beats_dense_grid(seed in any::<u64>(), d in 1usize..=4) {
        let spec = random_spec(seed, d);
        let g = minimize_g(&spec).unwrap();
        // coarse log grid, then a fine grid between the neighbours of its best
        // point; convexity keeps the minimum inside that bracket
        let n = 10_000;
        let (lo, hi) = ((g.t0 / 100.0).ln(), (g.t0 * 100.0).ln());
        let at = |k: usize| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp();
        let best = (0..n)
            .min_by(|&a, &b| eval_g(&spec, at(a)).unwrap().total_cmp(&eval_g(&spec, at(b)).unwrap()))
            .unwrap();
        let (a, b) = (at(best.saturating_sub(1)), at((best + 1).min(n - 1)));
        let grid_min = (0..n)
            .map(|k| eval_g(&spec, a + (b - a) * k as f64 / (n - 1) as f64).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(g.ghat <= grid_min * (1.0 + 1e-12));
        prop_assert!(rel_err(g.ghat, grid_min) < 1e-6);
        prop_assert!((eval_g(&spec, g.t0).unwrap() - g.ghat).abs() < 1e-10 * g.ghat);
        prop_assert!(g.gtilde > 0.0);

        // ĝ = b_IᵀΣ_II⁻¹b_I / t₀ and g_I'(t₀) = 0
        let sii = g.sigma_ii();
        let bi = g.b_i();
        let mui = g.mu_i();
        prop_assert!(rel_err(sii.inv_quad(&bi, &bi) / g.t0, g.ghat) < 1e-10);
        let foc = -sii.inv_quad(&mui, &bi) / g.t0 + sii.inv_quad(&bi, &bi) / (2.0 * g.t0 * g.t0);
        prop_assert!(foc.abs() < 1e-8 * (1.0 + g.ghat));
    }
}

struct TwoD {
    t0: f64,
    ghat: f64,
    gtilde: f64,
    class: Classification,
}

/// Closed forms of the two-dimensional classification with μ = (1, 1).
fn two_d_closed(rho: f64, a1: f64, a2: f64) -> TwoD {
    let edge = (a1 + a2) / (2.0 * a1);
    if rho < edge {
        let q = a1 * a1 + a2 * a2 - 2.0 * a1 * a2 * rho;
        let t0 = (q / (2.0 * (1.0 - rho))).sqrt();
        TwoD {
            t0,
            ghat: 2.0 / (1.0 + rho) * (a1 + a2 + 2.0 * t0),
            gtilde: 2.0 * q / (t0.powi(3) * (1.0 - rho * rho)),
            class: Classification::Full,
        }
    } else {
        TwoD {
            t0: a1,
            ghat: 4.0 * a1,
            gtilde: 2.0 / a1,
            class: if rho == edge { Classification::Breakpoint } else { Classification::Reduced },
        }
    }
}

#[test]
fn two_dimensional_sweep_matches_closed_forms() {
    for k in -19..=19 {
        let rho = k as f64 / 20.0;
        let spec =
            ProblemSpec::new(PdMatrix::equicorrelated(2, rho).unwrap(), vec![1.0, 0.5], vec![1.0, 1.0])
                .unwrap();
        let g = minimize_g(&spec).unwrap();
        let c = two_d_closed(rho, 1.0, 0.5);
        assert_eq!(g.classification(), c.class, "rho = {rho}");
        assert!(rel_err(g.t0, c.t0) < 1e-8, "rho = {rho}");
        assert!(rel_err(g.ghat, c.ghat) < 1e-8, "rho = {rho}");
        assert!(rel_err(g.gtilde, c.gtilde) < 1e-8, "rho = {rho}");
        let n_seg = compute_segments(&spec).unwrap().len();
        assert_eq!(n_seg, if rho <= 0.5 { 1 } else { 2 }, "rho = {rho}");
    }
}

#[test]
fn homogeneous_case_scales_with_d() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 2..=4 {
        let sigma = random_pd(&mut rng, d);
        let (a, m) = (1.7, 0.6);
        let spec = ProblemSpec::new(sigma.clone(), vec![a; d], vec![m; d]).unwrap();
        let g = minimize_g(&spec).unwrap();
        let dd = kkt_oracle(&sigma, &vec![1.0; d]).value;
        assert!(rel_err(g.t0, a / m) < 1e-10);
        assert!(rel_err(g.ghat, 4.0 * dd * a * m) < 1e-10);
        assert!(rel_err(g.gtilde, 2.0 * dd * m.powi(3) / a) < 1e-10);
    }
}

#[test]
fn one_dimensional_reduction_below_q() {
    let spec =
        ProblemSpec::new(PdMatrix::equicorrelated(2, 0.9).unwrap(), vec![1.0, 0.5], vec![1.0, 1.0])
            .unwrap();
    for t in [0.2, 1.0, 2.5, 3.99] {
        let expected = (1.0 + t) * (1.0 + t) / t;
        assert!(rel_err(eval_g(&spec, t).unwrap(), expected) < 1e-12);
    }
}
