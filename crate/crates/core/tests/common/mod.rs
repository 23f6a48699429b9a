#![allow(dead_code)]

use conehit::PdMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Index partition and optimiser from a KKT search that works with the full
/// precision matrix `P = M⁻¹` instead of sub-block solves.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub x: Vec<f64>,
    pub essential: Vec<usize>,
    pub weakly_essential: Vec<usize>,
    pub unessential: Vec<usize>,
    pub value: f64,
}

pub fn kkt_oracle(m: &PdMatrix, b: &[f64]) -> KktSolution {
    let d = b.len();
    let p = m.matrix().clone().try_inverse().expect("invertible");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let act: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..d).filter(|i| mask & (1 << i) == 0).collect();
        let mut x = b.to_vec();
        if !free.is_empty() {
            let pff = DMatrix::from_fn(free.len(), free.len(), |i, j| p[(free[i], free[j])]);
            let rhs = DVector::from_fn(free.len(), |i, _| {
                -act.iter().map(|&k| p[(free[i], k)] * b[k]).sum::<f64>()
            });
            let sol = pff.lu().solve(&rhs).expect("free block invertible");
            for (i, &f) in free.iter().enumerate() {
                x[f] = sol[i];
            }
        }
        if x.iter().zip(b).any(|(xi, bi)| *xi < bi - 1e-10 * (1.0 + bi.abs())) {
            continue;
        }
        let nu = &p * DVector::from_column_slice(&x);
        if act.iter().any(|&k| nu[k] < -1e-10) {
            continue;
        }
        let val = nu.dot(&DVector::from_column_slice(&x));
        if best.as_ref().map_or(true, |(v, _)| val < *v) {
            best = Some((val, x));
        }
    }
    let (value, x) = best.expect("a KKT point exists");
    let nu = &p * DVector::from_column_slice(&x);
    let scale = nu.amax();
    let (mut ess, mut weak, mut uness) = (vec![], vec![], vec![]);
    for i in 0..d {
        let tight = (x[i] - b[i]).abs() <= 1e-9 * (1.0 + b[i].abs());
        if tight && nu[i] > 1e-9 * scale {
            ess.push(i);
        } else if tight {
            weak.push(i);
        } else {
            uness.push(i);
        }
    }
    KktSolution { x, essential: ess, weakly_essential: weak, unessential: uness, value }
}

/// Projected gradient descent on `xᵀM⁻¹x` over `{x ≥ b}`.
pub fn projected_gradient(m: &PdMatrix, b: &[f64], iters: usize) -> Vec<f64> {
    let p = m.matrix().clone().try_inverse().expect("invertible");
    let lmax = p.symmetric_eigenvalues().max();
    let step = 0.5 / lmax;
    let mut x = DVector::from_iterator(b.len(), b.iter().map(|v| v.max(0.0)));
    for _ in 0..iters {
        let g = &p * &x * 2.0;
        x -= g * step;
        for i in 0..b.len() {
            x[i] = x[i].max(b[i]);
        }
    }
    x.iter().copied().collect()
}

pub fn random_pd<R: Rng>(rng: &mut R, d: usize) -> PdMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
    PdMatrix::new((&s + s.transpose()) * 0.5).unwrap()
}

pub fn random_b<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if b.iter().any(|&v| v > 0.0) {
            return b;
        }
    }
}

pub fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
}

pub fn random_corr<R: Rng>(rng: &mut R, d: usize) -> PdMatrix {
    let s = random_pd(rng, d);
    let sd: Vec<f64> = (0..d).map(|i| s.get(i, i).sqrt()).collect();
    PdMatrix::new(DMatrix::from_fn(d, d, |i, j| s.get(i, j) / (sd[i] * sd[j]))).unwrap()
}
