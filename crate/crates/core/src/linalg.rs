//! Dense symmetric positive-definite matrices with a cached Cholesky factor.
//!
//! Every sub-block operation factors the sub-block itself rather than slicing
//! a precomputed full inverse.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Symmetric positive-definite matrix together with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct PdMatrix {
    entries: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl PartialEq for PdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl PdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let d = entries.nrows();
        if d == 0 || entries.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?
            .unpack();
        let recon = &chol * chol.transpose();
        if (&recon - &sym).amax() > RECONSTRUCTION_TOL * scale {
            return Err(Error::NotPositiveDefinite(
                "Cholesky factor does not reproduce the matrix".into(),
            ));
        }
        Ok(Self { entries: sym, chol })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("matrix rows have unequal length".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// Builds `A Aᵀ` from a nonsingular factor.
    pub fn from_factor(factor: &DMatrix<f64>) -> Result<Self> {
        if factor.nrows() != factor.ncols() {
            return Err(Error::DimensionMismatch("factor must be square".into()));
        }
        let prod = factor * factor.transpose();
        Self::new((&prod + prod.transpose()) * 0.5)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    /// Correlation-style matrix with unit diagonal.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho }))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    /// Principal sub-block on `idx`, refactored from scratch.
    pub fn sub(&self, idx: &[usize]) -> Result<PdMatrix> {
        let k = idx.len();
        PdMatrix::new(DMatrix::from_fn(k, k, |i, j| self.entries[(idx[i], idx[j])]))
    }

    /// Rectangular block `M[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.entries[(rows[i], cols[j])]
        })
    }

    /// Solves `M x = rhs` through the cached factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_column_slice(rhs);
        self.chol.solve_lower_triangular_mut(&mut x);
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x.iter().copied().collect()
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        self.chol.solve_lower_triangular_mut(&mut x);
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `xᵀ M⁻¹ y`.
    pub fn inv_quad(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.solve(y))
    }

    pub fn det(&self) -> f64 {
        self.log_det().exp()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol[(i, i)].ln()).sum::<f64>()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `L z` for the lower Cholesky factor `L`.
    pub fn chol_mul(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[(i, j)] * z[j];
            }
            out[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.entries * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    /// `M ↦ T M Tᵀ` for a square transform `T`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<PdMatrix> {
        let prod = t * &self.entries * t.transpose();
        PdMatrix::new((&prod + prod.transpose()) * 0.5)
    }
}

impl Serialize for PdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        PdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Picks `v[idx]`.
pub fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Indices in `0..d` not contained in the sorted set `idx`.
pub fn complement(d: usize, idx: &[usize]) -> Vec<usize> {
    (0..d).filter(|i| !idx.contains(i)).collect()
}

/// Sorted index list encoded by a bitmask.
pub fn mask_to_indices(mask: u32, d: usize) -> Vec<usize> {
    (0..d).filter(|i| mask & (1 << i) != 0).collect()
}
