//! Volume of a union of origin-anchored boxes `⋃_k [0, p_k]`.
//!
//! Points are stored flat, `m` coordinates per point, all strictly positive.

use crate::error::{Error, Result};

/// Exact volume of `⋃_k [0, p_k]`.
pub fn hypervolume(points: &[f64], m: usize) -> f64 {
    assert!(m >= 1 && points.len() % m == 0, "points must hold m coordinates each");
    if points.is_empty() {
        return 0.0;
    }
    match m {
        1 => points.iter().copied().fold(0.0, f64::max),
        2 => sweep_2d(points),
        _ => wfg(&nondominated(points, m), m),
    }
}

fn sweep_2d(points: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut top = 0.0;
    let mut vol = 0.0;
    for (x, y) in pts {
        if y > top {
            vol += x * (y - top);
            top = y;
        }
    }
    vol
}

/// Points not weakly dominated by another point; duplicates collapse to one.
fn nondominated(points: &[f64], m: usize) -> Vec<f64> {
    let mut idx: Vec<&[f64]> = points.chunks_exact(m).collect();
    // lexicographically decreasing, so a dominating point always comes first
    idx.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(x, y)| y.total_cmp(x)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<f64> = Vec::with_capacity(points.len());
    for p in idx {
        let dominated = kept.chunks_exact(m).any(|q| q.iter().zip(p).all(|(a, b)| a >= b));
        if !dominated {
            kept.extend_from_slice(p);
        }
    }
    kept
}

/// Exclusive-contribution recursion over a nondominated front.
fn wfg(front: &[f64], m: usize) -> f64 {
    let n = front.len() / m;
    match n {
        0 => return 0.0,
        1 => return front.iter().product(),
        _ => {}
    }
    if m == 2 {
        return sweep_2d(front);
    }
    let mut pts: Vec<&[f64]> = front.chunks_exact(m).collect();
    pts.sort_by(|a, b| b[m - 1].total_cmp(&a[m - 1]));
    let mut total = 0.0;
    let mut limited = Vec::with_capacity(front.len());
    for k in 0..n {
        let p = pts[k];
        limited.clear();
        for q in &pts[k + 1..] {
            limited.extend(p.iter().zip(q.iter()).map(|(a, b)| a.min(*b)));
        }
        let inner = if limited.is_empty() { 0.0 } else { wfg(&nondominated(&limited, m), m) };
        total += p.iter().product::<f64>() - inner;
    }
    total
}

/// `ln ∫ e^{a·x} 1{∃k : x < w_k} dx` for points `w_k` stored flat.
///
/// Coordinates are shifted by their maximum before exponentiating, so only
/// values in `(0, 1]` reach the volume computation.
pub fn log_weighted_lower_set_integral(points: &[f64], a: &[f64]) -> Result<f64> {
    let m = a.len();
    if m == 0 || points.is_empty() || points.len() % m != 0 {
        return Err(Error::DimensionMismatch("points must hold a.len() coordinates each".into()));
    }
    if m == 1 {
        let top = points.iter().map(|w| a[0] * w).fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Overflow(format!("a·w = {top}")));
        }
        return Ok(top - a[0].ln());
    }
    let mut shift = vec![f64::NEG_INFINITY; m];
    for p in points.chunks_exact(m) {
        for i in 0..m {
            let e = a[i] * p[i];
            if !e.is_finite() {
                return Err(Error::Overflow(format!("a_{i}·w = {e}")));
            }
            shift[i] = shift[i].max(e);
        }
    }
    let scaled: Vec<f64> =
        points.iter().enumerate().map(|(j, w)| (a[j % m] * w - shift[j % m]).exp()).collect();
    let log_norm: f64 = shift.iter().sum::<f64>() - a.iter().map(|v| v.ln()).sum::<f64>();
    Ok(hypervolume(&scaled, m).ln() + log_norm)
}

/// `∫ e^{a·x} 1{∃k : x < w_k componentwise} dx = (∏ 1/a_i)·HV({e^{a_i w_{k,i}}})`.
pub fn weighted_lower_set_integral(points: &[Vec<f64>], a: &[f64]) -> Result<f64> {
    if a.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DimensionMismatch("weights must be strictly positive".into()));
    }
    if points.iter().any(|p| p.len() != a.len()) {
        return Err(Error::DimensionMismatch("point and weight lengths differ".into()));
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let v = log_weighted_lower_set_integral(&flat, a)?;
    if v > f64::MAX_EXP as f64 * std::f64::consts::LN_2 {
        return Err(Error::Overflow(format!("integral e^{v:.1} exceeds the f64 range")));
    }
    Ok(v.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_overlapping_boxes() {
        let ln2 = 2f64.ln();
        let one = weighted_lower_set_integral(&[vec![ln2, 3f64.ln()]], &[1.0, 1.0]).unwrap();
        assert!((one - 6.0).abs() < 1e-12);
        let two = weighted_lower_set_integral(&[vec![ln2, 0.0], vec![0.0, ln2]], &[1.0, 1.0]).unwrap();
        assert!((two - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dominated_points_are_pruned() {
        let pts = [3.0, 3.0, 3.0, 1.0, 2.0, 1.0, 3.0, 3.0, 3.0];
        assert_eq!(nondominated(&pts, 3), vec![3.0, 3.0, 3.0]);
        assert!((hypervolume(&pts, 3) - 27.0).abs() < 1e-12);
    }

    #[test]
    fn three_dimensional_staircase() {
        // the unit cube plus three disjoint unit extensions
        let pts = [2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0];
        assert!((hypervolume(&pts, 3) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn huge_exponents_stay_finite_in_log_space() {
        let v = log_weighted_lower_set_integral(&[900.0, 1.0, 899.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!(v.is_finite() && v > 899.0);
        let e = weighted_lower_set_integral(&[vec![900.0, 1.0]], &[1.0, 1.0]);
        assert!(matches!(e, Err(Error::Overflow(_))));
    }
}
