//! Composite Gauss–Legendre integration with panel doubling, and a monotone
//! cubic interpolant for tabulated integrands.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

const ORDER: usize = 20;
const START_PANELS: usize = 8;
const MAX_PANELS: usize = 4096;

/// Result of [`integrate`]; `change` is the relative difference between the
/// last two refinements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub change: f64,
    pub panels: usize,
}

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(ORDER).expect("order is at least 2"))
}

/// One Gauss–Legendre panel of order 20 over `[a, b]`.
pub fn panel(a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
    rule().integrate(a, b, f)
}

fn composite(rule: &GaussLegendre, a: f64, b: f64, panels: usize, f: &mut impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + h * p as f64;
            rule.integrate(lo, lo + h, &mut *f)
        })
        .sum()
}

/// `∫_a^b f`, doubling the panel count until two refinements agree to `rel_tol`.
///
/// Fails when the final change still exceeds `accept_tol`.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    accept_tol: f64,
) -> Result<Integral> {
    let rule = rule();
    let mut panels = START_PANELS;
    let mut prev = composite(rule, a, b, panels, &mut f);
    loop {
        panels *= 2;
        let cur = composite(rule, a, b, panels, &mut f);
        let change = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
        if !cur.is_finite() {
            return Err(Error::QuadratureNotConverged(format!("non-finite integral on [{a}, {b}]")));
        }
        if change <= rel_tol || panels >= MAX_PANELS {
            if change > accept_tol {
                return Err(Error::QuadratureNotConverged(format!(
                    "relative change {change:.2e} after {panels} panels"
                )));
            }
            return Ok(Integral { value: cur, change, panels });
        }
        prev = cur;
    }
}

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes; preserves
/// monotonicity of the data. Constant extrapolation outside the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` strictly increasing with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "need at least two knots");
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slope = vec![0.0; n];
        slope[0] = secant[0];
        slope[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (l, r) = (secant[i - 1], secant[i]);
            if l * r > 0.0 {
                let (hl, hr) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                let (w1, w2) = (2.0 * hr + hl, hr + 2.0 * hl);
                slope[i] = (w1 + w2) / (w1 / l + w2 / r);
            }
        }
        Self { x, y, slope }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slope[i] + h01 * self.y[i + 1] + h11 * h * self.slope[i + 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x: f64| (-x * x / 2.0).exp(), -10.0, 10.0, 1e-12, 1e-10).unwrap();
        assert!((r.value - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polynomial_is_exact_on_first_pass() {
        let r = integrate(|x: f64| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14, 1e-12).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
        assert_eq!(r.panels, 2 * START_PANELS);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| (1e6 * x).sin().abs() * 1e-3 + (x * 1e5).cos(), 0.0, 1.0, 1e-14, 1e-14);
        assert!(matches!(r, Err(Error::QuadratureNotConverged(_))));
    }

    #[test]
    fn monotone_cubic_interpolates_and_keeps_order() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 / (1.0 + (-3.0 * (v - 2.5)).exp())).collect();
        let s = MonotoneCubic::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi) - yi).abs() < 1e-15);
        }
        let mut last = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let v = s.eval(-0.5 + 6.0 * k as f64 / 1000.0);
            assert!(v >= last - 1e-15);
            last = v;
        }
        let cubic = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 8.0, 27.0]);
        assert!((cubic.eval(1.5) - 3.375).abs() < 0.2);
    }
}
