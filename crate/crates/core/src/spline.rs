//! Cubic interpolating splines with not-a-knot end conditions.

use crate::{Error, Result};
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

/// Solves a tridiagonal system in place (Thomas algorithm, no pivoting).
pub(crate) fn tridiag(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = alloc::vec![0.0; n];
    let mut d = diag[0];
    c[0] = upper.first().copied().unwrap_or(0.0) / d;
    rhs[0] /= d;
    for i in 1..n {
        d = diag[i] - lower[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / d;
        }
        rhs[i] = (rhs[i] - lower[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

impl CubicSpline {
    /// Not-a-knot spline through (x, y); x strictly monotone, at least 4 knots.
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() || n < 4 {
            return Err(Error::domain("spline needs at least 4 matching knots"));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = if x[1] > x[0] {
            (x.to_vec(), y.to_vec())
        } else {
            (x.iter().rev().copied().collect(), y.iter().rev().copied().collect())
        };
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("spline knots must be strictly monotone"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let r: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]))
            .collect();
        // Unknowns M_1..M_{n-2}; M_0 and M_{n-1} eliminated via not-a-knot.
        let k = n - 2;
        let mut lo = alloc::vec![0.0; k - 1];
        let mut di = alloc::vec![0.0; k];
        let mut up = alloc::vec![0.0; k - 1];
        let mut rhs = r.clone();
        for j in 0..k {
            let i = j + 1;
            di[j] = 2.0 * (h[i - 1] + h[i]);
            if j > 0 {
                lo[j - 1] = h[i - 1];
            }
            if j + 1 < k {
                up[j] = h[i];
            }
        }
        let (h0, h1) = (h[0], h[1]);
        di[0] += h0 * (h0 + h1) / h1;
        if k > 1 {
            up[0] -= h0 * h0 / h1;
        }
        let (ha, hb) = (h[n - 3], h[n - 2]);
        di[k - 1] += hb * (ha + hb) / ha;
        if k > 1 {
            lo[k - 2] -= hb * hb / ha;
        }
        tridiag(&lo, &di, &up, &mut rhs);
        let mut m = alloc::vec![0.0; n];
        m[1..n - 1].copy_from_slice(&rhs);
        m[0] = ((h0 + h1) * m[1] - h0 * m[2]) / h1;
        m[n - 1] = ((ha + hb) * m[n - 2] - hb * m[n - 3]) / ha;
        Ok(Self { x, y, m })
    }

    fn cell(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap_or(core::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Value, first and second derivative at `t`.
    pub fn eval_all(&self, t: f64) -> (f64, f64, f64) {
        let i = self.cell(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_all(t).0
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.eval_all(t).1
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }
}
