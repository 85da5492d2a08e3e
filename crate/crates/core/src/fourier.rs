//! Real trigonometric interpolation on an equispaced periodic grid.
//!
//! Grids are small (tens to a few hundred points), so a direct O(n²)
//! transform with cached tables is fast enough and keeps the core free of
//! FFT dependencies.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;
use core::f64::consts::PI;

/// Table for an n-point grid φ_k = 2πk/n, n even.
#[derive(Debug, Clone)]
pub struct Trig {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

/// Coefficients of v(φ) = a₀ + Σ_{m=1}^{n/2} (a_m cos mφ + b_m sin mφ).
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Coeffs {
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    /// Amplitude √(a_m² + b_m²) of mode m.
    pub fn amplitude(&self, m: usize) -> f64 {
        self.a[m].hypot(self.b[m])
    }
}

impl Trig {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "periodic grid size must be even");
        let mut cos = Vec::with_capacity(n);
        let mut sin = Vec::with_capacity(n);
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            cos.push(t.cos());
            sin.push(t.sin());
        }
        Self { n, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn node(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n as f64
    }

    pub fn analyse(&self, v: &[f64]) -> Coeffs {
        let n = self.n;
        let half = n / 2;
        let mut a = alloc::vec![0.0; half + 1];
        let mut b = alloc::vec![0.0; half + 1];
        for m in 0..=half {
            let (mut sa, mut sb) = (0.0, 0.0);
            for (k, &vk) in v.iter().enumerate() {
                let idx = (m * k) % n;
                sa += vk * self.cos[idx];
                sb += vk * self.sin[idx];
            }
            a[m] = 2.0 * sa / n as f64;
            b[m] = 2.0 * sb / n as f64;
        }
        a[0] *= 0.5;
        a[half] *= 0.5;
        b[half] = 0.0;
        b[0] = 0.0;
        Coeffs { a, b }
    }

    pub fn synthesise(&self, c: &Coeffs) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut s = c.a[0];
                for m in 1..c.a.len() {
                    let idx = (m * k) % n;
                    s += c.a[m] * self.cos[idx] + c.b[m] * self.sin[idx];
                }
                s
            })
            .collect()
    }

    /// Spectral derivative at the nodes. The Nyquist mode is dropped, as it
    /// has no real derivative on the grid.
    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        let c = self.analyse(v);
        self.synthesise(&derivative_coeffs(&c))
    }
}

/// Coefficients of the derivative; the Nyquist term is discarded.
pub fn derivative_coeffs(c: &Coeffs) -> Coeffs {
    let n = c.a.len();
    let mut a = alloc::vec![0.0; n];
    let mut b = alloc::vec![0.0; n];
    for m in 1..n - 1 {
        let mf = m as f64;
        a[m] = mf * c.b[m];
        b[m] = -mf * c.a[m];
    }
    Coeffs { a, b }
}

/// Evaluates the trigonometric interpolant at any φ (rotation recurrence).
pub fn eval(c: &Coeffs, phi: f64) -> f64 {
    let (s1, c1) = phi.sin_cos();
    let (mut cm, mut sm) = (1.0, 0.0);
    let mut acc = c.a[0];
    for m in 1..c.a.len() {
        let cn = cm * c1 - sm * s1;
        let sn = sm * c1 + cm * s1;
        cm = cn;
        sm = sn;
        acc += c.a[m] * cm + c.b[m] * sm;
    }
    acc
}

/// Value and φ-derivative of the interpolant; the derivative drops the
/// Nyquist term, matching [`Trig::derivative`].
pub fn eval_with_derivative(c: &Coeffs, phi: f64) -> (f64, f64) {
    let (s1, c1) = phi.sin_cos();
    let (mut cm, mut sm) = (1.0, 0.0);
    let mut v = c.a[0];
    let mut d = 0.0;
    let last = c.a.len() - 1;
    for m in 1..c.a.len() {
        let cn = cm * c1 - sm * s1;
        let sn = sm * c1 + cm * s1;
        cm = cn;
        sm = sn;
        v += c.a[m] * cm + c.b[m] * sm;
        if m < last {
            d += m as f64 * (c.b[m] * cm - c.a[m] * sm);
        }
    }
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_derivative() {
        let t = Trig::new(16);
        let v: Vec<f64> = (0..16).map(|k| (3.0 * t.node(k)).sin() + 0.5 * t.node(k).cos() + 0.2).collect();
        let c = t.analyse(&v);
        assert!((c.b[3] - 1.0).abs() < 1e-14 && (c.a[1] - 0.5).abs() < 1e-14);
        let back = t.synthesise(&c);
        for k in 0..16 {
            assert!((back[k] - v[k]).abs() < 1e-14);
        }
        let d = t.derivative(&v);
        for k in 0..16 {
            let p = t.node(k);
            assert!((d[k] - (3.0 * (3.0 * p).cos() - 0.5 * p.sin())).abs() < 1e-13);
        }
        let p = 0.37;
        let (val, der) = eval_with_derivative(&c, p);
        assert!((val - ((3.0 * p).sin() + 0.5 * p.cos() + 0.2)).abs() < 1e-14);
        assert!((der - (3.0 * (3.0 * p).cos() - 0.5 * p.sin())).abs() < 1e-13);
        assert!((eval(&c, p) - val).abs() < 1e-15);
    }
}
