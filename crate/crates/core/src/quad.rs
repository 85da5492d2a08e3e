//! Adaptive Gauss–Kronrod (7, 15) quadrature.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = hl * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * hl, ((rk - rg) * hl).abs())
}

/// ∫ₐᵇ f with global error target max(abs_tol, rel_tol·|I|).
/// The interval of largest estimated error is bisected until the target is
/// met or 2000 intervals are in use.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, intervals: 0 };
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || parts.len() >= 2000 {
            return Quadrature { value, error, intervals: parts.len() };
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Quadrature { value, error, intervals: parts.len() + 1 };
        }
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Cumulative integral of tabulated data on a sorted grid, integrating the
/// cubic through the four nearest samples on each cell. Fourth order for
/// smooth data; used for cross-checks on tabulated functions.
pub fn cumulative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = alloc::vec![0.0; n];
    for i in 1..n {
        // Four-point stencil around [x_{i-1}, x_i].
        let lo = if i >= 2 { i - 2 } else { 0 };
        let lo = lo.min(n.saturating_sub(4));
        let idx: Vec<usize> = (lo..(lo + 4).min(n)).collect();
        out[i] = out[i - 1] + lagrange_integral(&idx, x, y, x[i - 1], x[i]);
    }
    out
}

fn lagrange_integral(idx: &[usize], x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    // Exact integral of the interpolating polynomial by 3-point Gauss.
    let g = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
    let w = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let mut s = 0.0;
    for q in 0..3 {
        let t = c + hl * g[q];
        let mut p = 0.0;
        for &i in idx {
            let mut l = 1.0;
            for &j in idx {
                if j != i {
                    l *= (t - x[j]) / (x[i] - x[j]);
                }
            }
            p += l * y[i];
        }
        s += w[q] * p;
    }
    s * hl
}
