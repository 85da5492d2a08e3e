//! Transonic flows with vorticity that depend on (θ, φ) only, built by a
//! Picard iteration around the irrotational background.
//!
//! Perturbations V₁ = U₁ − Ū₁, V₂ = U₂ − Ū₂, V₃ = U₃, V₄ = B − B₀,
//! V₅ = A − A₀ and the polar vorticity ω_θ live on a node grid
//! [θ₋, θ₊] × [0, 2π). One step of the map, from a frozen iterate V̄:
//!
//! 1. V₄, V₅ are constant along dφ/dθ = V̄₃/((Ū₂+V̄₂) sin θ);
//! 2. ω_θ solves ∂_θω + (V̄₃/((Ū₂+V̄₂) sin θ))∂_φω + Pω = S along the same
//!    characteristics (integrating factor);
//! 3. V₁ solves a linear elliptic Robin problem, one Fourier mode at a time;
//! 4. V₂ = ∂_θV₁ + V̄₃ω/(Ū₂+V̄₂), V₃ = ∂_φV₁/sin θ − ω.
//!
//! φ-derivatives are spectral; θ-derivatives are second-order differences
//! (one-sided at the ends). Characteristics are traced one layer at a time
//! with RK4 and trigonometric interpolation in φ.

use crate::background::{background_derivs, coefficients_at, BackgroundTable};
use crate::fourier::{self, Coeffs, Trig};
use crate::gas::{self, GasConstants};
use crate::ode::{self, Flow, Options, Segment};
use crate::roots::brent;
use crate::spline::CubicSpline;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

/// A real trigonometric polynomial Σ (cos[m] cos mφ + sin[m] sin mφ).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Profile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { cos: vec![c], sin: vec![0.0] }
    }

    pub fn cos_mode(m: usize, amp: f64) -> Self {
        let mut p = Self { cos: vec![0.0; m + 1], sin: vec![0.0; m + 1] };
        p.cos[m] = amp;
        p
    }

    pub fn sin_mode(m: usize, amp: f64) -> Self {
        let mut p = Self { cos: vec![0.0; m + 1], sin: vec![0.0; m + 1] };
        p.sin[m] = amp;
        p
    }

    pub fn plus(mut self, other: &Profile) -> Self {
        let n = self.cos.len().max(other.cos.len()).max(self.sin.len()).max(other.sin.len());
        self.cos.resize(n, 0.0);
        self.sin.resize(n, 0.0);
        for (m, v) in other.cos.iter().enumerate() {
            self.cos[m] += v;
        }
        for (m, v) in other.sin.iter().enumerate() {
            self.sin[m] += v;
        }
        self
    }

    pub fn eval(&self, phi: f64) -> f64 {
        let c: f64 = self.cos.iter().enumerate().map(|(m, a)| a * (m as f64 * phi).cos()).sum();
        let s: f64 = self.sin.iter().enumerate().map(|(m, b)| b * (m as f64 * phi).sin()).sum();
        c + s
    }

    /// Highest mode with a non-zero coefficient.
    pub fn max_mode(&self) -> usize {
        let top = |v: &[f64]| v.iter().rposition(|x| *x != 0.0).unwrap_or(0);
        top(&self.cos).max(top(&self.sin))
    }
}

/// Boundary data: B = B₀ + εB_in, A = A₀ + εA_in, ω_θ = εK_in at θ₋, and
/// U₂ − μ±U₁ = Ū₂ − μ±Ū₁ + εw at θ±.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationData {
    pub epsilon: f64,
    pub b_in: Profile,
    pub a_in: Profile,
    pub k_in: Profile,
    pub w1: Profile,
    pub w2: Profile,
    pub mu_minus: f64,
    pub mu_plus: f64,
}

impl PerturbationData {
    /// B_in = cos φ, A_in = 0.5 sin φ, K_in = 0.3 cos φ, w₁ = 0.2 sin φ,
    /// w₂ = 0.1 cos φ, μ₋ = μ₊ = 1.
    pub fn single_harmonic(epsilon: f64) -> Self {
        Self {
            epsilon,
            b_in: Profile::cos_mode(1, 1.0),
            a_in: Profile::sin_mode(1, 0.5),
            k_in: Profile::cos_mode(1, 0.3),
            w1: Profile::sin_mode(1, 0.2),
            w2: Profile::cos_mode(1, 0.1),
            mu_minus: 1.0,
            mu_plus: 1.0,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    fn validate(&self, nphi: usize) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon must be finite and non-negative"));
        }
        if !(self.mu_minus > 0.0) || !self.mu_plus.is_finite() {
            return Err(Error::domain("need mu_minus > 0 and a finite mu_plus"));
        }
        let top = [&self.b_in, &self.a_in, &self.k_in, &self.w1, &self.w2].iter().map(|p| p.max_mode()).max().unwrap_or(0);
        if 2 * top >= nphi {
            return Err(Error::domain(format!("boundary data have mode {top}, not resolved by {nphi} phi nodes")));
        }
        Ok(())
    }
}

/// Which form of the quadratic remainder G drives the V₁ equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remainder {
    /// G = L(V̄) − N(Ū + V̄), with N the full continuity operator and L its
    /// linearisation; the fixed point then solves the nonlinear equation.
    Exact,
    /// The expanded display, term by term. It differs from `Exact` by
    /// −2(γ−1)Ū₁V̄₁∂_θV̄₂.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationalConfig {
    pub ntheta: usize,
    pub nphi: usize,
    /// Sup-norm update below which the iteration stops.
    pub tol: f64,
    pub max_iterations: usize,
    pub remainder: Remainder,
    /// Node clustering c towards both ends; 0 gives a uniform grid.
    pub grading: f64,
}

impl Default for RotationalConfig {
    fn default() -> Self {
        Self { ntheta: 256, nphi: 64, tol: 1e-10, max_iterations: 60, remainder: Remainder::Exact, grading: 0.05 }
    }
}

/// Background quantities at the θ nodes.
///
/// Near θ₋ the coefficients grow like 1/(θ − θ_a) and near θ₊ the polar
/// velocity vanishes like θ_b − θ, so the nodes θ(ξ_j), ξ_j = j/(n−1), equidistribute
/// w(θ) = 1 + c/(θ − θ_a) + c/(θ_b − θ). Differences are taken in ξ and
/// divided by the metric θ_ξ.
#[derive(Debug, Clone)]
pub struct BackgroundGrid {
    pub theta: Vec<f64>,
    /// Spacing in ξ.
    pub dxi: f64,
    /// θ_ξ at the nodes.
    pub metric: Vec<f64>,
    /// θ_ξξ at the nodes.
    pub metric_d: Vec<f64>,
    pub sin: Vec<f64>,
    pub cot: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub du1: Vec<f64>,
    pub du2: Vec<f64>,
    pub c2: Vec<f64>,
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
    pub a22: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub k33: Vec<f64>,
    /// k̄₂ + 2Ā₁₂/Ā₂₂.
    pub beta: Vec<f64>,
    /// e₁/Ā₂₂.
    pub c0: Vec<f64>,
    pub b0: f64,
    /// Entropy constant of the background, 1/γ.
    pub a0: f64,
    pub theta_so: f64,
    pub gas: GasConstants,
}

impl BackgroundGrid {
    pub fn new(bg: &BackgroundTable, ntheta: usize, grading: f64) -> Result<Self> {
        if ntheta < 8 {
            return Err(Error::domain("need at least 8 theta nodes"));
        }
        if !(grading >= 0.0 && grading.is_finite()) {
            return Err(Error::domain("grading must be finite and non-negative"));
        }
        let (lo, hi) = (bg.theta_minus, bg.theta_plus);
        let (ta, tb, c) = (bg.theta_a, bg.theta_b, grading);
        let big_f = |t: f64| t + c * (t - ta).ln() - c * (tb - t).ln();
        let w = |t: f64| 1.0 + c / (t - ta) + c / (tb - t);
        let dw = |t: f64| -c / ((t - ta) * (t - ta)) + c / ((tb - t) * (tb - t));
        let (f0, total) = (big_f(lo), big_f(hi) - big_f(lo));
        let dxi = 1.0 / (ntheta - 1) as f64;
        let mut theta = Vec::with_capacity(ntheta);
        for j in 0..ntheta {
            let t = if j == 0 {
                lo
            } else if j == ntheta - 1 {
                hi
            } else {
                let target = f0 + total * j as f64 * dxi;
                brent(|t| big_f(t) - target, lo, hi, 1e-15)?
            };
            theta.push(t);
        }
        let metric: Vec<f64> = theta.iter().map(|&t| total / w(t)).collect();
        let metric_d: Vec<f64> = theta.iter().map(|&t| -total * total * dw(t) / w(t).powi(3)).collect();
        let gas = bg.gas;
        let g = gas.gamma;
        let b0 = bg.init.b0;
        let mut out = Self {
            theta: theta.clone(),
            dxi,
            metric,
            metric_d,
            sin: Vec::new(),
            cot: Vec::new(),
            u1: Vec::new(),
            u2: Vec::new(),
            du1: Vec::new(),
            du2: Vec::new(),
            c2: Vec::new(),
            rho: Vec::new(),
            drho: Vec::new(),
            a22: Vec::new(),
            e1: Vec::new(),
            e2: Vec::new(),
            k33: Vec::new(),
            beta: Vec::new(),
            c0: Vec::new(),
            b0,
            a0: 1.0 / g,
            theta_so: bg.theta_so(),
            gas,
        };
        for &t in &theta {
            let (u1, u2) = bg
                .state(t)
                .ok_or_else(|| Error::domain(format!("background undefined at theta = {t}")))?;
            let c2 = bg.c2_of(u1, u2);
            let d = background_derivs(t, u1, u2, c2, gas);
            let co = coefficients_at(t, u1, u2, 1.0, b0, gas);
            let rho = c2.powf(1.0 / (g - 1.0));
            let (sn, cs) = t.sin_cos();
            out.sin.push(sn);
            out.cot.push(cs / sn);
            out.u1.push(u1);
            out.u2.push(u2);
            out.du1.push(d.du1);
            out.du2.push(d.du2);
            out.c2.push(c2);
            out.rho.push(rho);
            out.drho.push(rho * d.dc2 / ((g - 1.0) * c2));
            out.a22.push(co.a22);
            out.e1.push(co.e1);
            out.e2.push(co.e2);
            out.k33.push(co.k33);
            out.beta.push(co.k2 + 2.0 * co.a12 / co.a22);
            out.c0.push(co.e1 / co.a22);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Second-order θ-derivative along each φ column of a θ-major field with
    /// `nphi` columns, one-sided at the ends.
    pub fn d_theta(&self, f: &[f64], nphi: usize) -> Vec<f64> {
        let nt = self.len();
        let h = self.dxi;
        let mut out = vec![0.0; f.len()];
        let at = |j: usize, k: usize| f[j * nphi + k];
        for k in 0..nphi {
            out[k] = (-3.0 * at(0, k) + 4.0 * at(1, k) - at(2, k)) / (2.0 * h);
            for j in 1..nt - 1 {
                out[j * nphi + k] = (at(j + 1, k) - at(j - 1, k)) / (2.0 * h);
            }
            let n = nt - 1;
            out[n * nphi + k] = (3.0 * at(n, k) - 4.0 * at(n - 1, k) + at(n - 2, k)) / (2.0 * h);
        }
        for (i, v) in out.iter_mut().enumerate() {
            *v /= self.metric[i / nphi];
        }
        out
    }
}

/// Fields on the (θ, φ) node grid, stored θ-major: index j·nφ + k.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    pub ntheta: usize,
    pub nphi: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// V₁ … V₅.
    pub v: [Vec<f64>; 5],
    pub omega: Vec<f64>,
    pub iteration: usize,
}

impl TorusField {
    pub fn zeros(theta: &[f64], nphi: usize) -> Self {
        let n = theta.len() * nphi;
        let phi = (0..nphi).map(|k| 2.0 * core::f64::consts::PI * k as f64 / nphi as f64).collect();
        Self {
            ntheta: theta.len(),
            nphi,
            theta: theta.to_vec(),
            phi,
            v: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            omega: vec![0.0; n],
            iteration: 0,
        }
    }

    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.nphi + k
    }

    fn fields(&self) -> [&Vec<f64>; 6] {
        [&self.v[0], &self.v[1], &self.v[2], &self.v[3], &self.v[4], &self.omega]
    }

    /// Sup norm of the difference over all six fields.
    pub fn sup_diff(&self, other: &TorusField) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields().iter())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// max over V₁ … V₅ of the sup norm.
    pub fn v_sup(&self) -> f64 {
        self.v.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn omega_sup(&self) -> f64 {
        self.omega.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solution of m₁′ + m₁² + βm₁ + c = 0, m₁(θ₋) = μ₋ at the nodes, with
/// a = exp∫β and m₂ = a·m₁.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub theta: Vec<f64>,
    pub m1: Vec<f64>,
    pub a: Vec<f64>,
    pub m2: Vec<f64>,
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// m₂(θ₊)/a(θ₊) − μ₊; negative means the Robin problem is uniquely solvable.
    pub uniqueness_margin: f64,
    /// μ₋/a(θ₊) − μ₊, the admissibility condition on (μ₋, μ₊).
    pub condition_margin: f64,
    /// m₂ > 0 at every node.
    pub lower_bound_holds: bool,
    /// m₂ < μ₋ at every node after the first.
    pub upper_bound_holds: bool,
    /// m₂ strictly decreasing node to node.
    pub m2_decreasing: bool,
}

/// Integrates the Riccati equation with coefficients `coef(θ) = (β, c)`.
pub fn solve_riccati<F>(mut coef: F, theta: &[f64], mu_minus: f64, mu_plus: f64) -> Result<RiccatiSolution>
where
    F: FnMut(f64) -> Option<(f64, f64)>,
{
    if !(mu_minus > 0.0) {
        return Err(Error::domain("mu_minus must be positive"));
    }
    let (lo, hi) = (theta[0], theta[theta.len() - 1]);
    let opts = Options::<2>::new(1e-12, 1e-14);
    let mut segs: Vec<Segment<2>> = Vec::new();
    let run = ode::integrate(
        |t, y| {
            let (b, c) = coef(t)?;
            Some([-y[0] * y[0] - b * y[0] - c, b])
        },
        lo,
        [mu_minus, 0.0],
        hi,
        &opts,
        |s| {
            segs.push(*s);
            Flow::Continue
        },
    );
    if run.halt != ode::Halt::Reached || !run.y.iter().all(|v| v.is_finite()) {
        return Err(Error::invariant(format!(
            "Riccati solution blew up near theta = {} ({:?}); the background tables are suspect",
            run.t, run.halt
        )));
    }
    let mut m1 = Vec::with_capacity(theta.len());
    let mut a = Vec::with_capacity(theta.len());
    let mut s = 0;
    for &t in theta {
        let y = if t == lo {
            [mu_minus, 0.0]
        } else {
            while s + 1 < segs.len() && segs[s].t1() < t {
                s += 1;
            }
            segs[s].eval(t)
        };
        m1.push(y[0]);
        a.push(y[1].exp());
    }
    let m2: Vec<f64> = m1.iter().zip(&a).map(|(m, a)| m * a).collect();
    let n = theta.len();
    let a_hi = a[n - 1];
    Ok(RiccatiSolution {
        theta: theta.to_vec(),
        uniqueness_margin: m2[n - 1] / a_hi - mu_plus,
        condition_margin: mu_minus / a_hi - mu_plus,
        lower_bound_holds: m2.iter().all(|v| *v > 0.0),
        upper_bound_holds: m2[1..].iter().all(|v| *v < mu_minus),
        m2_decreasing: m2.windows(2).all(|w| w[1] < w[0]),
        m1,
        a,
        m2,
        mu_minus,
        mu_plus,
    })
}

/// The Riccati problem with β = k̄₂ + 2Ā₁₂/Ā₂₂ and c = e₁/Ā₂₂ from the background.
pub fn riccati_m1(bg: &BackgroundTable, theta: &[f64], mu_minus: f64, mu_plus: f64) -> Result<RiccatiSolution> {
    solve_riccati(
        |t| {
            let (u1, u2) = bg.state(t)?;
            let co = coefficients_at(t, u1, u2, 1.0, bg.init.b0, bg.gas);
            Some((co.k2 + 2.0 * co.a12 / co.a22, co.e1 / co.a22))
        },
        theta,
        mu_minus,
        mu_plus,
    )
}

fn d_phi(trig: &Trig, f: &[f64], ntheta: usize) -> Vec<f64> {
    let np = trig.len();
    let mut out = Vec::with_capacity(f.len());
    for j in 0..ntheta {
        out.extend(trig.derivative(&f[j * np..(j + 1) * np]));
    }
    out
}

/// Per-layer Fourier coefficients of one field, with cubic interpolation to
/// the midpoint between two layers.
struct Layers {
    c: Vec<Coeffs>,
}

impl Layers {
    fn new(trig: &Trig, f: &[f64], ntheta: usize) -> Self {
        let np = trig.len();
        Self { c: (0..ntheta).map(|j| trig.analyse(&f[j * np..(j + 1) * np])).collect() }
    }

    /// Coefficients at the midpoint of θ_{j−1} and θ_j, by cubic Lagrange
    /// interpolation over four surrounding layers.
    fn mid(&self, j: usize, theta: &[f64]) -> Coeffs {
        let n = self.c.len();
        let first = if j == 1 { 0 } else if j == n - 1 { n - 4 } else { j - 2 };
        let x = 0.5 * (theta[j - 1] + theta[j]);
        let nodes = [first, first + 1, first + 2, first + 3];
        let m = self.c[0].a.len();
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        for &l in &nodes {
            let wt: f64 = nodes.iter().filter(|&&q| q != l).map(|&q| (x - theta[q]) / (theta[l] - theta[q])).product();
            for i in 0..m {
                a[i] += wt * self.c[l].a[i];
                b[i] += wt * self.c[l].b[i];
            }
        }
        Coeffs { a, b }
    }
}

/// Tridiagonal solve (Thomas); a pivot below `tiny` is reported as singular.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], tiny: f64) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut p = diag[0];
    if p.abs() < tiny {
        return None;
    }
    c[0] = upper[0] / p;
    d[0] = rhs[0] / p;
    for i in 1..n {
        p = diag[i] - lower[i] * c[i - 1];
        if p.abs() < tiny {
            return None;
        }
        c[i] = if i + 1 < n { upper[i] / p } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / p;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Sonic points s(φ) where |M|² = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SonicSurface {
    pub phi: Vec<f64>,
    pub s: Vec<f64>,
    /// sup |s − θ_so|.
    pub sup_dev: f64,
    /// max of sup |s − θ_so|, sup |s′|, sup |s″| (spectral derivatives).
    pub c2_dev: f64,
    /// Largest ∂_θ|M|² at (s(φ), φ); negative for a transversal crossing.
    pub max_slope: f64,
    /// |M|² strictly decreasing in θ along every column.
    pub monotone: bool,
}

/// Max residuals of the five equations of the steady system, and of the
/// divergence identity for the vorticity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Continuity, radial, polar and azimuthal momentum, entropy transport.
    pub equations: [f64; 5],
    pub vorticity_divergence: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.equations.iter().fold(self.vorticity_divergence, |m, v| m.max(*v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub solution: TorusField,
    /// Sup-norm update per iteration.
    pub history: Vec<f64>,
    /// Largest ratio of successive updates, counted while both exceed
    /// 100·tol (below that the ratio measures round-off).
    pub contraction_ratio: f64,
    pub converged: bool,
    /// ‖V‖∞/ε over V₁ … V₅ (0 when ε = 0).
    pub v_over_eps: f64,
    pub riccati: RiccatiSolution,
    pub sonic_surface: Option<SonicSurface>,
    pub residuals: Option<ResidualReport>,
    /// max |G_printed − G_exact| at the final iterate.
    pub printed_remainder_gap: f64,
    /// Largest amplitude of modes above nφ/3 relative to the leading mode,
    /// over all fields and layers.
    pub spectral_tail: f64,
}

/// The discrete problem on a fixed grid.
#[derive(Debug, Clone)]
pub struct RotationalProblem {
    pub bg: BackgroundGrid,
    pub data: PerturbationData,
    pub cfg: RotationalConfig,
    trig: Trig,
    table: BackgroundTable,
}

impl RotationalProblem {
    pub fn new(bg: &BackgroundTable, data: PerturbationData, cfg: RotationalConfig) -> Result<Self> {
        if cfg.nphi < 8 || cfg.nphi % 2 != 0 {
            return Err(Error::domain("nphi must be even and at least 8"));
        }
        data.validate(cfg.nphi)?;
        Ok(Self { bg: BackgroundGrid::new(bg, cfg.ntheta, cfg.grading)?, data, cfg, trig: Trig::new(cfg.nphi), table: bg.clone() })
    }

    pub fn zero_field(&self) -> TorusField {
        TorusField::zeros(&self.bg.theta, self.cfg.nphi)
    }

    fn dims(&self) -> (usize, usize) {
        (self.bg.len(), self.cfg.nphi)
    }

    fn phi(&self, k: usize) -> f64 {
        self.trig.node(k)
    }

    /// Ū₂ + V̄₂ at every node, refusing values below a tenth of Ū₂.
    fn polar_speed(&self, frozen: &TorusField) -> Result<Vec<f64>> {
        let (nt, np) = self.dims();
        let mut out = Vec::with_capacity(nt * np);
        for j in 0..nt {
            for k in 0..np {
                let u = self.bg.u2[j] + frozen.v[1][j * np + k];
                if !(u > 0.1 * self.bg.u2[j]) {
                    return Err(Error::domain(format!(
                        "polar velocity degenerates at theta = {}, phi = {}: U2 = {u}",
                        self.bg.theta[j],
                        self.phi(k)
                    )));
                }
                out.push(u);
            }
        }
        Ok(out)
    }

    /// dφ/dθ = V̄₃/((Ū₂ + V̄₂) sin θ) at the nodes.
    fn char_speed(&self, frozen: &TorusField, u2: &[f64]) -> Vec<f64> {
        let (nt, np) = self.dims();
        (0..nt * np).map(|i| frozen.v[2][i] / (u2[i] * self.bg.sin[i / np])).collect()
    }

    /// Traces each node back one layer with RK4 on (φ, I, J), where
    /// dφ/dθ = a, dI/dθ = −P, dJ/dθ = −e^{−I}S. Returns (φ*, I, J) per node
    /// of layers 1 … nθ−1; `ps` = None skips I and J.
    fn trace(&self, a: &[f64], ps: Option<(&[f64], &[f64])>) -> Vec<[f64; 3]> {
        let (nt, np) = self.dims();
        let la = Layers::new(&self.trig, a, nt);
        let lp = ps.map(|(p, s)| (Layers::new(&self.trig, p, nt), Layers::new(&self.trig, s, nt)));
        let th = &self.bg.theta;
        let mut out = vec![[0.0; 3]; nt * np];
        for j in 1..nt {
            let ma = la.mid(j, th);
            let stage_a = [&la.c[j], &ma, &ma, &la.c[j - 1]];
            let mids = lp.as_ref().map(|(p, s)| (p.mid(j, th), s.mid(j, th)));
            let f = |st: usize, y: &[f64; 3]| -> [f64; 3] {
                let da = fourier::eval(stage_a[st], y[0]);
                match (&lp, &mids) {
                    (Some((p, s)), Some((mp, ms))) => {
                        let (pc, sc) = match st {
                            0 => (&p.c[j], &s.c[j]),
                            3 => (&p.c[j - 1], &s.c[j - 1]),
                            _ => (mp, ms),
                        };
                        [da, -fourier::eval(pc, y[0]), -(-y[1]).exp() * fourier::eval(sc, y[0])]
                    }
                    _ => [da, 0.0, 0.0],
                }
            };
            let dt = th[j - 1] - th[j];
            for k in 0..np {
                let y0 = [self.phi(k), 0.0, 0.0];
                let add = |y: &[f64; 3], k: &[f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
                let k1 = f(0, &y0);
                let k2 = f(1, &add(&y0, &k1, 0.5 * dt));
                let k3 = f(2, &add(&y0, &k2, 0.5 * dt));
                let k4 = f(3, &add(&y0, &k3, dt));
                let mut y = y0;
                for i in 0..3 {
                    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                out[j * np + k] = y;
            }
        }
        out
    }

    /// V₄ and V₅, constant along the frozen characteristics.
    pub fn transport_scalars(&self, frozen: &TorusField) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nt, np) = self.dims();
        let u2 = self.polar_speed(frozen)?;
        let a = self.char_speed(frozen, &u2);
        let feet = self.trace(&a, None);
        let eps = self.data.epsilon;
        let mut v4 = vec![0.0; nt * np];
        let mut v5 = vec![0.0; nt * np];
        for k in 0..np {
            v4[k] = eps * self.data.b_in.eval(self.phi(k));
            v5[k] = eps * self.data.a_in.eval(self.phi(k));
        }
        for j in 1..nt {
            let c4 = self.trig.analyse(&v4[(j - 1) * np..j * np]);
            let c5 = self.trig.analyse(&v5[(j - 1) * np..j * np]);
            for k in 0..np {
                let p = feet[j * np + k][0];
                v4[j * np + k] = fourier::eval(&c4, p);
                v5[j * np + k] = fourier::eval(&c5, p);
            }
        }
        Ok((v4, v5))
    }

    /// Coefficient P and source S of the vorticity transport at the nodes.
    pub fn vorticity_terms(&self, frozen: &TorusField, v4: &[f64], v5: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nt, np) = self.dims();
        let u2 = self.polar_speed(frozen)?;
        let a = self.char_speed(frozen, &u2);
        let da = d_phi(&self.trig, &a, nt);
        let d4 = d_phi(&self.trig, v4, nt);
        let d5 = d_phi(&self.trig, v5, nt);
        let g = self.bg.gas.gamma;
        let mut p = vec![0.0; nt * np];
        let mut s = vec![0.0; nt * np];
        for j in 0..nt {
            for k in 0..np {
                let i = j * np + k;
                let w1 = self.bg.u1[j] + frozen.v[0][i];
                let w2 = u2[i];
                let w3 = frozen.v[2][i];
                let sn = self.bg.sin[j];
                p[i] = w1 / w2 + da[i] + self.bg.cot[j];
                let h = self.bg.b0 + v4[i] - 0.5 * (w1 * w1 + w2 * w2 + w3 * w3);
                s[i] = d4[i] / (w2 * sn) - h / (g * (self.bg.a0 + v5[i]) * w2) * d5[i] / sn;
            }
        }
        Ok((p, s))
    }

    /// ω_θ from its transport equation with ω_θ(θ₋) = εK_in.
    pub fn transport_vorticity(&self, frozen: &TorusField, v4: &[f64], v5: &[f64]) -> Result<Vec<f64>> {
        let (nt, np) = self.dims();
        let u2 = self.polar_speed(frozen)?;
        let a = self.char_speed(frozen, &u2);
        let (p, s) = self.vorticity_terms(frozen, v4, v5)?;
        let feet = self.trace(&a, Some((&p, &s)));
        let mut w = vec![0.0; nt * np];
        for k in 0..np {
            w[k] = self.data.epsilon * self.data.k_in.eval(self.phi(k));
        }
        for j in 1..nt {
            let c = self.trig.analyse(&w[(j - 1) * np..j * np]);
            for k in 0..np {
                let [phi, i, jj] = feet[j * np + k];
                w[j * np + k] = fourier::eval(&c, phi) * (-i).exp() + jj;
            }
        }
        Ok(w)
    }

    /// The remainder G(V₄, V̄) at every node.
    pub fn remainder(&self, frozen: &TorusField, v4: &[f64], form: Remainder) -> Vec<f64> {
        let (nt, np) = self.dims();
        let v = &frozen.v;
        let dt: [Vec<f64>; 3] = [self.bg.d_theta(&v[0], np), self.bg.d_theta(&v[1], np), self.bg.d_theta(&v[2], np)];
        let dp: [Vec<f64>; 3] =
            [d_phi(&self.trig, &v[0], nt), d_phi(&self.trig, &v[1], nt), d_phi(&self.trig, &v[2], nt)];
        let g = self.bg.gas.gamma;
        let bg = &self.bg;
        let mut out = vec![0.0; nt * np];
        for j in 0..nt {
            let (sn, cot) = (bg.sin[j], bg.cot[j]);
            let (b1, b2, db1, db2) = (bg.u1[j], bg.u2[j], bg.du1[j], bg.du2[j]);
            for k in 0..np {
                let i = j * np + k;
                let (x1, x2, x3, x4) = (v[0][i], v[1][i], v[2][i], v4[i]);
                let (t1, t2, t3) = (dt[0][i], dt[1][i], dt[2][i]);
                let (p1, p2, p3) = (dp[0][i] / sn, dp[1][i] / sn, dp[2][i] / sn);
                out[i] = match form {
                    Remainder::Exact => {
                        let (w1, w2, w3) = (b1 + x1, b2 + x2, x3);
                        let c2 = (g - 1.0) * (bg.b0 + x4 - 0.5 * (w1 * w1 + w2 * w2 + w3 * w3));
                        let (dw1, dw2) = (db1 + t1, db2 + t2);
                        let n = (c2 - w2 * w2) * dw2 + (c2 - w3 * w3) * p3
                            - w2 * w3 * (t3 + p2)
                            - w1 * w2 * dw1
                            - w1 * w3 * p1
                            + c2 * (2.0 * w1 + cot * w2);
                        // Subtract N(Ū) so that G(0) = 0 despite round-off in the tables.
                        let n0 = bg.a22[j] * db2 - b1 * b2 * db1 + bg.c2[j] * (2.0 * b1 + cot * b2);
                        let l = bg.a22[j] * t2 + bg.c2[j] * p3 + bg.e1[j] * x1 + (bg.e2[j] - b1 * b2) * x2 - b1 * b2 * t1;
                        l - (n - n0)
                    }
                    Remainder::AsPrinted => {
                        let sq = x1 * x1 + x2 * x2 + x3 * x3;
                        -((g - 1.0) * x4 - 0.5 * (g - 1.0) * (x1 * x1 + x3 * x3) - 0.5 * (g + 1.0) * x2 * x2) * (db2 + t2)
                            - (g - 1.0) * b1 * x1 * t2
                            + (g + 1.0) * b2 * x2 * t2
                            + x1 * x2 * (db1 + t1)
                            + (b2 * x1 + b1 * x2) * t1
                            + (g - 1.0) * (b1 * x1 + b2 * x2) * (2.0 * x1 + cot * x2)
                            - (g - 1.0) * (x4 - 0.5 * sq) * (2.0 * (b1 + x1) + cot * (b2 + x2))
                            - ((g - 1.0) * (x4 - b1 * x1 - b2 * x2 - 0.5 * (x1 * x1 + x2 * x2)) - 0.5 * (g + 1.0) * x3 * x3) * p3
                            + (b2 + x2) * x3 * (t3 + p2)
                            + (b1 + x1) * x3 * p1
                    }
                };
            }
        }
        out
    }

    /// W = V̄₃ω/(Ū₂ + V̄₂).
    fn w_field(&self, frozen: &TorusField, omega: &[f64]) -> Result<Vec<f64>> {
        let u2 = self.polar_speed(frozen)?;
        Ok(frozen.v[2].iter().zip(omega).zip(&u2).map(|((v3, w), u)| v3 * w / u).collect())
    }

    /// Robin data d₋, d₊ per φ node: εw − W at θ₋ and θ₊.
    fn robin_data(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nt, np) = self.dims();
        let eps = self.data.epsilon;
        let lo = (0..np).map(|k| eps * self.data.w1.eval(self.phi(k)) - w[k]).collect();
        let hi = (0..np).map(|k| eps * self.data.w2.eval(self.phi(k)) - w[(nt - 1) * np + k]).collect();
        (lo, hi)
    }

    /// One Fourier mode of the Robin problem
    /// v″ + βv′ + (e₁/Ā₂₂ − m²k̄₃₃/sin²θ)v = g, v′ − μ±v = d± at θ±,
    /// by central differences in ξ with ghost points.
    pub fn solve_mode_bvp(&self, m: usize, rhs: &[f64], d_minus: f64, d_plus: f64) -> Result<Vec<f64>> {
        let bg = &self.bg;
        let n = bg.len();
        let h = bg.dxi;
        let mm = (m * m) as f64;
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut scale = 0.0f64;
        for j in 0..n {
            // v_θθ = (v_ξξ − (θ_ξξ/θ_ξ)v_ξ)/θ_ξ², v_θ = v_ξ/θ_ξ.
            let jm = bg.metric[j];
            let second = 1.0 / (jm * jm * h * h);
            let first = (bg.beta[j] / jm - bg.metric_d[j] / (jm * jm * jm)) / (2.0 * h);
            lo[j] = second - first;
            up[j] = second + first;
            di[j] = -2.0 * second + bg.c0[j] - mm * bg.k33[j] / (bg.sin[j] * bg.sin[j]);
            scale = scale.max(second);
        }
        let (mu_m, mu_p) = (self.data.mu_minus, self.data.mu_plus);
        let (g0, g1) = (2.0 * h * bg.metric[0], 2.0 * h * bg.metric[n - 1]);
        // v₋₁ = v₁ − 2hθ_ξ(μ₋v₀ + d₋), v_n = v_{n−2} + 2hθ_ξ(μ₊v_{n−1} + d₊).
        di[0] -= g0 * mu_m * lo[0];
        up[0] += lo[0];
        r[0] += g0 * lo[0] * d_minus;
        di[n - 1] += g1 * mu_p * up[n - 1];
        lo[n - 1] += up[n - 1];
        r[n - 1] -= g1 * up[n - 1] * d_plus;
        lo[0] = 0.0;
        up[n - 1] = 0.0;
        thomas(&lo, &di, &up, &r, 1e-12 * scale).ok_or_else(|| {
            Error::invariant(format!("singular Robin mode matrix for m = {m}; the admissibility condition on mu is violated"))
        })
    }

    /// V₁ from the elliptic Robin problem, mode by mode.
    pub fn elliptic_v1(&self, frozen: &TorusField, v4: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        let (nt, np) = self.dims();
        let bg = &self.bg;
        let w = self.w_field(frozen, omega)?;
        let dw = bg.d_theta(&w, np);
        let dom = d_phi(&self.trig, omega, nt);
        let g = self.remainder(frozen, v4, self.cfg.remainder);
        let mut g1 = vec![0.0; nt * np];
        for j in 0..nt {
            for k in 0..np {
                let i = j * np + k;
                g1[i] = g[i] / bg.a22[j] - dw[i] - (bg.e2[j] - bg.u1[j] * bg.u2[j]) / bg.a22[j] * w[i]
                    + bg.k33[j] / bg.sin[j] * dom[i];
            }
        }
        let (dm, dp) = self.robin_data(&w);
        let rows: Vec<Coeffs> = (0..nt).map(|j| self.trig.analyse(&g1[j * np..(j + 1) * np])).collect();
        let cm = self.trig.analyse(&dm);
        let cp = self.trig.analyse(&dp);
        let modes = cm.modes();
        let mut out_a = vec![vec![0.0; modes]; nt];
        let mut out_b = vec![vec![0.0; modes]; nt];
        for m in 0..modes {
            let ra: Vec<f64> = rows.iter().map(|c| c.a[m]).collect();
            let va = self.solve_mode_bvp(m, &ra, cm.a[m], cp.a[m])?;
            let rb: Vec<f64> = rows.iter().map(|c| c.b[m]).collect();
            let vb = if rb.iter().all(|x| *x == 0.0) && cm.b[m] == 0.0 && cp.b[m] == 0.0 {
                vec![0.0; nt]
            } else {
                self.solve_mode_bvp(m, &rb, cm.b[m], cp.b[m])?
            };
            for j in 0..nt {
                out_a[j][m] = va[j];
                out_b[j][m] = vb[j];
            }
        }
        let mut v1 = Vec::with_capacity(nt * np);
        for j in 0..nt {
            v1.extend(self.trig.synthesise(&Coeffs { a: out_a[j].clone(), b: out_b[j].clone() }));
        }
        Ok(v1)
    }

    /// V₂ = ∂_θV₁ + W and V₃ = ∂_φV₁/sin θ − ω. At θ± the derivative is
    /// taken from the Robin condition.
    pub fn reconstruct_velocity(&self, v1: &[f64], omega: &[f64], frozen: &TorusField) -> Result<(Vec<f64>, Vec<f64>)> {
        let (nt, np) = self.dims();
        let w = self.w_field(frozen, omega)?;
        let mut dv = self.bg.d_theta(v1, np);
        let (dm, dp) = self.robin_data(&w);
        for k in 0..np {
            dv[k] = self.data.mu_minus * v1[k] + dm[k];
            let i = (nt - 1) * np + k;
            dv[i] = self.data.mu_plus * v1[i] + dp[k];
        }
        let v2 = dv.iter().zip(&w).map(|(d, w)| d + w).collect();
        let dphi = d_phi(&self.trig, v1, nt);
        let v3 = (0..nt * np).map(|i| dphi[i] / self.bg.sin[i / np] - omega[i]).collect();
        Ok((v2, v3))
    }

    /// One application of the map.
    pub fn step(&self, frozen: &TorusField) -> Result<TorusField> {
        let (v4, v5) = self.transport_scalars(frozen)?;
        let omega = self.transport_vorticity(frozen, &v4, &v5)?;
        let v1 = self.elliptic_v1(frozen, &v4, &omega)?;
        let (v2, v3) = self.reconstruct_velocity(&v1, &omega, frozen)?;
        Ok(TorusField { v: [v1, v2, v3, v4, v5], omega, iteration: frozen.iteration + 1, ..frozen.clone() })
    }

    pub fn riccati(&self) -> Result<RiccatiSolution> {
        riccati_m1(&self.table, &self.bg.theta, self.data.mu_minus, self.data.mu_plus)
    }

    /// Picard iteration from the zero field.
    pub fn fixed_point(&self) -> Result<FixedPointResult> {
        let riccati = self.riccati()?;
        if !(riccati.uniqueness_margin < 0.0 && riccati.condition_margin < 0.0) {
            return Err(Error::invariant(format!(
                "Robin margins are not negative: uniqueness {}, condition {}",
                riccati.uniqueness_margin, riccati.condition_margin
            )));
        }
        let tol = self.cfg.tol;
        let mut cur = self.zero_field();
        let mut history = Vec::new();
        let mut converged = false;
        let mut growing = 0;
        for _ in 0..self.cfg.max_iterations {
            let next = self.step(&cur)?;
            let upd = next.sup_diff(&cur);
            cur = next;
            if let Some(prev) = history.last() {
                growing = if upd >= *prev { growing + 1 } else { 0 };
            }
            history.push(upd);
            if upd <= tol {
                converged = true;
                break;
            }
            if !upd.is_finite() || growing >= 3 {
                break;
            }
        }
        let contraction_ratio = history
            .windows(2)
            .filter(|w| w[0] > 100.0 * tol && w[1] > 100.0 * tol)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max);
        let eps = self.data.epsilon;
        let (sonic_surface, residuals) =
            if converged { (Some(self.sonic_surface(&cur)?), Some(self.residual_check(&cur)?)) } else { (None, None) };
        let gap = {
            let a = self.remainder(&cur, &cur.v[3], Remainder::Exact);
            let b = self.remainder(&cur, &cur.v[3], Remainder::AsPrinted);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        Ok(FixedPointResult {
            v_over_eps: if eps > 0.0 { cur.v_sup() / eps } else { 0.0 },
            spectral_tail: self.spectral_tail(&cur),
            solution: cur,
            history,
            contraction_ratio,
            converged,
            riccati,
            sonic_surface,
            residuals,
            printed_remainder_gap: gap,
        })
    }

    fn spectral_tail(&self, f: &TorusField) -> f64 {
        let (nt, np) = self.dims();
        let cut = np / 3;
        let mut worst = 0.0f64;
        for field in f.fields() {
            let mut lead = 0.0f64;
            let mut tail = 0.0f64;
            for j in 0..nt {
                let c = self.trig.analyse(&field[j * np..(j + 1) * np]);
                for m in 0..c.modes() {
                    let amp = c.amplitude(m);
                    if m > cut {
                        tail = tail.max(amp);
                    } else {
                        lead = lead.max(amp);
                    }
                }
            }
            if lead > 0.0 {
                worst = worst.max(tail / lead);
            }
        }
        worst
    }

    /// |M|² = |U|²/c² at the nodes, with c² = (γ−1)(B₀ + V₄ − ½|U|²).
    pub fn mach_sq(&self, f: &TorusField) -> Vec<f64> {
        let (nt, np) = self.dims();
        let g = self.bg.gas.gamma;
        (0..nt * np)
            .map(|i| {
                let j = i / np;
                let w1 = self.bg.u1[j] + f.v[0][i];
                let w2 = self.bg.u2[j] + f.v[1][i];
                let w3 = f.v[2][i];
                let q2 = w1 * w1 + w2 * w2 + w3 * w3;
                q2 / ((g - 1.0) * (self.bg.b0 + f.v[3][i] - 0.5 * q2))
            })
            .collect()
    }

    /// Sonic points per φ column, by root finding on a cubic spline of
    /// |M|² − 1 in θ.
    pub fn sonic_surface(&self, f: &TorusField) -> Result<SonicSurface> {
        let (nt, np) = self.dims();
        let m2 = self.mach_sq(f);
        let th = &self.bg.theta;
        let mut s = Vec::with_capacity(np);
        let mut max_slope = f64::NEG_INFINITY;
        let mut monotone = true;
        for k in 0..np {
            let col: Vec<f64> = (0..nt).map(|j| m2[j * np + k] - 1.0).collect();
            if !(col[0] > 0.0 && col[nt - 1] < 0.0) {
                return Err(Error::invariant(format!(
                    "no sonic crossing at phi = {}: |M|^2 - 1 = {} at theta-, {} at theta+",
                    self.phi(k),
                    col[0],
                    col[nt - 1]
                )));
            }
            monotone &= col.windows(2).all(|w| w[1] < w[0]);
            let j = col.windows(2).position(|w| w[0] > 0.0 && w[1] <= 0.0).unwrap_or(0);
            let sp = CubicSpline::new(th, &col)?;
            let root = brent(|t| sp.eval(t), th[j], th[j + 1], 1e-14)?;
            max_slope = max_slope.max(sp.deriv(root));
            s.push(root);
        }
        let so = self.bg.theta_so;
        let dev: Vec<f64> = s.iter().map(|x| x - so).collect();
        let d1 = self.trig.derivative(&dev);
        let d2 = self.trig.derivative(&d1);
        let sup_dev = sup(&dev);
        Ok(SonicSurface {
            phi: (0..np).map(|k| self.phi(k)).collect(),
            sup_dev,
            c2_dev: sup_dev.max(sup(&d1)).max(sup(&d2)),
            s,
            max_slope,
            monotone,
        })
    }

    /// Substitutes the field into the five equations of the steady system,
    /// with ρ and p from Bernoulli's law. Background θ-derivatives are
    /// analytic; perturbation θ-derivatives use [`d_theta`].
    pub fn residual_check(&self, f: &TorusField) -> Result<ResidualReport> {
        let (nt, np) = self.dims();
        let bg = &self.bg;
        let gas = bg.gas;
        let g = gas.gamma;
        let n = nt * np;
        let row = |i: usize| i / np;
        let u1: Vec<f64> = (0..n).map(|i| bg.u1[row(i)] + f.v[0][i]).collect();
        let u2: Vec<f64> = (0..n).map(|i| bg.u2[row(i)] + f.v[1][i]).collect();
        let u3 = f.v[2].clone();
        let b: Vec<f64> = f.v[3].iter().map(|v| bg.b0 + v).collect();
        let a: Vec<f64> = f.v[4].iter().map(|v| bg.a0 + v).collect();
        let mut rho = Vec::with_capacity(n);
        for i in 0..n {
            let q2 = u1[i] * u1[i] + u2[i] * u2[i] + u3[i] * u3[i];
            rho.push(gas::density_from_bernoulli(b[i], a[i], q2, gas)?);
        }
        let p: Vec<f64> = rho.iter().zip(&a).map(|(r, a)| a * r.powf(g)).collect();
        let m1: Vec<f64> = (0..n).map(|i| rho[i] * u2[i]).collect();
        // θ-derivative of q = q̄(θ) + δq as q̄′ + D_h δq.
        let split = |q: &[f64], bar: &dyn Fn(usize) -> f64, dbar: &dyn Fn(usize) -> f64| -> Vec<f64> {
            let delta: Vec<f64> = (0..n).map(|i| q[i] - bar(row(i))).collect();
            let d = bg.d_theta(&delta, np);
            (0..n).map(|i| dbar(row(i)) + d[i]).collect()
        };
        let rho_bar_u2 = |j: usize| bg.rho[j] * bg.u2[j];
        let d_rho_bar_u2 = |j: usize| bg.drho[j] * bg.u2[j] + bg.rho[j] * bg.du2[j];
        let p_bar = |j: usize| bg.a0 * bg.rho[j].powf(g);
        let dp_bar = |j: usize| bg.c2[j] * bg.drho[j];
        let zero = |_: usize| 0.0;
        let t_m1 = split(&m1, &rho_bar_u2, &d_rho_bar_u2);
        let t_u1 = split(&u1, &|j| bg.u1[j], &|j| bg.du1[j]);
        let t_u2 = split(&u2, &|j| bg.u2[j], &|j| bg.du2[j]);
        let t_u3 = split(&u3, &zero, &zero);
        let t_p = split(&p, &p_bar, &dp_bar);
        let t_a = split(&a, &|_| bg.a0, &zero);
        let m3: Vec<f64> = (0..n).map(|i| rho[i] * u3[i]).collect();
        let dp = |q: &[f64]| d_phi(&self.trig, q, nt);
        let (p_m3, p_u1, p_u2, p_u3, p_p, p_a) = (dp(&m3), dp(&u1), dp(&u2), dp(&u3), dp(&p), dp(&a));
        let p_b = dp(&b);
        let mut eq = [0.0f64; 5];
        let omega = &f.omega;
        let t_om = split(omega, &zero, &zero);
        let ww: Vec<f64> = (0..n).map(|i| u3[i] / u2[i] * omega[i]).collect();
        let p_ww = dp(&ww);
        let mut div = 0.0f64;
        for i in 0..n {
            let j = row(i);
            let (sn, cot) = (bg.sin[j], bg.cot[j]);
            let conv = |t: f64, ph: f64| u2[i] * t + u3[i] / sn * ph;
            let r = [
                t_m1[i] + p_m3[i] / sn + 2.0 * rho[i] * u1[i] + cot * rho[i] * u2[i],
                conv(t_u1[i], p_u1[i]) - (u2[i] * u2[i] + u3[i] * u3[i]),
                conv(t_u2[i], p_u2[i]) + t_p[i] / rho[i] + u1[i] * u2[i] - cot * u3[i] * u3[i],
                conv(t_u3[i], p_u3[i]) + p_p[i] / (rho[i] * sn) + u1[i] * u3[i] + cot * u2[i] * u3[i],
                conv(t_a[i], p_a[i]),
            ];
            for (e, v) in eq.iter_mut().zip(r) {
                *e = e.max(v.abs());
            }
            // ω_φ = (U₃/U₂)ω_θ and ω_r from the momentum balance.
            let q2 = u1[i] * u1[i] + u2[i] * u2[i] + u3[i] * u3[i];
            let om_r = u1[i] / u2[i] * omega[i] - p_b[i] / (u2[i] * sn)
                + (b[i] - 0.5 * q2) / (g * a[i] * u2[i]) * p_a[i] / sn;
            div = div.max((t_om[i] + p_ww[i] / sn + om_r + cot * omega[i]).abs());
        }
        Ok(ResidualReport { equations: eq, vorticity_divergence: div })
    }
}
