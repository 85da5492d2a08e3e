//! Smooth irrotational transonic background and its multiplier machinery.
//!
//! The background solves the swirl-free self-similar system from a sonic
//! point θ_so in both directions, using the same regularised integrator as
//! [`crate::selfsim`]. On the trimmed interval [θ₋, θ₊] the tables below
//! carry the coefficients of the linearised potential equation, the change
//! of variables f, and the multiplier (d₁, d₂, l₁, l₂) with the quadratic
//! form coefficients K₁–K₄.
//!
//! Derivatives of background quantities are taken analytically from the ODE
//! right-hand side. Spline and finite-difference derivatives are computed as
//! independent cross-checks and reported, not used.

use crate::gas::{self, FlowState, GasConstants};
use crate::ode::{self, Flow, Options, Segment};
use crate::quad;
use crate::roots::brent;
use crate::selfsim::{integrate_problem1, Direction, IntegrationConfig, ProblemOneInit, Trajectory};
use crate::spline::CubicSpline;
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

/// Sonic data (U₀₁, U₀₂) at θ_so with Bernoulli constant B₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonicInit {
    pub theta_so: f64,
    pub u01: f64,
    pub u02: f64,
    pub b0: f64,
}

impl SonicInit {
    /// Checks θ_so ∈ (0, π/2), U₀₁, U₀₂ > 0 and U₀₁² + U₀₂² = 2(γ−1)B₀/(γ+1) to 1e-14.
    pub fn new(theta_so: f64, u01: f64, u02: f64, b0: f64, gas: GasConstants) -> Result<Self> {
        if !(theta_so > 0.0 && theta_so < core::f64::consts::FRAC_PI_2) {
            return Err(Error::domain(format!("theta_so = {theta_so} must lie in (0, pi/2)")));
        }
        if !(u01 > 0.0 && u02 > 0.0 && b0 > 0.0) {
            return Err(Error::domain("sonic data need U01 > 0, U02 > 0, B0 > 0"));
        }
        let qs2 = gas::sonic_speed_sq(b0, gas);
        let q2 = u01 * u01 + u02 * u02;
        if (q2 - qs2).abs() > 1e-14 * qs2 {
            return Err(Error::domain(format!("U01^2 + U02^2 = {q2} is not the sonic value {qs2}")));
        }
        Ok(Self { theta_so, u01, u02, b0 })
    }

    /// Sonic speed split as (cos β, sin β).
    pub fn from_angle(theta_so: f64, beta: f64, b0: f64, gas: GasConstants) -> Result<Self> {
        let q = gas::sonic_speed_sq(b0, gas).sqrt();
        Self::new(theta_so, q * beta.cos(), q * beta.sin(), b0, gas)
    }

    /// θ_so = π/4, B₀ = 1, β = π/4.
    pub fn canonical(gas: GasConstants) -> Self {
        Self::from_angle(FRAC_PI_4, FRAC_PI_4, 1.0, gas).expect("canonical sonic data are admissible")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BackgroundConfig {
    /// Fraction removed from each side of the maximal interval.
    pub trim: f64,
    pub samples: usize,
    pub integration: IntegrationConfig,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self { trim: 0.02, samples: 2048, integration: IntegrationConfig::default() }
    }
}

/// Background state and Mach data at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundPoint {
    pub theta: f64,
    pub u1: f64,
    pub u2: f64,
    pub c: f64,
    pub m1: f64,
    pub m2: f64,
    pub mach_sq: f64,
    pub rho: f64,
    pub g1: f64,
}

/// Analytic θ-derivatives at a background state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundDerivs {
    pub du1: f64,
    pub du2: f64,
    pub dc2: f64,
    pub dm1_sq: f64,
    pub dm2_sq: f64,
    /// d/dθ of M₁M₂.
    pub dm1m2: f64,
}

#[derive(Debug, Clone)]
pub struct BackgroundTable {
    pub init: SonicInit,
    pub gas: GasConstants,
    /// Ends of the maximal interval on which the sign conditions hold.
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_minus: f64,
    pub theta_plus: f64,
    pub samples: Vec<BackgroundPoint>,
    pub spline_u1: CubicSpline,
    pub spline_u2: CubicSpline,
    /// |M̄|² − 1 at θ_so re-evaluated from both branches' dense output.
    pub sonic_check: f64,
    pub bernoulli_drift: f64,
    lower: Trajectory,
    upper: Trajectory,
}

impl BackgroundTable {
    pub fn theta_so(&self) -> f64 {
        self.init.theta_so
    }

    pub fn grid(&self) -> Vec<f64> {
        self.samples.iter().map(|p| p.theta).collect()
    }

    /// (Ū₁, Ū₂) from dense output; defined on the maximal interval.
    pub fn state(&self, theta: f64) -> Option<(f64, f64)> {
        if theta == self.init.theta_so {
            return Some((self.init.u01, self.init.u02));
        }
        let tr = if theta < self.init.theta_so { &self.lower } else { &self.upper };
        tr.state_at(theta).map(|s| (s.u1, s.u2))
    }

    /// c̄² from Bernoulli's law.
    pub fn c2_of(&self, u1: f64, u2: f64) -> f64 {
        self.gas.sound_speed_sq_from_bernoulli(self.init.b0, u1 * u1 + u2 * u2)
    }

    pub fn point(&self, theta: f64) -> Option<BackgroundPoint> {
        let (u1, u2) = self.state(theta)?;
        Some(self.point_from(theta, u1, u2))
    }

    fn point_from(&self, theta: f64, u1: f64, u2: f64) -> BackgroundPoint {
        let c2 = self.c2_of(u1, u2);
        let c = c2.sqrt();
        let g = self.gas.gamma;
        BackgroundPoint {
            theta,
            u1,
            u2,
            c,
            m1: u1 / c,
            m2: u2 / c,
            mach_sq: (u1 * u1 + u2 * u2) / c2,
            // A = 1/γ, so c² = ρ^{γ−1}.
            rho: c2.powf(1.0 / (g - 1.0)),
            g1: gas::g1(theta, u1, u2),
        }
    }

    pub fn derivs(&self, theta: f64, u1: f64, u2: f64) -> BackgroundDerivs {
        background_derivs(theta, u1, u2, self.c2_of(u1, u2), self.gas)
    }

    /// Spline-interpolated (Ū₁, Ū₂).
    pub fn interp(&self, theta: f64) -> (f64, f64) {
        (self.spline_u1.eval(theta), self.spline_u2.eval(theta))
    }

    /// Largest relative error of g₁ against exp of the quadrature of
    /// g₁′/g₁ = −1/((1 − M̄₂²) tan θ) from θ_so, over the samples.
    pub fn g1_quadrature_error(&self) -> f64 {
        let so = self.init.theta_so;
        let g10 = gas::g1(so, self.init.u01, self.init.u02);
        let f = |t: f64| match self.state(t) {
            Some((u1, u2)) => -1.0 / ((1.0 - u2 * u2 / self.c2_of(u1, u2)) * t.tan()),
            None => f64::NAN,
        };
        let logs = cumulative_from(&self.grid(), so, f);
        self.samples
            .iter()
            .zip(&logs)
            .map(|(p, l)| (p.g1 - g10 * l.exp()).abs() / p.g1.abs())
            .fold(0.0, f64::max)
    }
}

/// θ-derivatives from the background ODE, with c² = (γ−1)(B₀ − |U|²/2).
pub fn background_derivs(theta: f64, u1: f64, u2: f64, c2: f64, gas: GasConstants) -> BackgroundDerivs {
    let g = gas.gamma;
    let m2s = u2 * u2 / c2;
    let g1 = gas::g1(theta, u1, u2);
    let du1 = u2;
    let du2 = -u1 - g1 / ((1.0 - m2s) * theta.sin());
    let dc2 = -(g - 1.0) * (u1 * du1 + u2 * du2);
    let c4 = c2 * c2;
    BackgroundDerivs {
        du1,
        du2,
        dc2,
        dm1_sq: (2.0 * u1 * du1 * c2 - u1 * u1 * dc2) / c4,
        dm2_sq: (2.0 * u2 * du2 * c2 - u2 * u2 * dc2) / c4,
        dm1m2: ((du1 * u2 + u1 * du2) * c2 - u1 * u2 * dc2) / c4,
    }
}

/// Prefix integral of `f` from `t0` to every grid node, by adaptive
/// quadrature between consecutive nodes.
fn cumulative_from<F: FnMut(f64) -> f64>(grid: &[f64], t0: f64, mut f: F) -> Vec<f64> {
    let n = grid.len();
    let mut out = alloc::vec![0.0; n];
    let j0 = grid.iter().position(|&t| t >= t0).unwrap_or(n);
    let q = |f: &mut F, a: f64, b: f64| quad::integrate(&mut *f, a, b, 1e-15, 1e-13).value;
    let mut acc = 0.0;
    let mut prev = t0;
    for j in j0..n {
        acc += q(&mut f, prev, grid[j]);
        out[j] = acc;
        prev = grid[j];
    }
    acc = 0.0;
    prev = t0;
    for j in (0..j0).rev() {
        acc += q(&mut f, prev, grid[j]);
        out[j] = acc;
        prev = grid[j];
    }
    out
}

/// Normalised sign conditions; all positive inside the admissible interval.
fn sign_margin(p: &BackgroundPoint) -> f64 {
    let q = (p.u1 * p.u1 + p.u2 * p.u2).sqrt();
    (p.u1 / q).min(p.u2 / q).min(1.0 - p.m1 * p.m1).min(1.0 - p.m2 * p.m2).min(p.g1 / q)
}

/// Integrates the background from θ_so and samples it on [θ₋, θ₊].
pub fn solve_background(init: &SonicInit, gas: GasConstants, cfg: &BackgroundConfig) -> Result<BackgroundTable> {
    let init = SonicInit::new(init.theta_so, init.u01, init.u02, init.b0, gas)?;
    if !(cfg.trim >= 0.0 && cfg.trim < 0.5) || cfg.samples < 8 {
        return Err(Error::domain("background config needs trim in [0, 0.5) and at least 8 samples"));
    }
    let c2 = gas.sound_speed_sq_from_bernoulli(init.b0, init.u01 * init.u01 + init.u02 * init.u02);
    let s0 = FlowState {
        theta: init.theta_so,
        rho: c2.powf(1.0 / (gas.gamma - 1.0)),
        u1: init.u01,
        u2: init.u02,
        u3: 0.0,
        entropy_a: 1.0 / gas.gamma,
    };
    let p1 = ProblemOneInit::new(s0, gas)?;
    let lower = integrate_problem1(&p1, 1e-3, &cfg.integration.with_direction(Direction::Decreasing))?;
    let upper = integrate_problem1(&p1, core::f64::consts::PI - 1e-3, &cfg.integration.with_direction(Direction::Increasing))?;

    let mut table = BackgroundTable {
        init,
        gas,
        theta_a: f64::NAN,
        theta_b: f64::NAN,
        theta_minus: f64::NAN,
        theta_plus: f64::NAN,
        samples: Vec::new(),
        spline_u1: CubicSpline::new(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4])?,
        spline_u2: CubicSpline::new(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4])?,
        sonic_check: 0.0,
        bernoulli_drift: lower.max_bernoulli_drift().max(upper.max_bernoulli_drift()),
        lower,
        upper,
    };
    table.theta_a = sign_limit(&table, &table.lower)?;
    table.theta_b = sign_limit(&table, &table.upper)?;
    let so = init.theta_so;
    if !(so - table.theta_a > 1e-6 && table.theta_b - so > 1e-6) {
        return Err(Error::domain(format!(
            "background interval collapsed: sign conditions hold only on [{}, {}]",
            table.theta_a, table.theta_b
        )));
    }
    table.theta_minus = so - (1.0 - cfg.trim) * (so - table.theta_a);
    table.theta_plus = so + (1.0 - cfg.trim) * (table.theta_b - so);
    let n = cfg.samples;
    let (tm, tp) = (table.theta_minus, table.theta_plus);
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let t = if k + 1 == n { tp } else { tm + (tp - tm) * k as f64 / (n - 1) as f64 };
        let (u1, u2) = table.state(t).ok_or_else(|| Error::invariant(format!("no dense output at theta = {t}")))?;
        pts.push(table.point_from(t, u1, u2));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.theta).collect();
    table.spline_u1 = CubicSpline::new(&x, &pts.iter().map(|p| p.u1).collect::<Vec<_>>())?;
    table.spline_u2 = CubicSpline::new(&x, &pts.iter().map(|p| p.u2).collect::<Vec<_>>())?;
    table.samples = pts;

    let near = |tr: &Trajectory| {
        let s = tr.state_at(so).map(|s| (s.u1, s.u2)).unwrap_or((f64::NAN, f64::NAN));
        table.point_from(so, s.0, s.1).mach_sq - 1.0
    };
    table.sonic_check = near(&table.lower).abs().max(near(&table.upper).abs());
    if !(table.sonic_check < 1e-10) {
        return Err(Error::invariant(format!("|M|^2 - 1 at theta_so is {}", table.sonic_check)));
    }
    for p in &table.samples {
        if !(sign_margin(p) > 0.0) || !(mach_sq_slope(p, gas) < 0.0) {
            return Err(Error::invariant(format!("background sign condition fails at theta = {}", p.theta)));
        }
    }
    Ok(table)
}

/// d|M̄|²/dθ = −M̄₂g₁(2 + (γ−1)|M̄|²)/((1 − M̄₂²)c̄ sin θ).
pub fn mach_sq_slope(p: &BackgroundPoint, gas: GasConstants) -> f64 {
    -p.m2 * p.g1 * (2.0 + (gas.gamma - 1.0) * p.mach_sq) / ((1.0 - p.m2 * p.m2) * p.c * p.theta.sin())
}

/// First θ along the branch where a sign condition fails, or its event.
/// The terminal sample sits on the event itself and is not scanned.
fn sign_limit(bg: &BackgroundTable, tr: &Trajectory) -> Result<f64> {
    let pt = |t: f64| bg.state(t).map(|(u1, u2)| bg.point_from(t, u1, u2));
    let n = tr.samples.len();
    let mut prev = tr.samples[0].state.theta;
    for s in &tr.samples[1..n.saturating_sub(1).max(1)] {
        let t = s.state.theta;
        let p = bg.point_from(t, s.state.u1, s.state.u2);
        if !(sign_margin(&p) > 0.0) {
            let m = |x: f64| pt(x).map(|p| sign_margin(&p)).unwrap_or(f64::NAN);
            return brent(m, prev, t, 1e-14).or(Ok(prev));
        }
        prev = t;
    }
    Ok(tr.termination.theta_event)
}

/// Coefficients of the linearised equation and the change of variables at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientPoint {
    pub theta: f64,
    /// c̄², which is also Ā₃₃ of the three-dimensional operator.
    pub c2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub e1: f64,
    pub e2: f64,
    pub f: f64,
    /// f′/f = Ā₁₂/Ā₂₂ = −M̄₁M̄₂/(1 − M̄₂²).
    pub fp_over_f: f64,
    /// d/dθ of f′/f.
    pub dfp_over_f: f64,
    pub k11: f64,
    pub k1: f64,
    /// Sum of the magnitudes of the terms cancelling in k̄₁.
    pub k1_scale: f64,
    pub k2: f64,
    pub k33: f64,
    pub dk11: f64,
    pub dk33: f64,
    /// Ā₁₁/Ā₂₂ and its derivative.
    pub ratio: f64,
    pub dratio: f64,
    /// k̄₁₁′ + 2k̄₁₁k̄₂ and its closed form.
    pub key2: f64,
    pub key2_rhs: f64,
    /// k̄₃₃′ + 2k̄₃₃(k̄₂ − cot θ) and its closed form.
    pub key3: f64,
    pub key3_rhs: f64,
}

/// Everything except f at a background state; `f` is filled in by the caller.
pub fn coefficients_at(theta: f64, u1: f64, u2: f64, f: f64, b0: f64, gas: GasConstants) -> CoefficientPoint {
    let g = gas.gamma;
    let c2 = gas.sound_speed_sq_from_bernoulli(b0, u1 * u1 + u2 * u2);
    let d = background_derivs(theta, u1, u2, c2, gas);
    let (sn, cs) = theta.sin_cos();
    let cot = cs / sn;
    let m1s = u1 * u1 / c2;
    let m2s = u2 * u2 / c2;
    let ms = m1s + m2s;
    let m1m2 = u1 * u2 / c2;
    let om = 1.0 - m2s;
    let g1 = gas::g1(theta, u1, u2);
    let a11 = c2 - u1 * u1;
    let a12 = -u1 * u2;
    let a22 = c2 - u2 * u2;
    let e1 = 2.0 * c2 - u2 * u2 + (g - 1.0) * u1 * m2s * g1 / (om * sn);
    let w = u1 + u2 * cot;
    let e2 = (3.0 - g) * u2 * w + (g + 1.0) * u2 * w / om + (c2 - 2.0 * u2 * u2) * cot;
    let x = m1m2 / om;
    let dx = (d.dm1m2 * om + m1m2 * d.dm2_sq) / (om * om);
    let k11 = (1.0 - ms) / (om * om);
    let k2 = e2 / a22;
    let k1_terms = [2.0 * (1.0 - m1s) / om, -m1s * m2s / (om * om), -dx, -x * k2, -e1 / a22];
    let k1: f64 = k1_terms.iter().sum();
    let k1_scale = k1_terms.iter().map(|v| v.abs()).sum();
    let dk11 = -(d.dm1_sq + d.dm2_sq) / (om * om) + 2.0 * (1.0 - ms) * d.dm2_sq / (om * om * om);
    let k33 = 1.0 / om;
    let dk33 = d.dm2_sq / (om * om);
    let om3 = om * om * om;
    let key2_rhs = m1m2 * (2.0 + (g - 1.0) * ms) / om3 + cot * (2.0 * (1.0 - m1s) + (g - 1.0) * m2s * ms) / om3;
    let m1 = u1 / c2.sqrt();
    let m2 = u2 / c2.sqrt();
    let key3_rhs = (4.0 + (g - 3.0) * m2s) * m2 * (m1 + m2 * cot) / om3;
    let ratio = (1.0 - m1s) / om;
    let dratio = (-d.dm1_sq * om + (1.0 - m1s) * d.dm2_sq) / (om * om);
    CoefficientPoint {
        theta,
        c2,
        a11,
        a12,
        a22,
        e1,
        e2,
        f,
        fp_over_f: a12 / a22,
        dfp_over_f: -dx,
        k11,
        k1,
        k1_scale,
        k2,
        k33,
        dk11,
        dk33,
        ratio,
        dratio,
        key2: dk11 + 2.0 * k11 * k2,
        key2_rhs,
        key3: dk33 + 2.0 * k33 * (k2 - cot),
        key3_rhs,
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub points: Vec<CoefficientPoint>,
    pub theta_so: f64,
}

impl CoefficientTable {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }
}

/// Samples every coefficient; f by quadrature of Ā₁₂/Ā₂₂ from θ_so.
pub fn coefficients(bg: &BackgroundTable) -> CoefficientTable {
    let grid = bg.grid();
    let so = bg.theta_so();
    let ln_f = cumulative_from(&grid, so, |t| match bg.state(t) {
        Some((u1, u2)) => -u1 * u2 / (bg.c2_of(u1, u2) - u2 * u2),
        None => f64::NAN,
    });
    let points = bg
        .samples
        .iter()
        .zip(&ln_f)
        .map(|(p, l)| coefficients_at(p.theta, p.u1, p.u2, l.exp(), bg.init.b0, bg.gas))
        .collect();
    CoefficientTable { points, theta_so: so }
}

/// Coefficients at an arbitrary θ, with f by a fresh quadrature from θ_so.
pub fn coefficient_at(bg: &BackgroundTable, theta: f64) -> Option<CoefficientPoint> {
    let (u1, u2) = bg.state(theta)?;
    let ln_f = quad::integrate(
        |t| bg.state(t).map(|(a, b)| -a * b / (bg.c2_of(a, b) - b * b)).unwrap_or(f64::NAN),
        bg.theta_so(),
        theta,
        1e-15,
        1e-13,
    )
    .value;
    Some(coefficients_at(theta, u1, u2, ln_f.exp(), bg.init.b0, bg.gas))
}

/// Maximal deviations of one derivative route.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RouteReport {
    pub max_abs_k1: f64,
    /// max |k̄₁| relative to the size of its cancelling terms.
    pub max_rel_k1: f64,
    pub key2_max_rel: f64,
    pub key3_max_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    /// Analytic-derivative route (primary).
    pub analytic: RouteReport,
    pub key2_min: f64,
    pub key3_min: f64,
    pub spline: RouteReport,
    pub finite_difference: RouteReport,
    /// Spline-vs-FD disagreement for the differentiated functions
    /// M̄₁M̄₂/(1 − M̄₂²), k̄₁₁, k̄₃₃, as max|Δ| over max|derivative|
    /// (k̄₁₁ changes sign, so pointwise ratios are meaningless there).
    pub spline_vs_fd: [f64; 3],
    /// The same, ignoring samples within 1% of the interval of either end.
    pub spline_vs_fd_interior: [f64; 3],
    pub passed: bool,
}

/// Absolute k̄₁ bound expected on well-conditioned backgrounds.
pub const K1_TOL: f64 = 1e-7;
/// Hard-failure bound on k̄₁ relative to its term scale.
pub const K1_REL_TOL: f64 = 1e-9;
pub const KEY_TOL: f64 = 1e-6;

/// Richardson-extrapolated central difference with a step kept well away
/// from the fold at the ends of the maximal interval.
fn fd_derivative<F: FnMut(f64) -> f64>(f: F, t: f64, dist: f64) -> f64 {
    fd_derivative_ratio(f, t, dist, 40.0)
}

fn fd_derivative_ratio<F: FnMut(f64) -> f64>(mut f: F, t: f64, dist: f64, ratio: f64) -> f64 {
    let h = (dist / ratio).min(1e-3);
    (8.0 * (f(t + h) - f(t - h)) - (f(t + 2.0 * h) - f(t - 2.0 * h))) / (12.0 * h)
}

/// k̄₁ ≡ 0 and the two key identities, by three derivative routes.
pub fn verify_identities(bg: &BackgroundTable, co: &CoefficientTable) -> Result<IdentityReport> {
    let pts = &co.points;
    let grid = co.grid();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut analytic = RouteReport::default();
    let (mut key2_min, mut key3_min) = (f64::INFINITY, f64::INFINITY);
    for p in pts {
        analytic.max_abs_k1 = analytic.max_abs_k1.max(p.k1.abs());
        analytic.max_rel_k1 = analytic.max_rel_k1.max(p.k1.abs() / p.k1_scale);
        analytic.key2_max_rel = analytic.key2_max_rel.max(rel(p.key2, p.key2_rhs));
        analytic.key3_max_rel = analytic.key3_max_rel.max(rel(p.key3, p.key3_rhs));
        key2_min = key2_min.min(p.key2);
        key3_min = key3_min.min(p.key3);
    }

    let mm = |u1: f64, u2: f64| {
        let c2 = bg.c2_of(u1, u2);
        let (m1s, m2s) = (u1 * u1 / c2, u2 * u2 / c2);
        [u1 * u2 / c2 / (1.0 - m2s), (1.0 - m1s - m2s) / (1.0 - m2s).powi(2), 1.0 / (1.0 - m2s)]
    };
    let vals: Vec<[f64; 3]> = bg.samples.iter().map(|p| mm(p.u1, p.u2)).collect();
    let n = pts.len();
    let mut spline_d = alloc::vec![[0.0; 3]; n];
    for i in 0..3 {
        let s = CubicSpline::new(&grid, &vals.iter().map(|v| v[i]).collect::<Vec<_>>())?;
        for (j, t) in grid.iter().enumerate() {
            spline_d[j][i] = s.deriv(*t);
        }
    }
    let mut fd_d = alloc::vec![[0.0; 3]; n];
    for (j, t) in grid.iter().enumerate() {
        let dist = (t - bg.theta_a).min(bg.theta_b - t);
        for i in 0..3 {
            fd_d[j][i] = fd_derivative(
                |x| bg.state(x).map(|(u1, u2)| mm(u1, u2)[i]).unwrap_or(f64::NAN),
                *t,
                dist,
            );
        }
    }
    let route = |d: &[[f64; 3]]| {
        let mut r = RouteReport::default();
        for (p, dv) in pts.iter().zip(d) {
            let m1s = 1.0 - p.ratio / p.k33;
            let om = 1.0 / p.k33;
            let m2s = 1.0 - om;
            let x = -p.fp_over_f;
            let k1 = 2.0 * (1.0 - m1s) / om - m1s * m2s / (om * om) - dv[0] - x * p.k2 - p.e1 / p.a22;
            let cot = 1.0 / p.theta.tan();
            r.max_abs_k1 = r.max_abs_k1.max(k1.abs());
            r.max_rel_k1 = r.max_rel_k1.max(k1.abs() / p.k1_scale);
            r.key2_max_rel = r.key2_max_rel.max(rel(dv[1] + 2.0 * p.k11 * p.k2, p.key2_rhs));
            r.key3_max_rel = r.key3_max_rel.max(rel(dv[2] + 2.0 * p.k33 * (p.k2 - cot), p.key3_rhs));
        }
        r
    };
    let spline = route(&spline_d);
    let finite_difference = route(&fd_d);
    let margin = 0.01 * (bg.theta_plus - bg.theta_minus);
    let interior = |t: f64| t - bg.theta_minus > margin && bg.theta_plus - t > margin;
    let sup_rel = |keep: &dyn Fn(f64) -> bool| {
        let mut out = [0.0f64; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for j in (0..n).filter(|&j| keep(grid[j])) {
                num = num.max((spline_d[j][i] - fd_d[j][i]).abs());
                den = den.max(fd_d[j][i].abs());
            }
            *o = num / den;
        }
        out
    };
    let all = sup_rel(&|_| true);
    let inner = sup_rel(&interior);
    let matched = analytic.max_rel_k1 < K1_REL_TOL && analytic.key2_max_rel < KEY_TOL && analytic.key3_max_rel < KEY_TOL;
    let passed = matched && key2_min > 0.0 && key3_min > 0.0;
    let report = IdentityReport {
        analytic,
        key2_min,
        key3_min,
        spline,
        finite_difference,
        spline_vs_fd: all,
        spline_vs_fd_interior: inner,
        passed,
    };
    // A mismatch is an implementation bug; lost positivity is a property of the data.
    if !matched {
        return Err(Error::invariant(format!("background identity violated: {:?}", report.analytic)));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
pub struct MultiplierConfig {
    pub d1_at_sonic: f64,
    /// First d₂(θ_so) tried; doubled until the target holds.
    pub d2_start: f64,
    pub max_doublings: u32,
    pub mu1: f64,
    /// K₄ safety floor as a fraction of K₄(θ_so).
    pub k4_floor_fraction: f64,
    /// When set, doubling also continues until κ₃f ≥ this value (needed by
    /// the azimuthal-mode energy estimate).
    pub azimuthal_margin: Option<f64>,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self { d1_at_sonic: 1.0, d2_start: 8.0, max_doublings: 20, mu1: 3.0, k4_floor_fraction: 0.1, azimuthal_margin: None }
    }
}

impl MultiplierConfig {
    pub fn azimuthal() -> Self {
        Self { azimuthal_margin: Some(1.0), ..Self::default() }
    }
}

/// Multiplier functions and quadratic-form coefficients at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierPoint {
    pub theta: f64,
    pub d1: f64,
    pub d2: f64,
    pub l1: f64,
    pub l2: f64,
    pub kt1: f64,
    pub kt2: f64,
    pub kt3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// K₄ = −(d₁² + k̄₁₁d₂²)/(f′d₂ − f d₁), the reduced form.
    pub k4_reduced: f64,
    /// K₁, K₂, K₃ from the relations with K̃₁, K̃₃ and f.
    pub k1_rel: f64,
    pub k2_rel: f64,
    pub k3_rel: f64,
    /// κ₃f = (k̄₃₃′ + 2k̄₂k̄₃₃ − 2k̄₃₃cot θ)d₂ − k̄₃₃(2d* + d₁).
    pub kappa3_f: f64,
}

#[derive(Debug, Clone)]
pub struct MultiplierTable {
    pub d_star: f64,
    pub d1_at_sonic: f64,
    pub d2_at_sonic: f64,
    pub doublings: u32,
    pub mu1: f64,
    pub points: Vec<MultiplierPoint>,
    pub sigma0: f64,
    pub k4_floor: f64,
    /// max |K̃₂|/|k̄₂d₁| with d₁′ by finite differences of the quadrature.
    pub kt2_residual: f64,
    /// Largest relative gap between K₁–K₄ and their proof-relation forms.
    pub relation_residual: f64,
    p_lower: Vec<Segment<1>>,
    p_upper: Vec<Segment<1>>,
    bg: BackgroundTable,
}

/// Integrates P′ = 2k̄₂P − 1, P(θ_so) = 0, towards `t_end`.
fn p_branch(bg: &BackgroundTable, t_end: f64) -> Result<Vec<Segment<1>>> {
    let so = bg.theta_so();
    let k2 = |t: f64| {
        let (u1, u2) = bg.state(t)?;
        Some(coefficients_at(t, u1, u2, 1.0, bg.init.b0, bg.gas).k2)
    };
    let mut opts = Options::<1>::new(1e-12, 1e-14);
    opts.max_steps = 200_000;
    let mut segs = Vec::new();
    let run = ode::integrate(|t, y| k2(t).map(|k| [2.0 * k * y[0] - 1.0]), so, [0.0], t_end, &opts, |s| {
        segs.push(*s);
        Flow::Continue
    });
    if run.halt != ode::Halt::Reached {
        return Err(Error::NoConvergence(format!("d2 ODE stopped with {:?} at {}", run.halt, run.t)));
    }
    Ok(segs)
}

fn seg_eval(segs: &[Segment<1>], t: f64) -> Option<f64> {
    segs.iter().find(|s| s.contains(t)).map(|s| s.eval_component(t, 0))
}

impl MultiplierTable {
    pub fn background(&self) -> &BackgroundTable {
        &self.bg
    }

    fn p_at(&self, t: f64) -> Option<f64> {
        if t == self.bg.theta_so() {
            return Some(0.0);
        }
        seg_eval(if t < self.bg.theta_so() { &self.p_lower } else { &self.p_upper }, t)
    }

    /// Multiplier data at an arbitrary θ ∈ [θ₋, θ₊] (fresh quadratures for f, d₁).
    pub fn eval(&self, theta: f64) -> Option<MultiplierPoint> {
        let bg = &self.bg;
        let (u1, u2) = bg.state(theta)?;
        let so = bg.theta_so();
        let q = |g: &dyn Fn(f64) -> f64| quad::integrate(g, so, theta, 1e-15, 1e-13).value;
        let ln_f = q(&|t| bg.state(t).map(|(a, b)| -a * b / (bg.c2_of(a, b) - b * b)).unwrap_or(f64::NAN));
        let i2 = q(&|t| {
            bg.state(t).map(|(a, b)| coefficients_at(t, a, b, 1.0, bg.init.b0, bg.gas).k2).unwrap_or(f64::NAN)
        });
        let cp = coefficients_at(theta, u1, u2, ln_f.exp(), bg.init.b0, bg.gas);
        Some(self.point_from(&cp, i2, self.p_at(theta)?))
    }

    /// Coefficient and multiplier data at sorted θ values in [θ₋, θ₊],
    /// with one cumulative quadrature pass for f and ∫k̄₂.
    pub fn eval_many(&self, thetas: &[f64]) -> Result<Vec<(CoefficientPoint, MultiplierPoint)>> {
        let bg = &self.bg;
        if thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("evaluation points must be strictly increasing"));
        }
        let so = bg.theta_so();
        let ln_f = cumulative_from(thetas, so, |t| {
            bg.state(t).map(|(a, b)| -a * b / (bg.c2_of(a, b) - b * b)).unwrap_or(f64::NAN)
        });
        let i2 = cumulative_from(thetas, so, |t| {
            bg.state(t).map(|(a, b)| coefficients_at(t, a, b, 1.0, bg.init.b0, bg.gas).k2).unwrap_or(f64::NAN)
        });
        thetas
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let fail = || Error::domain(format!("theta = {t} is outside the multiplier table"));
                let (u1, u2) = bg.state(t).ok_or_else(fail)?;
                let cp = coefficients_at(t, u1, u2, ln_f[j].exp(), bg.init.b0, bg.gas);
                let p = self.p_at(t).ok_or_else(fail)?;
                Ok((cp, self.point_from(&cp, i2[j], p)))
            })
            .collect()
    }

    fn point_from(&self, cp: &CoefficientPoint, i2: f64, p: f64) -> MultiplierPoint {
        multiplier_point(cp, self.d1_at_sonic, self.d2_at_sonic, self.d_star, self.mu1, i2, p)
    }

    /// θ-grid of the table.
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }
}

fn multiplier_point(cp: &CoefficientPoint, d1s: f64, d2s: f64, d_star: f64, mu1: f64, i2: f64, p: f64) -> MultiplierPoint {
    let e = (2.0 * i2).exp();
    let d1 = d1s * i2.exp();
    let d2 = d2s * e + 2.0 * d_star * p;
    let dd1 = cp.k2 * d1;
    let dd2 = 2.0 * cp.k2 * d2 - 2.0 * d_star;
    let f = cp.f;
    let phi = cp.fp_over_f;
    let dphi = cp.dfp_over_f;
    // L₁ = Ā₂₂l₁, L₂ = Ā₂₂l₂ and their derivatives.
    let big1 = (phi * d2 - d1) / f;
    let big2 = d2 / f;
    let dbig2 = dd2 / f - phi * d2 / f;
    let dbig1 = (dphi * d2 + phi * dd2 - dd1) / f - phi * big1;
    let l1 = big1 / cp.a22;
    let l2 = big2 / cp.a22;
    let r = cp.ratio;
    let e1n = cp.e1 / cp.a22;
    let k1 = 0.5 * (cp.dratio * big2 + r * dbig2) - 0.5 * mu1 * r * big1 - (dphi * big1 + phi * dbig1) + e1n * big1;
    let k2 = e1n * big2 + cp.k2 * big1 - dbig1 - (mu1 - 1.0) * r * big2;
    let k3 = 0.5 * (mu1 - 2.0) * big1 + cp.k2 * big2 - (mu1 - 2.0) * phi * big2 - 0.5 * dbig2;
    let k4 = -(r * big2 * big2 - 2.0 * phi * big1 * big2 + big1 * big1) / big1;
    let k4_reduced = -(d1 * d1 + cp.k11 * d2 * d2) / (f * (phi * d2 - d1));
    let kt1 = 0.5 * (cp.key2 * d2 - cp.k11 * (2.0 * d_star + d1));
    let kt3 = cp.k2 * d2 - 0.5 * dd2 - 0.5 * d1;
    let cot = 1.0 / cp.theta.tan();
    MultiplierPoint {
        theta: cp.theta,
        d1,
        d2,
        l1,
        l2,
        kt1,
        kt2: cp.k2 * d1 - dd1,
        kt3,
        k1,
        k2,
        k3,
        k4,
        k4_reduced,
        k1_rel: kt1 / f + phi * phi * kt3 / f,
        k2_rel: 2.0 * phi * kt3 / f,
        k3_rel: kt3 / f,
        kappa3_f: (cp.dk33 + 2.0 * cp.k2 * cp.k33 - 2.0 * cp.k33 * cot) * d2 - cp.k33 * (2.0 * d_star + d1),
    }
}

/// Builds d₁, d₂, l₁, l₂, K₁–K₄ on the coefficient grid and σ₀.
pub fn build_multiplier(bg: &BackgroundTable, co: &CoefficientTable, cfg: &MultiplierConfig) -> Result<MultiplierTable> {
    if !(cfg.d1_at_sonic > 0.0) {
        return Err(Error::domain("d1(theta_so) must be positive"));
    }
    let grid = co.grid();
    let so = bg.theta_so();
    let i2 = cumulative_from(&grid, so, |t| {
        bg.state(t).map(|(a, b)| coefficients_at(t, a, b, 1.0, bg.init.b0, bg.gas).k2).unwrap_or(f64::NAN)
    });
    let d_star = i2.iter().map(|v| cfg.d1_at_sonic * v.exp()).fold(4.0, f64::max);
    let p_lower = p_branch(bg, bg.theta_minus)?;
    let p_upper = p_branch(bg, bg.theta_plus)?;
    let mut table = MultiplierTable {
        d_star,
        d1_at_sonic: cfg.d1_at_sonic,
        d2_at_sonic: cfg.d2_start,
        doublings: 0,
        mu1: cfg.mu1,
        points: Vec::new(),
        sigma0: 0.0,
        k4_floor: 0.0,
        kt2_residual: 0.0,
        relation_residual: 0.0,
        p_lower,
        p_upper,
        bg: bg.clone(),
    };
    let ps: Vec<f64> = grid
        .iter()
        .map(|&t| table.p_at(t).ok_or_else(|| Error::invariant(format!("d2 ODE has no value at {t}"))))
        .collect::<Result<_>>()?;
    loop {
        table.points = co.points.iter().zip(&i2).zip(&ps).map(|((cp, i), p)| table.point_from(cp, *i, *p)).collect();
        let ok1 = table.points.iter().all(|m| m.kt1 >= 2.0);
        let ok3 = cfg.azimuthal_margin.map_or(true, |c| table.points.iter().all(|m| m.kappa3_f >= c));
        if ok1 && ok3 {
            break;
        }
        if table.doublings >= cfg.max_doublings {
            return Err(Error::NoConvergence(format!(
                "d2(theta_so) doubling reached {} without meeting the target",
                table.d2_at_sonic
            )));
        }
        table.d2_at_sonic *= 2.0;
        table.doublings += 1;
    }

    // K̃₂ with d₁′ from differences of the quadrature, not from k̄₂d₁.
    let mut kt2 = 0.0f64;
    for (j, (cp, m)) in co.points.iter().zip(&table.points).enumerate() {
        let t = cp.theta;
        let dist = (t - bg.theta_a).min(bg.theta_b - t);
        let base = i2[j];
        let d1_at = |x: f64| {
            let v = quad::integrate(
                |s| bg.state(s).map(|(a, b)| coefficients_at(s, a, b, 1.0, bg.init.b0, bg.gas).k2).unwrap_or(f64::NAN),
                t,
                x,
                1e-16,
                1e-14,
            )
            .value;
            cfg.d1_at_sonic * (base + v).exp()
        };
        // d₁ is an exact quadrature, so a much smaller step is affordable.
        let dd1 = fd_derivative_ratio(d1_at, t, dist, 400.0);
        kt2 = kt2.max((cp.k2 * m.d1 - dd1).abs() / (cp.k2 * m.d1).abs());
    }
    table.kt2_residual = kt2;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    table.relation_residual = table
        .points
        .iter()
        .map(|m| rel(m.k1, m.k1_rel).max(rel(m.k2, m.k2_rel)).max(rel(m.k3, m.k3_rel)).max(rel(m.k4, m.k4_reduced)))
        .fold(0.0, f64::max);

    let (sigma0, floor) = find_sigma0(&table, cfg.k4_floor_fraction)?;
    table.sigma0 = sigma0;
    table.k4_floor = floor;
    Ok(table)
}

/// Largest σ₀ with K₄ ≥ floor on [θ_so − σ₀, θ₊]; grid scan refined by bisection.
pub fn find_sigma0(mult: &MultiplierTable, floor_fraction: f64) -> Result<(f64, f64)> {
    let so = mult.bg.theta_so();
    let k4_so = mult.eval(so).map(|m| m.k4).unwrap_or(f64::NAN);
    if !(k4_so > 0.0) {
        return Err(Error::invariant(format!("K4(theta_so) = {k4_so} is not positive")));
    }
    let floor = floor_fraction * k4_so;
    if let Some(m) = mult.points.iter().find(|m| m.theta >= so && !(m.k4 >= floor)) {
        return Err(Error::invariant(format!("K4 = {} below the floor at theta = {} > theta_so", m.k4, m.theta)));
    }
    let below: Vec<&MultiplierPoint> = mult.points.iter().rev().filter(|m| m.theta < so).collect();
    let mut good = so;
    for m in below {
        if m.k4 >= floor {
            good = m.theta;
            continue;
        }
        let g = |t: f64| mult.eval(t).map(|m| m.k4 - floor).unwrap_or(f64::NAN);
        let t = brent(g, m.theta, good, 1e-13)?;
        return Ok((so - t, floor));
    }
    Ok((so - mult.bg.theta_minus, floor))
}

/// Proposition-style inequalities evaluated on the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub kt1_min: f64,
    pub kt3_min: f64,
    pub l1_max: f64,
    pub l2_min: f64,
    pub k1_min: f64,
    pub k2_max: f64,
    pub k3_min: f64,
    pub disc_min: f64,
    /// min K₄ over samples in [θ_so − σ₀, θ₊].
    pub k4_min_on_sigma: f64,
    pub all_hold: bool,
}

pub fn check_inequalities(mult: &MultiplierTable) -> InequalityReport {
    let so = mult.bg.theta_so();
    let mut r = InequalityReport {
        kt1_min: f64::INFINITY,
        kt3_min: f64::INFINITY,
        l1_max: f64::NEG_INFINITY,
        l2_min: f64::INFINITY,
        k1_min: f64::INFINITY,
        k2_max: f64::NEG_INFINITY,
        k3_min: f64::INFINITY,
        disc_min: f64::INFINITY,
        k4_min_on_sigma: f64::INFINITY,
        all_hold: false,
    };
    for m in &mult.points {
        r.kt1_min = r.kt1_min.min(m.kt1);
        r.kt3_min = r.kt3_min.min(m.kt3);
        r.l1_max = r.l1_max.max(m.l1);
        r.l2_min = r.l2_min.min(m.l2);
        r.k1_min = r.k1_min.min(m.k1);
        r.k2_max = r.k2_max.max(m.k2);
        r.k3_min = r.k3_min.min(m.k3);
        r.disc_min = r.disc_min.min(4.0 * m.k1 * m.k3 - m.k2 * m.k2);
        if m.theta >= so - mult.sigma0 {
            r.k4_min_on_sigma = r.k4_min_on_sigma.min(m.k4);
        }
    }
    r.all_hold = r.kt1_min >= 2.0
        && r.kt3_min >= 2.0
        && r.l1_max < 0.0
        && r.l2_min > 0.0
        && r.k1_min > 0.0
        && r.k2_max < 0.0
        && r.k3_min > 0.0
        && r.disc_min > 0.0
        && r.k4_min_on_sigma > 0.0
        && mult.sigma0 > 0.0;
    r
}
