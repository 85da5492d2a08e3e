//! Attached conic shocks in a uniform-swirl incoming flow.
//!
//! The incoming state is prescribed on the equator θ = π/2 with U₁ = 0, so
//! g₂(π/2) = 0 and the upstream flow is the closed-form Beltrami family. A
//! shock at θ_b keeps U₁, U₃ and B continuous and jumps U₂ by the Prandtl
//! relation; the downstream flow is then integrated towards the cone θ_*,
//! where U₂ (and U₃) vanish.
//!
//! Every closed-form angle is paired with an independent root solve of its
//! defining equation; callers (and the tests) compare the two.

use crate::gas::{self, FlowState, GasConstants};
use crate::roots::{bisect, brent};
use crate::selfsim::{
    beltrami_closed_form, integrate_problem1, BeltramiSolution, IntegrationConfig, ProblemOneInit, TerminationKind,
    Trajectory,
};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

/// Shock angles closer than this to θ̲ are refused: the jump in p cancels
/// catastrophically as the shock strength goes to zero.
pub const WEAK_SHOCK_MARGIN: f64 = 1e-6;

/// |M|² − 1 below this in magnitude counts as sonic when classifying.
pub const SONIC_TOL: f64 = 1e-8;

/// Incoming flow on the equator: (ρ₀, 0, U₀₂, U₀₃, A₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomingFlow {
    pub rho0: f64,
    pub u02: f64,
    pub u03: f64,
    pub a0: f64,
    pub gas: GasConstants,
}

impl IncomingFlow {
    /// Validates ρ₀, A₀ > 0, U₀₂ < 0 and U₀₂² > c₀².
    pub fn new(rho0: f64, u02: f64, u03: f64, a0: f64, gas: GasConstants) -> Result<Self> {
        let f = Self { rho0, u02, u03, a0, gas };
        if !(rho0 > 0.0 && a0 > 0.0 && rho0.is_finite() && a0.is_finite() && u03.is_finite()) {
            return Err(Error::domain("incoming flow needs finite rho0 > 0 and A0 > 0"));
        }
        if !(u02 < 0.0) {
            return Err(Error::domain("incoming flow needs U02 < 0"));
        }
        if !(f.a1_sq() > 1.0) {
            return Err(Error::domain(format!("incoming flow needs a1^2 = U02^2/c0^2 > 1, got {}", f.a1_sq())));
        }
        Ok(f)
    }

    /// Unit-density flow with total Mach number `m0` and swirl fraction
    /// U₀₃ = `swirl`·q₀, normalised to c₀ = 1.
    pub fn from_mach(m0: f64, swirl: f64, gas: GasConstants) -> Result<Self> {
        let q0 = m0;
        let u03 = swirl * q0;
        let u02 = -(q0 * q0 - u03 * u03).sqrt();
        Self::new(1.0, u02, u03, 1.0 / gas.gamma, gas)
    }

    pub fn c0_sq(&self) -> f64 {
        self.gas.sound_speed_sq(self.rho0, self.a0)
    }

    pub fn q0_sq(&self) -> f64 {
        self.u02 * self.u02 + self.u03 * self.u03
    }

    pub fn q0(&self) -> f64 {
        self.q0_sq().sqrt()
    }

    pub fn mach0_sq(&self) -> f64 {
        self.q0_sq() / self.c0_sq()
    }

    pub fn a1_sq(&self) -> f64 {
        self.u02 * self.u02 / self.c0_sq()
    }

    pub fn bernoulli(&self) -> f64 {
        gas::bernoulli(self.q0_sq(), self.c0_sq(), self.gas)
    }

    /// Squared critical speed 2(γ−1)B₀/(γ+1).
    pub fn critical_speed_sq(&self) -> f64 {
        gas::sonic_speed_sq(self.bernoulli(), self.gas)
    }

    pub fn equator_state(&self) -> FlowState {
        FlowState { theta: FRAC_PI_2, rho: self.rho0, u1: 0.0, u2: self.u02, u3: self.u03, entropy_a: self.a0 }
    }

    /// K(θ) = 2(γ−1)B₀/(γ+1) − (γ−1)(U₁² + U₃²)/(γ+1).
    pub fn k_of(&self, u1: f64, u3: f64) -> f64 {
        let g = self.gas.gamma;
        2.0 * (g - 1.0) * self.bernoulli() / (g + 1.0) - (g - 1.0) / (g + 1.0) * (u1 * u1 + u3 * u3)
    }

    fn is_swirl_free(&self) -> bool {
        self.u03 == 0.0
    }
}

/// Closed-form upstream flow on (θ_min, π/2].
pub fn upstream_flow(inflow: &IncomingFlow) -> Result<BeltramiSolution> {
    let init = ProblemOneInit::new(inflow.equator_state(), inflow.gas)?;
    beltrami_closed_form(&init)
}

/// Relative residuals of the five jump conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhResiduals {
    pub mass: f64,
    pub radial_momentum: f64,
    pub polar_momentum: f64,
    pub azimuthal_momentum: f64,
    pub bernoulli: f64,
}

impl RhResiduals {
    pub fn max(&self) -> f64 {
        self.mass
            .max(self.radial_momentum)
            .max(self.polar_momentum)
            .max(self.azimuthal_momentum)
            .max(self.bernoulli)
    }
}

fn jump(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Substitutes both sides into the jump conditions.
pub fn rh_residuals(minus: &FlowState, plus: &FlowState, gas: GasConstants) -> RhResiduals {
    let p = |s: &FlowState| s.entropy_a * s.rho.powf(gas.gamma);
    let b = |s: &FlowState| gas::bernoulli(s.speed_sq(), gas.sound_speed_sq(s.rho, s.entropy_a), gas);
    let f = |s: &FlowState| {
        let m = s.rho * s.u2;
        [m, m * s.u1, m * s.u2 + p(s), m * s.u3]
    };
    let (fm, fp) = (f(minus), f(plus));
    RhResiduals {
        mass: jump(fm[0], fp[0]),
        radial_momentum: jump(fm[1], fp[1]),
        polar_momentum: jump(fm[2], fp[2]),
        azimuthal_momentum: jump(fm[3], fp[3]),
        bernoulli: jump(b(minus), b(plus)),
    }
}

/// Both sides of a shock at θ_b and the derived checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockJump {
    pub theta_b: f64,
    pub upstream: FlowState,
    pub downstream: FlowState,
    /// [p] = p⁺ − p⁻.
    pub pressure_jump: f64,
    pub residuals: RhResiduals,
    /// |U₂⁺U₂⁻ − K|/K.
    pub prandtl_residual: f64,
    /// |K⁺ − K⁻|/K with K = 2c²/(γ+1) + (γ−1)U₂²/(γ+1) from each side.
    pub k_jump: f64,
}

/// Squared polar velocity threshold of the jump: |U₂⁻|² − K must be positive.
fn weak_margin(inflow: &IncomingFlow, up: &FlowState) -> f64 {
    up.u2 * up.u2 - inflow.k_of(up.u1, up.u3)
}

/// Downstream state of a shock located at θ_b.
pub fn rh_downstream(inflow: &IncomingFlow, theta_b: f64) -> Result<ShockJump> {
    let ca = CriticalAngles::closed_forms(inflow);
    if !(theta_b < FRAC_PI_2) {
        return Err(Error::domain("weak shock violation: theta_b < pi/2 fails"));
    }
    if !(theta_b > ca.under_theta) {
        return Err(Error::domain(format!(
            "weak shock violation: theta_b > under_theta = {} fails (|U2-|^2 > K)",
            ca.under_theta
        )));
    }
    if theta_b - ca.under_theta < WEAK_SHOCK_MARGIN {
        return Err(Error::domain("weak shock violation: theta_b within 1e-6 of under_theta"));
    }
    let up = upstream_flow(inflow)?.state(theta_b)?;
    if !(weak_margin(inflow, &up) > 0.0) {
        return Err(Error::domain("weak shock violation: |U2-(theta_b)|^2 > K(theta_b) fails"));
    }
    let gas = inflow.gas;
    let g = gas.gamma;
    let k = inflow.k_of(up.u1, up.u3);
    let u2p = k / up.u2;
    let rho_p = up.rho * up.u2 / u2p;
    let speed_sq = up.u1 * up.u1 + u2p * u2p + up.u3 * up.u3;
    let h = inflow.bernoulli() - 0.5 * speed_sq;
    if !(h > 0.0) {
        return Err(Error::Vacuum { enthalpy: h });
    }
    let a_p = rho_p.powf(1.0 - g) * (g - 1.0) / g * h;
    let down = FlowState { theta: theta_b, rho: rho_p, u1: up.u1, u2: u2p, u3: up.u3, entropy_a: a_p };
    let p_minus = up.entropy_a * up.rho.powf(g);
    let p_plus = a_p * rho_p.powf(g);
    let kside = |s: &FlowState| 2.0 * gas.sound_speed_sq(s.rho, s.entropy_a) / (g + 1.0) + (g - 1.0) / (g + 1.0) * s.u2 * s.u2;
    let jump = ShockJump {
        theta_b,
        upstream: up,
        downstream: down,
        pressure_jump: p_plus - p_minus,
        residuals: rh_residuals(&up, &down, gas),
        prandtl_residual: (u2p * up.u2 - k).abs() / k,
        k_jump: (kside(&down) - kside(&up)).abs() / k,
    };
    if !(jump.pressure_jump > 0.0) {
        return Err(Error::invariant(format!("entropy condition [p] > 0 fails: [p] = {}", jump.pressure_jump)));
    }
    Ok(jump)
}

/// A point on the swirl-free shock polar U₂⁺ = G(U₁⁺).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub g: f64,
    /// dG/ds = s (q₀² − s²)^{-3/2} ((γ−1)(q₀² − s²) − 2c₀²)/(γ+1).
    pub dg: f64,
}

/// G(s) and G′(s) for a swirl-free incoming flow, 0 ≤ s < q₀ cos θ̲.
pub fn shock_polar(s: f64, inflow: &IncomingFlow) -> Result<PolarPoint> {
    if !inflow.is_swirl_free() {
        return Err(Error::domain("shock polar is defined for U03 = 0"));
    }
    let q2 = inflow.q0_sq();
    let c2 = inflow.c0_sq();
    let g = inflow.gas.gamma;
    let smax = inflow.q0() * CriticalAngles::closed_forms(inflow).under_theta.cos();
    if !(s >= 0.0 && s < smax) {
        return Err(Error::domain(format!("shock polar argument {s} outside [0, {smax})")));
    }
    let w = q2 - s * s;
    let gv = -((g - 1.0) * w + 2.0 * c2) / ((g + 1.0) * w.sqrt());
    let dg = s * w.powf(-1.5) * ((g - 1.0) * w - 2.0 * c2) / (g + 1.0);
    Ok(PolarPoint { g: gv, dg })
}

/// h₀(τ) = −2γτ²/(γ+1) + ((γ−3)/(γ+1) + M₀²)τ + 2/(γ+1).
pub fn h0(tau: f64, mach0_sq: f64, gas: GasConstants) -> f64 {
    let g = gas.gamma;
    -2.0 * g / (g + 1.0) * tau * tau + ((g - 3.0) / (g + 1.0) + mach0_sq) * tau + 2.0 / (g + 1.0)
}

/// k(t) = q₀⁴t² − (2q₀²U₀₃² + c₀²U₀₂²)t + U₀₃⁴; positive exactly for admissible sin²θ_b.
pub fn k_poly(t: f64, inflow: &IncomingFlow) -> f64 {
    let q2 = inflow.q0_sq();
    let u3s = inflow.u03 * inflow.u03;
    q2 * q2 * t * t - (2.0 * q2 * u3s + inflow.c0_sq() * inflow.u02 * inflow.u02) * t + u3s * u3s
}

/// (M₂⁻)² at the upstream side of a shock with sin²θ_b = t.
pub fn upstream_polar_mach_sq(t: f64, inflow: &IncomingFlow) -> f64 {
    let c0 = inflow.c0_sq().sqrt();
    let a0 = inflow.q0_sq() / (inflow.u02 * c0);
    let a1 = inflow.u02 / c0;
    let v = a1 - a0 * (1.0 - t);
    v * v / t
}

/// Characteristic angles of an incoming flow, each closed form paired with
/// a root solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalAngles {
    pub theta_min: f64,
    pub under_theta: f64,
    /// θ̲ from a Brent solve of k(t) = 0.
    pub under_theta_root: f64,
    pub a_sharp_sq: f64,
    /// a♯² from a Brent solve of h₀ on [1, M₀²].
    pub a_sharp_sq_root: f64,
    /// Present when a♯² < a₁².
    pub theta_sharp: Option<f64>,
    /// arcsin(a♯/M₀), the swirl-free closed form.
    pub theta_sharp_closed: Option<f64>,
    /// Sonic-on-cone shock angle (swirl-free only), by bisection.
    pub theta_s: Option<f64>,
    pub q_tilde0: f64,
}

impl CriticalAngles {
    /// Closed forms only; root-solved fields mirror them.
    fn closed_forms(inflow: &IncomingFlow) -> Self {
        let q2 = inflow.q0_sq();
        let c2 = inflow.c0_sq();
        let c0 = c2.sqrt();
        let u3s = inflow.u03 * inflow.u03;
        let u2s = inflow.u02 * inflow.u02;
        let g = inflow.gas.gamma;
        let m2 = inflow.mach0_sq();
        let s2 = (2.0 * q2 * u3s + c2 * u2s + c0 * inflow.u02.abs() * (4.0 * q2 * u3s + c2 * u2s).sqrt()) / (2.0 * q2 * q2);
        let under = s2.sqrt().asin();
        let b = (g - 3.0) + (g + 1.0) * m2;
        let a_sharp_sq = (b + (b * b + 16.0 * g).sqrt()) / (4.0 * g);
        let q0 = q2.sqrt();
        CriticalAngles {
            theta_min: (inflow.u03.abs() / q0).asin(),
            under_theta: under,
            under_theta_root: under,
            a_sharp_sq,
            a_sharp_sq_root: a_sharp_sq,
            theta_sharp: None,
            theta_sharp_closed: None,
            theta_s: None,
            q_tilde0: ((g - 1.0) * q2 + 2.0 * c2) / ((g + 1.0) * q0),
        }
    }
}

/// All critical angles. θ_s is searched only for swirl-free flows.
pub fn critical_angles(inflow: &IncomingFlow, cfg: &IntegrationConfig) -> Result<CriticalAngles> {
    let mut ca = CriticalAngles::closed_forms(inflow);
    let gas = inflow.gas;
    let m2 = inflow.mach0_sq();
    ca.a_sharp_sq_root = brent(|t| h0(t, m2, gas), 1.0, m2, 1e-15)?;
    // Bracket for k: its vertex (k < 0 there) and t = 1 (k > 0).
    let q2 = inflow.q0_sq();
    let u3s = inflow.u03 * inflow.u03;
    let tv = (2.0 * q2 * u3s + inflow.c0_sq() * inflow.u02 * inflow.u02) / (2.0 * q2 * q2);
    let t_root = brent(|t| k_poly(t, inflow), tv, 1.0, 1e-16)?;
    ca.under_theta_root = t_root.sqrt().asin();

    if ca.a_sharp_sq < inflow.a1_sq() {
        let t_lo = ca.under_theta.sin().powi(2);
        let t = brent(|t| upstream_polar_mach_sq(t, inflow) - ca.a_sharp_sq, t_lo, 1.0, 1e-16)?;
        ca.theta_sharp = Some(t.sqrt().asin());
        if inflow.is_swirl_free() {
            ca.theta_sharp_closed = Some((ca.a_sharp_sq.sqrt() / m2.sqrt()).asin());
        }
    }
    if inflow.is_swirl_free() {
        if let Some(ts) = ca.theta_sharp {
            ca.theta_s = find_theta_s(inflow, ca.under_theta + 2.0 * WEAK_SHOCK_MARGIN, ts, cfg).ok();
        }
    }
    Ok(ca)
}

/// Bisection on |M⁺(θ_*)|² − 1 over θ_b ∈ [lo, hi], tolerance 1e-8 in θ.
pub fn find_theta_s(inflow: &IncomingFlow, lo: f64, hi: f64, cfg: &IntegrationConfig) -> Result<f64> {
    let f = |tb: f64| cone_mach_sq(inflow, tb, cfg).map(|m| m - 1.0).unwrap_or(f64::NAN);
    bisect(f, lo, hi, 1e-8)
}

fn cone_mach_sq(inflow: &IncomingFlow, theta_b: f64, cfg: &IntegrationConfig) -> Result<f64> {
    let sol = solve_conic_shock(inflow, theta_b, cfg)?;
    Ok(sol.cone_mach_sq)
}

/// Outcome of the condition that makes g₂⁺(θ_b) negative for every θ_b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition290 {
    pub holds: bool,
    /// A t ∈ (0, 1) with P(t) ≤ 0, when the condition fails.
    pub witness_t: Option<f64>,
    /// Minimum of P over [0, 1] (vertex or endpoint).
    pub min_value: f64,
    pub sufficient_a: bool,
    pub sufficient_b: bool,
}

/// P(t) = (γ−1)q₀⁴t² + (2c₀²U₀₂² − (3γ−1)U₀₃²q₀²)t + 2γU₀₃⁴.
pub fn condition_poly(t: f64, inflow: &IncomingFlow) -> f64 {
    let (a, b, c) = condition_coeffs(inflow);
    (a * t + b) * t + c
}

fn condition_coeffs(inflow: &IncomingFlow) -> (f64, f64, f64) {
    let g = inflow.gas.gamma;
    let q2 = inflow.q0_sq();
    let u3s = inflow.u03 * inflow.u03;
    (
        (g - 1.0) * q2 * q2,
        2.0 * inflow.c0_sq() * inflow.u02 * inflow.u02 - (3.0 * g - 1.0) * u3s * q2,
        2.0 * g * u3s * u3s,
    )
}

pub fn check_condition_290(inflow: &IncomingFlow) -> Condition290 {
    let (a, b, c) = condition_coeffs(inflow);
    let g = inflow.gas.gamma;
    let q2 = inflow.q0_sq();
    let u3s = inflow.u03 * inflow.u03;
    let c2u2 = inflow.c0_sq() * inflow.u02 * inflow.u02;
    let p = |t: f64| (a * t + b) * t + c;
    let tv = -b / (2.0 * a);
    let (holds, witness, min_value) = if tv > 0.0 && tv < 1.0 {
        let v = p(tv);
        (v > 0.0, (v <= 0.0).then_some(tv), v)
    } else {
        // Monotone on (0, 1): the infimum is the smaller endpoint value.
        let (p0, p1) = (p(0.0), p(1.0));
        let (v, t) = if p0 <= p1 { (p0, 1e-12) } else { (p1, 1.0 - 1e-12) };
        let ok = v >= 0.0 && p(t) > 0.0;
        (ok, (!ok).then_some(t), v)
    };
    let sq = (2.0 * g * (g - 1.0)).sqrt();
    let sufficient_a = 2.0 * c2u2 > (3.0 * g - 1.0 - 2.0 * sq) * q2 * u3s;
    let sufficient_b = (3.0 * g - 1.0) * u3s * q2 >= 2.0 * c2u2 + 2.0 * (g - 1.0) * q2 * q2
        && (g - 1.0) * q2 * q2 + 2.0 * c2u2 + 2.0 * g * u3s * u3s > (3.0 * g - 1.0) * q2 * u3s;
    Condition290 { holds, witness_t: witness, min_value, sufficient_a, sufficient_b }
}

/// Downstream flow patterns, numbered as in the classical description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownstreamClass {
    /// Supersonic behind the shock and on the cone.
    UniformlySupersonic = 1,
    /// Supersonic behind the shock, sonic on the cone.
    SonicOnCone = 2,
    /// Supersonic behind the shock, smooth transition to subsonic.
    SmoothTransonic = 3,
    /// Subsonic behind the shock.
    UniformlySubsonic = 4,
    /// Sonic immediately behind the shock.
    SonicBehindShock = 5,
}

impl DownstreamClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_mach(behind: f64, cone: f64) -> Self {
        if (behind - 1.0).abs() < SONIC_TOL {
            Self::SonicBehindShock
        } else if behind < 1.0 {
            Self::UniformlySubsonic
        } else if (cone - 1.0).abs() < SONIC_TOL {
            Self::SonicOnCone
        } else if cone > 1.0 {
            Self::UniformlySupersonic
        } else {
            Self::SmoothTransonic
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShockSolution {
    pub theta_b: f64,
    pub upstream: BeltramiSolution,
    pub jump: ShockJump,
    pub downstream: Trajectory,
    pub theta_star: f64,
    pub classification: DownstreamClass,
    /// |M⁺|² just behind the shock.
    pub behind_mach_sq: f64,
    /// |M⁺|² at θ_*.
    pub cone_mach_sq: f64,
    /// U₁⁺(θ_*): radial velocity on the cone surface.
    pub cone_u1: f64,
    pub g2_behind: f64,
}

impl ShockSolution {
    /// a⁺ − a⁻ across the shock; positive for an admissible jump.
    pub fn entropy_jump(&self) -> f64 {
        self.jump.downstream.entropy_a - self.jump.upstream.entropy_a
    }

    pub fn downstream_at_shock(&self) -> FlowState {
        self.jump.downstream
    }
}

/// Builds the shock at θ_b and integrates the downstream flow to θ_*.
pub fn solve_conic_shock(inflow: &IncomingFlow, theta_b: f64, cfg: &IntegrationConfig) -> Result<ShockSolution> {
    let jump = rh_downstream(inflow, theta_b)?;
    let upstream = upstream_flow(inflow)?;
    let gas = inflow.gas;
    let d_b = gas::derive(&jump.downstream, gas)?;
    let init = ProblemOneInit::new(jump.downstream, gas)?;
    let mut c = *cfg;
    c.direction = crate::selfsim::Direction::Decreasing;
    let downstream = integrate_problem1(&init, 0.0, &c)?;
    let ev = downstream.termination;
    if ev.kind != TerminationKind::PolarVelocityVanishes {
        return Err(Error::NoConvergence(format!(
            "downstream integration from theta_b = {theta_b} ended with {:?} at {}",
            ev.kind, ev.theta_event
        )));
    }
    let d_star = gas::derive_unchecked(&ev.state, gas);
    let behind = d_b.mach_sq_total;
    let cone = d_star.mach_sq_total;
    Ok(ShockSolution {
        theta_b,
        upstream,
        jump,
        theta_star: ev.theta_event,
        classification: DownstreamClass::from_mach(behind, cone),
        behind_mach_sq: behind,
        cone_mach_sq: cone,
        cone_u1: ev.state.u1,
        g2_behind: d_b.g2,
        downstream,
    })
}

/// One row of an apple-curve sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub theta_b: f64,
    pub outcome: core::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta_star: f64,
    pub cone_u1: f64,
    pub class_code: u8,
    pub behind_mach_sq: f64,
    pub cone_mach_sq: f64,
    pub pressure_jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppleCurve {
    pub rows: Vec<SweepRow>,
    /// Shock angle where the cone state turns sonic, located between the
    /// first adjacent pair of rows whose |M⁺(θ_*)|² − 1 changes sign.
    pub theta_s: Option<f64>,
    /// True when the successful rows have strictly decreasing cone velocity.
    pub monotone_decreasing: bool,
    /// False when θ_* is not monotone along the grid, i.e. some cone angles
    /// admit more than one shock position. Reported only.
    pub theta_star_monotone: bool,
}

/// Solves every grid point; failures are recorded and the sweep continues.
pub fn apple_curve(inflow: &IncomingFlow, grid: &[f64], cfg: &IntegrationConfig) -> AppleCurve {
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&tb| SweepRow {
            theta_b: tb,
            outcome: solve_conic_shock(inflow, tb, cfg)
                .map(|s| SweepPoint {
                    theta_star: s.theta_star,
                    cone_u1: s.cone_u1,
                    class_code: s.classification.code(),
                    behind_mach_sq: s.behind_mach_sq,
                    cone_mach_sq: s.cone_mach_sq,
                    pressure_jump: s.jump.pressure_jump,
                })
                .map_err(|e| format!("{e}")),
        })
        .collect();
    let ok: Vec<(f64, SweepPoint)> = rows.iter().filter_map(|r| r.outcome.as_ref().ok().map(|p| (r.theta_b, *p))).collect();
    let monotone_decreasing = ok.windows(2).all(|w| w[1].1.cone_u1 < w[0].1.cone_u1);
    let theta_star_monotone = ok.windows(2).all(|w| w[1].1.theta_star > w[0].1.theta_star)
        || ok.windows(2).all(|w| w[1].1.theta_star < w[0].1.theta_star);
    let mut theta_s = None;
    if inflow.is_swirl_free() {
        for w in ok.windows(2) {
            let (fa, fb) = (w[0].1.cone_mach_sq - 1.0, w[1].1.cone_mach_sq - 1.0);
            if fa.signum() != fb.signum() {
                theta_s = find_theta_s(inflow, w[0].0, w[1].0, cfg).ok();
                break;
            }
        }
    }
    AppleCurve { rows, theta_s, monotone_decreasing, theta_star_monotone }
}

/// Uniform grid of `n` shock angles strictly inside (θ̲, π/2).
pub fn admissible_grid(inflow: &IncomingFlow, n: usize) -> Vec<f64> {
    let lo = CriticalAngles::closed_forms(inflow).under_theta;
    let hi = FRAC_PI_2;
    (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
}
