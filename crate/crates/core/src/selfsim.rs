//! The polar-angle ODE for self-similar flows and its g₂ ≡ 0 closed forms.
//!
//! # Formulation
//!
//! The physical system in θ is singular where U₂ = 0 and where M₂² = 1. The
//! integrator therefore works with
//!
//! - W = U₃² instead of U₃: near a zero θ_* of U₂ one has U₃ ~ (θ−θ_*)^{1/2}
//!   but W is linear, and the ratio W/U₂ stays finite;
//! - a parameter s with dθ/ds = ±(1 − M₂²), which turns the sonic-polar
//!   degeneracy into an ordinary zero of 1 − M₂² at finite s.
//!
//! Both terminal events are then sign changes of smooth functions along the
//! dense output and are located with Brent's method. A and B are not
//! integrated: A is carried as a constant and B is recomputed from the
//! integrated (ρ, U) at every sample, so its drift is a genuine accuracy
//! measurement.

use crate::gas::{self, DerivedState, FlowState, GasConstants};
use crate::ode::{self, Flow, Halt, Options, Segment};
use crate::roots::brent;
use crate::{Error, Result};
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;
use core::f64::consts::{FRAC_PI_2, PI};

/// Initial data for the θ-initial value problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemOneInit {
    pub theta0: f64,
    pub state0: FlowState,
    pub gas: GasConstants,
}

impl ProblemOneInit {
    pub fn new(state0: FlowState, gas: GasConstants) -> Result<Self> {
        state0.validate()?;
        if state0.u2 == 0.0 {
            return Err(Error::domain("U2(theta0) must be nonzero"));
        }
        Ok(Self { theta0: state0.theta, state0, gas })
    }

    pub fn derived(&self) -> DerivedState {
        gas::derive_unchecked(&self.state0, self.gas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Decreasing,
    Increasing,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Decreasing => -1.0,
            Direction::Increasing => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationKind {
    ReachedEnd,
    PolarVelocityVanishes,
    SonicPolarDegeneracy,
    AxisReached,
    StepFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationEvent {
    pub kind: TerminationKind,
    pub theta_event: f64,
    /// State at the event (for `StepFailure`, the last accepted state).
    pub state: FlowState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeClassification {
    SupersonicPolar,
    BeltramiG2Zero,
    TransitionCase3,
    Other,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationConfig {
    pub rtol: f64,
    pub atol: f64,
    pub direction: Direction,
    /// Halting threshold |U₂| < u2_guard·|U₀₂| when no sign change is seen.
    pub u2_guard: f64,
    /// Halting threshold |1 − M₂²| < sonic_guard.
    pub sonic_guard: f64,
    /// θ is kept inside [axis_margin, π − axis_margin].
    pub axis_margin: f64,
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            direction: Direction::Decreasing,
            u2_guard: 1e-9,
            sonic_guard: 1e-9,
            axis_margin: 1e-8,
            max_steps: 200_000,
        }
    }
}

impl IntegrationConfig {
    pub fn with_direction(mut self, d: Direction) -> Self {
        self.direction = d;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: FlowState,
    pub derived: DerivedState,
}

/// A computed solution of the θ-initial value problem.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub direction: Direction,
    pub termination: TerminationEvent,
    pub gas: GasConstants,
    pub bernoulli0: f64,
    pub entropy0: f64,
    segments: Vec<Segment<5>>,
    /// Regularised parameter of the final state; the last segment may run past it.
    s_end: f64,
    u3_sign: f64,
}

/// Guard thresholds for [`ode_rhs`].
#[derive(Debug, Clone, Copy)]
pub struct RhsGuards {
    /// |U₂| must exceed this multiple of |U|.
    pub u2_rel: f64,
    pub sonic: f64,
}

impl Default for RhsGuards {
    fn default() -> Self {
        Self { u2_rel: 1e-9, sonic: 1e-9 }
    }
}

/// d/dθ of (U₁, U₂, U₃, ρ) for the self-similar system.
pub fn ode_rhs(state: &FlowState, gas: GasConstants) -> Result<[f64; 4]> {
    ode_rhs_guarded(state, gas, RhsGuards::default())
}

pub fn ode_rhs_guarded(s: &FlowState, gas: GasConstants, guards: RhsGuards) -> Result<[f64; 4]> {
    let theta = s.theta;
    let (sn, cs) = theta.sin_cos();
    if sn.abs() < 1e-14 {
        return Err(Error::Singular { guard: "sin(theta)", value: sn });
    }
    let speed = s.speed_sq().sqrt();
    if s.u2.abs() <= guards.u2_rel * speed || s.u2 == 0.0 {
        return Err(Error::Singular { guard: "U2", value: s.u2 });
    }
    let c2 = gas.sound_speed_sq(s.rho, s.entropy_a);
    let one_m = 1.0 - s.u2 * s.u2 / c2;
    if one_m.abs() <= guards.sonic {
        return Err(Error::Singular { guard: "1-M2^2", value: one_m });
    }
    let g1 = gas::g1(theta, s.u1, s.u2);
    let g2 = gas::g2(theta, s.u1, s.u2, s.u3);
    let du1 = (s.u2 * s.u2 + s.u3 * s.u3) / s.u2;
    let du2 = -(s.u1 + g2 / (one_m * s.u2 * sn) - s.u3 * s.u3 * cs / (s.u2 * sn));
    let du3 = -g1 * s.u3 / (s.u2 * sn);
    let drho = g2 * s.rho / ((c2 - s.u2 * s.u2) * sn);
    Ok([du1, du2, du3, drho])
}

pub fn classification_tolerance(s: &FlowState) -> f64 {
    1e-10 * ((s.u1 * s.u2).abs() + s.u2 * s.u2 + s.u3 * s.u3)
}

/// Sorts initial data into the cases of the existence theory.
///
/// g₂ = 0 is tested first: those data have a closed-form solution whatever
/// the sign of 1 − M₂².
pub fn classify_initial(init: &ProblemOneInit) -> RegimeClassification {
    let s = &init.state0;
    let d = init.derived();
    let one_m = 1.0 - d.mach[1] * d.mach[1];
    if d.g2.abs() < classification_tolerance(s) {
        RegimeClassification::BeltramiG2Zero
    } else if one_m < 0.0 {
        RegimeClassification::SupersonicPolar
    } else if one_m > 0.0 && s.u2 < 0.0 && d.g2 < 0.0 {
        RegimeClassification::TransitionCase3
    } else {
        RegimeClassification::Other
    }
}

// Regularized state z = (θ, U₁, U₂, W, ρ).
struct Regularized {
    gas: GasConstants,
    a: f64,
    kappa: f64,
}

impl Regularized {
    fn rhs(&self, z: &[f64; 5]) -> Option<[f64; 5]> {
        let [theta, u1, u2, w, rho] = *z;
        if !(rho > 0.0) || u2 == 0.0 {
            return None;
        }
        let (sn, cs) = theta.sin_cos();
        if sn <= 0.0 {
            return None;
        }
        let c2 = self.gas.sound_speed_sq(rho, self.a);
        let one_m = 1.0 - u2 * u2 / c2;
        let g1 = u1 * sn + u2 * cs;
        let g2 = u2 * g1 + w * cs;
        let r = w / u2;
        let k = self.kappa;
        let out = [
            k * one_m,
            k * one_m * (u2 + r),
            -k * (one_m * (u1 - r * cs / sn) + (g1 + r * cs) / sn),
            -k * one_m * 2.0 * g1 * r / sn,
            k * g2 * rho / (c2 * sn),
        ];
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

impl Trajectory {
    fn state_from(&self, z: &[f64; 5]) -> FlowState {
        state_from(z, self.u3_sign, self.entropy0)
    }

    /// Dense-output state at θ inside the computed range.
    pub fn state_at(&self, theta: f64) -> Option<FlowState> {
        let end = self.termination.state;
        if (theta - end.theta).abs() <= 4.0 * f64::EPSILON * theta.abs().max(1.0) {
            return Some(FlowState { theta, ..end });
        }
        let (seg, s1) = self.segments.iter().find_map(|sg| {
            let s1 = sg.t1().min(self.s_end);
            let (a, b) = (sg.eval_component(sg.t0, 0), sg.eval_component(s1, 0));
            (theta >= a.min(b) && theta <= a.max(b)).then_some((sg, s1))
        })?;
        let s = brent(|s| seg.eval_component(s, 0) - theta, seg.t0, s1, 1e-15).ok()?;
        let mut z = seg.eval(s);
        z[0] = theta;
        Some(self.state_from(&z))
    }

    /// θ-range covered by the samples, as (min, max).
    pub fn theta_range(&self) -> (f64, f64) {
        let a = self.samples.first().map(|s| s.state.theta).unwrap_or(f64::NAN);
        let b = self.samples.last().map(|s| s.state.theta).unwrap_or(f64::NAN);
        (a.min(b), a.max(b))
    }

    pub fn max_bernoulli_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.derived.bernoulli - self.bernoulli0).abs() / self.bernoulli0.abs())
            .fold(0.0, f64::max)
    }

    /// A is constant along trajectories by construction; this reports the
    /// largest deviation actually stored.
    pub fn max_entropy_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.state.entropy_a - self.entropy0).abs() / self.entropy0)
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn state_from(z: &[f64; 5], u3_sign: f64, a: f64) -> FlowState {
    FlowState { theta: z[0], rho: z[4], u1: z[1], u2: z[2], u3: u3_sign * z[3].max(0.0).sqrt(), entropy_a: a }
}

/// Integrates from θ₀ towards `theta_target` in the configured direction.
pub fn integrate_problem1(init: &ProblemOneInit, theta_target: f64, cfg: &IntegrationConfig) -> Result<Trajectory> {
    let s0 = init.state0;
    s0.validate()?;
    if s0.u2 == 0.0 {
        return Err(Error::domain("U2(theta0) must be nonzero"));
    }
    let dir = cfg.direction.sign();
    if (theta_target - s0.theta) * dir < 0.0 {
        return Err(Error::domain("theta_target lies on the wrong side of theta0"));
    }
    let gas = init.gas;
    let d0 = init.derived();
    let one_m0 = 1.0 - d0.mach[1] * d0.mach[1];
    if one_m0 == 0.0 {
        return Err(Error::Singular { guard: "1-M2^2", value: 0.0 });
    }
    let kappa = dir * one_m0.signum();
    let sys = Regularized { gas, a: s0.entropy_a, kappa };
    let u3_sign = if s0.u3 < 0.0 { -1.0 } else { 1.0 };
    let z0 = [s0.theta, s0.u1, s0.u2, s0.u3 * s0.u3, s0.rho];

    let mut opts = Options::<5>::new(cfg.rtol, cfg.atol);
    // W is a square; its absolute floor is scaled so that √W is resolved.
    opts.atol[3] = cfg.atol * 1e-2;
    opts.max_steps = cfg.max_steps;
    opts.h_min = 1e-15;

    let lo = cfg.axis_margin;
    let hi = PI - cfg.axis_margin;
    let target = theta_target.clamp(lo, hi);
    let u2_floor = cfg.u2_guard * s0.u2.abs();

    let mut traj = Trajectory {
        samples: alloc::vec![Sample { state: s0, derived: d0 }],
        direction: cfg.direction,
        termination: TerminationEvent { kind: TerminationKind::StepFailure, theta_event: s0.theta, state: s0 },
        gas,
        bernoulli0: d0.bernoulli,
        entropy0: s0.entropy_a,
        segments: Vec::new(),
        s_end: f64::INFINITY,
        u3_sign,
    };
    let mut event: Option<(TerminationKind, [f64; 5])> = None;

    let one_minus = |z: &[f64; 5]| 1.0 - z[2] * z[2] / gas.sound_speed_sq(z[4], s0.entropy_a);

    let run = ode::integrate(
        |_, z| sys.rhs(z),
        0.0,
        z0,
        1e6,
        &opts,
        |seg| {
            let za = seg.y0();
            let zb = seg.y1();
            // Candidate events as (s, kind); earliest wins.
            let mut cands: Vec<(f64, TerminationKind)> = Vec::new();
            let theta_hit = |g: &dyn Fn(f64) -> f64| -> Option<f64> {
                let (ga, gb) = (g(seg.t0), g(seg.t1()));
                if ga == 0.0 {
                    return None;
                }
                if gb == 0.0 || ga.signum() != gb.signum() {
                    brent(g, seg.t0, seg.t1(), 1e-15).ok()
                } else {
                    None
                }
            };
            let g_target = |s: f64| seg.eval_component(s, 0) - target;
            if (zb[0] - target) * dir >= 0.0 {
                let s = theta_hit(&g_target).unwrap_or(seg.t1());
                let kind = if target != theta_target {
                    TerminationKind::AxisReached
                } else {
                    TerminationKind::ReachedEnd
                };
                cands.push((s, kind));
            }
            let g_u2 = |s: f64| seg.eval_component(s, 2);
            if za[2].signum() != zb[2].signum() || zb[2] == 0.0 {
                if let Some(s) = theta_hit(&g_u2) {
                    cands.push((s, TerminationKind::PolarVelocityVanishes));
                }
            } else if zb[2].abs() < u2_floor {
                cands.push((seg.t1(), TerminationKind::PolarVelocityVanishes));
            }
            let g_son = |s: f64| one_minus(&seg.eval(s));
            let (sa, sb) = (one_minus(&za), one_minus(&zb));
            if sa.signum() != sb.signum() || sb == 0.0 {
                if let Some(s) = theta_hit(&g_son) {
                    cands.push((s, TerminationKind::SonicPolarDegeneracy));
                }
            } else if sb.abs() < cfg.sonic_guard {
                cands.push((seg.t1(), TerminationKind::SonicPolarDegeneracy));
            }
            traj.segments.push(*seg);
            if let Some(&(s, kind)) = cands.iter().min_by(|a, b| a.0.partial_cmp(&b.0).unwrap()) {
                let mut z = seg.eval(s);
                match kind {
                    TerminationKind::PolarVelocityVanishes => z[2] = 0.0,
                    TerminationKind::ReachedEnd | TerminationKind::AxisReached => z[0] = target,
                    _ => {}
                }
                event = Some((kind, z));
                traj.s_end = s;
                return Flow::Stop;
            }
            let st = state_from(&zb, u3_sign, s0.entropy_a);
            traj.samples.push(Sample { state: st, derived: gas::derive_unchecked(&st, gas) });
            Flow::Continue
        },
    );

    match event {
        Some((kind, z)) => {
            let st = state_from(&z, u3_sign, s0.entropy_a);
            traj.samples.push(Sample { state: st, derived: gas::derive_unchecked(&st, gas) });
            traj.termination = TerminationEvent { kind, theta_event: z[0], state: st };
        }
        None => {
            let st = traj.last().state;
            let kind = match run.halt {
                Halt::Reached => TerminationKind::ReachedEnd,
                _ => TerminationKind::StepFailure,
            };
            traj.termination = TerminationEvent { kind, theta_event: st.theta, state: st };
        }
    }
    Ok(traj)
}

/// Which closed-form family applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeltramiCase {
    /// θ₀ ∈ (0, π/2), U₀₁ > 0, U₀₂ < 0.
    Oblique,
    /// θ₀ = π/2, U₀₁ = 0.
    Equatorial,
}

/// Closed-form g₂ ≡ 0 solution: ρ ≡ ρ₀, A ≡ A₀, g₃ and |U| constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeltramiSolution {
    pub case: BeltramiCase,
    pub theta_min: f64,
    pub q0: f64,
    init: ProblemOneInit,
}

pub fn beltrami_closed_form(init: &ProblemOneInit) -> Result<BeltramiSolution> {
    let s = init.state0;
    s.validate()?;
    let d = init.derived();
    if d.g2.abs() >= classification_tolerance(&s) {
        return Err(Error::domain("g2(theta0) is not zero: closed form does not apply"));
    }
    let q0 = s.speed_sq().sqrt();
    if (s.theta - FRAC_PI_2).abs() < 1e-14 {
        if s.u1 != 0.0 {
            return Err(Error::domain("equatorial closed form needs U01 = 0"));
        }
        let theta_min = (s.u3.abs() / q0).asin();
        return Ok(BeltramiSolution { case: BeltramiCase::Equatorial, theta_min, q0, init: *init });
    }
    if !(s.theta > 0.0 && s.theta < FRAC_PI_2 && s.u1 > 0.0 && s.u2 < 0.0) {
        return Err(Error::domain("oblique closed form needs theta0 in (0, pi/2), U01 > 0, U02 < 0"));
    }
    let arg = (q0 * s.theta.cos() / s.u1).min(1.0);
    Ok(BeltramiSolution { case: BeltramiCase::Oblique, theta_min: arg.acos(), q0, init: *init })
}

impl BeltramiSolution {
    pub fn interval(&self) -> (f64, f64) {
        (self.theta_min, PI - self.theta_min)
    }

    /// (U₁, U₂, U₃) at θ; θ must lie in the closed existence interval.
    pub fn velocity(&self, theta: f64) -> Result<[f64; 3]> {
        let (lo, hi) = self.interval();
        if !(theta >= lo && theta <= hi) {
            return Err(Error::domain("theta outside the closed-form existence interval"));
        }
        let s = self.init.state0;
        let q2 = self.q0 * self.q0;
        let (sn, cs) = theta.sin_cos();
        let sign3 = if s.u3 < 0.0 { -1.0 } else { 1.0 };
        let (u1, u2, w) = match self.case {
            BeltramiCase::Equatorial => {
                let u02 = s.u2;
                let inner = u02 * u02 - q2 * cs * cs;
                (q2 * cs / (-u02), inner / (u02 * sn), (q2 - u02 * u02) * inner / (u02 * u02 * sn * sn))
            }
            BeltramiCase::Oblique => {
                let c0 = s.theta.cos();
                let u01 = s.u1;
                let inner = u01 * u01 * cs * cs - q2 * c0 * c0;
                (
                    u01 * cs / c0,
                    inner / (u01 * c0 * sn),
                    (q2 * c0 * c0 - u01 * u01) * inner / (u01 * u01 * c0 * c0 * sn * sn),
                )
            }
        };
        Ok([u1, u2, sign3 * w.max(0.0).sqrt()])
    }

    pub fn state(&self, theta: f64) -> Result<FlowState> {
        let [u1, u2, u3] = self.velocity(theta)?;
        let s = self.init.state0;
        Ok(FlowState { theta, rho: s.rho, u1, u2, u3, entropy_a: s.entropy_a })
    }

    /// g₃, constant along the family.
    pub fn g3(&self) -> f64 {
        let s = self.init.state0;
        gas::g3(s.theta, s.u1, s.u2)
    }
}
