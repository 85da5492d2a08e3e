//! Polytropic gas relations and pointwise derived quantities.
//!
//! Pressure is p = Aρ^γ, so c² = Aγρ^{γ−1} and the Bernoulli function is
//! B = ½|U|² + c²/(γ−1). Velocities are spherical components: U₁ radial,
//! U₂ polar, U₃ azimuthal.

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;
use crate::{Error, Result};

/// Adiabatic exponent of the gas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasConstants {
    pub gamma: f64,
}

impl GasConstants {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::domain("gamma must be finite and > 1"));
        }
        Ok(Self { gamma })
    }

    /// Diatomic gas, γ = 1.4.
    pub fn air() -> Self {
        Self { gamma: 1.4 }
    }

    pub fn sound_speed_sq(&self, rho: f64, a: f64) -> f64 {
        a * self.gamma * rho.powf(self.gamma - 1.0)
    }

    /// c² from the Bernoulli constant: c² = (γ−1)(B − ½|U|²).
    pub fn sound_speed_sq_from_bernoulli(&self, b: f64, speed_sq: f64) -> f64 {
        (self.gamma - 1.0) * (b - 0.5 * speed_sq)
    }
}

/// Primitive self-similar unknowns at one polar angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub theta: f64,
    pub rho: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub entropy_a: f64,
}

impl FlowState {
    pub fn speed_sq(&self) -> f64 {
        self.u1 * self.u1 + self.u2 * self.u2 + self.u3 * self.u3
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.theta, self.rho, self.u1, self.u2, self.u3, self.entropy_a];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite flow state"));
        }
        if self.rho <= 0.0 {
            return Err(Error::domain("density must be positive"));
        }
        if self.entropy_a <= 0.0 {
            return Err(Error::domain("entropy A must be positive"));
        }
        if !(self.theta > 0.0 && self.theta < core::f64::consts::PI) {
            return Err(Error::domain("theta must lie in (0, pi)"));
        }
        Ok(())
    }
}

/// Everything that follows pointwise from a [`FlowState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedState {
    pub pressure: f64,
    pub sound_speed_sq: f64,
    pub sound_speed: f64,
    pub bernoulli: f64,
    pub mach: [f64; 3],
    pub mach_sq_total: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

pub fn g1(theta: f64, u1: f64, u2: f64) -> f64 {
    u1 * theta.sin() + u2 * theta.cos()
}

/// g₂ as U₂g₁ + U₃² cos θ.
pub fn g2(theta: f64, u1: f64, u2: f64, u3: f64) -> f64 {
    u2 * g1(theta, u1, u2) + u3 * u3 * theta.cos()
}

/// g₂ expanded: U₁U₂ sin θ + (U₂² + U₃²) cos θ.
pub fn g2_expanded(theta: f64, u1: f64, u2: f64, u3: f64) -> f64 {
    u1 * u2 * theta.sin() + (u2 * u2 + u3 * u3) * theta.cos()
}

pub fn g3(theta: f64, u1: f64, u2: f64) -> f64 {
    u1 * theta.cos() - u2 * theta.sin()
}

pub fn bernoulli(speed_sq: f64, c2: f64, gas: GasConstants) -> f64 {
    0.5 * speed_sq + c2 / (gas.gamma - 1.0)
}

pub fn derive(s: &FlowState, gas: GasConstants) -> Result<DerivedState> {
    s.validate()?;
    Ok(derive_unchecked(s, gas))
}

/// [`derive`] without validation; callers inside integrators use this on
/// states they already know are in range.
pub fn derive_unchecked(s: &FlowState, gas: GasConstants) -> DerivedState {
    let c2 = gas.sound_speed_sq(s.rho, s.entropy_a);
    let c = c2.sqrt();
    let mach = [s.u1 / c, s.u2 / c, s.u3 / c];
    DerivedState {
        pressure: s.entropy_a * s.rho.powf(gas.gamma),
        sound_speed_sq: c2,
        sound_speed: c,
        bernoulli: bernoulli(s.speed_sq(), c2, gas),
        mach,
        mach_sq_total: s.speed_sq() / c2,
        g1: g1(s.theta, s.u1, s.u2),
        g2: g2(s.theta, s.u1, s.u2, s.u3),
        g3: g3(s.theta, s.u1, s.u2),
    }
}

/// Density with Bernoulli value `b`, entropy `a` and speed² `speed_sq`:
/// ρ = ((γ−1)/(Aγ))^{1/(γ−1)} (B − ½|U|²)^{1/(γ−1)}.
pub fn density_from_bernoulli(b: f64, a: f64, speed_sq: f64, gas: GasConstants) -> Result<f64> {
    if !(b.is_finite() && a.is_finite() && speed_sq.is_finite()) {
        return Err(Error::domain("non-finite Bernoulli input"));
    }
    if a <= 0.0 {
        return Err(Error::domain("entropy A must be positive"));
    }
    let h = b - 0.5 * speed_sq;
    if h <= 0.0 {
        return Err(Error::Vacuum { enthalpy: h });
    }
    let gm1 = gas.gamma - 1.0;
    Ok(((gm1 / (a * gas.gamma)) * h).powf(1.0 / gm1))
}

/// Speed at which |M| = 1 for Bernoulli constant `b`: |U|² = 2(γ−1)B/(γ+1).
pub fn sonic_speed_sq(b: f64, gas: GasConstants) -> f64 {
    2.0 * (gas.gamma - 1.0) * b / (gas.gamma + 1.0)
}

/// Relative difference with a floor on the scale, for invariant checks.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
