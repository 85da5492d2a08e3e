//! Steady self-similar compressible Euler flows.
//!
//! The crate is `no_std` (with `alloc`) so the numerical kernels can be
//! embedded anywhere; file formats, configuration and the command line live in
//! the `conicflow` companion crate.
//!
//! Layout:
//!
//! - [`gas`]: primitive state, polytropic gas relations, derived quantities.
//! - [`selfsim`]: the polar-angle ODE initial value problem and the closed-form
//!   Beltrami family.
//! - [`shock`]: attached conic shocks, shock polar, critical angles, sweeps.
//! - [`background`]: the smooth irrotational transonic background, its
//!   coefficient functions and the multiplier.
//! - [`friedrichs`]: the linearized mixed-type problem as a symmetric positive
//!   system, discretized with finite volumes and solved by sparse QR.
//! - [`rotational`]: Picard iteration for transonic flows with vorticity on
//!   the (θ, φ) strip.
//!
//! Numerical building blocks ([`ode`], [`roots`], [`quad`], [`spline`],
//! [`fourier`]) are small and specialised to what the solvers need.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod background;
pub mod error;
pub mod fourier;
pub mod friedrichs;
pub mod gas;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod rotational;
pub mod selfsim;
pub mod shock;
pub mod spline;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
