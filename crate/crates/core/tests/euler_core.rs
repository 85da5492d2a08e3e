//! Pointwise gas relations against an independent double-double evaluation.

use conicflow_core::gas::{self, density_from_bernoulli, derive, FlowState, GasConstants};
use proptest::prelude::*;

/// Minimal double-double arithmetic (Dekker/Knuth error-free transforms).
#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, libm::fma(a, b, -p))
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let v = two_sum(s.0, s.1 + t.0);
        two_sum(v.0, v.1 + t.1)
    }
    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }
    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.0, o.0);
        two_sum(p.0, p.1 + (self.0 * o.1 + self.1 * o.0))
    }
    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        Dd::from(q1).add(Dd::from(q2)).add(Dd::from(q3))
    }
    fn sqrt(self) -> Dd {
        let x = Dd::from(self.0.sqrt());
        // One Newton step doubles the 53 correct bits.
        x.add(self.sub(x.mul(x)).div(x.add(x)))
    }
    fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}

/// x with x⁵ = y, by Newton in double-double.
fn fifth_root(y: Dd) -> Dd {
    let mut x = Dd::from(y.to_f64().powf(0.2));
    for _ in 0..3 {
        let x4 = x.mul(x).mul(x).mul(x);
        let f = x4.mul(x).sub(y);
        x = x.sub(f.div(Dd::from(5.0).mul(x4)));
    }
    x
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn derived_state_matches_double_double_oracle() {
    // θ = π/3 (rounded), ρ = 1.2, U = (0.3, −0.8, 0.1), A = 0.9, γ = 1.4.
    let theta = std::f64::consts::FRAC_PI_3;
    let s = FlowState { theta, rho: 1.2, u1: 0.3, u2: -0.8, u3: 0.1, entropy_a: 0.9 };
    let g = GasConstants::air();
    let d = derive(&s, g).unwrap();

    // sin/cos at the rounded angle: θ = π/3 + δ with δ from a double-double π.
    let pi = Dd(std::f64::consts::PI, 1.2246467991473532e-16);
    let delta = Dd::from(theta).sub(pi.div(Dd::from(3.0)));
    let half_sqrt3 = Dd::from(3.0).sqrt().mul(Dd::from(0.5));
    let sn = half_sqrt3.add(Dd::from(0.5).mul(delta));
    let cs = Dd::from(0.5).sub(half_sqrt3.mul(delta));

    let (u1, u2, u3) = (Dd::from(0.3), Dd::from(-0.8), Dd::from(0.1));
    let rho = Dd::from(1.2);
    let a = Dd::from(0.9);
    // γ − 1 rounds to 0.39999999999999991; using 2/5 changes ρ^{γ−1} by
    // about 2e-17 relative, far below the tolerance.
    let rho_pow = fifth_root(rho.mul(rho));
    let c2 = a.mul(Dd::from(1.4)).mul(rho_pow);
    let q2 = u1.mul(u1).add(u2.mul(u2)).add(u3.mul(u3));
    let b = q2.mul(Dd::from(0.5)).add(c2.div(Dd::from(1.4 - 1.0)));
    let g1 = u1.mul(sn).add(u2.mul(cs));
    let g2 = u2.mul(g1).add(u3.mul(u3).mul(cs));
    let g3 = u1.mul(cs).sub(u2.mul(sn));
    let p = a.mul(rho).mul(rho_pow);
    let c = c2.sqrt();

    let tol = 1e-14;
    assert!(rel(d.sound_speed_sq, c2.to_f64()) < tol);
    assert!(rel(d.sound_speed, c.to_f64()) < tol);
    assert!(rel(d.bernoulli, b.to_f64()) < tol);
    assert!(rel(d.pressure, p.to_f64()) < tol);
    assert!(rel(d.g1, g1.to_f64()) < tol);
    assert!(rel(d.g2, g2.to_f64()) < tol);
    assert!(rel(d.g3, g3.to_f64()) < tol);
    assert!(rel(d.mach[1], u2.div(c).to_f64()) < tol);
    assert!(rel(d.mach_sq_total, q2.div(c2).to_f64()) < tol);
}

#[test]
fn sonic_speed_gives_unit_mach() {
    let g = GasConstants::air();
    let b = 2.5;
    let q2 = gas::sonic_speed_sq(b, g);
    let c2 = g.sound_speed_sq_from_bernoulli(b, q2);
    assert!(rel(c2, q2) < 1e-15);
}

#[test]
fn bernoulli_round_trip_example() {
    let g = GasConstants::air();
    let (b, a, q2) = (2.5, 1.1, 1.3);
    let rho = density_from_bernoulli(b, a, q2, g).unwrap();
    let s = FlowState { theta: 1.0, rho, u1: 1.3f64.sqrt(), u2: 0.0, u3: 0.0, entropy_a: a };
    let d = derive(&s, g).unwrap();
    assert!(rel(d.bernoulli, b) < 1e-12);
}

#[test]
fn non_finite_state_is_rejected() {
    let s = FlowState { theta: 1.0, rho: f64::NAN, u1: 0.0, u2: 1.0, u3: 0.0, entropy_a: 1.0 };
    assert!(derive(&s, GasConstants::air()).is_err());
    let s = FlowState { theta: 4.0, rho: 1.0, u1: 0.0, u2: 1.0, u3: 0.0, entropy_a: 1.0 };
    assert!(derive(&s, GasConstants::air()).is_err());
}

fn valid_state() -> impl Strategy<Value = (FlowState, f64)> {
    (
        0.05f64..3.09,
        0.05f64..5.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
        0.05f64..5.0,
        1.05f64..3.0,
    )
        .prop_map(|(theta, rho, u1, u2, u3, a, gamma)| {
            (FlowState { theta, rho, u1, u2, u3, entropy_a: a }, gamma)
        })
}

proptest! {
    #[test]
    fn density_round_trip((s, gamma) in valid_state()) {
        let g = GasConstants::new(gamma).unwrap();
        let d = derive(&s, g).unwrap();
        let rho = density_from_bernoulli(d.bernoulli, s.entropy_a, s.speed_sq(), g).unwrap();
        prop_assert!(rel(rho, s.rho) < 1e-12, "rho {} vs {}", rho, s.rho);
    }

    #[test]
    fn sound_speed_identity((s, gamma) in valid_state()) {
        let g = GasConstants::new(gamma).unwrap();
        let d = derive(&s, g).unwrap();
        let c2 = g.sound_speed_sq_from_bernoulli(d.bernoulli, s.speed_sq());
        prop_assert!(rel(c2, d.sound_speed_sq) < 1e-12);
    }

    #[test]
    fn g2_forms_agree((s, _gamma) in valid_state()) {
        let a = gas::g2(s.theta, s.u1, s.u2, s.u3);
        let b = gas::g2_expanded(s.theta, s.u1, s.u2, s.u3);
        let scale = (s.u1 * s.u2).abs() + s.u2 * s.u2 + s.u3 * s.u3;
        prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-300));
    }
}
