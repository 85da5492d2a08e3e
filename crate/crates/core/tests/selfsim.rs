//! Polar-angle ODE: closed forms, conservation, endpoint behaviour.

use conicflow_core::gas::{self, FlowState, GasConstants};
use conicflow_core::quad;
use conicflow_core::selfsim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn st(theta: f64, rho: f64, u: [f64; 3], a: f64) -> FlowState {
    FlowState { theta, rho, u1: u[0], u2: u[1], u3: u[2], entropy_a: a }
}

fn init(s: FlowState) -> ProblemOneInit {
    ProblemOneInit::new(s, GasConstants::air()).unwrap()
}

fn equatorial_data() -> ProblemOneInit {
    init(st(FRAC_PI_2, 1.0, [0.0, -1.0, 0.3], 5.0))
}

/// Draws data for the endpoint lemma: g₂ < 0, 1 − M₂² > 0, U₀₁ > 0, U₀₂ < 0.
fn lemma_data(rng: &mut ChaCha8Rng) -> ProblemOneInit {
    let g = GasConstants::air();
    loop {
        let theta = rng.gen_range(0.3..1.5);
        let u1 = rng.gen_range(0.1..1.0);
        let u2 = -rng.gen_range(0.1..1.0);
        let u3 = rng.gen_range(-0.6..0.6);
        if gas::g2(theta, u1, u2, u3) >= -1e-3 {
            continue;
        }
        let rho = rng.gen_range(0.5..2.0);
        let c2 = u2 * u2 * rng.gen_range(1.3..6.0);
        let a = c2 / (g.gamma * f64::powf(rho, g.gamma - 1.0));
        return ProblemOneInit::new(st(theta, rho, [u1, u2, u3], a), g).unwrap();
    }
}

fn vec_rel(u: [f64; 3], v: [f64; 3]) -> f64 {
    let d = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
    d / (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[test]
fn equatorial_swirl_free_closed_form() {
    let b = beltrami_closed_form(&init(st(FRAC_PI_2, 1.0, [0.0, -1.0, 0.0], 3.0))).unwrap();
    assert_eq!(b.theta_min, 0.0);
    for k in 1..50 {
        let t = PI * k as f64 / 50.0;
        let v = b.velocity(t).unwrap();
        assert!((v[0] - t.cos()).abs() < 1e-15);
        assert!((v[1] + t.sin()).abs() < 1e-15);
        assert_eq!(v[2], 0.0);
    }
}

#[test]
fn equatorial_endpoints_where_swirl_vanishes() {
    let b = beltrami_closed_form(&init(st(FRAC_PI_2, 1.0, [0.0, -1.0, 0.5], 3.0))).unwrap();
    assert!((b.theta_min - (0.5 / 1.25f64.sqrt()).asin()).abs() < 1e-15);
    for t in [b.theta_min, PI - b.theta_min] {
        let v = b.velocity(t).unwrap();
        assert!(v[1].abs() < 1e-14, "U2 {}", v[1]);
        assert!(v[2].abs() < 1e-7, "U3 {}", v[2]);
    }
    assert!(b.velocity(b.theta_min * 0.99).is_err());
}

#[test]
fn oblique_family_satisfies_algebraic_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        // U₀₂ chosen so that g₂(θ₀) = 0: U₁U₂ sin + (U₂² + U₃²) cos = 0.
        let theta0: f64 = rng.gen_range(0.2..1.4);
        let u1: f64 = rng.gen_range(0.2..2.0);
        let u3: f64 = rng.gen_range(-1.0..1.0);
        let (sn, cs) = theta0.sin_cos();
        // cos·U₂² + U₁ sin·U₂ + cos·U₃² = 0, negative root.
        let disc = u1 * u1 * sn * sn - 4.0 * cs * cs * u3 * u3;
        if disc <= 0.0 {
            continue;
        }
        let u2 = (-u1 * sn - disc.sqrt()) / (2.0 * cs);
        let s = st(theta0, 1.0, [u1, u2, u3], 2.0);
        let b = beltrami_closed_form(&init(s)).unwrap();
        assert_eq!(b.case, BeltramiCase::Oblique);
        let q0 = s.speed_sq().sqrt();
        let g30 = b.g3();
        let (lo, hi) = b.interval();
        for k in 1..60 {
            let t = lo + (hi - lo) * k as f64 / 60.0;
            let v = b.velocity(t).unwrap();
            let scale = q0 * q0;
            let g2 = gas::g2(t, v[0], v[1], v[2]);
            assert!(g2.abs() < 1e-12 * scale, "g2 {} at {}", g2, t);
            assert!((gas::g3(t, v[0], v[1]) - g30).abs() < 1e-12 * q0);
            let sp = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((sp - q0).abs() < 1e-12 * q0);
            assert_eq!(v[2].signum(), if u3 < 0.0 { -1.0 } else { 1.0 });
        }
    }
}

#[test]
fn rhs_matches_finite_differences_of_closed_form() {
    let b = beltrami_closed_form(&equatorial_data()).unwrap();
    let g = GasConstants::air();
    for &t in &[0.6, 0.9, 1.2, 1.5, 2.0, 2.4] {
        let s = b.state(t).unwrap();
        let r = ode_rhs(&s, g).unwrap();
        assert!(r[3].abs() < 1e-12, "g2 = 0 gives rho' = 0");
        let mut errs = Vec::new();
        for &h in &[1e-3, 5e-4] {
            let p = b.velocity(t + h).unwrap();
            let m = b.velocity(t - h).unwrap();
            let e = (0..3).map(|i| ((p[i] - m[i]) / (2.0 * h) - r[i]).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        // second order: halving h divides the error by about four
        assert!(errs[0] < 1e-5);
        assert!(errs[0] / errs[1] > 3.5 && errs[0] / errs[1] < 4.5, "{:?}", errs);
    }
}

#[test]
fn swirl_free_rhs_keeps_u3_zero() {
    let s = st(1.0, 1.0, [0.4, -0.6, 0.0], 1.0);
    assert_eq!(ode_rhs(&s, GasConstants::air()).unwrap()[2], 0.0);
}

#[test]
fn guards_report_which_fired() {
    let g = GasConstants::air();
    let s = st(1.0, 1.0, [0.4, 1e-12, 0.2], 1.0);
    assert!(matches!(ode_rhs(&s, g), Err(conicflow_core::Error::Singular { guard: "U2", .. })));
    // M₂² = 1 exactly: c² = U₂².
    let c2 = 0.36;
    let s = st(1.0, 1.0, [0.4, -0.6, 0.2], c2 / g.gamma);
    assert!(matches!(ode_rhs(&s, g), Err(conicflow_core::Error::Singular { guard: "1-M2^2", .. })));
}

#[test]
fn closed_form_equivalence_on_equatorial_data() {
    let ini = equatorial_data();
    assert_eq!(classify_initial(&ini), RegimeClassification::BeltramiG2Zero);
    let b = beltrami_closed_form(&ini).unwrap();
    let (lo, hi) = (b.theta_min + 0.01, PI - b.theta_min - 0.01);
    let cfg = IntegrationConfig::default();
    let down = integrate_problem1(&ini, lo, &cfg).unwrap();
    let up = integrate_problem1(&ini, hi, &cfg.with_direction(Direction::Increasing)).unwrap();
    assert_eq!(down.termination.kind, TerminationKind::ReachedEnd);
    assert_eq!(up.termination.kind, TerminationKind::ReachedEnd);
    let mut worst: f64 = 0.0;
    for tr in [&down, &up] {
        for s in &tr.samples {
            let v = b.velocity(s.state.theta).unwrap();
            worst = worst.max(vec_rel([s.state.u1, s.state.u2, s.state.u3], v));
            worst = worst.max((s.state.rho - 1.0).abs());
        }
    }
    assert!(worst < 1e-8, "worst relative error {worst:e}");
    // dense output between samples too
    for k in 0..200 {
        let t = lo + (FRAC_PI_2 - lo) * k as f64 / 199.0;
        let s = down.state_at(t).unwrap();
        let v = b.velocity(t).unwrap();
        assert!(vec_rel([s.u1, s.u2, s.u3], v) < 1e-8);
    }
}

#[test]
fn endpoint_lemma_on_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = GasConstants::air();
    let zero = RhsGuards { u2_rel: 0.0, sonic: 0.0 };
    for _ in 0..10 {
        let ini = lemma_data(&mut rng);
        assert_eq!(classify_initial(&ini), RegimeClassification::TransitionCase3);
        let tr = integrate_problem1(&ini, 0.0, &IntegrationConfig::default()).unwrap();
        let ev = tr.termination;
        assert_eq!(ev.kind, TerminationKind::PolarVelocityVanishes, "{:?}", ini);
        assert!(ev.theta_event > 0.0 && ev.theta_event < ini.theta0);
        assert!(ev.state.u2.abs() < 1e-9);
        assert!(ev.state.u3.abs() < 1e-6, "U3(theta*) = {:e}", ev.state.u3);
        // sign conditions and monotonicity at every accepted step
        let n = tr.samples.len();
        for s in &tr.samples[..n - 1] {
            let x = s.state;
            let d = s.derived;
            let r = ode_rhs_guarded(&x, g, zero).unwrap();
            let (sn, cs) = x.theta.sin_cos();
            assert!(d.g2 < 0.0 && d.g1 > 0.0 && x.u1 > 0.0 && x.u2 < 0.0);
            assert!(1.0 - d.mach[1] * d.mach[1] > 0.0);
            assert!(r[3] < 0.0, "rho' {}", r[3]);
            assert!(r[0] < 0.0 && r[1] < 0.0);
            let dg1 = r[0] * sn + x.u1 * cs + r[1] * cs - x.u2 * sn;
            assert!(dg1 < 0.0, "g1' {}", dg1);
            let c2 = d.sound_speed_sq;
            let dc2 = (g.gamma - 1.0) * c2 * r[3] / x.rho;
            let dm2 = (2.0 * x.u2 * r[1] * c2 - x.u2 * x.u2 * dc2) / (c2 * c2);
            assert!(dm2 > 0.0, "(M2^2)' {}", dm2);
        }
        assert!(tr.max_bernoulli_drift() < 1e-10);
    }
}

#[test]
fn mass_flux_quadrature_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let ini = lemma_data(&mut rng);
        let tr = integrate_problem1(&ini, 0.0, &IntegrationConfig::default()).unwrap();
        let s0 = ini.state0;
        let flux0 = s0.rho * s0.u2 * s0.theta.sin();
        let step = (tr.samples.len() / 12).max(1);
        for smp in tr.samples.iter().step_by(step) {
            let x = smp.state;
            let q = quad::integrate(
                |t| {
                    let y = tr.state_at(t).unwrap();
                    2.0 * y.rho * y.u1 * t.sin()
                },
                s0.theta,
                x.theta,
                1e-14,
                1e-12,
            );
            let lhs = x.rho * x.u2 * x.theta.sin();
            let rhs = flux0 - q.value;
            assert!((lhs - rhs).abs() <= 1e-8 * flux0.abs(), "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn classification_examples() {
    let g = GasConstants::air();
    // M₂² = 1.2
    let u2: f64 = -0.6;
    let c2 = u2 * u2 / 1.2;
    let s = st(1.0, 1.0, [0.3, u2, 0.1], c2 / g.gamma);
    assert_eq!(classify_initial(&init(s)), RegimeClassification::SupersonicPolar);
    assert_eq!(classify_initial(&equatorial_data()), RegimeClassification::BeltramiG2Zero);
    let s = st(1.0, 1.0, [0.8, -0.3, 0.1], 1.0);
    assert_eq!(classify_initial(&init(s)), RegimeClassification::TransitionCase3);
    let s = st(1.0, 1.0, [0.8, 0.3, 0.1], 1.0);
    assert_eq!(classify_initial(&init(s)), RegimeClassification::Other);
}

#[test]
fn g2_sign_is_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let g = GasConstants::air();
    let mut checked = 0;
    while checked < 8 {
        let theta = rng.gen_range(0.4..1.4);
        let u1 = rng.gen_range(-0.5..0.5);
        let u2 = -rng.gen_range(0.2..1.0);
        let u3 = rng.gen_range(-0.8..0.8);
        let gg = gas::g2(theta, u1, u2, u3);
        if gg.abs() < 1e-2 {
            continue;
        }
        let a = u2 * u2 * 3.0 / g.gamma;
        let ini = ProblemOneInit::new(st(theta, 1.0, [u1, u2, u3], a), g).unwrap();
        for dir in [Direction::Decreasing, Direction::Increasing] {
            let target = if dir == Direction::Decreasing { 0.05 } else { 3.0 };
            let tr = integrate_problem1(&ini, target, &IntegrationConfig::default().with_direction(dir)).unwrap();
            for smp in &tr.samples {
                let d = smp.derived;
                if smp.state.u2 < 0.0 && 1.0 - d.mach[1] * d.mach[1] > 0.0 {
                    assert_eq!(d.g2.signum(), gg.signum());
                }
            }
        }
        checked += 1;
    }
}

#[test]
fn conservation_across_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = GasConstants::air();
    let mut runs = 0;
    for k in 0..20 {
        let ini = match k % 4 {
            0 => lemma_data(&mut rng),
            1 => {
                // supersonic polar component
                let u2 = -rng.gen_range(0.5..1.0);
                let c2 = u2 * u2 / rng.gen_range(1.1..2.0);
                let s = st(rng.gen_range(0.5..1.5), 1.0, [rng.gen_range(0.1..1.0), u2, rng.gen_range(-0.5..0.5)], c2 / g.gamma);
                init(s)
            }
            2 => init(st(FRAC_PI_2, rng.gen_range(0.5..2.0), [0.0, -rng.gen_range(0.5..1.5), rng.gen_range(-0.7..0.7)], 4.0)),
            _ => init(st(rng.gen_range(0.5..1.5), 1.0, [rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0), rng.gen_range(-0.5..0.5)], 2.0)),
        };
        for dir in [Direction::Decreasing, Direction::Increasing] {
            let target = if dir == Direction::Decreasing { 0.0 } else { PI };
            let tr = integrate_problem1(&ini, target, &IntegrationConfig::default().with_direction(dir)).unwrap();
            assert!(tr.max_bernoulli_drift() < 1e-10, "case {k} drift {:e}", tr.max_bernoulli_drift());
            assert_eq!(tr.max_entropy_drift(), 0.0);
            let th: Vec<f64> = tr.samples.iter().map(|s| s.state.theta).collect();
            let sgn = if dir == Direction::Decreasing { -1.0 } else { 1.0 };
            assert!(th.windows(2).all(|w| (w[1] - w[0]) * sgn > 0.0), "theta not monotone");
            runs += 1;
        }
    }
    assert_eq!(runs, 40);
}

#[test]
fn sonic_degeneracy_is_reported() {
    let g = GasConstants::air();
    // Supersonic polar data with g₂ < 0: M₂² decreases towards one going down.
    let u2: f64 = -0.9;
    let c2 = u2 * u2 / 1.05;
    let ini = init(st(1.2, 1.0, [0.2, u2, 0.0], c2 / g.gamma));
    let tr = integrate_problem1(&ini, 0.0, &IntegrationConfig::default()).unwrap();
    let ev = tr.termination;
    if ev.kind == TerminationKind::SonicPolarDegeneracy {
        let d = gas::derive(&ev.state, g).unwrap();
        assert!((1.0 - d.mach[1] * d.mach[1]).abs() < 1e-9);
    }
    assert_ne!(ev.kind, TerminationKind::StepFailure);
}

#[test]
fn axis_and_wrong_side_targets() {
    let ini = init(st(1.0, 1.0, [0.8, 0.3, 0.1], 1.0));
    let r = integrate_problem1(&ini, 1.5, &IntegrationConfig::default());
    assert!(r.is_err());
    let tr = integrate_problem1(&init(st(FRAC_PI_2, 1.0, [0.0, -1.0, 0.0], 5.0)), 0.0, &IntegrationConfig::default()).unwrap();
    // U₂ = −sin θ vanishes at the axis itself, so either event may fire first.
    let ev = tr.termination;
    assert!(matches!(ev.kind, TerminationKind::AxisReached | TerminationKind::PolarVelocityVanishes));
    assert!(ev.theta_event < 1e-4 && ev.theta_event >= 0.0, "{ev:?}");
}
