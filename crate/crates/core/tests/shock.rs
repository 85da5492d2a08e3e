//! Conic shock checks. Jump residuals are recomputed here from the raw states,
//! closed-form angles are compared with root solves of their defining
//! equations, and the sweep is compared with bisection.

use conicflow_core::gas::{FlowState, GasConstants};
use conicflow_core::roots::brent;
use conicflow_core::selfsim::IntegrationConfig;
use conicflow_core::shock::*;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn air() -> GasConstants {
    GasConstants::air()
}

fn flow(m0: f64, swirl: f64) -> IncomingFlow {
    IncomingFlow::from_mach(m0, swirl, air()).unwrap()
}

fn cfg() -> IntegrationConfig {
    IntegrationConfig::default()
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Jump conditions written out directly from the conservation laws.
fn residuals(m: &FlowState, p: &FlowState, gamma: f64) -> [f64; 5] {
    let pr = |s: &FlowState| s.entropy_a * s.rho.powf(gamma);
    let enth = |s: &FlowState| {
        let c2 = gamma * pr(s) / s.rho;
        0.5 * (s.u1 * s.u1 + s.u2 * s.u2 + s.u3 * s.u3) + c2 / (gamma - 1.0)
    };
    [
        rel(m.rho * m.u2, p.rho * p.u2),
        rel(m.rho * m.u1 * m.u2, p.rho * p.u1 * p.u2),
        rel(m.rho * m.u2 * m.u2 + pr(m), p.rho * p.u2 * p.u2 + pr(p)),
        rel(m.rho * m.u2 * m.u3, p.rho * p.u2 * p.u3),
        rel(enth(m), enth(p)),
    ]
}

fn mach_sq(s: &FlowState, gamma: f64) -> f64 {
    let c2 = gamma * s.entropy_a * s.rho.powf(gamma - 1.0);
    (s.u1 * s.u1 + s.u2 * s.u2 + s.u3 * s.u3) / c2
}

#[test]
fn jump_residuals_on_the_acceptance_grid() {
    for &m0 in &[1.5, 2.0, 3.0] {
        for &sw in &[0.0, 0.2] {
            let f = flow(m0, sw);
            for tb in admissible_grid(&f, 20) {
                let j = rh_downstream(&f, tb).unwrap();
                let r = residuals(&j.upstream, &j.downstream, 1.4);
                for (i, v) in r.iter().enumerate() {
                    assert!(*v < 1e-12, "M0 {m0} swirl {sw} tb {tb}: residual {i} = {v}");
                }
                assert!(j.residuals.max() < 1e-12);
                assert!(j.pressure_jump > 0.0);
                let k = f.k_of(j.upstream.u1, j.upstream.u3);
                assert!(rel(j.upstream.u2 * j.downstream.u2, k) < 1e-12);
                assert!(j.prandtl_residual < 1e-12 && j.k_jump < 1e-12, "{} {}", j.prandtl_residual, j.k_jump);
                assert_eq!(j.downstream.u1, j.upstream.u1);
                assert_eq!(j.downstream.u3, j.upstream.u3);
                if sw == 0.0 {
                    let g = shock_polar(j.downstream.u1, &f).unwrap();
                    assert!(rel(g.g, j.downstream.u2) < 1e-12);
                }
            }
        }
    }
}

#[test]
fn seventy_degree_shock_at_mach_two() {
    let f = flow(2.0, 0.0);
    let j = rh_downstream(&f, 70f64.to_radians()).unwrap();
    assert!(residuals(&j.upstream, &j.downstream, 1.4).iter().all(|r| *r < 1e-12));
    assert!(j.pressure_jump > 0.0);
    // U₀₂ = −q₀ gives the textbook upstream state.
    let t = 70f64.to_radians();
    assert!(rel(j.upstream.u1, 2.0 * t.cos()) < 1e-14);
    assert!(rel(j.upstream.u2, -2.0 * t.sin()) < 1e-14);
}

#[test]
fn upstream_handle_is_a_uniform_speed_beltrami_flow() {
    let f = flow(2.5, 0.3);
    let up = upstream_flow(&f).unwrap();
    let eq = up.state(FRAC_PI_2).unwrap();
    assert!(eq.u1.abs() < 1e-15 && (eq.u2 - f.u02).abs() < 1e-15 && (eq.u3 - f.u03).abs() < 1e-15);
    for k in 1..50 {
        let th = 0.4 + (FRAC_PI_2 - 0.4) * k as f64 / 50.0;
        let s = up.state(th).unwrap();
        assert!(rel(s.speed_sq(), f.q0_sq()) < 1e-12);
        let g1 = s.u1 * th.sin() + s.u2 * th.cos();
        let g2 = s.u2 * g1 + s.u3 * s.u3 * th.cos();
        assert!(g2.abs() < 1e-12 * f.q0_sq());
    }
}

#[test]
fn weak_shock_limit_and_refusals() {
    let f = flow(2.0, 0.0);
    let ut = (0.5f64).asin();
    let mut last = f64::INFINITY;
    for e in [1e-2, 1e-3, 1e-4, 1e-5] {
        let j = rh_downstream(&f, ut + e).unwrap();
        assert!(j.pressure_jump < last);
        last = j.pressure_jump;
        assert!(rel(j.downstream.u2, j.upstream.u2) < 10.0 * e);
    }
    let msg = |r: conicflow_core::Result<ShockJump>| format!("{}", r.unwrap_err());
    assert!(msg(rh_downstream(&f, ut + 5e-7)).contains("1e-6"));
    assert!(msg(rh_downstream(&f, ut - 0.01)).contains("under_theta"));
    assert!(msg(rh_downstream(&f, 1.6)).contains("pi/2"));
}

#[test]
fn mass_flux_is_rechecked() {
    let f = flow(3.0, 0.2);
    let j = rh_downstream(&f, 1.0).unwrap();
    assert!(rel(j.downstream.rho * j.downstream.u2, f.rho0 * j.upstream.u2) < 1e-15);
}

#[test]
fn shock_polar_values_and_slope() {
    for &m0 in &[1.5, 2.0, 3.0] {
        let f = flow(m0, 0.0);
        let (q2, c2, g) = (f.q0_sq(), f.c0_sq(), 1.4);
        let qt = ((g - 1.0) * q2 + 2.0 * c2) / ((g + 1.0) * q2.sqrt());
        assert!(rel(shock_polar(0.0, &f).unwrap().g, -qt) < 1e-15);
        let ca = critical_angles(&f, &cfg()).unwrap();
        assert!(rel(ca.q_tilde0, qt) < 1e-15);
        let smax = f.q0() * ca.under_theta.cos();
        for k in 1..40 {
            let s = smax * k as f64 / 41.0;
            let h = 1e-5 * smax;
            let fd = (shock_polar(s + h, &f).unwrap().g - shock_polar(s - h, &f).unwrap().g) / (2.0 * h);
            let d = shock_polar(s, &f).unwrap().dg;
            assert!((d - fd).abs() < 1e-7 * d.abs().max(1.0), "M0 {m0} s {s}: {d} vs {fd}");
        }
        assert!(shock_polar(smax, &f).is_err());
        assert!(shock_polar(-1e-9, &f).is_err());
    }
    // The slope has no fixed sign: negative throughout for M₀ = 2, both signs for M₀ = 3.
    let f = flow(2.0, 0.0);
    let smax = f.q0() * (0.5f64).asin().cos();
    assert!((1..20).all(|k| shock_polar(smax * k as f64 / 20.0, &f).unwrap().dg < 0.0));
    let f = flow(3.0, 0.0);
    let smax = f.q0() * (1.0f64 / 3.0).asin().cos();
    let signs: Vec<bool> = (1..40).map(|k| shock_polar(smax * k as f64 / 40.0, &f).unwrap().dg > 0.0).collect();
    assert!(signs.contains(&true) && signs.contains(&false));
    assert!(shock_polar(0.1, &flow(2.0, 0.1)).is_err());
}

#[test]
fn h0_identities_and_sharp_root() {
    let g = air();
    for &m0 in &[1.2, 1.5, 2.0, 3.0, 5.0] {
        let m2: f64 = m0 * m0;
        assert!(rel(h0(1.0, m2, g), m2 - 1.0) < 1e-14);
        assert!(rel(h0(m2, m2, g), -(0.4 * m2 + 2.0) * (m2 - 1.0) / 2.4) < 1e-13);
        let ca = critical_angles(&flow(m0, 0.0), &cfg()).unwrap();
        assert!(rel(ca.a_sharp_sq, ca.a_sharp_sq_root) < 1e-12);
        assert!(ca.a_sharp_sq > 1.0 && ca.a_sharp_sq < m2);
    }
}

#[test]
fn under_theta_two_routes() {
    for &(m0, sw) in &[(1.5, 0.0), (2.0, 0.0), (3.0, 0.0), (1.5, 0.2), (2.0, 0.2), (3.0, 0.3)] {
        let f = flow(m0, sw);
        let ca = critical_angles(&f, &cfg()).unwrap();
        assert!((ca.under_theta - ca.under_theta_root).abs() < 1e-12);
        assert!(ca.theta_min < ca.under_theta && ca.under_theta < FRAC_PI_2);
        // Upstream polar speed squared equals K exactly at θ̲.
        let s = upstream_flow(&f).unwrap().state(ca.under_theta).unwrap();
        assert!(rel(s.u2 * s.u2, f.k_of(s.u1, s.u3)) < 1e-12);
        if sw == 0.0 {
            assert!((ca.under_theta - (1.0 / m0).asin()).abs() < 1e-14);
        }
    }
}

#[test]
fn sharp_angle_is_the_sonic_shock() {
    for &(m0, sw) in &[(1.5, 0.0), (2.0, 0.0), (3.0, 0.0), (2.0, 0.2), (3.0, 0.2)] {
        let f = flow(m0, sw);
        let ca = critical_angles(&f, &cfg()).unwrap();
        let ts = ca.theta_sharp.unwrap();
        if let Some(c) = ca.theta_sharp_closed {
            assert!((c - ts).abs() < 1e-12);
        }
        // Upstream side: (U₂⁻/c₀)² = a♯² there.
        let up = upstream_flow(&f).unwrap().state(ts).unwrap();
        assert!(rel(up.u2 * up.u2 / f.c0_sq(), ca.a_sharp_sq) < 1e-12);
        // Downstream side is sonic, and the sign change of |M⁺|² − 1 sits at θ♯.
        let j = rh_downstream(&f, ts).unwrap();
        assert!((mach_sq(&j.downstream, 1.4) - 1.0).abs() < 1e-8);
        let bis = bisect_behind(&f, ca.under_theta + 1e-3, FRAC_PI_2 - 1e-6);
        assert!((bis - ts).abs() < 1e-8, "M0 {m0} sw {sw}: {bis} vs {ts}");
        let sol = solve_conic_shock(&f, ts, &cfg()).unwrap();
        assert_eq!(sol.classification, DownstreamClass::SonicBehindShock);
    }
}

fn bisect_behind(f: &IncomingFlow, mut a: f64, mut b: f64) -> f64 {
    let s = |t: f64| mach_sq(&rh_downstream(f, t).unwrap().downstream, 1.4) - 1.0;
    assert!(s(a) > 0.0 && s(b) < 0.0);
    while b - a > 1e-12 {
        let m = 0.5 * (a + b);
        if s(m) > 0.0 {
            a = m
        } else {
            b = m
        }
    }
    0.5 * (a + b)
}

#[test]
fn behind_shock_mach_sign_follows_h0() {
    let f = flow(2.0, 0.0);
    for tb in admissible_grid(&f, 30) {
        let j = rh_downstream(&f, tb).unwrap();
        let t = upstream_polar_mach_sq(tb.sin().powi(2), &f);
        let h = h0(t, f.mach0_sq(), air());
        assert_eq!((mach_sq(&j.downstream, 1.4) > 1.0), h > 0.0, "tb {tb}");
    }
}

#[test]
fn condition_examples() {
    let c = check_condition_290(&flow(2.0, 0.0));
    assert!(c.holds && c.witness_t.is_none());
    // Remark (a) data.
    let c = check_condition_290(&flow(2.0, 0.2));
    assert!(c.sufficient_a && c.holds);
    // Strong swirl against a weak polar component violates the condition.
    let f = IncomingFlow::new(1.0, -1.05, 3.0, 1.0 / 1.4, air()).unwrap();
    let c = check_condition_290(&f);
    assert!(!c.holds && !c.sufficient_a);
    let t = c.witness_t.unwrap();
    assert!(t > 0.0 && t < 1.0 && condition_poly(t, &f) <= 0.0);
}

fn inflow_strategy() -> impl Strategy<Value = IncomingFlow> {
    (1.01f64..4.0, -3.0f64..3.0, 0.3f64..3.0).prop_map(|(a1, u03, rho)| {
        // c₀ = 1 fixes A₀; then U₀₂ = −a₁.
        let a0 = rho.powf(1.0 - 1.4) / 1.4;
        IncomingFlow::new(rho, -a1, u03, a0, air()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condition_matches_dense_sampling(f in inflow_strategy()) {
        let c = check_condition_290(&f);
        let n = 100_000;
        let min = (1..n).map(|k| condition_poly(k as f64 / n as f64, &f)).fold(f64::INFINITY, f64::min);
        let scale = f.q0_sq() * f.q0_sq();
        // Skip data whose sampled minimum is too close to zero to call.
        prop_assume!(min.abs() > 1e-6 * scale);
        prop_assert_eq!(c.holds, min > 0.0);
        if c.sufficient_a || c.sufficient_b {
            prop_assert!(c.holds);
        }
    }

    #[test]
    fn downstream_g2_negative_under_condition(f in inflow_strategy(), frac in 0.02f64..0.98) {
        prop_assume!(check_condition_290(&f).holds);
        let ca = critical_angles(&f, &cfg()).unwrap();
        let tb = ca.under_theta + frac * (FRAC_PI_2 - ca.under_theta);
        prop_assume!(tb - ca.under_theta > 1e-5);
        let j = rh_downstream(&f, tb).unwrap();
        let d = j.downstream;
        let g1 = d.u1 * tb.sin() + d.u2 * tb.cos();
        let g2 = d.u2 * g1 + d.u3 * d.u3 * tb.cos();
        prop_assert!(g2 < 0.0, "g2 {}", g2);
        prop_assert!(j.pressure_jump > 0.0);
        prop_assert!(residuals(&j.upstream, &j.downstream, 1.4).iter().all(|r| *r < 1e-12));
    }
}

#[test]
fn downstream_reaches_the_cone() {
    for &(m0, sw) in &[(1.5, 0.0), (2.0, 0.2), (3.0, 0.2)] {
        let f = flow(m0, sw);
        for tb in admissible_grid(&f, 10) {
            let s = solve_conic_shock(&f, tb, &cfg()).unwrap();
            let end = s.downstream.termination.state;
            assert!(end.u2.abs() < 1e-9 * f.q0());
            assert!(end.u3.abs() < 1e-6, "U3 at cone {}", end.u3);
            assert!(s.theta_star > 0.0 && s.theta_star < tb);
            assert!(s.downstream.max_bernoulli_drift() < 1e-10);
            assert_eq!(s.downstream_at_shock(), s.jump.downstream);
        }
    }
}

#[test]
fn apple_curve_up_to_the_sharp_angle() {
    let f = flow(2.0, 0.0);
    let ca = critical_angles(&f, &cfg()).unwrap();
    let ts_sharp = ca.theta_sharp.unwrap();
    let lo = ca.under_theta;
    let grid: Vec<f64> = (1..=50).map(|k| lo + (ts_sharp - lo) * k as f64 / 50.0).collect();
    let ac = apple_curve(&f, &grid, &cfg());
    assert!(ac.monotone_decreasing);
    let pts: Vec<_> = ac.rows.iter().map(|r| *r.outcome.as_ref().unwrap()).collect();
    for p in &pts {
        assert!(p.cone_u1 > ca.q_tilde0 && p.cone_u1 < f.q0());
    }
    let i = (0..pts.len() - 1).find(|&i| (pts[i].cone_mach_sq - 1.0) * (pts[i + 1].cone_mach_sq - 1.0) < 0.0).unwrap();
    let ts = ac.theta_s.unwrap();
    assert!(grid[i] < ts && ts < grid[i + 1]);
    assert!((ts - ca.theta_s.unwrap()).abs() < 2e-8);
    let cone = |t: f64| solve_conic_shock(&f, t, &cfg()).unwrap().cone_mach_sq - 1.0;
    assert!(cone(ts - 2e-8) > 0.0 && cone(ts + 2e-8) < 0.0);
    for (tb, p) in grid.iter().zip(&pts) {
        let want = if *tb < ts {
            1
        } else if *tb < ts_sharp - 1e-9 {
            3
        } else {
            5
        };
        assert_eq!(p.class_code, want, "tb {tb}");
    }
}

/// Cone angle and cone speed from the classical second-order equation for
/// the radial velocity, by fixed-step RK4 (independent of the crate's solver).
fn taylor_maccoll(m0: f64, tb: f64) -> (f64, f64) {
    let g = 1.4;
    let q0 = m0;
    let vmax2 = q0 * q0 + 2.0 / (g - 1.0);
    let u1 = q0 * tb.cos();
    let k = (g - 1.0) / (g + 1.0) * (vmax2 - u1 * u1);
    let y0 = [u1, k / (-q0 * tb.sin())];
    let rhs = |th: f64, y: [f64; 2]| {
        let (v, w) = (y[0], y[1]);
        let a = 0.5 * (g - 1.0) * (vmax2 - v * v - w * w);
        [w, (-a * (2.0 * v + w / th.tan()) + v * w * w) / (a - w * w)]
    };
    let h = -2e-5;
    let (mut th, mut y) = (tb, y0);
    loop {
        let k1 = rhs(th, y);
        let k2 = rhs(th + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(th + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(th + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        let yn = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        if yn[1] >= 0.0 {
            // Linear location of U₂ = 0 inside the last step.
            let s = y[1] / (y[1] - yn[1]);
            return (th + s * h, y[0] + s * (yn[0] - y[0]));
        }
        th += h;
        y = yn;
    }
}

#[test]
fn apple_curve_turns_back_for_strong_shocks() {
    // Over the whole admissible range the cone speed is not monotone and
    // drops below q̃₀ near θ_b = π/2. An independent integration agrees.
    let f = flow(2.0, 0.0);
    let ca = critical_angles(&f, &cfg()).unwrap();
    let ac = apple_curve(&f, &admissible_grid(&f, 50), &cfg());
    assert!(ac.rows.iter().all(|r| r.outcome.is_ok()));
    assert!(!ac.monotone_decreasing);
    assert!(!ac.theta_star_monotone);
    for &tb in &[1.30, 1.45, 1.48, 1.50, 1.55] {
        let s = solve_conic_shock(&f, tb, &cfg()).unwrap();
        let (ts, u) = taylor_maccoll(2.0, tb);
        assert!((s.theta_star - ts).abs() < 1e-6, "tb {tb}: {} vs {ts}", s.theta_star);
        assert!(rel(s.cone_u1, u) < 1e-6, "tb {tb}: {} vs {u}", s.cone_u1);
    }
    let u = |tb: f64| solve_conic_shock(&f, tb, &cfg()).unwrap().cone_u1;
    assert!(u(1.50) > u(1.48) && u(1.55) > u(1.50));
    assert!(u(1.45) < ca.q_tilde0);
}

#[test]
fn classic_cone_at_mach_two() {
    // Tabulated conical-flow value: a 20 degree cone at M = 2 carries a shock
    // of about 37.8 degrees.
    let f = flow(2.0, 0.0);
    let star = |tb: f64| solve_conic_shock(&f, tb, &cfg()).unwrap().theta_star - 20f64.to_radians();
    let tb = brent(star, 0.53, 0.9, 1e-12).unwrap();
    assert!((tb.to_degrees() - 37.8).abs() < 0.2, "{}", tb.to_degrees());
}

#[test]
fn swirl_sweep_behaves() {
    let f = flow(2.0, 0.2);
    let ac = apple_curve(&f, &admissible_grid(&f, 12), &cfg());
    assert!(ac.rows.iter().all(|r| r.outcome.is_ok()));
    assert!(ac.theta_s.is_none());
    let ca = critical_angles(&f, &cfg()).unwrap();
    assert!(ca.theta_s.is_none() && ca.theta_sharp_closed.is_none());
}
