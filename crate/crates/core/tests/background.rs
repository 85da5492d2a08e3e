//! Transonic background checks. The state is re-integrated here with a plain
//! RK4 in θ, g₁ and f are recomputed with Simpson's rule, and the identities
//! are re-derived from finite differences of test-side formulas.

use conicflow_core::background::*;
use conicflow_core::gas::GasConstants;
use proptest::prelude::*;
use std::sync::OnceLock;

struct Canon {
    bg: BackgroundTable,
    co: CoefficientTable,
    mult: MultiplierTable,
}

fn canon() -> &'static Canon {
    static C: OnceLock<Canon> = OnceLock::new();
    C.get_or_init(|| {
        let gas = GasConstants::air();
        let bg = solve_background(&SonicInit::canonical(gas), gas, &BackgroundConfig::default()).unwrap();
        let co = coefficients(&bg);
        let mult = build_multiplier(&bg, &co, &MultiplierConfig::default()).unwrap();
        Canon { bg, co, mult }
    })
}

const GAMMA: f64 = 1.4;

fn c2(u1: f64, u2: f64) -> f64 {
    (GAMMA - 1.0) * (1.0 - 0.5 * (u1 * u1 + u2 * u2))
}

/// Background right-hand side written out directly in θ.
fn rhs(t: f64, y: [f64; 2]) -> [f64; 2] {
    let m2s = y[1] * y[1] / c2(y[0], y[1]);
    let g1 = y[0] * t.sin() + y[1] * t.cos();
    [y[1], -y[0] - g1 / ((1.0 - m2s) * t.sin())]
}

fn rk4(t0: f64, y0: [f64; 2], t1: f64, n: usize) -> [f64; 2] {
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    let mut t = t0;
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    for _ in 0..n {
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(t + h, add(y, k3, h));
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    y
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * k as f64);
    }
    s * h / 3.0
}

#[test]
fn canonical_interval_and_sonic_point() {
    let c = canon();
    let bg = &c.bg;
    let so = bg.theta_so();
    assert!((bg.theta_a - 0.7464191).abs() < 1e-6, "{}", bg.theta_a);
    assert!((bg.theta_b - 1.1306271).abs() < 1e-6, "{}", bg.theta_b);
    assert!((bg.theta_minus - (so - 0.98 * (so - bg.theta_a))).abs() < 1e-15);
    assert!((bg.theta_plus - (so + 0.98 * (bg.theta_b - so))).abs() < 1e-15);
    assert_eq!(bg.samples.len(), 2048);
    assert!((bg.point(so).unwrap().mach_sq - 1.0).abs() < 1e-10);
    assert!(bg.sonic_check < 1e-10);
    assert!(bg.bernoulli_drift < 1e-9);
}

#[test]
fn sign_conditions_and_decreasing_mach() {
    let bg = &canon().bg;
    let gas = GasConstants::air();
    for w in bg.samples.windows(2) {
        assert!(w[1].mach_sq < w[0].mach_sq, "at {}", w[1].theta);
    }
    for p in &bg.samples {
        assert!(p.u1 > 0.0 && p.u2 > 0.0 && p.g1 > 0.0);
        assert!(p.m1 * p.m1 < 1.0 && p.m2 * p.m2 < 1.0);
        assert!(mach_sq_slope(p, gas) < 0.0);
    }
    // The analytic slope agrees with differences of |M̄|² between samples.
    let s = &bg.samples;
    for j in (200..1800).step_by(97) {
        let fd = (s[j + 1].mach_sq - s[j - 1].mach_sq) / (s[j + 1].theta - s[j - 1].theta);
        let ex = mach_sq_slope(&s[j], gas);
        assert!((fd - ex).abs() < 1e-5 * ex.abs(), "{fd} vs {ex}");
    }
}

#[test]
fn dense_states_match_an_rk4_reintegration() {
    let bg = &canon().bg;
    let (so, i) = (bg.theta_so(), bg.init);
    for t in [0.76, 0.77, 0.8, 0.9, 1.0, 1.1] {
        let y = rk4(so, [i.u01, i.u02], t, 20_000);
        let (u1, u2) = bg.state(t).unwrap();
        assert!((u1 - y[0]).abs() < 1e-8 && (u2 - y[1]).abs() < 1e-8, "theta {t}: {u1},{u2} vs {y:?}");
    }
}

#[test]
fn g1_follows_its_quadrature() {
    let bg = &canon().bg;
    assert!(bg.g1_quadrature_error() < 1e-8);
    // Independent Simpson route on the test-side formula.
    let so = bg.theta_so();
    let g10 = bg.init.u01 * so.sin() + bg.init.u02 * so.cos();
    let integrand = |t: f64| {
        let (u1, u2) = bg.state(t).unwrap();
        -1.0 / ((1.0 - u2 * u2 / c2(u1, u2)) * t.tan())
    };
    for j in [0, 300, 1024, 1700, 2047] {
        let p = bg.samples[j];
        let v = g10 * simpson(integrand, so, p.theta, 4000).exp();
        assert!((v - p.g1).abs() < 1e-8 * p.g1, "j={j}: {v} vs {}", p.g1);
    }
}

#[test]
fn coefficient_signs_and_f() {
    let c = canon();
    let bg = &c.bg;
    let so = bg.theta_so();
    for p in &c.co.points {
        assert!(p.a11 > 0.0 && p.a22 > 0.0 && p.a12 < 0.0);
        assert!(p.e1 > 0.0);
        let b = bg.point(p.theta).unwrap();
        let num = 1.0 - b.mach_sq;
        assert_eq!(p.k11.signum(), num.signum());
        assert!(p.fp_over_f < 0.0);
    }
    // k̄₁₁ changes sign once, between the grid neighbours of θ_so.
    let changes: Vec<usize> =
        (1..c.co.points.len()).filter(|&j| c.co.points[j].k11.signum() != c.co.points[j - 1].k11.signum()).collect();
    assert_eq!(changes.len(), 1);
    let j = changes[0];
    assert!(c.co.points[j - 1].theta < so && c.co.points[j].theta > so);
    let at = coefficient_at(bg, so).unwrap();
    assert_eq!(at.f, 1.0);
    assert!(at.k11.abs() < 1e-10);
    // f against a Simpson route from θ_so.
    let g = |t: f64| {
        let (u1, u2) = bg.state(t).unwrap();
        -u1 * u2 / (c2(u1, u2) - u2 * u2)
    };
    for j in [0, 512, 1500, 2047] {
        let p = c.co.points[j];
        let v = simpson(g, so, p.theta, 4000).exp();
        assert!((v - p.f).abs() < 1e-10 * p.f);
    }
}

#[test]
fn identity_suite() {
    let c = canon();
    let r = verify_identities(&c.bg, &c.co).unwrap();
    assert!(r.passed);
    assert!(r.analytic.max_abs_k1 < K1_TOL, "{:e}", r.analytic.max_abs_k1);
    assert!(r.analytic.key2_max_rel < 1e-6 && r.analytic.key3_max_rel < 1e-6);
    assert!(r.key2_min > 0.0 && r.key3_min > 0.0);
    for v in r.spline_vs_fd_interior {
        assert!(v < 1e-6, "{r:?}");
    }
}

/// Test-side k̄₁₁, k̄₃₃ and M̄₁M̄₂/(1 − M̄₂²) from the state.
fn test_fns(u1: f64, u2: f64) -> [f64; 3] {
    let cc = c2(u1, u2);
    let (m1s, m2s) = (u1 * u1 / cc, u2 * u2 / cc);
    [(1.0 - m1s - m2s) / (1.0 - m2s).powi(2), 1.0 / (1.0 - m2s), u1 * u2 / cc / (1.0 - m2s)]
}

#[test]
fn key_identities_by_test_side_differences() {
    let c = canon();
    let bg = &c.bg;
    let h = 1e-4;
    for j in (100..1950).step_by(61) {
        let p = c.co.points[j];
        let t = p.theta;
        let at = |x: f64| {
            let (u1, u2) = bg.state(x).unwrap();
            test_fns(u1, u2)
        };
        let (a, b, cc, d) = (at(t + 2.0 * h), at(t + h), at(t - h), at(t - 2.0 * h));
        let der = |i: usize| (8.0 * (b[i] - cc[i]) - (a[i] - d[i])) / (12.0 * h);
        let cot = 1.0 / t.tan();
        let key2 = der(0) + 2.0 * p.k11 * p.k2;
        let key3 = der(1) + 2.0 * p.k33 * (p.k2 - cot);
        assert!((key2 - p.key2_rhs).abs() < 1e-6 * p.key2_rhs, "key2 at {t}: {key2} vs {}", p.key2_rhs);
        assert!((key3 - p.key3_rhs).abs() < 1e-6 * p.key3_rhs, "key3 at {t}");
        assert!((der(2) + p.dfp_over_f).abs() < 1e-6 * p.dfp_over_f.abs());
    }
}

#[test]
fn multiplier_construction() {
    let m = &canon().mult;
    assert_eq!(m.d_star, 4.0);
    assert_eq!(m.d2_at_sonic, 8.0);
    assert_eq!(m.doublings, 0);
    assert!(m.kt2_residual < 1e-9, "{:e}", m.kt2_residual);
    assert!(m.relation_residual < 1e-9, "{:e}", m.relation_residual);
    let d1_max = m.points.iter().map(|p| p.d1).fold(0.0, f64::max);
    assert!(d1_max <= m.d_star);
    for p in &m.points {
        assert!(p.kt1 >= 2.0);
        assert!((p.kt3 - (m.d_star - p.d1 / 2.0)).abs() < 1e-10 * p.kt3);
        assert!(p.kt3 >= m.d_star / 2.0 && m.d_star / 2.0 >= 2.0);
        assert!(p.kt2.abs() < 1e-12);
        assert!(p.l1 < 0.0 && p.l2 > 0.0);
        assert!(p.k2 < 0.0 && p.k1 > 0.0 && p.k3 > 0.0);
        assert!(4.0 * p.k1 * p.k3 - p.k2 * p.k2 > 0.0);
    }
    assert!(check_inequalities(m).all_hold);
}

#[test]
fn d1_and_d2_by_independent_quadrature() {
    let c = canon();
    let (bg, m) = (&c.bg, &c.mult);
    let so = bg.theta_so();
    let k2 = |t: f64| coefficient_at(bg, t).unwrap().k2;
    for j in [0, 400, 1300, 2047] {
        let t = m.points[j].theta;
        // RK4 on I′ = k̄₂, J′ = e^{−2I}; then d₁ = e^I and, by variation of
        // constants, d₂ = e^{2I}(d₂(θ_so) − 2d*J).
        let n = 4000;
        let h = (t - so) / n as f64;
        let (mut i2, mut jj, mut s0) = (0.0f64, 0.0f64, so);
        for _ in 0..n {
            let (ka, kb, kc) = (k2(s0), k2(s0 + h / 2.0), k2(s0 + h));
            let i_mid1 = i2 + h / 2.0 * ka;
            let i_mid2 = i2 + h / 2.0 * kb;
            let i_end = i2 + h * kb;
            jj += h / 6.0 * ((-2.0 * i2).exp() + 2.0 * (-2.0 * i_mid1).exp() + 2.0 * (-2.0 * i_mid2).exp() + (-2.0 * i_end).exp());
            i2 += h / 6.0 * (ka + 4.0 * kb + kc);
            s0 += h;
        }
        assert!((m.points[j].d1 - i2.exp()).abs() < 1e-9);
        let d2 = (2.0 * i2).exp() * (m.d2_at_sonic - 2.0 * m.d_star * jj);
        assert!((m.points[j].d2 - d2).abs() < 1e-6 * d2.abs(), "{} vs {d2}", m.points[j].d2);
    }
}

#[test]
fn k4_at_the_sonic_point_and_sigma0() {
    let m = &canon().mult;
    let so = m.background().theta_so();
    let p = m.eval(so).unwrap();
    // Here 1 − M̄₁² − M̄₂² = 0, so K₄ = −d₁²/(f′d₂ − f d₁) with f = 1.
    assert!(p.k4 > 0.0);
    let phi = coefficient_at(m.background(), so).unwrap().fp_over_f;
    assert!((p.k4 + p.d1 * p.d1 / (phi * p.d2 - p.d1)).abs() < 1e-9);
    assert!(m.sigma0 > 0.0 && m.sigma0 < so - m.background().theta_minus);
    let edge = m.eval(so - m.sigma0).unwrap();
    assert!((edge.k4 - m.k4_floor).abs() < 1e-9);
    for q in m.points.iter().filter(|q| q.theta >= so - m.sigma0) {
        assert!(q.k4 >= m.k4_floor);
    }
}

#[test]
fn sigma0_grid_refinement() {
    let gas = GasConstants::air();
    let coarse = &canon().mult;
    let cfg = BackgroundConfig { samples: 4096, ..BackgroundConfig::default() };
    let bg = solve_background(&SonicInit::canonical(gas), gas, &cfg).unwrap();
    let fine = build_multiplier(&bg, &coefficients(&bg), &MultiplierConfig::default()).unwrap();
    let cell = (coarse.background().theta_plus - coarse.background().theta_minus) / 2047.0;
    assert!((coarse.sigma0 - fine.sigma0).abs() < 2.0 * cell);
}

#[test]
fn azimuthal_multiplier_keeps_kappa3_positive() {
    let c = canon();
    let az = build_multiplier(&c.bg, &c.co, &MultiplierConfig::azimuthal()).unwrap();
    assert_eq!(az.d2_at_sonic, 64.0);
    assert!(az.points.iter().all(|p| p.kappa3_f >= 1.0));
    assert!(c.mult.points.iter().any(|p| p.kappa3_f < 0.0));
    assert!(check_inequalities(&az).all_hold);
}

#[test]
fn refusals() {
    let gas = GasConstants::air();
    assert!(SonicInit::new(0.8, 0.4, 0.4, 1.0, gas).is_err());
    assert!(SonicInit::new(1.7, 0.4, 0.4, 1.0, gas).is_err());
    assert!(SonicInit::from_angle(0.8, -0.1, 1.0, gas).is_err());
    // U₀₁ ≈ 0 puts θ_so on the M̄₂ = 1 fold.
    let fold = SonicInit::from_angle(0.785, 1.5707, 1.0, gas).unwrap();
    let e = solve_background(&fold, gas, &BackgroundConfig::default()).unwrap_err();
    assert!(e.to_string().contains("collapsed"), "{e}");
    let c = canon();
    let bad = MultiplierConfig { d1_at_sonic: 0.0, ..MultiplierConfig::default() };
    assert!(build_multiplier(&c.bg, &c.co, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn admissible_data_give_a_valid_background(so in 0.5f64..1.0, beta in 0.5f64..1.0) {
        let gas = GasConstants::air();
        let init = SonicInit::from_angle(so, beta, 1.0, gas).unwrap();
        let bg = solve_background(&init, gas, &BackgroundConfig { samples: 512, ..BackgroundConfig::default() }).unwrap();
        prop_assert!(bg.samples.windows(2).all(|w| w[1].mach_sq < w[0].mach_sq));
        let co = coefficients(&bg);
        let r = verify_identities(&bg, &co).unwrap();
        prop_assert!(r.passed);
        let m = build_multiplier(&bg, &co, &MultiplierConfig::default()).unwrap();
        prop_assert!(check_inequalities(&m).all_hold);
        prop_assert!(m.relation_residual < 1e-8);
    }
}
