//! One runner per subcommand: read parameters, solve, emit tables and checks.

use crate::config::{ConfigError, Range, Reader};
use crate::output::{Cell, Check, Csv, IdentitySummary};
use conicflow_core::background::{
    build_multiplier, check_inequalities, coefficients, solve_background, verify_identities, BackgroundConfig,
    BackgroundTable, MultiplierConfig, SonicInit,
};
use conicflow_core::friedrichs::{
    assemble, manufactured_data, potential_field, sample_coefficients, solve, solve_mode, DomainSpec,
    PolynomialPotential, ProblemData, SolutionField, SOLVE_TOL,
};
use conicflow_core::gas::{FlowState, GasConstants};
use conicflow_core::rotational::{PerturbationData, Remainder, RotationalConfig, RotationalProblem};
use conicflow_core::selfsim::{
    beltrami_closed_form, classify_initial, integrate_problem1, Direction, IntegrationConfig, ProblemOneInit,
    RegimeClassification, TerminationKind, Trajectory,
};
use conicflow_core::shock::{admissible_grid, apple_curve, critical_angles, solve_conic_shock, IncomingFlow};
use conicflow_core::Error;
use serde_json::{json, Value};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Scenario kinds, one per subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Problem1,
    Beltrami,
    Shock,
    AppleSweep,
    Background,
    Tricomi,
    TricomiMode,
    Rotational,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Problem1,
        Kind::Beltrami,
        Kind::Shock,
        Kind::AppleSweep,
        Kind::Background,
        Kind::Tricomi,
        Kind::TricomiMode,
        Kind::Rotational,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Problem1 => "problem1",
            Kind::Beltrami => "beltrami",
            Kind::Shock => "shock",
            Kind::AppleSweep => "apple-sweep",
            Kind::Background => "background",
            Kind::Tricomi => "tricomi",
            Kind::TricomiMode => "tricomi-mode",
            Kind::Rotational => "rotational",
        }
    }
}

/// Multipliers from `--grid-scale` and `--tol-scale`.
#[derive(Debug, Clone, Copy)]
pub struct Scales {
    pub grid: f64,
    pub tol: f64,
}

impl Scales {
    fn count(&self, n: usize, min: usize) -> usize {
        ((n as f64 * self.grid).round() as usize).max(min)
    }
}

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Solver(Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

/// Input errors detected by the core constructors are configuration errors.
fn setup<T>(r: conicflow_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(ConfigError { problems: vec![e.to_string()] }))
}

/// Output of a successful solve.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<(String, String)>,
    pub summary: Value,
    pub invariants: Vec<Check>,
    pub identity: Option<IdentitySummary>,
}

/// Validated parameters.
pub enum Plan {
    Problem1(Problem1),
    Beltrami(Beltrami),
    Shock(Shock),
    Apple(Apple),
    Background(Background),
    Tricomi(Tricomi),
    Rotational(Rotational),
}

fn gas(r: &mut Reader) -> f64 {
    r.required_f64("gas", "gamma", 1.4, Range::Open(1.0, f64::INFINITY))
}

fn integration(r: &mut Reader, section: &str, s: &Scales, direction: Direction) -> IntegrationConfig {
    IntegrationConfig {
        rtol: r.f64(section, "rtol", 1e-10, Range::Positive) * s.tol,
        atol: r.f64(section, "atol", 1e-12, Range::Positive) * s.tol,
        direction,
        ..IntegrationConfig::default()
    }
}

/// Reads the parameters of `kind`, collecting every problem.
pub fn configure(kind: Kind, r: &mut Reader, s: &Scales) -> Plan {
    match kind {
        Kind::Problem1 => Plan::Problem1(Problem1::configure(r, s)),
        Kind::Beltrami => Plan::Beltrami(Beltrami::configure(r, s)),
        Kind::Shock => Plan::Shock(Shock::configure(r, s)),
        Kind::AppleSweep => Plan::Apple(Apple::configure(r, s)),
        Kind::Background => Plan::Background(Background::configure(r, s)),
        Kind::Tricomi => Plan::Tricomi(Tricomi::configure(r, s, false)),
        Kind::TricomiMode => Plan::Tricomi(Tricomi::configure(r, s, true)),
        Kind::Rotational => Plan::Rotational(Rotational::configure(r, s)),
    }
}

pub fn execute(plan: &Plan) -> Result<Report, Failure> {
    match plan {
        Plan::Problem1(p) => p.run(),
        Plan::Beltrami(p) => p.run(),
        Plan::Shock(p) => p.run(),
        Plan::Apple(p) => p.run(),
        Plan::Background(p) => p.run(),
        Plan::Tricomi(p) => p.run(),
        Plan::Rotational(p) => p.run(),
    }
}

// ---------------------------------------------------------------- trajectories

fn state_params(r: &mut Reader, sec: &str, d: [f64; 6]) -> [f64; 6] {
    [
        r.f64(sec, "theta0", d[0], Range::Open(0.0, PI)),
        r.f64(sec, "rho", d[1], Range::Positive),
        r.f64(sec, "u1", d[2], Range::Any),
        r.f64(sec, "u2", d[3], Range::Any),
        r.f64(sec, "u3", d[4], Range::Any),
        r.f64(sec, "entropy", d[5], Range::Positive),
    ]
}

fn initial(gamma: f64, p: [f64; 6]) -> Result<ProblemOneInit, Failure> {
    let gas = setup(GasConstants::new(gamma))?;
    let st = FlowState { theta: p[0], rho: p[1], u1: p[2], u2: p[3], u3: p[4], entropy_a: p[5] };
    setup(ProblemOneInit::new(st, gas))
}

const STATE_COLUMNS: [&str; 15] = [
    "theta", "rho", "u1", "u2", "u3", "pressure", "c", "mach1", "mach2", "mach3", "mach_sq", "g1", "g2", "g3",
    "bernoulli",
];

fn state_row(s: &FlowState, gas: GasConstants) -> Vec<f64> {
    let d = conicflow_core::gas::derive_unchecked(s, gas);
    vec![
        s.theta,
        s.rho,
        s.u1,
        s.u2,
        s.u3,
        d.pressure,
        d.sound_speed,
        d.mach[0],
        d.mach[1],
        d.mach[2],
        d.mach_sq_total,
        d.g1,
        d.g2,
        d.g3,
        d.bernoulli,
    ]
}

fn steps_csv(tr: &Trajectory) -> String {
    let mut c = Csv::new(&STATE_COLUMNS);
    for s in &tr.samples {
        c.push(&state_row(&s.state, tr.gas));
    }
    c.into_string()
}

fn conservation_checks(tr: &Trajectory, tol: f64, out: &mut Vec<Check>) {
    out.push(Check::below("bernoulli_drift", tr.max_bernoulli_drift(), 1e-10 * tol.max(1.0)));
    out.push(Check::below("entropy_drift", tr.max_entropy_drift(), 1e-10 * tol.max(1.0)));
}

fn termination_json(tr: &Trajectory) -> Value {
    let e = &tr.termination;
    json!({
        "kind": format!("{:?}", e.kind),
        "theta": e.theta_event,
        "u1": e.state.u1,
        "u2": e.state.u2,
        "u3": e.state.u3,
        "rho": e.state.rho,
    })
}

pub struct Problem1 {
    gamma: f64,
    state: [f64; 6],
    target: f64,
    cfg: IntegrationConfig,
    samples: usize,
    tol: f64,
}

impl Problem1 {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let gamma = gas(r);
        let state = state_params(r, "problem1", [1.0, 1.0, 0.6, -0.5, 0.2, 0.5]);
        let dir = match r.choice("problem1", "direction", "decreasing", &["decreasing", "increasing"]) {
            "increasing" => Direction::Increasing,
            _ => Direction::Decreasing,
        };
        let default_target = if dir == Direction::Decreasing { 0.0 } else { PI };
        let target = r.f64("problem1", "theta_target", default_target, Range::Any);
        if (target - state[0]) * if dir == Direction::Decreasing { -1.0 } else { 1.0 } <= 0.0 {
            r.reject("problem1.theta_target lies on the wrong side of theta0 for the chosen direction");
        }
        let cfg = integration(r, "problem1", s, dir);
        let samples = s.count(r.usize("problem1", "samples", 201, 2), 2);
        Self { gamma, state, target, cfg, samples, tol: s.tol }
    }

    fn run(&self) -> Result<Report, Failure> {
        let ini = initial(self.gamma, self.state)?;
        let class = classify_initial(&ini);
        let tr = integrate_problem1(&ini, self.target, &self.cfg)?;
        let (a, b) = (ini.theta0, tr.termination.theta_event);
        let mut dense = Csv::new(&STATE_COLUMNS);
        for k in 0..self.samples {
            let t = if k + 1 == self.samples { b } else { a + (b - a) * k as f64 / (self.samples - 1) as f64 };
            if let Some(st) = tr.state_at(t) {
                dense.push(&state_row(&st, tr.gas));
            }
        }
        let mut inv = Vec::new();
        conservation_checks(&tr, self.tol, &mut inv);
        inv.push(Check::flag("accepted_step", tr.termination.kind != TerminationKind::StepFailure));
        if class == RegimeClassification::TransitionCase3 {
            let e = &tr.termination;
            inv.push(Check::flag("reaches_polar_stagnation", e.kind == TerminationKind::PolarVelocityVanishes));
            inv.push(Check::below("u2_at_end", e.state.u2.abs(), 1e-9));
            inv.push(Check::below("u3_at_end", e.state.u3.abs(), 1e-6));
        }
        Ok(Report {
            files: vec![("steps.csv".into(), steps_csv(&tr)), ("trajectory.csv".into(), dense.into_string())],
            summary: json!({
                "classification": format!("{class:?}"),
                "termination": termination_json(&tr),
                "accepted_steps": tr.samples.len(),
                "bernoulli_drift": tr.max_bernoulli_drift(),
                "entropy_drift": tr.max_entropy_drift(),
            }),
            invariants: inv,
            identity: None,
        })
    }
}

pub struct Beltrami {
    gamma: f64,
    state: [f64; 6],
    margin: f64,
    cfg: IntegrationConfig,
    samples: usize,
    tol: f64,
}

impl Beltrami {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let gamma = gas(r);
        let state = state_params(r, "beltrami", [FRAC_PI_2, 1.0, 0.0, -1.0, 0.3, 5.0]);
        let margin = r.f64("beltrami", "margin", 0.01, Range::Positive);
        let cfg = integration(r, "beltrami", s, Direction::Decreasing);
        let samples = s.count(r.usize("beltrami", "samples", 401, 3), 3);
        Self { gamma, state, margin, cfg, samples, tol: s.tol }
    }

    fn run(&self) -> Result<Report, Failure> {
        let ini = initial(self.gamma, self.state)?;
        let closed = setup(beltrami_closed_form(&ini))?;
        let (lo, hi) = closed.interval();
        let (lo, hi) = (lo + self.margin, hi - self.margin);
        let t0 = ini.theta0;
        if !(lo < t0 && t0 < hi) {
            return Err(Failure::Config(ConfigError {
                problems: vec![format!("beltrami.margin leaves no interval around theta0 = {t0}")],
            }));
        }
        let down = integrate_problem1(&ini, lo, &self.cfg)?;
        let up = integrate_problem1(&ini, hi, &self.cfg.with_direction(Direction::Increasing))?;
        let mut c = Csv::new(&["theta", "rho", "u1", "u2", "u3", "exact_u1", "exact_u2", "exact_u3", "rel_error"]);
        let mut worst = 0.0f64;
        for k in 0..self.samples {
            let t = lo + (hi - lo) * k as f64 / (self.samples - 1) as f64;
            let tr = if t < t0 { &down } else { &up };
            let s = tr.state_at(t).ok_or_else(|| Error::invariant(format!("no dense state at theta = {t}")))?;
            let v = closed.velocity(t)?;
            let d = ((s.u1 - v[0]).powi(2) + (s.u2 - v[1]).powi(2) + (s.u3 - v[2]).powi(2)).sqrt();
            let e = d / (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            worst = worst.max(e);
            c.push(&[t, s.rho, s.u1, s.u2, s.u3, v[0], v[1], v[2], e]);
        }
        let mut inv = vec![Check::below("closed_form_rel_error", worst, 1e-8 * self.tol.max(1.0))];
        for tr in [&down, &up] {
            conservation_checks(tr, self.tol, &mut inv);
            inv.push(Check::flag("reached_end", tr.termination.kind == TerminationKind::ReachedEnd));
        }
        Ok(Report {
            files: vec![("trajectory.csv".into(), c.into_string())],
            summary: json!({
                "case": format!("{:?}", closed.case),
                "theta_min": closed.theta_min,
                "q0": closed.q0,
                "interval": [lo, hi],
                "max_rel_error": worst,
            }),
            invariants: inv,
            identity: None,
        })
    }
}

// ---------------------------------------------------------------- shocks

fn inflow(r: &mut Reader, sec: &str) -> (f64, f64, f64) {
    let gamma = gas(r);
    let m0 = r.f64(sec, "mach0", 2.0, Range::Open(1.0, f64::INFINITY));
    let swirl = r.f64(sec, "swirl", 0.0, Range::Open(-1.0, 1.0));
    (gamma, m0, swirl)
}

fn make_inflow(gamma: f64, m0: f64, swirl: f64) -> Result<IncomingFlow, Failure> {
    let gas = setup(GasConstants::new(gamma))?;
    setup(IncomingFlow::from_mach(m0, swirl, gas))
}

pub struct Shock {
    gamma: f64,
    m0: f64,
    swirl: f64,
    theta_b: f64,
    cfg: IntegrationConfig,
    samples: usize,
    tol: f64,
}

impl Shock {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let (gamma, m0, swirl) = inflow(r, "shock");
        let theta_b = r.f64("shock", "theta_b", 70f64.to_radians(), Range::OpenClosed(0.0, FRAC_PI_2));
        let cfg = integration(r, "shock", s, Direction::Decreasing);
        let samples = s.count(r.usize("shock", "samples", 201, 2), 2);
        Self { gamma, m0, swirl, theta_b, cfg, samples, tol: s.tol }
    }

    fn run(&self) -> Result<Report, Failure> {
        let f = make_inflow(self.gamma, self.m0, self.swirl)?;
        let ca = critical_angles(&f, &self.cfg)?;
        let sol = solve_conic_shock(&f, self.theta_b, &self.cfg)?;
        let tr = &sol.downstream;
        let mut c = Csv::new(&STATE_COLUMNS);
        let (a, b) = (self.theta_b, sol.theta_star);
        for k in 0..self.samples {
            let t = if k + 1 == self.samples { b } else { a + (b - a) * k as f64 / (self.samples - 1) as f64 };
            if let Some(st) = tr.state_at(t) {
                c.push(&state_row(&st, tr.gas));
            }
        }
        let j = &sol.jump;
        let mut inv = vec![
            Check::below("rh_residual", j.residuals.max(), 1e-12),
            Check::below("prandtl_residual", j.prandtl_residual, 1e-12),
            Check::above("pressure_jump", j.pressure_jump, 0.0),
            Check::below("cone_u2", tr.termination.state.u2.abs(), 1e-9 * f.q0()),
        ];
        conservation_checks(tr, self.tol, &mut inv);
        Ok(Report {
            files: vec![("downstream.csv".into(), c.into_string())],
            summary: json!({
                "theta_b": self.theta_b,
                "theta_star": sol.theta_star,
                "classification": format!("{:?}", sol.classification),
                "class_code": sol.classification.code(),
                "cone_u1": sol.cone_u1,
                "cone_mach_sq": sol.cone_mach_sq,
                "behind_mach_sq": sol.behind_mach_sq,
                "pressure_jump": j.pressure_jump,
                "entropy_jump": sol.entropy_jump(),
                "rh_residuals": [j.residuals.mass, j.residuals.radial_momentum, j.residuals.polar_momentum,
                                 j.residuals.azimuthal_momentum, j.residuals.bernoulli],
                "critical_angles": {
                    "theta_min": ca.theta_min,
                    "under_theta": ca.under_theta,
                    "theta_sharp": ca.theta_sharp,
                    "theta_s": ca.theta_s,
                    "q_tilde0": ca.q_tilde0,
                },
            }),
            invariants: inv,
            identity: None,
        })
    }
}

pub struct Apple {
    gamma: f64,
    m0: f64,
    swirl: f64,
    points: usize,
    full: bool,
    cfg: IntegrationConfig,
}

impl Apple {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let (gamma, m0, swirl) = inflow(r, "apple-sweep");
        let points = s.count(r.usize("apple-sweep", "points", 50, 2), 2);
        let full = r.choice("apple-sweep", "range", "sharp", &["sharp", "full"]) == "full";
        let cfg = integration(r, "apple-sweep", s, Direction::Decreasing);
        Self { gamma, m0, swirl, points, full, cfg }
    }

    fn run(&self) -> Result<Report, Failure> {
        let f = make_inflow(self.gamma, self.m0, self.swirl)?;
        let ca = critical_angles(&f, &self.cfg)?;
        let grid: Vec<f64> = match (self.full, ca.theta_sharp) {
            (false, Some(ts)) => {
                let lo = ca.under_theta;
                (1..=self.points).map(|k| lo + (ts - lo) * k as f64 / self.points as f64).collect()
            }
            _ => admissible_grid(&f, self.points),
        };
        let curve = apple_curve(&f, &grid, &self.cfg);
        let mut c = Csv::new(&[
            "theta_b", "status", "theta_star", "cone_u1", "class", "behind_mach_sq", "cone_mach_sq", "pressure_jump",
        ]);
        let mut failed = 0usize;
        let mut in_band = true;
        for row in &curve.rows {
            match &row.outcome {
                Ok(p) => {
                    in_band &= p.cone_u1 > ca.q_tilde0 && p.cone_u1 < f.q0();
                    c.push_cells(vec![
                        row.theta_b.into(),
                        "ok".into(),
                        p.theta_star.into(),
                        p.cone_u1.into(),
                        Cell::I(p.class_code as i64),
                        p.behind_mach_sq.into(),
                        p.cone_mach_sq.into(),
                        p.pressure_jump.into(),
                    ]);
                }
                Err(_) => {
                    failed += 1;
                    let mut cells = vec![row.theta_b.into(), "failed".into()];
                    cells.extend((0..6).map(|_| Cell::Empty));
                    c.push_cells(cells);
                }
            }
        }
        let mut inv = vec![Check::below("failed_points", failed as f64, 0.5)];
        if self.swirl == 0.0 {
            inv.push(Check::flag("cone_speed_decreasing", curve.monotone_decreasing));
            inv.push(Check::flag("cone_speed_in_band", in_band));
        }
        let errors: Vec<Value> = curve
            .rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| json!({"theta_b": r.theta_b, "error": e})))
            .collect();
        Ok(Report {
            files: vec![("apple.csv".into(), c.into_string())],
            summary: json!({
                "range": if self.full { "full" } else { "sharp" },
                "theta_s": curve.theta_s,
                "monotone_decreasing": curve.monotone_decreasing,
                "theta_star_monotone": curve.theta_star_monotone,
                "q0": f.q0(),
                "q_tilde0": ca.q_tilde0,
                "under_theta": ca.under_theta,
                "theta_sharp": ca.theta_sharp,
                "errors": errors,
            }),
            invariants: inv,
            identity: None,
        })
    }
}

// ---------------------------------------------------------------- background

struct SonicParams {
    gamma: f64,
    theta_so: f64,
    beta: f64,
    b0: f64,
    cfg: BackgroundConfig,
}

fn sonic_params(r: &mut Reader, s: &Scales) -> SonicParams {
    let gamma = gas(r);
    let theta_so = r.f64("background", "theta_so", FRAC_PI_4, Range::Open(0.0, FRAC_PI_2));
    let beta = r.f64("background", "beta", FRAC_PI_4, Range::Open(0.0, FRAC_PI_2));
    let b0 = r.f64("background", "b0", 1.0, Range::Positive);
    let trim = r.f64("background", "trim", 0.02, Range::Open(0.0, 0.5));
    let samples = r.usize("background", "samples", 2048, 16);
    let cfg = BackgroundConfig {
        trim,
        samples,
        integration: IntegrationConfig {
            rtol: 1e-10 * s.tol.min(1.0),
            atol: 1e-12 * s.tol.min(1.0),
            ..IntegrationConfig::default()
        },
    };
    SonicParams { gamma, theta_so, beta, b0, cfg }
}

fn build_background(p: &SonicParams) -> Result<BackgroundTable, Failure> {
    let gas = setup(GasConstants::new(p.gamma))?;
    let init = setup(SonicInit::from_angle(p.theta_so, p.beta, p.b0, gas))?;
    Ok(solve_background(&init, gas, &p.cfg)?)
}

fn identity_summary(bg: &BackgroundTable) -> Result<IdentitySummary, Failure> {
    let co = coefficients(bg);
    let r = verify_identities(bg, &co)?;
    Ok(IdentitySummary {
        passed: r.passed,
        max_abs_k1: r.analytic.max_abs_k1,
        key2_max_rel: r.analytic.key2_max_rel,
        key3_max_rel: r.analytic.key3_max_rel,
        key2_min: r.key2_min,
        key3_min: r.key3_min,
    })
}

pub struct Background {
    sonic: SonicParams,
}

impl Background {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let mut sonic = sonic_params(r, s);
        sonic.cfg.samples = s.count(sonic.cfg.samples, 16);
        Self { sonic }
    }

    fn run(&self) -> Result<Report, Failure> {
        let bg = build_background(&self.sonic)?;
        let co = coefficients(&bg);
        let id = identity_summary(&bg)?;
        let mult = build_multiplier(&bg, &co, &MultiplierConfig::default())?;
        let ineq = check_inequalities(&mult);
        let mut b = Csv::new(&["theta", "u1", "u2", "c", "mach1", "mach2", "mach_sq", "rho", "g1"]);
        for p in &bg.samples {
            b.push(&[p.theta, p.u1, p.u2, p.c, p.m1, p.m2, p.mach_sq, p.rho, p.g1]);
        }
        let mut k = Csv::new(&[
            "theta", "c2", "a11", "a12", "a22", "e1", "e2", "k1", "k2", "k33", "key2", "key2_rhs", "key3", "key3_rhs",
        ]);
        for p in &co.points {
            k.push(&[p.theta, p.c2, p.a11, p.a12, p.a22, p.e1, p.e2, p.k1, p.k2, p.k33, p.key2, p.key2_rhs, p.key3, p.key3_rhs]);
        }
        let mut m = Csv::new(&["theta", "d1", "d2", "l1", "l2", "k1", "k2", "k3", "k4"]);
        for p in &mult.points {
            m.push(&[p.theta, p.d1, p.d2, p.l1, p.l2, p.k1, p.k2, p.k3, p.k4]);
        }
        let inv = vec![
            Check::flag("identity_suite", id.passed),
            Check::below("kt2_residual", mult.kt2_residual, 1e-9),
            Check::flag("quadratic_form_inequalities", ineq.all_hold),
            Check::above("sigma0", mult.sigma0, 0.0),
        ];
        Ok(Report {
            files: vec![
                ("background.csv".into(), b.into_string()),
                ("coefficients.csv".into(), k.into_string()),
                ("multiplier.csv".into(), m.into_string()),
            ],
            summary: json!({
                "theta_a": bg.theta_a,
                "theta_b": bg.theta_b,
                "theta_minus": bg.theta_minus,
                "theta_plus": bg.theta_plus,
                "sonic_check": bg.sonic_check,
                "bernoulli_drift": bg.bernoulli_drift,
                "sigma0": mult.sigma0,
                "d_star": mult.d_star,
                "d2_at_sonic": mult.d2_at_sonic,
                "kt2_residual": mult.kt2_residual,
                "inequalities": {
                    "k1_min": ineq.k1_min,
                    "k3_min": ineq.k3_min,
                    "disc_min": ineq.disc_min,
                    "k4_min_on_sigma": ineq.k4_min_on_sigma,
                    "all_hold": ineq.all_hold,
                },
            }),
            invariants: inv,
            identity: Some(id),
        })
    }
}

// ---------------------------------------------------------------- mixed-type solver

pub struct Tricomi {
    sonic: SonicParams,
    mode: Option<u32>,
    n: usize,
    r0: f64,
    r1: f64,
    mu1: f64,
    manufactured: bool,
}

impl Tricomi {
    fn configure(r: &mut Reader, s: &Scales, mode: bool) -> Self {
        let sonic = sonic_params(r, s);
        let sec = if mode { "tricomi-mode" } else { "tricomi" };
        let base = if mode { 32 } else { 64 };
        let n = s.count(r.usize(sec, "n", base, 4), 4);
        let r0 = r.f64(sec, "r0", 1.0, Range::Positive);
        let r1 = r.f64(sec, "r1", 2.0, Range::Positive);
        if r1 <= r0 {
            r.reject(format!("{sec}.r1 must exceed {sec}.r0"));
        }
        let mu1 = r.f64(sec, "mu1", 3.0, Range::Positive);
        let manufactured = r.choice(sec, "data", "manufactured", &["manufactured", "zero"]) == "manufactured";
        let mode = mode.then(|| r.usize(sec, "m", 3, 0) as u32);
        Self { sonic, mode, n, r0, r1, mu1, manufactured }
    }

    fn run(&self) -> Result<Report, Failure> {
        let bg = build_background(&self.sonic)?;
        let co = coefficients(&bg);
        let id = identity_summary(&bg)?;
        let mc = if self.mode.is_some() { MultiplierConfig::azimuthal() } else { MultiplierConfig::default() };
        let mult = build_multiplier(&bg, &co, &MultiplierConfig { mu1: self.mu1, ..mc })?;
        let dom = setup(DomainSpec::for_multiplier(&mult, self.r0, self.r1, self.n, self.n))?;
        let grid = sample_coefficients(&mult, &dom)?;
        let m = self.mode.unwrap_or(0);
        let psi = PolynomialPotential;
        let data = if self.manufactured { manufactured_data(&grid, &dom, &psi, m) } else { ProblemData::zero(&dom) };
        let sol = match self.mode {
            None => solve(&assemble(&grid, &dom, &data)?)?,
            Some(m) => solve_mode(&grid, &dom, &data, m)?,
        };
        let (csv, err) = self.table(&sol, m);
        let d = &sol.diagnostics;
        let mut inv = vec![
            Check::below("symmetry_residual", d.symmetry_residual, 1e-12),
            Check::above("min_sym_q", d.min_sym_q, 0.0),
            Check::above("min_g_eigenvalue", d.min_g_eigenvalue, -1e-12),
            Check::below("solve_residual", sol.residual, SOLVE_TOL),
        ];
        if let Some(z) = d.max_det_z {
            inv.push(Check::below("max_det_z", z, 0.0));
        }
        if !self.manufactured {
            inv.push(Check::below("zero_data_solution", sol.max_abs(), 1e-10));
        }
        Ok(Report {
            files: vec![("solution.csv".into(), csv)],
            summary: json!({
                "mode": self.mode,
                "n": self.n,
                "theta_range": [dom.theta_lo, dom.theta_hi],
                "residual": sol.residual,
                "weighted_error": err,
                "curl_residual": if self.mode.is_none() { Some(sol.curl_residual()) } else { None },
                "energy": {
                    "lhs": sol.energy.lhs,
                    "rhs": sol.energy.rhs,
                    "ratio": sol.energy.ratio,
                },
                "diagnostics": {
                    "symmetry_residual": d.symmetry_residual,
                    "min_sym_q": d.min_sym_q,
                    "min_sym_q_discrete": d.min_sym_q_discrete,
                    "max_det_z": d.max_det_z,
                    "min_g_eigenvalue": d.min_g_eigenvalue,
                    "split_residual": d.split_residual,
                },
                "sigma0": mult.sigma0,
            }),
            invariants: inv,
            identity: Some(id),
        })
    }

    fn table(&self, sol: &SolutionField, m: u32) -> (String, Option<f64>) {
        let dom = &sol.dom;
        let psi = PolynomialPotential;
        let mut c = Csv::new(&["r", "theta", "u1", "u2", "u3", "exact_u1", "exact_u2", "exact_u3"]);
        for i in 0..dom.nr {
            for j in 0..dom.ntheta {
                let (r, t) = (dom.r_center(i), dom.theta_center(j));
                let u = sol.at(i, j);
                let e = if self.manufactured { potential_field(&psi, r, t, m) } else { [0.0; 3] };
                c.push(&[r, t, u[0], u[1], u[2], e[0], e[1], e[2]]);
            }
        }
        (c.into_string(), self.manufactured.then(|| sol.weighted_error(&psi)))
    }
}

// ---------------------------------------------------------------- rotational

pub struct Rotational {
    sonic: SonicParams,
    data: PerturbationData,
    cfg: RotationalConfig,
}

impl Rotational {
    fn configure(r: &mut Reader, s: &Scales) -> Self {
        let sonic = sonic_params(r, s);
        let sec = "rotational";
        let eps = r.f64(sec, "epsilon", 1e-3, Range::NonNegative);
        let mut data = PerturbationData::single_harmonic(eps);
        data.mu_minus = r.f64(sec, "mu_minus", data.mu_minus, Range::Positive);
        data.mu_plus = r.f64(sec, "mu_plus", data.mu_plus, Range::Any);
        let ntheta = s.count(r.usize(sec, "ntheta", 256, 8), 8);
        // φ nodes stay even so that the Nyquist mode is defined.
        let nphi = 2 * s.count(r.usize(sec, "nphi", 64, 4) / 2, 2);
        let remainder = match r.choice(sec, "remainder", "exact", &["exact", "printed"]) {
            "printed" => Remainder::AsPrinted,
            _ => Remainder::Exact,
        };
        let cfg = RotationalConfig {
            ntheta,
            nphi,
            tol: r.f64(sec, "tol", 1e-10, Range::Positive) * s.tol,
            max_iterations: r.usize(sec, "max_iterations", 60, 1),
            remainder,
            grading: r.f64(sec, "grading", 0.05, Range::NonNegative),
        };
        Self { sonic, data, cfg }
    }

    fn run(&self) -> Result<Report, Failure> {
        let bg = build_background(&self.sonic)?;
        let id = identity_summary(&bg)?;
        let pr = setup(RotationalProblem::new(&bg, self.data.clone(), self.cfg))?;
        let res = pr.fixed_point()?;
        let f = &res.solution;
        let mach = pr.mach_sq(f);
        let mut field = Csv::new(&["theta", "phi", "v1", "v2", "v3", "v4", "v5", "omega", "mach_sq"]);
        for j in 0..f.ntheta {
            for k in 0..f.nphi {
                let i = f.idx(j, k);
                field.push(&[f.theta[j], f.phi[k], f.v[0][i], f.v[1][i], f.v[2][i], f.v[3][i], f.v[4][i], f.omega[i], mach[i]]);
            }
        }
        let mut hist = Csv::new(&["iteration", "update"]);
        for (n, u) in res.history.iter().enumerate() {
            hist.push_cells(vec![(n + 1).into(), (*u).into()]);
        }
        let mut files = vec![("field.csv".into(), field.into_string()), ("history.csv".into(), hist.into_string())];
        let ric = &res.riccati;
        let mut inv = vec![
            Check::flag("converged", res.converged),
            Check::below("contraction_ratio", res.contraction_ratio, 1.0),
            Check::below("uniqueness_margin", ric.uniqueness_margin, 0.0),
            Check::below("condition_margin", ric.condition_margin, 0.0),
            Check::flag("m2_decreasing", ric.m2_decreasing),
        ];
        let eps = self.data.epsilon;
        let sonic = res.sonic_surface.as_ref().map(|s| {
            json!({
                "sup_dev": s.sup_dev,
                "sup_dev_over_eps": if eps > 0.0 { s.sup_dev / eps } else { 0.0 },
                "c2_dev": s.c2_dev,
                "max_slope": s.max_slope,
                "monotone": s.monotone,
            })
        });
        if let Some(s) = &res.sonic_surface {
            let mut c = Csv::new(&["phi", "s"]);
            for (p, v) in s.phi.iter().zip(&s.s) {
                c.push(&[*p, *v]);
            }
            files.push(("sonic.csv".into(), c.into_string()));
            inv.push(Check::flag("mach_monotone", s.monotone));
            inv.push(Check::below("sonic_slope", s.max_slope, 0.0));
        }
        if eps > 0.0 {
            inv.push(Check::below("spectral_tail", res.spectral_tail, 1e-10));
        }
        let residuals = res.residuals.as_ref().map(|r| {
            json!({ "equations": r.equations, "vorticity_divergence": r.vorticity_divergence })
        });
        Ok(Report {
            files,
            summary: json!({
                "epsilon": eps,
                "ntheta": self.cfg.ntheta,
                "nphi": self.cfg.nphi,
                "converged": res.converged,
                "iterations": res.history.len(),
                "history": res.history,
                "contraction_ratio": res.contraction_ratio,
                "v_over_eps": res.v_over_eps,
                "spectral_tail": res.spectral_tail,
                "printed_remainder_gap": res.printed_remainder_gap,
                "sonic_surface": sonic,
                "residuals": residuals,
                "riccati": {
                    "m1_plus": ric.m1.last(),
                    "a_plus": ric.a.last(),
                    "uniqueness_margin": ric.uniqueness_margin,
                    "condition_margin": ric.condition_margin,
                    "lower_bound_holds": ric.lower_bound_holds,
                    "upper_bound_holds": ric.upper_bound_holds,
                    "m2_decreasing": ric.m2_decreasing,
                },
            }),
            invariants: inv,
            identity: Some(id),
        })
    }
}
