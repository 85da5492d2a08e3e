//! Dormand–Prince 5(4) with the 4th-order continuous extension.
//!
//! The integrator is deliberately plain: fixed-size state arrays, FSAL,
//! PI-free step control, and a per-step callback that receives the dense
//! segment of every accepted step. Event location lives with the callers,
//! which run [`crate::roots::brent`] on [`Segment::eval`].

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct Options<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
    /// First trial step; 0 selects it automatically.
    pub h_init: f64,
    pub h_max: f64,
    /// Below this step magnitude the run stops with [`Halt::StepUnderflow`].
    pub h_min: f64,
    pub max_steps: usize,
}

impl<const N: usize> Options<N> {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol: [atol; N], h_init: 0.0, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 200_000 }
    }
}

/// Dense output of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> Segment<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> [f64; N] {
        self.rc[0]
    }

    pub fn y1(&self) -> [f64; N] {
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.rc[0][i] + self.rc[1][i];
        }
        y
    }

    /// Interpolated state at `t` (normally inside the step).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; N];
        for i in 0..N {
            let r = &self.rc;
            y[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        y
    }

    /// One component of [`Segment::eval`].
    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rc;
        r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
    }

    /// True if `t` lies in the closed step interval.
    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h > 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= lo && t <= hi
    }
}

/// What the caller wants after seeing an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    /// Reached `t_end`.
    Reached,
    /// The step callback asked to stop.
    Stopped,
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone, Copy)]
pub struct Run<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub accepted: usize,
    pub rejected: usize,
    pub halt: Halt,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn err_norm<const N: usize>(e: &[f64; N], y0: &[f64; N], y1: &[f64; N], o: &Options<N>) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = o.atol[i] + o.rtol * y0[i].abs().max(y1[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Integrates y' = f(t, y) from `t0` towards `t_end`.
///
/// `f` returns `None` where the right-hand side is undefined; such trial
/// steps are rejected and halved. `on_step` sees every accepted step.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Options<N>,
    mut on_step: O,
) -> Run<N>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    O: FnMut(&Segment<N>) -> Flow,
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut run = Run { t, y, accepted: 0, rejected: 0, halt: Halt::Reached };
    if t_end == t0 {
        return run;
    }
    let Some(mut k1) = f(t, &y) else {
        run.halt = Halt::StepUnderflow;
        return run;
    };
    let mut h = if opts.h_init > 0.0 { opts.h_init } else { initial_step(&mut f, t, &y, &k1, dir, opts) };
    h = h.min(opts.h_max).min((t_end - t).abs());
    let mut last_reject = false;

    loop {
        if run.accepted + run.rejected >= opts.max_steps {
            run.halt = Halt::MaxSteps;
            break;
        }
        if h < opts.h_min {
            run.halt = Halt::StepUnderflow;
            break;
        }
        let mut last = false;
        if (t + dir * h - t_end) * dir >= 0.0 {
            h = (t_end - t).abs();
            last = true;
        }
        let hs = dir * h;
        let attempt = (|| {
            let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(
                t + C5 * hs,
                &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let y6 = axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            let k6 = f(t + hs, &y6)?;
            let y1 = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            if !finite(&y1) {
                return None;
            }
            let k7 = f(t + hs, &y1)?;
            Some((k2, k3, k4, k5, k6, k7, y1))
        })();
        let Some((_k2, k3, k4, k5, k6, k7, y1)) = attempt else {
            run.rejected += 1;
            h *= 0.5;
            last_reject = true;
            continue;
        };
        let mut e = [0.0; N];
        for i in 0..N {
            e[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = err_norm(&e, &y, &y1, opts);
        if !err.is_finite() {
            run.rejected += 1;
            h *= 0.5;
            last_reject = true;
            continue;
        }
        if err <= 1.0 {
            let mut rc = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y1[i] - y[i];
                let bspl = hs * k1[i] - dy;
                rc[0][i] = y[i];
                rc[1][i] = dy;
                rc[2][i] = bspl;
                rc[3][i] = dy - hs * k7[i] - bspl;
                rc[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let seg = Segment { t0: t, h: hs, rc };
            t = if last { t_end } else { t + hs };
            y = y1;
            k1 = k7;
            run.accepted += 1;
            run.t = t;
            run.y = y;
            if on_step(&seg) == Flow::Stop {
                run.halt = Halt::Stopped;
                return run;
            }
            if last {
                run.halt = Halt::Reached;
                return run;
            }
            let mut fac = 0.9 * err.powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_reject {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            last_reject = false;
        } else {
            run.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_reject = true;
        }
    }
    run
}

fn initial_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], dir: f64, o: &Options<N>) -> f64
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = o.atol[i] + o.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (k1[i] / sc).powi(2);
    }
    d0 = (d0 / N as f64).sqrt();
    d1 = (d1 / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, dir * h0, &[(1.0, k1)]);
    let Some(k2) = f(t + dir * h0, &y1) else {
        return h0 * 1e-3;
    };
    let mut d2 = 0.0;
    for i in 0..N {
        let sc = o.atol[i] + o.rtol * y[i].abs();
        d2 += ((k2[i] - k1[i]) / sc).powi(2);
    }
    d2 = (d2 / N as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
