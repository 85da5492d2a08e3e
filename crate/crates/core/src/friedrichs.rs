//! The linearised mixed-type problem on (r₀, r₁) × (θ_so − σ₀, θ₊) as a
//! symmetric positive first-order system, and its azimuthal Fourier modes.
//!
//! Unknowns are u₁ = ∂_rΨ, u₂ = ∂_θΨ/r (and u₃ = mΨ/(r sin θ) for mode m).
//! Multiplying the first-order form by the symmetriser Z gives
//! K u = 2A⁽¹⁾∂_r u + 2A⁽²⁾∂_θ u + A⁽³⁾u. On each boundary face the normal
//! matrix splits as B = B₊ + B₋ and the condition B₋(u − g) = 0 is imposed
//! weakly through the boundary flux.
//!
//! Discretisation: cell-centred finite volumes for the conservative form
//! 2∂_r(A⁽¹⁾u) + 2∂_θ(A⁽²⁾u) + (A⁽³⁾ − 2∂_rA⁽¹⁾ − 2∂_θA⁽²⁾)u, with face flux
//! A(u_L + u_R) − |A|(u_R − u_L) where |A| = V|Λ|Vᵀ. The sparse system is
//! solved in the least-squares sense by a sparse QR factorisation.

use crate::background::MultiplierTable;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float as _;

/// Relative residual above which a solve is reported as failed.
pub const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub r0: f64,
    pub r1: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub nr: usize,
    pub ntheta: usize,
}

impl DomainSpec {
    pub fn new(r0: f64, r1: f64, theta_lo: f64, theta_hi: f64, nr: usize, ntheta: usize) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) {
            return Err(Error::domain(format!("need 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")));
        }
        if !(theta_hi > theta_lo) || nr < 2 || ntheta < 2 {
            return Err(Error::domain("need theta_lo < theta_hi and at least 2 cells per direction"));
        }
        Ok(Self { r0, r1, theta_lo, theta_hi, nr, ntheta })
    }

    /// θ ∈ [θ_so − σ₀, θ₊] from the multiplier table.
    pub fn for_multiplier(mult: &MultiplierTable, r0: f64, r1: f64, nr: usize, ntheta: usize) -> Result<Self> {
        let bg = mult.background();
        Self::new(r0, r1, bg.theta_so() - mult.sigma0, bg.theta_plus, nr, ntheta)
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self { nr: self.nr * factor, ntheta: self.ntheta * factor, ..*self }
    }

    pub fn dr(&self) -> f64 {
        (self.r1 - self.r0) / self.nr as f64
    }

    pub fn dtheta(&self) -> f64 {
        (self.theta_hi - self.theta_lo) / self.ntheta as f64
    }

    pub fn r_center(&self, i: usize) -> f64 {
        self.r0 + (i as f64 + 0.5) * self.dr()
    }

    pub fn r_face(&self, i: usize) -> f64 {
        if i == self.nr {
            self.r1
        } else {
            self.r0 + i as f64 * self.dr()
        }
    }

    pub fn theta_center(&self, j: usize) -> f64 {
        self.theta_lo + (j as f64 + 0.5) * self.dtheta()
    }

    pub fn theta_face(&self, j: usize) -> f64 {
        if j == self.ntheta {
            self.theta_hi
        } else {
            self.theta_lo + j as f64 * self.dtheta()
        }
    }

    pub fn cells(&self) -> usize {
        self.nr * self.ntheta
    }
}

/// Background and multiplier values at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoefficients {
    pub theta: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub a33: f64,
    pub e1: f64,
    pub e2: f64,
    pub l1: f64,
    pub l2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Q₃₃/r^{μ₁−1} of the mode system: (κ₃f)/f.
    pub kappa3: f64,
}

/// Coefficients at cell-centre and face θ values.
#[derive(Debug, Clone)]
pub struct CoefficientGrid {
    pub mu1: f64,
    pub centers: Vec<LocalCoefficients>,
    pub faces: Vec<LocalCoefficients>,
}

/// Samples the multiplier table on the θ-grid of `dom`.
pub fn sample_coefficients(mult: &MultiplierTable, dom: &DomainSpec) -> Result<CoefficientGrid> {
    let bg = mult.background();
    let eps = 1e-12;
    if dom.theta_lo < bg.theta_minus - eps || dom.theta_hi > bg.theta_plus + eps {
        return Err(Error::domain(format!(
            "theta range [{}, {}] is outside the multiplier table [{}, {}]",
            dom.theta_lo, dom.theta_hi, bg.theta_minus, bg.theta_plus
        )));
    }
    let nt = dom.ntheta;
    let mut thetas = Vec::with_capacity(2 * nt + 1);
    for j in 0..nt {
        thetas.push(dom.theta_face(j));
        thetas.push(dom.theta_center(j));
    }
    thetas.push(dom.theta_face(nt).min(bg.theta_plus));
    let all = mult.eval_many(&thetas)?;
    let local: Vec<LocalCoefficients> = all
        .iter()
        .map(|(c, m)| LocalCoefficients {
            theta: c.theta,
            a11: c.a11,
            a12: c.a12,
            a22: c.a22,
            a33: c.c2,
            e1: c.e1,
            e2: c.e2,
            l1: m.l1,
            l2: m.l2,
            k1: m.k1,
            k2: m.k2,
            k3: m.k3,
            k4: m.k4,
            kappa3: m.kappa3_f / c.f,
        })
        .collect();
    let faces = local.iter().step_by(2).copied().collect();
    let centers = local.iter().skip(1).step_by(2).copied().collect();
    Ok(CoefficientGrid { mu1: mult.mu1, centers, faces })
}

/// Source term at cell centres and boundary data at boundary face centres.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    /// F at cell (i, j), index i·nθ + j.
    pub forcing: Vec<f64>,
    /// u₂ at r₀, per θ-cell.
    pub g0: Vec<f64>,
    /// u₁ + (l₂/l₁)u₂ at r₁, per θ-cell.
    pub g1: Vec<f64>,
    /// u₁ + (l₂/l₁)u₂ at θ_so − σ₀, per r-cell.
    pub h0: Vec<f64>,
    /// u₁ at θ₊, per r-cell.
    pub h1: Vec<f64>,
    /// u₃ at r₀ (mode problems only).
    pub q0: Vec<f64>,
    /// u₃ at θ₊ (mode problems only).
    pub q1: Vec<f64>,
}

impl ProblemData {
    pub fn zero(dom: &DomainSpec) -> Self {
        let (nr, nt) = (dom.nr, dom.ntheta);
        Self {
            forcing: vec![0.0; nr * nt],
            g0: vec![0.0; nt],
            g1: vec![0.0; nt],
            h0: vec![0.0; nr],
            h1: vec![0.0; nr],
            q0: vec![0.0; nt],
            q1: vec![0.0; nr],
        }
    }

    fn check(&self, dom: &DomainSpec) -> Result<()> {
        let (nr, nt) = (dom.nr, dom.ntheta);
        let ok = self.forcing.len() == nr * nt
            && self.g0.len() == nt
            && self.g1.len() == nt
            && self.h0.len() == nr
            && self.h1.len() == nr
            && self.q0.len() == nt
            && self.q1.len() == nr;
        if ok {
            Ok(())
        } else {
            Err(Error::domain("problem data do not match the grid"))
        }
    }

    pub fn scale(&self) -> f64 {
        [&self.forcing, &self.g0, &self.g1, &self.h0, &self.h1, &self.q0, &self.q1]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Ψ and the partial derivatives needed by the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDerivs {
    pub psi: f64,
    pub r: f64,
    pub t: f64,
    pub rr: f64,
    pub rt: f64,
    pub tt: f64,
}

pub trait Potential {
    fn derivs(&self, r: f64, theta: f64) -> PotentialDerivs;
}

/// Ψ = r²cos 2θ + r sin θ + 0.3r³θ.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolynomialPotential;

impl Potential for PolynomialPotential {
    fn derivs(&self, r: f64, t: f64) -> PotentialDerivs {
        let (s, c) = t.sin_cos();
        let (s2, c2) = (2.0 * t).sin_cos();
        PotentialDerivs {
            psi: r * r * c2 + r * s + 0.3 * r * r * r * t,
            r: 2.0 * r * c2 + s + 0.9 * r * r * t,
            t: -2.0 * r * r * s2 + r * c + 0.3 * r * r * r,
            rr: 2.0 * c2 + 1.8 * r * t,
            rt: -4.0 * r * s2 + c + 0.9 * r * r,
            tt: -4.0 * r * r * c2 - r * s,
        }
    }
}

/// Exact (u₁, u₂, u₃) of a potential for mode m.
pub fn potential_field<P: Potential>(psi: &P, r: f64, theta: f64, m: u32) -> [f64; 3] {
    let d = psi.derivs(r, theta);
    [d.r, d.t / r, m as f64 * d.psi / (r * theta.sin())]
}

/// Applies the mode-m operator to `psi` and samples its boundary values.
pub fn manufactured_data<P: Potential>(grid: &CoefficientGrid, dom: &DomainSpec, psi: &P, m: u32) -> ProblemData {
    let mut data = ProblemData::zero(dom);
    let mm = (m as f64).powi(2);
    for i in 0..dom.nr {
        let r = dom.r_center(i);
        for j in 0..dom.ntheta {
            let c = &grid.centers[j];
            let t = c.theta;
            let d = psi.derivs(r, t);
            let sn = t.sin();
            data.forcing[i * dom.ntheta + j] = c.a11 * d.rr
                + 2.0 * c.a12 / r * d.rt
                + c.a22 / (r * r) * d.tt
                + c.e1 / r * d.r
                + c.e2 / (r * r) * d.t
                - mm * c.a33 / (r * r * sn * sn) * d.psi;
        }
    }
    let nt = dom.ntheta;
    for j in 0..nt {
        let c = &grid.centers[j];
        let lo = potential_field(psi, dom.r0, c.theta, m);
        let hi = potential_field(psi, dom.r1, c.theta, m);
        data.g0[j] = lo[1];
        data.q0[j] = lo[2];
        data.g1[j] = hi[0] + c.l2 / c.l1 * hi[1];
    }
    let (flo, fhi) = (&grid.faces[0], &grid.faces[nt]);
    for i in 0..dom.nr {
        let r = dom.r_center(i);
        let lo = potential_field(psi, r, flo.theta, m);
        let hi = potential_field(psi, r, fhi.theta, m);
        data.h0[i] = lo[0] + flo.l2 / flo.l1 * lo[1];
        data.h1[i] = hi[0];
        data.q1[i] = hi[2];
    }
    data
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    R0,
    R1,
    ThetaLo,
    ThetaHi,
}

type Block<const N: usize> = [[f64; N]; N];

fn zero_block<const N: usize>() -> Block<N> {
    [[0.0; N]; N]
}

fn scaled<const N: usize>(a: &Block<N>, s: f64) -> Block<N> {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|v| *v *= s);
    out
}

fn sym_eigen<const N: usize>(a: &Block<N>) -> (Vec<f64>, Mat<f64>) {
    let m = Mat::<f64>::from_fn(N, N, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let evd = m.self_adjoint_eigen(Side::Lower).expect("symmetric eigendecomposition of a small block");
    let s = evd.S().column_vector();
    ((0..N).map(|k| s[k]).collect(), evd.U().to_owned())
}

/// |A| = V|Λ|Vᵀ for symmetric A.
fn abs_sym<const N: usize>(a: &Block<N>) -> Block<N> {
    let (lam, v) = sym_eigen(a);
    let mut out = zero_block::<N>();
    for i in 0..N {
        for j in 0..N {
            out[i][j] = (0..N).map(|k| v[(i, k)] * lam[k].abs() * v[(j, k)]).sum();
        }
    }
    out
}

fn min_eigenvalue<const N: usize>(a: &Block<N>) -> f64 {
    sym_eigen(a).0[0]
}

/// Coefficient matrices of one Friedrichs form with the r-powers stripped:
/// A⁽¹⁾ = r^μ·m1, A⁽²⁾ = r^{μ−1}·m2, A⁽³⁾ = r^{μ−1}·m3, and B± = r^μ·b (r faces)
/// or r^{μ−1}·b (θ faces).
trait Form<const N: usize> {
    fn m1(&self, c: &LocalCoefficients) -> Block<N>;
    fn m2(&self, c: &LocalCoefficients) -> Block<N>;
    fn m3(&self, c: &LocalCoefficients) -> Block<N>;
    /// Z(F, 0, …)ᵀ/(r^μ F).
    fn forcing(&self, c: &LocalCoefficients) -> [f64; N];
    /// (B₊, B₋) on a face.
    fn split(&self, face: Face, c: &LocalCoefficients) -> (Block<N>, Block<N>);
    /// Analytic ½(Q + Qᵀ)/r^{μ−1}.
    fn sym_q(&self, c: &LocalCoefficients) -> Block<N>;
}

struct Planar;

fn planar_m1(c: &LocalCoefficients) -> [[f64; 2]; 2] {
    [[c.l1 * c.a11, c.l2 * c.a11], [c.l2 * c.a11, 2.0 * c.a12 * c.l2 - c.a22 * c.l1]]
}

fn planar_m2(c: &LocalCoefficients) -> [[f64; 2]; 2] {
    [[2.0 * c.a12 * c.l1 - c.a11 * c.l2, c.a22 * c.l1], [c.a22 * c.l1, c.a22 * c.l2]]
}

fn planar_m3(c: &LocalCoefficients) -> [[f64; 2]; 2] {
    [
        [2.0 * c.l1 * c.e1, 2.0 * (c.l1 * c.e2 + c.a11 * c.l2)],
        [2.0 * c.l2 * c.e1, 2.0 * (c.l2 * c.e2 + 2.0 * c.a12 * c.l2 - c.a22 * c.l1)],
    ]
}

fn planar_split(face: Face, c: &LocalCoefficients) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let q = c.l2 / c.l1;
    let vv = [[1.0, q], [q, q * q]];
    let p = c.l1 / c.l2;
    let ww = [[p * p, p], [p, 1.0]];
    let d_r = [[0.0, 0.0], [0.0, c.k4]];
    let d_t = [[c.k4 * p, 0.0], [0.0, 0.0]];
    let neg = |a: [[f64; 2]; 2]| scaled(&a, -1.0);
    match face {
        Face::R0 => (scaled(&vv, -c.a11 * c.l1), neg(d_r)),
        Face::R1 => (d_r, scaled(&vv, c.a11 * c.l1)),
        Face::ThetaLo => (neg(d_t), scaled(&ww, -c.a22 * c.l2)),
        Face::ThetaHi => (scaled(&ww, c.a22 * c.l2), d_t),
    }
}

impl Form<2> for Planar {
    fn m1(&self, c: &LocalCoefficients) -> Block<2> {
        planar_m1(c)
    }
    fn m2(&self, c: &LocalCoefficients) -> Block<2> {
        planar_m2(c)
    }
    fn m3(&self, c: &LocalCoefficients) -> Block<2> {
        planar_m3(c)
    }
    fn forcing(&self, c: &LocalCoefficients) -> [f64; 2] {
        [2.0 * c.l1, 2.0 * c.l2]
    }
    fn split(&self, face: Face, c: &LocalCoefficients) -> (Block<2>, Block<2>) {
        planar_split(face, c)
    }
    fn sym_q(&self, c: &LocalCoefficients) -> Block<2> {
        [[2.0 * c.k1, c.k2], [c.k2, 2.0 * c.k3]]
    }
}

/// Mode e^{imφ}: u₃ obeys ∂_r u₃ + u₃/r = m u₁/(r sin θ) and
/// ∂_θu₃/r + u₃ cot θ/r = m u₂/(r sin θ); row 3 of K is 2r^μ(αR₃ + βR₄)
/// with α = −Ā₃₃l₁, β = −Ā₃₃l₂.
struct Azimuthal {
    m: f64,
}

fn embed(a: [[f64; 2]; 2], d33: f64) -> Block<3> {
    [[a[0][0], a[0][1], 0.0], [a[1][0], a[1][1], 0.0], [0.0, 0.0, d33]]
}

impl Form<3> for Azimuthal {
    fn m1(&self, c: &LocalCoefficients) -> Block<3> {
        embed(planar_m1(c), -c.a33 * c.l1)
    }
    fn m2(&self, c: &LocalCoefficients) -> Block<3> {
        embed(planar_m2(c), -c.a33 * c.l2)
    }
    fn m3(&self, c: &LocalCoefficients) -> Block<3> {
        let (alpha, beta) = (-c.a33 * c.l1, -c.a33 * c.l2);
        let (sn, cs) = c.theta.sin_cos();
        let w = 2.0 * self.m * c.a33 / sn;
        let mut a = embed(planar_m3(c), 2.0 * (alpha + beta * cs / sn));
        a[0][2] = -w * c.l1;
        a[1][2] = -w * c.l2;
        a[2][0] = w * c.l1;
        a[2][1] = w * c.l2;
        a
    }
    fn forcing(&self, c: &LocalCoefficients) -> [f64; 3] {
        [2.0 * c.l1, 2.0 * c.l2, 0.0]
    }
    fn split(&self, face: Face, c: &LocalCoefficients) -> (Block<3>, Block<3>) {
        let (p, n) = planar_split(face, c);
        let (alpha, beta) = (-c.a33 * c.l1, -c.a33 * c.l2);
        // u₃ is prescribed where the normal entry is negative (r₀, θ₊).
        let (bp, bm) = match face {
            Face::R0 => (0.0, -alpha),
            Face::R1 => (alpha, 0.0),
            Face::ThetaLo => (-beta, 0.0),
            Face::ThetaHi => (0.0, beta),
        };
        (embed(p, bp), embed(n, bm))
    }
    fn sym_q(&self, c: &LocalCoefficients) -> Block<3> {
        embed([[2.0 * c.k1, c.k2], [c.k2, 2.0 * c.k3]], c.kappa3)
    }
}

/// Structural checks made while assembling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemDiagnostics {
    /// max |A − Aᵀ| / max |A| over A⁽¹⁾, A⁽²⁾ at all cells.
    pub symmetry_residual: f64,
    /// min over cells of the smallest eigenvalue of ½(Q + Qᵀ) (analytic, from K₁–K₃).
    pub min_sym_q: f64,
    /// The same for Q = A⁽³⁾ − ∂_rA⁽¹⁾ − ∂_θA⁽²⁾ by face differences.
    pub min_sym_q_discrete: f64,
    /// max over cells of det Z (planar problems only).
    pub max_det_z: Option<f64>,
    /// min over boundary faces of the smallest eigenvalue of G = B₊ − B₋,
    /// relative to |B|.
    pub min_g_eigenvalue: f64,
    /// max |B₊ + B₋ − B| / |B| over boundary faces.
    pub split_residual: f64,
}

/// Sparse operator, right-hand side and diagnostics of one discrete problem.
#[derive(Debug, Clone)]
pub struct FriedrichsSystem {
    pub dom: DomainSpec,
    /// 2 for the planar problem, 3 for a Fourier mode.
    pub ncomp: usize,
    pub mode: Option<u32>,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub diagnostics: SystemDiagnostics,
    grid: CoefficientGrid,
    data: ProblemData,
}

fn norm_max<const N: usize>(a: &Block<N>) -> f64 {
    a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn assemble_form<const N: usize, F: Form<N>>(
    form: &F,
    grid: &CoefficientGrid,
    dom: &DomainSpec,
    data: &ProblemData,
) -> Result<(Vec<(usize, usize, f64)>, Vec<f64>, SystemDiagnostics)> {
    let (nr, nt) = (dom.nr, dom.ntheta);
    if grid.centers.len() != nt || grid.faces.len() != nt + 1 {
        return Err(Error::domain("coefficient grid does not match the domain"));
    }
    data.check(dom)?;
    let mu = grid.mu1;
    let (dr, dt) = (dom.dr(), dom.dtheta());
    let idx = |i: usize, j: usize| N * (i * nt + j);

    // θ-only factors, shared by every r.
    let m1c: Vec<Block<N>> = grid.centers.iter().map(|c| form.m1(c)).collect();
    let m1c_abs: Vec<Block<N>> = m1c.iter().map(abs_sym).collect();
    let m2f: Vec<Block<N>> = grid.faces.iter().map(|c| form.m2(c)).collect();
    let m2f_abs: Vec<Block<N>> = m2f.iter().map(abs_sym).collect();
    let m3c: Vec<Block<N>> = grid.centers.iter().map(|c| form.m3(c)).collect();

    let mut diag = SystemDiagnostics {
        symmetry_residual: 0.0,
        min_sym_q: f64::INFINITY,
        min_sym_q_discrete: f64::INFINITY,
        max_det_z: None,
        min_g_eigenvalue: f64::INFINITY,
        split_residual: 0.0,
    };
    for a in m1c.iter().chain(&m2f) {
        let mut asym = 0.0f64;
        for i in 0..N {
            for j in 0..N {
                asym = asym.max((a[i][j] - a[j][i]).abs());
            }
        }
        diag.symmetry_residual = diag.symmetry_residual.max(asym / norm_max(a));
    }
    let qmin: Vec<f64> = grid.centers.iter().map(|c| min_eigenvalue(&form.sym_q(c))).collect();

    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(nr * nt * 5 * N * N);
    let mut rhs = vec![0.0; N * nr * nt];
    let push = |trip: &mut Vec<(usize, usize, f64)>, p: usize, q: usize, m: &Block<N>, s: f64| {
        for a in 0..N {
            for b in 0..N {
                if m[a][b] != 0.0 {
                    trip.push((p + a, q + b, s * m[a][b]));
                }
            }
        }
    };
    let data_vec = |face: Face, i: usize, j: usize| -> [f64; N] {
        let full = match face {
            Face::R0 => [0.0, data.g0[j], data.q0[j]],
            Face::R1 => [data.g1[j], 0.0, 0.0],
            Face::ThetaLo => [data.h0[i], 0.0, 0.0],
            Face::ThetaHi => [data.h1[i], 0.0, data.q1[i]],
        };
        let mut out = [0.0; N];
        out.copy_from_slice(&full[..N]);
        out
    };
    let check_face = |diag: &mut SystemDiagnostics, bp: &Block<N>, bm: &Block<N>, b: &Block<N>| {
        let mut g = *bp;
        let mut res = 0.0f64;
        for a in 0..N {
            for c in 0..N {
                g[a][c] -= bm[a][c];
                res = res.max((bp[a][c] + bm[a][c] - b[a][c]).abs());
            }
        }
        let scale = norm_max(b);
        diag.split_residual = diag.split_residual.max(res / scale);
        diag.min_g_eigenvalue = diag.min_g_eigenvalue.min(min_eigenvalue(&g) / scale);
    };

    for i in 0..nr {
        let r = dom.r_center(i);
        let (rl, rr) = (dom.r_face(i), dom.r_face(i + 1));
        let (pl, pr) = (rl.powf(mu), rr.powf(mu));
        let rm1 = r.powf(mu - 1.0);
        for j in 0..nt {
            let c = &grid.centers[j];
            let p = idx(i, j);
            let f = data.forcing[i * nt + j];
            let fz = form.forcing(c);
            for a in 0..N {
                rhs[p + a] += r.powf(mu) * fz[a] * f;
            }
            // Zeroth-order part A⁽³⁾ − 2∂_rA⁽¹⁾ − 2∂_θA⁽²⁾ and the discrete Q.
            let mut cm = scaled(&m3c[j], rm1);
            let mut qd = cm;
            for a in 0..N {
                for b in 0..N {
                    let d1 = (pr - pl) / dr * m1c[j][a][b];
                    let d2 = rm1 * (m2f[j + 1][a][b] - m2f[j][a][b]) / dt;
                    cm[a][b] -= 2.0 * (d1 + d2);
                    qd[a][b] -= d1 + d2;
                }
            }
            diag.min_sym_q_discrete = diag.min_sym_q_discrete.min(min_eigenvalue(&qd));
            diag.min_sym_q = diag.min_sym_q.min(rm1 * qmin[j]);
            if N == 2 {
                let z = 4.0 * r.powf(2.0 * mu) * (c.l1 * (2.0 * c.a12 * c.l2 - c.a22 * c.l1) - c.a11 * c.l2 * c.l2);
                diag.max_det_z = Some(diag.max_det_z.map_or(z, |m: f64| m.max(z)));
            }
            push(&mut trip, p, p, &cm, 1.0);

            // r faces: flux A(u_L + u_R) − |A|(u_R − u_L) in the +r direction.
            for (side, pw) in [(1i64, pr), (-1, pl)] {
                let a = scaled(&m1c[j], pw);
                let nb = i as i64 + side;
                if nb >= 0 && (nb as usize) < nr {
                    let aa = scaled(&m1c_abs[j], pw);
                    let q = idx(nb as usize, j);
                    let s = side as f64 / dr;
                    let mut own = a;
                    let mut other = a;
                    for x in 0..N {
                        for y in 0..N {
                            // Outward: own side contributes A + |A|, the neighbour A − |A|.
                            own[x][y] = a[x][y] + side as f64 * aa[x][y];
                            other[x][y] = a[x][y] - side as f64 * aa[x][y];
                        }
                    }
                    push(&mut trip, p, p, &own, s);
                    push(&mut trip, p, q, &other, s);
                } else {
                    let face = if side == 1 { Face::R1 } else { Face::R0 };
                    let (bp, bm) = form.split(face, c);
                    let (bp, bm) = (scaled(&bp, pw), scaled(&bm, pw));
                    check_face(&mut diag, &bp, &bm, &scaled(&a, side as f64));
                    push(&mut trip, p, p, &bp, 2.0 / dr);
                    let g = data_vec(face, i, j);
                    for x in 0..N {
                        rhs[p + x] -= 2.0 / dr * (0..N).map(|y| bm[x][y] * g[y]).sum::<f64>();
                    }
                }
            }
            // θ faces.
            for side in [1i64, -1] {
                let jf = if side == 1 { j + 1 } else { j };
                let a = scaled(&m2f[jf], rm1);
                let nb = j as i64 + side;
                if nb >= 0 && (nb as usize) < nt {
                    let aa = scaled(&m2f_abs[jf], rm1);
                    let q = idx(i, nb as usize);
                    let s = side as f64 / dt;
                    let mut own = a;
                    let mut other = a;
                    for x in 0..N {
                        for y in 0..N {
                            own[x][y] = a[x][y] + side as f64 * aa[x][y];
                            other[x][y] = a[x][y] - side as f64 * aa[x][y];
                        }
                    }
                    push(&mut trip, p, p, &own, s);
                    push(&mut trip, p, q, &other, s);
                } else {
                    let face = if side == 1 { Face::ThetaHi } else { Face::ThetaLo };
                    let (bp, bm) = form.split(face, &grid.faces[jf]);
                    let (bp, bm) = (scaled(&bp, rm1), scaled(&bm, rm1));
                    check_face(&mut diag, &bp, &bm, &scaled(&a, side as f64));
                    push(&mut trip, p, p, &bp, 2.0 / dt);
                    let g = data_vec(face, i, j);
                    for x in 0..N {
                        rhs[p + x] -= 2.0 / dt * (0..N).map(|y| bm[x][y] * g[y]).sum::<f64>();
                    }
                }
            }
        }
    }
    Ok((trip, rhs, diag))
}

/// Planar problem.
pub fn assemble(grid: &CoefficientGrid, dom: &DomainSpec, data: &ProblemData) -> Result<FriedrichsSystem> {
    let (triplets, rhs, diagnostics) = assemble_form(&Planar, grid, dom, data)?;
    Ok(FriedrichsSystem { dom: *dom, ncomp: 2, mode: None, triplets, rhs, diagnostics, grid: grid.clone(), data: data.clone() })
}

/// Azimuthal mode m.
pub fn assemble_mode(grid: &CoefficientGrid, dom: &DomainSpec, data: &ProblemData, m: u32) -> Result<FriedrichsSystem> {
    let (triplets, rhs, diagnostics) = assemble_form(&Azimuthal { m: m as f64 }, grid, dom, data)?;
    Ok(FriedrichsSystem { dom: *dom, ncomp: 3, mode: Some(m), triplets, rhs, diagnostics, grid: grid.clone(), data: data.clone() })
}

/// Weighted norms of the discrete energy estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub volume: f64,
    /// r₀, r₁, θ_lo, θ_hi boundary terms of the left-hand side.
    pub boundary: [f64; 4],
    pub lhs: f64,
    pub forcing: f64,
    pub data: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SolutionField {
    pub dom: DomainSpec,
    pub ncomp: usize,
    pub mode: Option<u32>,
    /// Components per cell, cell (i, j) at offset ncomp·(i·nθ + j).
    pub u: Vec<f64>,
    /// ‖Au − b‖ / ‖b‖ (‖Au‖ when b = 0).
    pub residual: f64,
    pub energy: EnergyReport,
    pub diagnostics: SystemDiagnostics,
}

impl SolutionField {
    pub fn at(&self, i: usize, j: usize) -> [f64; 3] {
        let p = self.ncomp * (i * self.dom.ntheta + j);
        let mut out = [0.0; 3];
        out[..self.ncomp].copy_from_slice(&self.u[p..p + self.ncomp]);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// (Σ r²|u − u*|² Δr Δθ)^{1/2} against the exact field at cell centres.
    pub fn weighted_error<P: Potential>(&self, psi: &P) -> f64 {
        let m = self.mode.unwrap_or(0);
        let d = &self.dom;
        let mut s = 0.0;
        for i in 0..d.nr {
            let r = d.r_center(i);
            for j in 0..d.ntheta {
                let ex = potential_field(psi, r, d.theta_center(j), m);
                let u = self.at(i, j);
                let e: f64 = (0..self.ncomp).map(|k| (u[k] - ex[k]).powi(2)).sum();
                s += r * r * e;
            }
        }
        (s * d.dr() * d.dtheta()).sqrt()
    }

    /// Ψ at cell centres by path integration from the (r₀, θ₊) corner cell:
    /// first along θ at the innermost cells, then outwards in r.
    pub fn potential(&self) -> Vec<f64> {
        let d = &self.dom;
        let (nr, nt) = (d.nr, d.ntheta);
        let mut psi = vec![0.0; nr * nt];
        let r = d.r_center(0);
        for j in (0..nt - 1).rev() {
            let u2 = 0.5 * (self.at(0, j)[1] + self.at(0, j + 1)[1]);
            psi[j] = psi[j + 1] - r * u2 * d.dtheta();
        }
        for i in 1..nr {
            for j in 0..nt {
                let u1 = 0.5 * (self.at(i - 1, j)[0] + self.at(i, j)[0]);
                psi[i * nt + j] = psi[(i - 1) * nt + j] + u1 * d.dr();
            }
        }
        psi
    }

    /// Discrete ∂_θu₁ − ∂_r(r u₂) by central differences at interior cells,
    /// in the weighted L² norm and relative to the same norm of u. The exact
    /// field is curl-free, so this measures how far the discrete solution is
    /// from a gradient.
    pub fn curl_residual(&self) -> f64 {
        let d = &self.dom;
        let (mut s, mut norm) = (0.0, 0.0);
        for i in 1..d.nr - 1 {
            for j in 1..d.ntheta - 1 {
                let dt = (self.at(i, j + 1)[0] - self.at(i, j - 1)[0]) / (2.0 * d.dtheta());
                let rp = d.r_center(i + 1) * self.at(i + 1, j)[1];
                let rm = d.r_center(i - 1) * self.at(i - 1, j)[1];
                let r = d.r_center(i);
                s += (dt - (rp - rm) / (2.0 * d.dr())).powi(2);
                let u = self.at(i, j);
                norm += r * r * (u[0] * u[0] + u[1] * u[1]);
            }
        }
        (s / norm.max(f64::MIN_POSITIVE)).sqrt()
    }
}

fn energy(sys: &FriedrichsSystem, u: &[f64]) -> EnergyReport {
    let d = &sys.dom;
    let (nr, nt, n) = (d.nr, d.ntheta, sys.ncomp);
    let (dr, dt) = (d.dr(), d.dtheta());
    let at = |i: usize, j: usize, k: usize| u[n * (i * nt + j) + k];
    let u3sq = |i: usize, j: usize| if n == 3 { at(i, j, 2).powi(2) } else { 0.0 };
    let mut volume = 0.0;
    let mut forcing = 0.0;
    for i in 0..nr {
        let r = d.r_center(i);
        for j in 0..nt {
            let e: f64 = (0..n).map(|k| at(i, j, k).powi(2)).sum();
            volume += r * r * e;
            forcing += r.powi(4) * sys.data.forcing[i * nt + j].powi(2);
        }
    }
    volume *= dr * dt;
    forcing *= dr * dt;
    let mut b = [0.0; 4];
    let mut data = 0.0;
    let (r0, r1) = (d.r0, d.r1);
    for j in 0..nt {
        let c = &sys.grid.centers[j];
        let q = c.l2 / c.l1;
        b[0] += r0.powi(3) * (at(0, j, 0) + q * at(0, j, 1)).powi(2);
        b[1] += r1.powi(3) * (at(nr - 1, j, 1).powi(2) + u3sq(nr - 1, j));
        let q0 = if n == 3 { sys.data.q0[j].powi(2) } else { 0.0 };
        data += (r1.powi(3) * sys.data.g1[j].powi(2) + r0.powi(3) * (sys.data.g0[j].powi(2) + q0)) * dt;
    }
    b[0] *= dt;
    b[1] *= dt;
    let qhi = sys.grid.faces[nt].l2 / sys.grid.faces[nt].l1;
    for i in 0..nr {
        let r = d.r_center(i);
        b[2] += r * r * (at(i, 0, 0).powi(2) + u3sq(i, 0));
        b[3] += r * r * (at(i, nt - 1, 0) + qhi * at(i, nt - 1, 1)).powi(2);
        let q1 = if n == 3 { sys.data.q1[i].powi(2) } else { 0.0 };
        data += r * r * (sys.data.h0[i].powi(2) + sys.data.h1[i].powi(2) + q1) * dr;
    }
    b[2] *= dr;
    b[3] *= dr;
    let lhs = volume + b.iter().sum::<f64>();
    let rhs = forcing + data;
    EnergyReport { volume, boundary: b, lhs, forcing, data, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 } }
}

/// Sparse least-squares solve of the assembled system.
pub fn solve(sys: &FriedrichsSystem) -> Result<SolutionField> {
    let n = sys.rhs.len();
    let mut t = sys.triplets.clone();
    t.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(t.len());
    for (r, c, v) in t {
        match merged.last_mut() {
            Some(last) if last.row == r && last.col == c => last.val += v,
            _ => merged.push(Triplet::new(r, c, v)),
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &merged)
        .map_err(|e| Error::invariant(format!("sparse assembly failed: {e:?}")))?;
    let b = Col::<f64>::from_fn(n, |i| sys.rhs[i]);
    let bnorm = b.norm_l2();
    let x = if bnorm == 0.0 {
        Col::<f64>::zeros(n)
    } else {
        let qr = a.sp_qr().map_err(|e| Error::NoConvergence(format!("sparse QR failed: {e:?}")))?;
        qr.solve_lstsq(&b)
    };
    let resid = (&a * &x - &b).norm_l2() / if bnorm > 0.0 { bnorm } else { 1.0 };
    if !(resid <= SOLVE_TOL) {
        return Err(Error::NoConvergence(format!("least-squares residual {resid:e} above {SOLVE_TOL:e}")));
    }
    let u: Vec<f64> = (0..n).map(|i| x[i]).collect();
    let energy = energy(sys, &u);
    Ok(SolutionField {
        dom: sys.dom,
        ncomp: sys.ncomp,
        mode: sys.mode,
        u,
        residual: resid,
        energy,
        diagnostics: sys.diagnostics,
    })
}

/// Assembles and solves mode m, after checking Q₃₃ > 0 at every cell.
pub fn solve_mode(grid: &CoefficientGrid, dom: &DomainSpec, data: &ProblemData, m: u32) -> Result<SolutionField> {
    if m > 0 {
        if let Some(c) = grid.centers.iter().find(|c| !(c.kappa3 > 0.0)) {
            return Err(Error::invariant(format!(
                "mode coefficient kappa3 = {} is not positive at theta = {}; increase d2(theta_so)",
                c.kappa3, c.theta
            )));
        }
    }
    solve(&assemble_mode(grid, dom, data, m)?)
}
