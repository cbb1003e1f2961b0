//! The three stochastic multi-symplectic time-steppers.
//!
//! All schemes share the six-component layout `(H1,H2,H3,E1,E2,E3)` and the
//! Maxwell pairing `dE/dt = curl H + noise`, `dH/dt = -curl E + noise`.
//!
//! * Method-I: midpoint rule in time and space; the unknown enters through
//!   the 8-node cell average, so each step solves a constant linear system.
//! * Method-II: explicit two-layer leapfrog with centered differences, the
//!   collocated form of Yee's scheme.
//! * Method-III: centered differences in space, midpoint rule in time; again
//!   one constant linear system per plan.
//!
//! The implicit operators depend only on `(scheme, grid, dt)` and have
//! constant coefficients on the periodic grid, so they block-diagonalize in
//! the discrete Fourier basis into one 6x6 complex matrix per mode. Planning
//! factors (inverts) every block once; each step is then two transform
//! passes around a per-mode multiply, exact to roundoff and reused for the
//! whole run.

use crate::mesh::{centered_diff, forward_average, forward_diff, Axis, GridSpec, Lattice, AXES};
#[cfg(test)]
use crate::mesh::forward_average_inverse;
use crate::noise::IncrementField;
use crate::state::{CouplingVector, FieldState, E1, E2, E3, H1, H2, H3, NUM_COMPONENTS};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeId {
    MethodI,
    MethodII,
    MethodIII,
}

impl SchemeId {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeId::MethodI => "method1",
            SchemeId::MethodII => "method2",
            SchemeId::MethodIII => "method3",
        }
    }
}

impl std::str::FromStr for SchemeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "method1" | "method-1" | "i" | "I" => Ok(SchemeId::MethodI),
            "method2" | "method-2" | "ii" | "II" => Ok(SchemeId::MethodII),
            "method3" | "method-3" | "iii" | "III" => Ok(SchemeId::MethodIII),
            other => Err(format!("unknown scheme '{other}' (expected method1|method2|method3)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error(
        "Method-I cell-average operator is singular on {nx}x{ny}x{nz}: an active axis with an \
         even node count admits alternating-sign kernel modes annihilated by the cell average; \
         use odd node counts on every active axis"
    )]
    SingularOperator { nx: usize, ny: usize, nz: usize },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("non-finite input state or increment")]
    NonFiniteInput,
    #[error("linear solver stalled after {iters} iterations, relative residual {residual:e}")]
    SolverDiverged { iters: usize, residual: f64 },
}

/// Two consecutive layers for the leapfrog scheme; `prev.time + dt == curr.time`.
#[derive(Clone, Debug)]
pub struct TwoLayerState {
    pub prev: FieldState,
    pub curr: FieldState,
}

/// Immutable per-run stepping plan; shareable across worker threads.
#[derive(Clone, Debug)]
pub struct StepperPlan {
    pub scheme: SchemeId,
    pub grid: GridSpec,
    pub dt: f64,
    pub coupling: CouplingVector,
    /// Requested solve accuracy; the spectral direct solver is exact to
    /// roundoff, so this acts as a floor for residual checks by callers.
    pub solver_tol: f64,
    pub warnings: Vec<String>,
    solver: Option<Arc<SpectralSolver>>,
}

pub fn plan(
    scheme: SchemeId,
    grid: GridSpec,
    dt: f64,
    coupling: CouplingVector,
    solver_tol: f64,
) -> Result<StepperPlan, PlanError> {
    if dt <= 0.0 {
        return Err(PlanError::NonPositiveDt(dt));
    }
    let mut warnings = Vec::new();
    if scheme == SchemeId::MethodI {
        let any_even = crate::mesh::AXES
            .iter()
            .filter(|&&a| grid.is_active(a))
            .any(|&a| grid.count(a) % 2 == 0);
        if any_even {
            return Err(PlanError::SingularOperator { nx: grid.nx, ny: grid.ny, nz: grid.nz });
        }
    }
    if scheme == SchemeId::MethodII {
        let active: Vec<f64> = crate::mesh::AXES
            .iter()
            .filter(|&&a| grid.is_active(a))
            .map(|&a| grid.spacing(a))
            .collect();
        if !active.is_empty() {
            let d = active.len() as f64;
            let h_min = active.iter().cloned().fold(f64::INFINITY, f64::min);
            let bound = h_min / d.sqrt();
            if dt > bound {
                warnings.push(format!(
                    "leapfrog step dt = {dt} exceeds the stability heuristic min(h)/sqrt(d) = \
                     {bound:.6}; expect instability"
                ));
            }
        }
    }
    let solver = match scheme {
        SchemeId::MethodII => None,
        _ => Some(Arc::new(SpectralSolver::build(scheme, grid, dt)?)),
    };
    Ok(StepperPlan { scheme, grid, dt, coupling, solver_tol, warnings, solver })
}

type Six = [Lattice; NUM_COMPONENTS];

fn six_zeros(grid: GridSpec) -> Six {
    std::array::from_fn(|_| Lattice::zeros(grid))
}

#[cfg(test)]
fn six_dot(a: &Six, b: &Six) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.as_slice().iter().zip(y.as_slice()).map(|(u, v)| u * v).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
fn six_norm(a: &Six) -> f64 {
    six_dot(a, a).sqrt()
}

fn six_axpy(alpha: f64, x: &Six, y: &mut Six) {
    for (yc, xc) in y.iter_mut().zip(x) {
        yc.axpy(alpha, xc);
    }
}

#[cfg(test)]
fn six_scale(alpha: f64, y: &mut Six) {
    for yc in y.iter_mut() {
        yc.scale(alpha);
    }
}

/// Centered-difference curl pairing used by Methods II and III:
/// E rows receive `curl H`, H rows receive `-curl E`.
fn curl_centered(z: &Six) -> Six {
    use Axis::*;
    let d = |c: usize, a: Axis| centered_diff(&z[c], a);
    let sub = |p: Lattice, m: Lattice| {
        let mut out = p;
        out.axpy(-1.0, &m);
        out
    };
    [
        sub(d(E2, Z), d(E3, Y)), // H1
        sub(d(E3, X), d(E1, Z)), // H2
        sub(d(E1, Y), d(E2, X)), // H3
        sub(d(H3, Y), d(H2, Z)), // E1
        sub(d(H1, Z), d(H3, X)), // E2
        sub(d(H2, X), d(H1, Y)), // E3
    ]
}

/// Method-I spatial pairing: forward difference along one axis combined with
/// forward half-averages over the complementary axes, so each equation lives
/// at the cell center `(i+1/2, j+1/2, k+1/2)`.
fn curl_cell(z: &Six) -> Six {
    use Axis::*;
    let d = |c: usize, a: Axis| -> Lattice {
        let (b1, b2) = match a {
            X => (Y, Z),
            Y => (X, Z),
            Z => (X, Y),
        };
        forward_diff(&forward_average(&forward_average(&z[c], b1), b2), a)
    };
    let sub = |p: Lattice, m: Lattice| {
        let mut out = p;
        out.axpy(-1.0, &m);
        out
    };
    [
        sub(d(E2, Z), d(E3, Y)), // H1
        sub(d(E3, X), d(E1, Z)), // H2
        sub(d(E1, Y), d(E2, X)), // H3
        sub(d(H3, Y), d(H2, Z)), // E1
        sub(d(H1, Z), d(H3, X)), // E2
        sub(d(H2, X), d(H1, Y)), // E3
    ]
}

/// 8-node cell average applied to every component.
fn mass_cell(z: &Six) -> Six {
    std::array::from_fn(|c| {
        forward_average(
            &forward_average(&forward_average(&z[c], Axis::X), Axis::Y),
            Axis::Z,
        )
    })
}

/// Exact inverse of `mass_cell`; defined only when every active axis has an
/// odd node count, which the planner enforces for Method-I.
#[cfg(test)]
fn mass_inverse(z: &Six) -> Six {
    std::array::from_fn(|c| {
        let f = forward_average_inverse(&z[c], Axis::X);
        let f = forward_average_inverse(&f, Axis::Y);
        forward_average_inverse(&f, Axis::Z)
    })
}

/// Complex scalar as `(re, im)`; just enough arithmetic for the DFT and the
/// 6x6 block elimination without pulling in a complex-number dependency.
type Cx = (f64, f64);

fn cadd(a: Cx, b: Cx) -> Cx {
    (a.0 + b.0, a.1 + b.1)
}

fn csub(a: Cx, b: Cx) -> Cx {
    (a.0 - b.0, a.1 - b.1)
}

fn cmul(a: Cx, b: Cx) -> Cx {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cabs2(a: Cx) -> f64 {
    a.0 * a.0 + a.1 * a.1
}

fn cinv(a: Cx) -> Cx {
    let d = cabs2(a);
    (a.0 / d, -a.1 / d)
}

fn axis_index(a: Axis) -> usize {
    match a {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

/// Invert a 6x6 complex matrix in place by Gauss-Jordan elimination with
/// partial pivoting; `None` when some pivot falls below `scale * 1e-13`.
fn invert6(a: &mut [Cx; 36], scale: f64) -> Option<[Cx; 36]> {
    let tol2 = (scale * 1e-13) * (scale * 1e-13);
    let mut inv = [(0.0, 0.0); 36];
    for d in 0..6 {
        inv[d * 6 + d] = (1.0, 0.0);
    }
    for col in 0..6 {
        let mut piv = col;
        for row in (col + 1)..6 {
            if cabs2(a[row * 6 + col]) > cabs2(a[piv * 6 + col]) {
                piv = row;
            }
        }
        if cabs2(a[piv * 6 + col]) <= tol2 {
            return None;
        }
        if piv != col {
            for j in 0..6 {
                a.swap(piv * 6 + j, col * 6 + j);
                inv.swap(piv * 6 + j, col * 6 + j);
            }
        }
        let recip = cinv(a[col * 6 + col]);
        for j in 0..6 {
            a[col * 6 + j] = cmul(a[col * 6 + j], recip);
            inv[col * 6 + j] = cmul(inv[col * 6 + j], recip);
        }
        for row in 0..6 {
            if row == col {
                continue;
            }
            let f = a[row * 6 + col];
            if f == (0.0, 0.0) {
                continue;
            }
            for j in 0..6 {
                a[row * 6 + j] = csub(a[row * 6 + j], cmul(f, a[col * 6 + j]));
                inv[row * 6 + j] = csub(inv[row * 6 + j], cmul(f, inv[col * 6 + j]));
            }
        }
    }
    Some(inv)
}

/// Direct solver for the implicit operator of Method-I or Method-III.
///
/// Both operators are translation-invariant stencils on the periodic grid,
/// so the discrete Fourier transform block-diagonalizes them: each mode
/// couples only the six field components through a 6x6 complex matrix built
/// from the stencil symbols (with mode angle `theta = 2*pi*p/n` and the
/// convention that the unit shift multiplies a mode by `exp(i*theta)`):
///
/// * centered difference: `i*sin(theta)/h`
/// * forward difference:  `(exp(i*theta) - 1)/h`
/// * forward average:     `(1 + exp(i*theta))/2`
///
/// `blocks` stores the inverse of that matrix for every mode, so a solve is
/// one forward transform, one 6x6 multiply per mode, and one inverse
/// transform. The factorization is exact to roundoff and shared by every
/// step of the run.
#[derive(Debug)]
struct SpectralSolver {
    scheme: SchemeId,
    grid: GridSpec,
    dt: f64,
    /// Forward/inverse DFT matrices per axis, `w[p * n + i]` is the weight of
    /// sample `i` in output mode `p`; empty for inactive axes. The inverse
    /// matrices carry the `1/n` normalization.
    fwd: [Vec<Cx>; 3],
    inv: [Vec<Cx>; 3],
    blocks: Vec<[Cx; 36]>,
}

impl SpectralSolver {
    fn build(scheme: SchemeId, grid: GridSpec, dt: f64) -> Result<Self, PlanError> {
        let c = 0.5 * dt;
        let mut fwd: [Vec<Cx>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut inv: [Vec<Cx>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        // per-axis stencil symbols for every mode; inactive axes reduce to
        // identity averages and vanishing differences
        let mut cen: [Vec<Cx>; 3] = [vec![(0.0, 0.0)], vec![(0.0, 0.0)], vec![(0.0, 0.0)]];
        let mut avg: [Vec<Cx>; 3] = [vec![(1.0, 0.0)], vec![(1.0, 0.0)], vec![(1.0, 0.0)]];
        let mut fd: [Vec<Cx>; 3] = [vec![(0.0, 0.0)], vec![(0.0, 0.0)], vec![(0.0, 0.0)]];
        for &a in AXES.iter() {
            if !grid.is_active(a) {
                continue;
            }
            let ai = axis_index(a);
            let n = grid.count(a);
            let h = grid.spacing(a);
            cen[ai] = Vec::with_capacity(n);
            avg[ai] = Vec::with_capacity(n);
            fd[ai] = Vec::with_capacity(n);
            fwd[ai] = Vec::with_capacity(n * n);
            inv[ai] = Vec::with_capacity(n * n);
            for p in 0..n {
                let theta = 2.0 * std::f64::consts::PI * p as f64 / n as f64;
                let (s, co) = theta.sin_cos();
                cen[ai].push((0.0, s / h));
                avg[ai].push(((1.0 + co) / 2.0, s / 2.0));
                fd[ai].push(((co - 1.0) / h, s / h));
                for i in 0..n {
                    let phi = 2.0 * std::f64::consts::PI * (p * i % n) as f64 / n as f64;
                    let (si, ci) = phi.sin_cos();
                    fwd[ai].push((ci, -si));
                    inv[ai].push((ci / n as f64, si / n as f64));
                }
            }
        }
        let pick = |table: &[Vec<Cx>; 3], ai: usize, p: usize| -> Cx {
            if table[ai].len() == 1 { table[ai][0] } else { table[ai][p] }
        };
        let mut blocks = Vec::with_capacity(grid.len());
        for r in 0..grid.nz {
            for q in 0..grid.ny {
                for p in 0..grid.nx {
                    let m = [p, q, r];
                    let (d, mass) = match scheme {
                        SchemeId::MethodIII => {
                            let d: [Cx; 3] =
                                std::array::from_fn(|ai| pick(&cen, ai, m[ai]));
                            (d, (1.0, 0.0))
                        }
                        SchemeId::MethodI => {
                            let av: [Cx; 3] =
                                std::array::from_fn(|ai| pick(&avg, ai, m[ai]));
                            let d = [
                                cmul(pick(&fd, 0, p), cmul(av[1], av[2])),
                                cmul(pick(&fd, 1, q), cmul(av[0], av[2])),
                                cmul(pick(&fd, 2, r), cmul(av[0], av[1])),
                            ];
                            (d, cmul(av[0], cmul(av[1], av[2])))
                        }
                        SchemeId::MethodII => unreachable!("no implicit operator"),
                    };
                    let mut a_mat = [(0.0, 0.0); 36];
                    for diag in 0..6 {
                        a_mat[diag * 6 + diag] = mass;
                    }
                    // A = mass*I - c*Chat with the curl pairing of the schemes
                    let mut put = |row: usize, col: usize, sign: f64, da: Cx| {
                        let e = &mut a_mat[row * 6 + col];
                        *e = csub(*e, cmul((c * sign, 0.0), da));
                    };
                    put(H1, E2, 1.0, d[2]);
                    put(H1, E3, -1.0, d[1]);
                    put(H2, E3, 1.0, d[0]);
                    put(H2, E1, -1.0, d[2]);
                    put(H3, E1, 1.0, d[1]);
                    put(H3, E2, -1.0, d[0]);
                    put(E1, H3, 1.0, d[1]);
                    put(E1, H2, -1.0, d[2]);
                    put(E2, H1, 1.0, d[2]);
                    put(E2, H3, -1.0, d[0]);
                    put(E3, H2, 1.0, d[0]);
                    put(E3, H1, -1.0, d[1]);
                    let scale = a_mat.iter().map(|&e| cabs2(e).sqrt()).fold(1.0, f64::max);
                    let block = invert6(&mut a_mat, scale).ok_or(
                        PlanError::SingularOperator { nx: grid.nx, ny: grid.ny, nz: grid.nz },
                    )?;
                    blocks.push(block);
                }
            }
        }
        Ok(SpectralSolver { scheme, grid, dt, fwd, inv, blocks })
    }

    /// Apply one DFT matrix along `axis` to every grid line of `data`.
    fn transform_axis(&self, w: &[Cx], axis: Axis, data: &mut [Cx], scratch: &mut [Cx]) {
        let grid = self.grid;
        let n = grid.count(axis);
        let stride = match axis {
            Axis::X => 1,
            Axis::Y => grid.nx,
            Axis::Z => grid.nx * grid.ny,
        };
        let (lo, hi) = match axis {
            Axis::X => (grid.ny, grid.nz),
            Axis::Y => (grid.nx, grid.nz),
            Axis::Z => (grid.nx, grid.ny),
        };
        let base_of = |u: usize, v: usize| match axis {
            Axis::X => grid.idx(0, u, v),
            Axis::Y => grid.idx(u, 0, v),
            Axis::Z => grid.idx(u, v, 0),
        };
        for v in 0..hi {
            for u in 0..lo {
                let base = base_of(u, v);
                for i in 0..n {
                    scratch[i] = data[base + i * stride];
                }
                for p in 0..n {
                    let row = &w[p * n..(p + 1) * n];
                    let mut acc = (0.0, 0.0);
                    for i in 0..n {
                        acc = cadd(acc, cmul(row[i], scratch[i]));
                    }
                    data[base + p * stride] = acc;
                }
            }
        }
    }

    fn solve(&self, rhs: &Six) -> Six {
        let grid = self.grid;
        let n = grid.len();
        let max_line = AXES.iter().map(|&a| grid.count(a)).max().unwrap();
        let mut scratch = vec![(0.0, 0.0); max_line];
        let mut hat: Vec<Vec<Cx>> = rhs
            .iter()
            .map(|l| l.as_slice().iter().map(|&v| (v, 0.0)).collect())
            .collect();
        for comp in hat.iter_mut() {
            for &a in AXES.iter() {
                let ai = axis_index(a);
                if !self.fwd[ai].is_empty() {
                    self.transform_axis(&self.fwd[ai], a, comp, &mut scratch);
                }
            }
        }
        for m in 0..n {
            let block = &self.blocks[m];
            let x: [Cx; 6] = std::array::from_fn(|c| hat[c][m]);
            for (row, comp) in hat.iter_mut().enumerate() {
                let mut acc = (0.0, 0.0);
                for (col, &xc) in x.iter().enumerate() {
                    acc = cadd(acc, cmul(block[row * 6 + col], xc));
                }
                comp[m] = acc;
            }
        }
        for comp in hat.iter_mut() {
            for &a in AXES.iter() {
                let ai = axis_index(a);
                if !self.inv[ai].is_empty() {
                    self.transform_axis(&self.inv[ai], a, comp, &mut scratch);
                }
            }
        }
        let mut out = six_zeros(grid);
        for (c, comp) in hat.iter().enumerate() {
            for (dst, &(re, _)) in out[c].as_mut_slice().iter_mut().zip(comp) {
                *dst = re;
            }
        }
        out
    }
}

impl StepperPlan {
    /// The implicit operator `U -> mass(U) - (dt/2) * curl(U)` of the planned
    /// scheme. Constant over the whole run; exposed for the oracle tests.
    pub fn apply_implicit_operator(&self, z: &Six) -> Six {
        match self.scheme {
            SchemeId::MethodI => {
                let mut out = mass_cell(z);
                six_axpy(-0.5 * self.dt, &curl_cell(z), &mut out);
                out
            }
            SchemeId::MethodIII => {
                let mut out = z.clone();
                six_axpy(-0.5 * self.dt, &curl_centered(z), &mut out);
                out
            }
            SchemeId::MethodII => panic!("Method-II has no implicit operator"),
        }
    }

    fn implicit_rhs(&self, z: &Six, dw: Option<&Lattice>) -> Six {
        let mut rhs = match self.scheme {
            SchemeId::MethodI => {
                let mut r = mass_cell(z);
                six_axpy(0.5 * self.dt, &curl_cell(z), &mut r);
                r
            }
            SchemeId::MethodIII => {
                let mut r = z.clone();
                six_axpy(0.5 * self.dt, &curl_centered(z), &mut r);
                r
            }
            SchemeId::MethodII => unreachable!(),
        };
        if let Some(dw) = dw {
            for (c, r) in rhs.iter_mut().enumerate() {
                let coeff = self.coupling.c[c];
                if coeff != 0.0 {
                    r.axpy(coeff, dw);
                }
            }
        }
        rhs
    }

    fn solve(&self, rhs: &Six) -> Six {
        let solver = self.solver.as_ref().expect("implicit scheme plans carry a solver");
        debug_assert_eq!(solver.dt, self.dt);
        debug_assert_eq!(solver.scheme, self.scheme);
        solver.solve(rhs)
    }

    fn implicit_step(
        &self,
        state: &FieldState,
        dw: Option<&IncrementField>,
    ) -> Result<FieldState, StepError> {
        if !state.is_finite() || dw.map_or(false, |d| !d.values.is_finite()) {
            return Err(StepError::NonFiniteInput);
        }
        let rhs = self.implicit_rhs(&state.fields, dw.map(|d| &d.values));
        let fields = self.solve(&rhs);
        Ok(FieldState { fields, time: state.time + self.dt })
    }

    /// One Method-I step.
    pub fn step_method1(
        &self,
        state: &FieldState,
        dw: &IncrementField,
    ) -> Result<FieldState, StepError> {
        assert_eq!(self.scheme, SchemeId::MethodI);
        self.implicit_step(state, Some(dw))
    }

    /// One Method-III step.
    pub fn step_method3(
        &self,
        state: &FieldState,
        dw: &IncrementField,
    ) -> Result<FieldState, StepError> {
        assert_eq!(self.scheme, SchemeId::MethodIII);
        self.implicit_step(state, Some(dw))
    }

    /// One step of whichever implicit scheme was planned.
    pub fn step_implicit(
        &self,
        state: &FieldState,
        dw: &IncrementField,
    ) -> Result<FieldState, StepError> {
        self.implicit_step(state, Some(dw))
    }

    /// One leapfrog step producing the layer at `curr.time + dt`:
    /// `Z^{n+1} = Z^{n-1} + 2*dt*curl(Z^n) + c*(dW^n + dW^{n-1})`.
    pub fn step_method2(
        &self,
        layers: &TwoLayerState,
        dw_prev: &IncrementField,
        dw_curr: &IncrementField,
    ) -> FieldState {
        assert_eq!(self.scheme, SchemeId::MethodII);
        let mut fields = layers.prev.fields.clone();
        six_axpy(2.0 * self.dt, &curl_centered(&layers.curr.fields), &mut fields);
        for (c, f) in fields.iter_mut().enumerate() {
            let coeff = self.coupling.c[c];
            if coeff != 0.0 {
                f.axpy(coeff, &dw_prev.values);
                f.axpy(coeff, &dw_curr.values);
            }
        }
        FieldState { fields, time: layers.curr.time + self.dt }
    }

    /// Deterministic tangent step: the same linear update with the noise
    /// removed. For the one-step schemes this is a whole state map; Method-II
    /// tangents advance as two-layer pairs via `step_tangent_two_layer`.
    pub fn step_tangent(&self, u: &FieldState) -> Result<FieldState, StepError> {
        match self.scheme {
            SchemeId::MethodI | SchemeId::MethodIII => self.implicit_step(u, None),
            SchemeId::MethodII => {
                panic!("Method-II tangents need two layers; use step_tangent_two_layer")
            }
        }
    }

    pub fn step_tangent_two_layer(&self, u: &TwoLayerState) -> FieldState {
        assert_eq!(self.scheme, SchemeId::MethodII);
        let mut fields = u.prev.fields.clone();
        six_axpy(2.0 * self.dt, &curl_centered(&u.curr.fields), &mut fields);
        FieldState { fields, time: u.curr.time + self.dt }
    }
}

/// Initialize the leapfrog with one Method-III step; the bootstrap consumes
/// `dw0`, so the first leapfrog step reuses the same increment as `dW^0`.
pub fn bootstrap_method2(
    plan_method3: &StepperPlan,
    state0: &FieldState,
    dw0: &IncrementField,
) -> Result<TwoLayerState, StepError> {
    assert_eq!(plan_method3.scheme, SchemeId::MethodIII);
    let state1 = plan_method3.step_method3(state0, dw0)?;
    Ok(TwoLayerState { prev: state0.clone(), curr: state1 })
}

/// Solve `(I - c*G) x = b` for skew-symmetric `G` by conjugate gradients on
/// the normal equations `(I + c*G)(I - c*G) = I - c^2 G^2`, which are
/// symmetric positive definite with smallest eigenvalue at least 1. Kept as
/// an independent reference solver to cross-validate the spectral blocks.
#[cfg(test)]
fn skew_cg(
    g_apply: impl Fn(&Six) -> Six,
    c: f64,
    b: &Six,
    mut x: Six,
    rel_tol: f64,
    max_iters: usize,
) -> Result<Six, StepError> {
    let b_norm = six_norm(b);
    if b_norm == 0.0 {
        return Ok(six_zeros(b[0].grid()));
    }
    let tol = rel_tol * b_norm;
    let apply_n = |y: &Six| -> Six {
        let mut out = g_apply(&g_apply(y));
        six_scale(-c * c, &mut out);
        six_axpy(1.0, y, &mut out);
        out
    };
    // (I + c*G) b
    let mut rhs = g_apply(b);
    six_scale(c, &mut rhs);
    six_axpy(1.0, b, &mut rhs);

    let mut r = rhs;
    six_axpy(-1.0, &apply_n(&x), &mut r);
    let mut rr = six_dot(&r, &r);
    if rr.sqrt() <= tol {
        return Ok(x);
    }
    let mut p = r.clone();
    for _ in 0..max_iters {
        let np = apply_n(&p);
        let alpha = rr / six_dot(&p, &np);
        six_axpy(alpha, &p, &mut x);
        six_axpy(-alpha, &np, &mut r);
        let rr_new = six_dot(&r, &r);
        if rr_new.sqrt() <= tol {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        // p = r + beta * p
        six_scale(beta, &mut p);
        six_axpy(1.0, &r, &mut p);
    }
    Err(StepError::SolverDiverged { iters: max_iters, residual: rr.sqrt() / b_norm })
}
