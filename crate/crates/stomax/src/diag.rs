//! Discrete structure functionals and their verifiers: scheme energies,
//! discrete divergences, closed-form divergence residuals, the discrete
//! multi-symplectic 2-form balances, and least-squares slope fitting.

use crate::integrators::{SchemeId, StepperPlan};
use crate::mesh::{
    backward_average, backward_diff, centered_diff, forward_average, forward_diff, shift, Axis,
    GridSpec, Lattice, AXES,
};
use crate::noise::{IncrementField, NoiseMode, SpectralBasis};
use crate::state::{CouplingVector, FieldState, NUM_COMPONENTS};

/// One per-step energy record.
#[derive(Clone, Copy, Debug)]
pub struct EnergySample {
    pub step: u64,
    pub time: f64,
    pub phi: f64,
    pub scheme: SchemeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldSelector {
    E,
    H,
}

impl FieldSelector {
    /// Component indices in `(H1,H2,H3,E1,E2,E3)` order, per axis.
    fn components(&self) -> [usize; 3] {
        match self {
            FieldSelector::H => [crate::state::H1, crate::state::H2, crate::state::H3],
            FieldSelector::E => [crate::state::E1, crate::state::E2, crate::state::E3],
        }
    }
}

fn cell_average_all(f: &Lattice) -> Lattice {
    let mut out = f.clone();
    for a in AXES {
        out = forward_average(&out, a);
    }
    out
}

/// Scheme energy functional. Methods I and III need one layer (`curr`);
/// Method-II is the adjacent-layer inner product and needs `prev` too.
pub fn energy(scheme: SchemeId, curr: &FieldState, prev: Option<&FieldState>) -> f64 {
    let vol = curr.grid().cell_volume();
    match scheme {
        SchemeId::MethodI => {
            let mut s = 0.0;
            for f in &curr.fields {
                let avg = cell_average_all(f);
                s += avg.as_slice().iter().map(|v| v * v).sum::<f64>();
            }
            vol * s
        }
        SchemeId::MethodIII => {
            let mut s = 0.0;
            for f in &curr.fields {
                s += f.as_slice().iter().map(|v| v * v).sum::<f64>();
            }
            vol * s
        }
        SchemeId::MethodII => {
            let prev = prev.expect("Method-II energy needs two adjacent layers");
            let mut s = 0.0;
            for (a, b) in curr.fields.iter().zip(&prev.fields) {
                s += a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u * v).sum::<f64>();
            }
            vol * s
        }
    }
}

/// Per-path energy identity for one step: returns `(phi_new, phi_old, noise)`
/// such that the scheme's theorem asserts `phi_new == phi_old + noise`.
///
/// Layer conventions: Method-I/III take `(Z^n, Z^{n+1}, dW^n)`; Method-II
/// takes `(Z^{n-1}, Z^n, Z^{n+1}, dW^{n-1}, dW^n)` via the slices below.
pub fn energy_identity_one_step(
    scheme: SchemeId,
    coupling: &CouplingVector,
    layers: &[&FieldState],
    dws: &[&IncrementField],
) -> (f64, f64, f64) {
    let vol = layers[0].grid().cell_volume();
    match scheme {
        SchemeId::MethodI => {
            let (prev, next) = (layers[0], layers[1]);
            let dw = &dws[0].values;
            let phi_old = energy(scheme, prev, None);
            let phi_new = energy(scheme, next, None);
            // Upsilon at the cell center, midpoint in time
            let mut upsilon = Lattice::zeros(prev.grid());
            for c in 0..NUM_COMPONENTS {
                let coeff = coupling.c[c];
                if coeff != 0.0 {
                    let mut mid = prev.fields[c].clone();
                    mid.axpy(1.0, &next.fields[c]);
                    mid.scale(0.5);
                    upsilon.axpy(coeff, &cell_average_all(&mid));
                }
            }
            let noise: f64 = 2.0
                * vol
                * upsilon.as_slice().iter().zip(dw.as_slice()).map(|(u, w)| u * w).sum::<f64>();
            (phi_new, phi_old, noise)
        }
        SchemeId::MethodIII => {
            let (prev, next) = (layers[0], layers[1]);
            let dw = &dws[0].values;
            let phi_old = energy(scheme, prev, None);
            let phi_new = energy(scheme, next, None);
            let mut upsilon = Lattice::zeros(prev.grid());
            for c in 0..NUM_COMPONENTS {
                let coeff = coupling.c[c];
                if coeff != 0.0 {
                    let mut mid = prev.fields[c].clone();
                    mid.axpy(1.0, &next.fields[c]);
                    mid.scale(0.5);
                    upsilon.axpy(coeff, &mid);
                }
            }
            let noise: f64 = 2.0
                * vol
                * upsilon.as_slice().iter().zip(dw.as_slice()).map(|(u, w)| u * w).sum::<f64>();
            (phi_new, phi_old, noise)
        }
        SchemeId::MethodII => {
            let (before, mid, after) = (layers[0], layers[1], layers[2]);
            let phi_old = energy(scheme, mid, Some(before));
            let phi_new = energy(scheme, after, Some(mid));
            let mut upsilon = Lattice::zeros(mid.grid());
            for c in 0..NUM_COMPONENTS {
                let coeff = coupling.c[c];
                if coeff != 0.0 {
                    upsilon.axpy(coeff, &mid.fields[c]);
                }
            }
            // W^{n+1} - W^{n-1} = dW^n + dW^{n-1}
            let mut span = dws[0].values.clone();
            span.axpy(1.0, &dws[1].values);
            let noise: f64 = vol
                * upsilon.as_slice().iter().zip(span.as_slice()).map(|(u, w)| u * w).sum::<f64>();
            (phi_new, phi_old, noise)
        }
    }
}

/// Relative residual of the per-step energy identity.
pub fn energy_identity_residual(
    scheme: SchemeId,
    coupling: &CouplingVector,
    layers: &[&FieldState],
    dws: &[&IncrementField],
) -> f64 {
    let (phi_new, phi_old, noise) = energy_identity_one_step(scheme, coupling, layers, dws);
    let scale = phi_new.abs().max(phi_old.abs()).max(1e-300);
    (phi_new - phi_old - noise).abs() / scale
}

/// Sum of forward and backward half-averages: `f -> (f_{i+1} + 2 f_i + f_{i-1})/2`.
fn sum_avg(f: &Lattice, axis: Axis) -> Lattice {
    let mut out = forward_average(f, axis);
    out.axpy(1.0, &backward_average(f, axis));
    out
}

/// Scheme-specific discrete divergence of the selected field.
///
/// Methods II and III use the plain centered divergence. Method-I follows
/// the cell-based definition: each axis term is the forward difference of
/// the selected component summed over the adjacent cell centers, which
/// reduces to a centered difference composed with half-average sums over the
/// complementary active axes.
pub fn divergence(scheme: SchemeId, state: &FieldState, selector: FieldSelector) -> Lattice {
    let grid = state.grid();
    let comps = selector.components();
    let mut out = Lattice::zeros(grid);
    match scheme {
        SchemeId::MethodII | SchemeId::MethodIII => {
            for (axis, &c) in AXES.iter().zip(&comps) {
                out.axpy(1.0, &centered_diff(&state.fields[c], *axis));
            }
        }
        SchemeId::MethodI => {
            for (ai, &c) in comps.iter().enumerate() {
                let axis = AXES[ai];
                if !grid.is_active(axis) {
                    continue;
                }
                let mut f = state.fields[c].clone();
                for b in AXES {
                    if b != axis && grid.is_active(b) {
                        f = sum_avg(&f, b);
                    }
                }
                out.axpy(1.0, &centered_diff(&f, axis));
            }
        }
    }
    out
}

/// Divergence of the half-time field `(curr + next)/2`, the level at which
/// Method-II's divergence theorem is stated.
pub fn divergence_half_time(
    scheme: SchemeId,
    curr: &FieldState,
    next: &FieldState,
    selector: FieldSelector,
) -> Lattice {
    let mut mid = FieldState::zeros(curr.grid());
    for c in 0..NUM_COMPONENTS {
        mid.fields[c].axpy(0.5, &curr.fields[c]);
        mid.fields[c].axpy(0.5, &next.fields[c]);
    }
    divergence(scheme, &mid, selector)
}

/// Closed-form prediction of the one-step change of the scheme's discrete
/// divergence, written purely in terms of Wiener increments. `dw_prev` is
/// only consumed by Method-II (whose divergence lives at half-time levels).
pub fn div_residual_oracle(
    scheme: SchemeId,
    coupling: &CouplingVector,
    selector: FieldSelector,
    grid: &GridSpec,
    dw_curr: &IncrementField,
    dw_prev: Option<&IncrementField>,
) -> Lattice {
    let comps = selector.components();
    let mut out = Lattice::zeros(*grid);
    match scheme {
        SchemeId::MethodIII => {
            for (axis, &c) in AXES.iter().zip(&comps) {
                let coeff = coupling.c[c];
                if coeff != 0.0 && grid.is_active(*axis) {
                    out.axpy(coeff, &centered_diff(&dw_curr.values, *axis));
                }
            }
        }
        SchemeId::MethodII => {
            let dw_prev = dw_prev.expect("Method-II divergence oracle needs dW^{n-1}");
            let mut span = dw_curr.values.clone();
            span.axpy(1.0, &dw_prev.values);
            span.scale(0.5);
            for (axis, &c) in AXES.iter().zip(&comps) {
                let coeff = coupling.c[c];
                if coeff != 0.0 && grid.is_active(*axis) {
                    out.axpy(coeff, &centered_diff(&span, *axis));
                }
            }
        }
        SchemeId::MethodI => {
            for (ai, &c) in comps.iter().enumerate() {
                let axis = AXES[ai];
                let coeff = coupling.c[c];
                if coeff == 0.0 || !grid.is_active(axis) {
                    continue;
                }
                // cells adjacent to the node: shift -1 along the difference
                // axis, (I + shift(-1)) along complementary active axes
                let mut f = shift(&dw_curr.values, axis, -1);
                for b in AXES {
                    if b != axis && grid.is_active(b) {
                        let shifted = shift(&f, b, -1);
                        f.axpy(1.0, &shifted);
                    }
                }
                out.axpy(coeff, &forward_diff(&f, axis));
            }
        }
    }
    out
}

/// Monte-Carlo averaged divergence error: `dV * sum_nodes |mean_change|`,
/// where `mean_change` is the path-average of the one-step divergence change.
pub fn err_div(mean_change: &Lattice) -> f64 {
    mean_change.grid().cell_volume() / mean_change.grid().dz()
        * mean_change.as_slice().iter().map(|v| v.abs()).sum::<f64>()
}

// --- multi-symplectic 2-forms -------------------------------------------

type Six = [Lattice; NUM_COMPONENTS];

/// `M z` with `M = [[0,-I],[I,0]]` acting on `(H,E)`: maps to `(-E, H)`.
fn mat_m(z: &Six) -> Six {
    use crate::state::{E1, E2, E3, H1, H2, H3};
    let neg = |c: usize| {
        let mut l = z[c].clone();
        l.scale(-1.0);
        l
    };
    [neg(E1), neg(E2), neg(E3), z[H1].clone(), z[H2].clone(), z[H3].clone()]
}

/// `K_p z = diag(D_p, D_p) z` with the 3x3 curl-direction blocks.
fn mat_k(p: usize, z: &Six) -> Six {
    use crate::state::{E1, E2, E3, H1, H2, H3};
    let neg = |c: usize| {
        let mut l = z[c].clone();
        l.scale(-1.0);
        l
    };
    let zero = Lattice::zeros(z[0].grid());
    match p {
        // D1 (v1,v2,v3) = (0, -v3, v2)
        1 => [zero.clone(), neg(H3), z[H2].clone(), zero, neg(E3), z[E2].clone()],
        // D2 v = (v3, 0, -v1)
        2 => [z[H3].clone(), zero.clone(), neg(H1), z[E3].clone(), zero, neg(E1)],
        // D3 v = (-v2, v1, 0)
        3 => [neg(H2), z[H1].clone(), zero.clone(), neg(E2), z[E1].clone(), zero],
        _ => unreachable!(),
    }
}

/// Pointwise wedge `a /\ (mat b)` on a tangent pair:
/// `sum_c a_c * (mat b)_c - b_c * (mat a)_c`, with the second argument of
/// the matrix product optionally shifted by one node along `off_axis`.
fn wedge(
    a: &Six,
    b: &Six,
    mat: impl Fn(&Six) -> Six,
    off_axis: Option<Axis>,
) -> Lattice {
    let sh = |z: &Six| -> Six {
        match off_axis {
            None => z.clone(),
            Some(ax) => std::array::from_fn(|c| shift(&z[c], ax, 1)),
        }
    };
    let mb = mat(&sh(b));
    let ma = mat(&sh(a));
    let mut out = Lattice::zeros(a[0].grid());
    for c in 0..NUM_COMPONENTS {
        for ((o, (ac, mbc)), (bc, mac)) in out
            .as_mut_slice()
            .iter_mut()
            .zip(a[c].as_slice().iter().zip(mb[c].as_slice()))
            .zip(b[c].as_slice().iter().zip(ma[c].as_slice()))
        {
            *o += ac * mbc - bc * mac;
        }
    }
    out
}

/// Temporal 2-form sample with its three spatial companions.
#[derive(Clone, Debug)]
pub struct TwoFormSample {
    pub omega: Lattice,
    pub kappa: [Lattice; 3],
}

fn six_mid(a: &Six, b: &Six) -> Six {
    std::array::from_fn(|c| {
        let mut m = a[c].clone();
        m.axpy(1.0, &b[c]);
        m.scale(0.5);
        m
    })
}

/// Discrete multi-symplectic conservation-law residual for one step of the
/// planned scheme, evaluated on a tangent pair.
///
/// `u`/`v` hold the tangent layers: `[u^n, u^{n+1}]` for Methods I and III,
/// `[u^{n-1}, u^n, u^{n+1}]` for Method-II. Returns `(max_residual, scale)`
/// where `scale` is the magnitude of the individual balance terms; the
/// theorems assert `max_residual / scale` at machine precision.
pub fn msymp_residual(plan: &StepperPlan, u: &[&FieldState], v: &[&FieldState]) -> (f64, f64) {
    let grid = plan.grid;
    let dt = plan.dt;
    let spac = [grid.dx(), grid.dy(), grid.dz()];
    match plan.scheme {
        SchemeId::MethodIII => {
            let (u0, u1, v0, v1) = (&u[0].fields, &u[1].fields, &v[0].fields, &v[1].fields);
            let omega0 = wedge(u0, v0, mat_m, None);
            let omega1 = wedge(u1, v1, mat_m, None);
            let um = six_mid(u0, u1);
            let vm = six_mid(v0, v1);
            let mut resid = omega1.clone();
            resid.axpy(-1.0, &omega0);
            resid.scale(1.0 / dt);
            let mut scale = omega1.max_abs().max(omega0.max_abs()) / dt;
            for (p, axis) in [(1usize, Axis::X), (2, Axis::Y), (3, Axis::Z)] {
                if !grid.is_active(axis) {
                    continue;
                }
                let kappa = wedge(&um, &vm, |z| mat_k(p, z), Some(axis));
                scale = scale.max(kappa.max_abs() / spac[p - 1]);
                resid.axpy(1.0, &backward_diff(&kappa, axis));
            }
            (resid.max_abs(), scale.max(1e-300))
        }
        SchemeId::MethodII => {
            let (u0, u1, u2) = (&u[0].fields, &u[1].fields, &u[2].fields);
            let (v0, v1, v2) = (&v[0].fields, &v[1].fields, &v[2].fields);
            // omega^{n+1/2} = dZ^n /\ M dZ^{n+1}
            let omega_hi = wedge_pair_time(u1, u2, v1, v2);
            let omega_lo = wedge_pair_time(u0, u1, v0, v1);
            let mut resid = omega_hi.clone();
            resid.axpy(-1.0, &omega_lo);
            resid.scale(1.0 / dt);
            let mut scale = omega_hi.max_abs().max(omega_lo.max_abs()) / dt;
            for (p, axis) in [(1usize, Axis::X), (2, Axis::Y), (3, Axis::Z)] {
                if !grid.is_active(axis) {
                    continue;
                }
                let kappa = wedge(u1, v1, |z| mat_k(p, z), Some(axis));
                scale = scale.max(kappa.max_abs() / spac[p - 1]);
                resid.axpy(1.0, &backward_diff(&kappa, axis));
            }
            (resid.max_abs(), scale.max(1e-300))
        }
        SchemeId::MethodI => {
            // Pairing the cell equations with the cell-averaged midpoint
            // tangent closes the law over one step: the temporal form is the
            // same-level cell-averaged wedge, and the kappa terms sit at
            // half-time on the complementary half-index points.
            let avg = |z: &Six| -> Six { std::array::from_fn(|c| cell_average_all(&z[c])) };
            let omega0 = wedge(&avg(&u[0].fields), &avg(&v[0].fields), mat_m, None);
            let omega1 = wedge(&avg(&u[1].fields), &avg(&v[1].fields), mat_m, None);
            let mut resid = omega1.clone();
            resid.axpy(-1.0, &omega0);
            resid.scale(1.0 / dt);
            let mut scale = omega1.max_abs().max(omega0.max_abs()) / dt;
            let umid = six_mid(&u[0].fields, &u[1].fields);
            let vmid = six_mid(&v[0].fields, &v[1].fields);
            for (p, axis) in [(1usize, Axis::X), (2, Axis::Y), (3, Axis::Z)] {
                if !grid.is_active(axis) {
                    continue;
                }
                let comp_avg = |z: &Six| -> Six {
                    std::array::from_fn(|c| {
                        let mut f = z[c].clone();
                        for b in AXES {
                            if b != axis {
                                f = forward_average(&f, b);
                            }
                        }
                        f
                    })
                };
                let kappa = wedge(&comp_avg(&umid), &comp_avg(&vmid), |z| mat_k(p, z), None);
                scale = scale.max(kappa.max_abs() / spac[p - 1]);
                resid.axpy(1.0, &forward_diff(&kappa, axis));
            }
            (resid.max_abs(), scale.max(1e-300))
        }
    }
}

/// Method-II temporal form `dZ^n /\ M dZ^{n+1}` on a tangent pair.
fn wedge_pair_time(un: &Six, un1: &Six, vn: &Six, vn1: &Six) -> Lattice {
    let mv1 = mat_m(vn1);
    let mu1 = mat_m(un1);
    let mut out = Lattice::zeros(un[0].grid());
    for c in 0..NUM_COMPONENTS {
        for (((o, u0), mv), (v0, mu)) in out
            .as_mut_slice()
            .iter_mut()
            .zip(un[c].as_slice())
            .zip(mv1[c].as_slice())
            .zip(vn[c].as_slice().iter().zip(mu1[c].as_slice()))
        {
            *o += u0 * mv - v0 * mu;
        }
    }
    out
}

/// Energy growth rate predicted for a scheme driven by this noise and
/// coupling: sum of squared coupling coefficients times the discrete trace
/// (space-time noise) or the domain volume (time-only noise).
pub fn energy_growth_rate(
    coupling: &CouplingVector,
    basis: &SpectralBasis,
    grid: &GridSpec,
) -> f64 {
    match basis.mode {
        NoiseMode::TimeOnly => coupling.sum_sq() * grid.volume(),
        NoiseMode::SpaceTime => {
            let (vbar, _) = basis.discrete_trace(grid);
            coupling.sum_sq() * vbar
        }
    }
}

/// Ordinary least squares on `(t, v)` pairs: `(slope, intercept, r2)`.
pub fn fit_slope(series: &[(f64, f64)]) -> Result<(f64, f64, f64), String> {
    if series.len() < 3 {
        return Err(format!("need at least 3 points, got {}", series.len()));
    }
    let n = series.len() as f64;
    let mean_t = series.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = series.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = series.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if stt == 0.0 {
        return Err("degenerate abscissae: all t values equal".into());
    }
    let stv: f64 = series.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_v)).sum();
    let slope = stv / stt;
    let intercept = mean_v - slope * mean_t;
    let ss_tot: f64 = series.iter().map(|p| (p.1 - mean_v).powi(2)).sum();
    let ss_res: f64 =
        series.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}
