//! Monte-Carlo orchestration: energy/divergence ensembles, the mean-square
//! convergence study, the oracle-only path-count sweep, and the deterministic
//! tangent-pair residual series.
//!
//! Determinism contract: every aggregate is a pure function of the config and
//! seed, independent of worker count. Paths are processed in fixed-size
//! chunks; chunks are computed in parallel but merged sequentially in index
//! order, and each chunk accumulates its paths in increasing order, so no
//! floating-point sum ever depends on scheduling.

use crate::diag::{
    divergence, divergence_half_time, div_residual_oracle, energy, energy_growth_rate, err_div,
    fit_slope, msymp_residual, FieldSelector,
};
use crate::integrators::{
    bootstrap_method2, plan, PlanError, SchemeId, StepError, StepperPlan, TwoLayerState,
};
use crate::mesh::{GridSpec, Lattice};
use crate::noise::{mix64, NoiseStream, SpectralBasis};
use crate::state::{initial_condition_tm, CouplingVector, FieldMode, FieldState, NUM_COMPONENTS};
use rayon::prelude::*;
use thiserror::Error;

/// Paths per reduction chunk; aggregation order is fixed by chunk index.
const CHUNK: u64 = 8;
/// Chunks evaluated concurrently before an ordered merge, bounding the
/// number of partial accumulators alive at once.
const WAVE: usize = 4;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scheme: SchemeId,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub basis: SpectralBasis,
    pub mode: FieldMode,
    pub paths: u64,
    pub seed: u64,
    pub solver_tol: f64,
}

impl ExperimentConfig {
    pub fn steps(&self) -> u64 {
        let n = self.t_end / self.dt;
        let rounded = n.round();
        assert!(
            (n - rounded).abs() < 1e-9 * n.max(1.0) && rounded >= 1.0,
            "t_end = {} is not an integral number of steps of dt = {}",
            self.t_end,
            self.dt
        );
        rounded as u64
    }

    pub fn coupling(&self) -> CouplingVector {
        CouplingVector::new(self.mode, self.lambda1, self.lambda2)
    }

    pub fn initial_state(&self) -> FieldState {
        match self.mode {
            FieldMode::Tm => initial_condition_tm(self.grid),
            FieldMode::Full3d => FieldState::zeros(self.grid),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("path {path}, step {step}: {source}")]
    Step {
        path: u64,
        step: u64,
        source: StepError,
    },
    #[error("path {path}, step {step}: leapfrog iteration diverged (non-finite state)")]
    Diverged { path: u64, step: u64 },
    #[error("{0}")]
    BadArgument(String),
}

/// One row of the per-step energy statistics.
#[derive(Clone, Copy, Debug)]
pub struct EnergyRow {
    pub step: u64,
    pub time: f64,
    pub mean_phi: f64,
    pub var_phi: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    /// `mean_phi(0) + rate * t` with the rate from the growth oracle.
    pub predicted: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DivergenceRow {
    pub step: u64,
    pub time: f64,
    pub err_div_h: f64,
    pub err_div_e: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub energy: Vec<EnergyRow>,
    pub divergence: Vec<DivergenceRow>,
    /// Predicted mean-energy growth rate per unit time.
    pub predicted_rate: f64,
    pub warnings: Vec<String>,
}

/// Everything one path contributes to the ensemble aggregates.
struct PathTrace {
    phi: Vec<f64>,
    /// One-step changes of the discrete H- and E-divergence; the first entry
    /// corresponds to `div_step_offset`.
    div_h: Vec<Lattice>,
    div_e: Vec<Lattice>,
}

struct Accumulator {
    paths: u64,
    phi_sum: Vec<f64>,
    phi_sq: Vec<f64>,
    phi_min: Vec<f64>,
    phi_max: Vec<f64>,
    div_h: Vec<Lattice>,
    div_e: Vec<Lattice>,
}

impl Accumulator {
    fn new(grid: GridSpec, phi_len: usize, div_len: usize) -> Self {
        Self {
            paths: 0,
            phi_sum: vec![0.0; phi_len],
            phi_sq: vec![0.0; phi_len],
            phi_min: vec![f64::INFINITY; phi_len],
            phi_max: vec![f64::NEG_INFINITY; phi_len],
            div_h: (0..div_len).map(|_| Lattice::zeros(grid)).collect(),
            div_e: (0..div_len).map(|_| Lattice::zeros(grid)).collect(),
        }
    }

    fn add_trace(&mut self, t: &PathTrace) {
        self.paths += 1;
        for (i, &p) in t.phi.iter().enumerate() {
            self.phi_sum[i] += p;
            self.phi_sq[i] += p * p;
            self.phi_min[i] = self.phi_min[i].min(p);
            self.phi_max[i] = self.phi_max[i].max(p);
        }
        for (a, b) in self.div_h.iter_mut().zip(&t.div_h) {
            a.axpy(1.0, b);
        }
        for (a, b) in self.div_e.iter_mut().zip(&t.div_e) {
            a.axpy(1.0, b);
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.paths += other.paths;
        for i in 0..self.phi_sum.len() {
            self.phi_sum[i] += other.phi_sum[i];
            self.phi_sq[i] += other.phi_sq[i];
            self.phi_min[i] = self.phi_min[i].min(other.phi_min[i]);
            self.phi_max[i] = self.phi_max[i].max(other.phi_max[i]);
        }
        for (a, b) in self.div_h.iter_mut().zip(&other.div_h) {
            a.axpy(1.0, b);
        }
        for (a, b) in self.div_e.iter_mut().zip(&other.div_e) {
            a.axpy(1.0, b);
        }
    }
}

fn chunk_ranges(total: u64, chunk: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut lo = 0;
    while lo < total {
        let hi = (lo + chunk).min(total);
        out.push((lo, hi));
        lo = hi;
    }
    out
}

fn run_one_path(
    cfg: &ExperimentConfig,
    main_plan: &StepperPlan,
    boot_plan: Option<&StepperPlan>,
    path: u64,
) -> Result<PathTrace, RunError> {
    let steps = cfg.steps();
    let stream = NoiseStream::new(cfg.seed, path, cfg.basis.clone());
    let table = stream.table(&cfg.grid);
    let mut trace = PathTrace {
        phi: Vec::with_capacity(steps as usize + 1),
        div_h: Vec::new(),
        div_e: Vec::new(),
    };
    let state0 = cfg.initial_state();
    match cfg.scheme {
        SchemeId::MethodI | SchemeId::MethodIII => {
            let mut state = state0;
            trace.phi.push(energy(cfg.scheme, &state, None));
            let mut dh = divergence(cfg.scheme, &state, FieldSelector::H);
            let mut de = divergence(cfg.scheme, &state, FieldSelector::E);
            for n in 0..steps {
                let dw = stream.sample_increment(&table, n, cfg.dt, 0);
                state = main_plan
                    .step_implicit(&state, &dw)
                    .map_err(|source| RunError::Step { path, step: n, source })?;
                trace.phi.push(energy(cfg.scheme, &state, None));
                let dh_new = divergence(cfg.scheme, &state, FieldSelector::H);
                let de_new = divergence(cfg.scheme, &state, FieldSelector::E);
                let mut ch = dh_new.clone();
                ch.axpy(-1.0, &dh);
                let mut ce = de_new.clone();
                ce.axpy(-1.0, &de);
                trace.div_h.push(ch);
                trace.div_e.push(ce);
                dh = dh_new;
                de = de_new;
            }
        }
        SchemeId::MethodII => {
            let boot = boot_plan.expect("leapfrog needs a bootstrap plan");
            let dw0 = stream.sample_increment(&table, 0, cfg.dt, 0);
            let mut layers = bootstrap_method2(boot, &state0, &dw0)
                .map_err(|source| RunError::Step { path, step: 0, source })?;
            trace.phi.push(energy(SchemeId::MethodIII, &layers.prev, None));
            trace.phi.push(energy(SchemeId::MethodII, &layers.curr, Some(&layers.prev)));
            let mut dh =
                divergence_half_time(cfg.scheme, &layers.prev, &layers.curr, FieldSelector::H);
            let mut de =
                divergence_half_time(cfg.scheme, &layers.prev, &layers.curr, FieldSelector::E);
            let mut dw_prev = dw0;
            for n in 1..steps {
                let dw = stream.sample_increment(&table, n, cfg.dt, 0);
                let next = main_plan.step_method2(&layers, &dw_prev, &dw);
                if !next.is_finite() {
                    return Err(RunError::Diverged { path, step: n });
                }
                trace.phi.push(energy(SchemeId::MethodII, &next, Some(&layers.curr)));
                let dh_new =
                    divergence_half_time(cfg.scheme, &layers.curr, &next, FieldSelector::H);
                let de_new =
                    divergence_half_time(cfg.scheme, &layers.curr, &next, FieldSelector::E);
                let mut ch = dh_new.clone();
                ch.axpy(-1.0, &dh);
                let mut ce = de_new.clone();
                ce.axpy(-1.0, &de);
                trace.div_h.push(ch);
                trace.div_e.push(ce);
                dh = dh_new;
                de = de_new;
                layers = TwoLayerState { prev: layers.curr, curr: next };
                dw_prev = dw;
            }
        }
    }
    Ok(trace)
}

fn make_plans(
    cfg: &ExperimentConfig,
) -> Result<(StepperPlan, Option<StepperPlan>), PlanError> {
    let coupling = cfg.coupling();
    let main_plan = plan(cfg.scheme, cfg.grid, cfg.dt, coupling, cfg.solver_tol)?;
    let boot_plan = if cfg.scheme == SchemeId::MethodII {
        Some(plan(SchemeId::MethodIII, cfg.grid, cfg.dt, coupling, cfg.solver_tol)?)
    } else {
        None
    };
    Ok((main_plan, boot_plan))
}

/// Simulate `cfg.paths` independent paths and aggregate per-step energy
/// statistics and Monte-Carlo divergence errors.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleStats, RunError> {
    if cfg.paths == 0 {
        return Err(RunError::BadArgument("paths must be >= 1".into()));
    }
    let steps = cfg.steps();
    let (main_plan, boot_plan) = make_plans(cfg)?;
    let warnings = main_plan.warnings.clone();
    // Method-II divergence lives at half-time levels, so its first recorded
    // change sits one step later.
    let (phi_len, div_len, div_offset) = match cfg.scheme {
        SchemeId::MethodII => (steps as usize + 1, steps as usize - 1, 2u64),
        _ => (steps as usize + 1, steps as usize, 1u64),
    };

    let mut total = Accumulator::new(cfg.grid, phi_len, div_len);
    let ranges = chunk_ranges(cfg.paths, CHUNK);
    for wave in ranges.chunks(WAVE) {
        let partials: Vec<Result<Accumulator, RunError>> = wave
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = Accumulator::new(cfg.grid, phi_len, div_len);
                for path in lo..hi {
                    let trace = run_one_path(cfg, &main_plan, boot_plan.as_ref(), path)?;
                    acc.add_trace(&trace);
                }
                Ok(acc)
            })
            .collect();
        for partial in partials {
            total.merge(&partial?);
        }
    }

    let p = cfg.paths as f64;
    let rate = energy_growth_rate(&cfg.coupling(), &cfg.basis, &cfg.grid);
    let phi0 = total.phi_sum[0] / p;
    let energy_rows = (0..phi_len)
        .map(|i| {
            let mean = total.phi_sum[i] / p;
            let var = (total.phi_sq[i] / p - mean * mean).max(0.0);
            let time = i as f64 * cfg.dt;
            EnergyRow {
                step: i as u64,
                time,
                mean_phi: mean,
                var_phi: var,
                min_phi: total.phi_min[i],
                max_phi: total.phi_max[i],
                predicted: phi0 + rate * time,
            }
        })
        .collect();
    let div_rows = (0..div_len)
        .map(|i| {
            let step = div_offset + i as u64;
            let mut mean_h = total.div_h[i].clone();
            mean_h.scale(1.0 / p);
            let mut mean_e = total.div_e[i].clone();
            mean_e.scale(1.0 / p);
            DivergenceRow {
                step,
                time: step as f64 * cfg.dt,
                err_div_h: err_div(&mean_h),
                err_div_e: err_div(&mean_e),
            }
        })
        .collect();
    Ok(EnsembleStats {
        energy: energy_rows,
        divergence: div_rows,
        predicted_rate: rate,
        warnings,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct MsRow {
    pub dt: f64,
    pub ms_error: f64,
    /// Order estimate against the previous (coarser) row.
    pub local_order: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub rows: Vec<MsRow>,
    /// Least-squares slope of `log ms_error` against `log dt`, with
    /// `ms_error` the squared discrete L2 error, so a deterministic
    /// second-order scheme fits 4 and the stochastic regime fits about 0.5.
    pub fitted_order: f64,
}

/// Mean-square convergence study against a fine reference driven by the same
/// noise: `dt = 2^-k` for `k` in `dt_levels`, reference at `2^-ref_level`.
///
/// Every path integrates the reference trajectory once and each coarse
/// trajectory with increments that are exact aggregations of the shared fine
/// draws, then records the squared discrete L2 error at `t_end`.
///
/// With `zero_initial` the trajectories start from the zero state, so the
/// error is purely the scheme's response to the noise; with the default
/// initial data the deterministic O(dt^2) component dominates the coarse
/// levels and masks the stochastic order.
pub fn msconv_study(
    cfg: &ExperimentConfig,
    dt_levels: &[u32],
    ref_level: u32,
    zero_initial: bool,
) -> Result<ConvergenceTable, RunError> {
    if cfg.scheme == SchemeId::MethodII {
        return Err(RunError::BadArgument(
            "mean-square study supports the one-step schemes only".into(),
        ));
    }
    if dt_levels.len() < 2 {
        return Err(RunError::BadArgument("need at least two dt levels".into()));
    }
    for w in dt_levels.windows(2) {
        if w[1] <= w[0] {
            return Err(RunError::BadArgument("dt levels must be strictly refining".into()));
        }
    }
    if dt_levels[dt_levels.len() - 1] >= ref_level {
        return Err(RunError::BadArgument(format!(
            "every dt level must be coarser than the reference level {ref_level}"
        )));
    }
    let dt_ref = 0.5f64.powi(ref_level as i32);
    let n_ref_f = cfg.t_end / dt_ref;
    if (n_ref_f - n_ref_f.round()).abs() > 1e-9 {
        return Err(RunError::BadArgument(format!(
            "t_end = {} is not a multiple of the reference step {dt_ref}",
            cfg.t_end
        )));
    }
    let n_ref = n_ref_f.round() as u64;
    let coupling = cfg.coupling();
    let ref_plan = plan(cfg.scheme, cfg.grid, dt_ref, coupling, cfg.solver_tol)?;
    let coarse_plans: Vec<StepperPlan> = dt_levels
        .iter()
        .map(|&k| plan(cfg.scheme, cfg.grid, 0.5f64.powi(k as i32), coupling, cfg.solver_tol))
        .collect::<Result<_, _>>()?;

    let error_components: Vec<usize> = match cfg.mode {
        FieldMode::Tm => vec![crate::state::E3, crate::state::H1, crate::state::H2],
        FieldMode::Full3d => (0..NUM_COMPONENTS).collect(),
    };

    let start = || {
        if zero_initial {
            FieldState::zeros(cfg.grid)
        } else {
            cfg.initial_state()
        }
    };
    let run_path = |path: u64| -> Result<Vec<f64>, RunError> {
        let stream = NoiseStream::new(cfg.seed, path, cfg.basis.clone());
        let table = stream.table(&cfg.grid);
        let mut reference = start();
        for n in 0..n_ref {
            let dw = stream.sample_increment(&table, n, dt_ref, ref_level);
            reference = ref_plan
                .step_implicit(&reference, &dw)
                .map_err(|source| RunError::Step { path, step: n, source })?;
        }
        let mut errs = Vec::with_capacity(coarse_plans.len());
        for (plan_k, &k) in coarse_plans.iter().zip(dt_levels) {
            let ratio = 1u64 << (ref_level - k);
            let n_coarse = n_ref / ratio;
            let mut state = start();
            for n in 0..n_coarse {
                let dw = stream.coarse_from_fine(&table, n, ratio, dt_ref, ref_level);
                state = plan_k
                    .step_implicit(&state, &dw)
                    .map_err(|source| RunError::Step { path, step: n, source })?;
            }
            let mut err2 = 0.0;
            for &c in &error_components {
                let mut d = state.fields[c].clone();
                d.axpy(-1.0, &reference.fields[c]);
                err2 += d.inner(&d);
            }
            errs.push(err2);
        }
        Ok(errs)
    };

    let ranges = chunk_ranges(cfg.paths, CHUNK);
    let partials: Vec<Result<Vec<f64>, RunError>> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = vec![0.0; dt_levels.len()];
            for path in lo..hi {
                for (s, e) in sums.iter_mut().zip(run_path(path)?) {
                    *s += e;
                }
            }
            Ok(sums)
        })
        .collect();
    let mut sums = vec![0.0; dt_levels.len()];
    for partial in partials {
        for (s, e) in sums.iter_mut().zip(partial?) {
            *s += e;
        }
    }

    let p = cfg.paths as f64;
    let mut rows: Vec<MsRow> = Vec::with_capacity(dt_levels.len());
    for (i, (&k, sum)) in dt_levels.iter().zip(&sums).enumerate() {
        let dt = 0.5f64.powi(k as i32);
        let ms_error = sum / p;
        let local_order = if i == 0 {
            None
        } else {
            let prev: &MsRow = &rows[i - 1];
            Some((prev.ms_error / ms_error).ln() / (prev.dt / dt).ln())
        };
        rows.push(MsRow { dt, ms_error, local_order });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.dt.ln(), r.ms_error.max(1e-300).ln())).collect();
    let (slope, _, _) = fit_slope(&pts).map_err(RunError::BadArgument)?;
    Ok(ConvergenceTable { rows, fitted_order: slope })
}

/// Monte-Carlo divergence error as a function of the path count, evaluated
/// from the closed-form increment oracle alone (no PDE solves). Returns
/// `(P, Err-Div)` pairs for the requested ascending path counts.
pub fn path_count_sweep(
    cfg: &ExperimentConfig,
    p_list: &[u64],
) -> Result<Vec<(u64, f64)>, RunError> {
    if p_list.is_empty() || p_list.windows(2).any(|w| w[1] <= w[0]) || p_list[0] == 0 {
        return Err(RunError::BadArgument("path counts must be ascending and positive".into()));
    }
    let coupling = cfg.coupling();
    let max_p = *p_list.last().unwrap();
    // chunk granularity must divide every checkpoint
    let mut chunk = 64u64;
    while chunk > 1 && p_list.iter().any(|p| p % chunk != 0) {
        chunk /= 2;
    }
    let oracle_for = |path: u64| -> Lattice {
        let stream = NoiseStream::new(cfg.seed, path, cfg.basis.clone());
        let table = stream.table(&cfg.grid);
        let dw0 = stream.sample_increment(&table, 0, cfg.dt, 0);
        match cfg.scheme {
            SchemeId::MethodII => {
                let dw1 = stream.sample_increment(&table, 1, cfg.dt, 0);
                div_residual_oracle(
                    cfg.scheme,
                    &coupling,
                    FieldSelector::H,
                    &cfg.grid,
                    &dw1,
                    Some(&dw0),
                )
            }
            _ => div_residual_oracle(cfg.scheme, &coupling, FieldSelector::H, &cfg.grid, &dw0, None),
        }
    };

    let ranges = chunk_ranges(max_p, chunk);
    let partials: Vec<Lattice> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sum = Lattice::zeros(cfg.grid);
            for path in lo..hi {
                sum.axpy(1.0, &oracle_for(path));
            }
            sum
        })
        .collect();

    let mut out = Vec::with_capacity(p_list.len());
    let mut running = Lattice::zeros(cfg.grid);
    let mut next_cp = 0usize;
    for (partial, &(_, hi)) in partials.iter().zip(&ranges) {
        running.axpy(1.0, partial);
        let seen = hi;
        while next_cp < p_list.len() && p_list[next_cp] == seen {
            let mut mean = running.clone();
            mean.scale(1.0 / seen as f64);
            out.push((seen, err_div(&mean)));
            next_cp += 1;
        }
    }
    if next_cp != p_list.len() {
        return Err(RunError::BadArgument(format!(
            "internal checkpoint mismatch: chunk {chunk} does not cover all of {p_list:?}"
        )));
    }
    Ok(out)
}

/// Integrate a single path and hand every `snapshot_every`-th state (plus the
/// initial and final states) to `sink`. Snapshot cadence `0` means final
/// state only.
pub fn simulate_path<E, F>(
    cfg: &ExperimentConfig,
    path: u64,
    snapshot_every: u64,
    mut sink: F,
) -> Result<(), RunError>
where
    F: FnMut(u64, &FieldState) -> Result<(), E>,
    E: std::fmt::Display,
{
    let steps = cfg.steps();
    let (main_plan, boot_plan) = make_plans(cfg)?;
    let stream = NoiseStream::new(cfg.seed, path, cfg.basis.clone());
    let table = stream.table(&cfg.grid);
    let wants = |n: u64| n == 0 || n == steps || (snapshot_every > 0 && n % snapshot_every == 0);
    let emit = |n: u64, s: &FieldState, sink: &mut F| -> Result<(), RunError> {
        if wants(n) {
            sink(n, s).map_err(|e| RunError::BadArgument(format!("snapshot at step {n}: {e}")))?;
        }
        Ok(())
    };
    let mut state = cfg.initial_state();
    emit(0, &state, &mut sink)?;
    match cfg.scheme {
        SchemeId::MethodI | SchemeId::MethodIII => {
            for n in 0..steps {
                let dw = stream.sample_increment(&table, n, cfg.dt, 0);
                state = main_plan
                    .step_implicit(&state, &dw)
                    .map_err(|source| RunError::Step { path, step: n, source })?;
                emit(n + 1, &state, &mut sink)?;
            }
        }
        SchemeId::MethodII => {
            let boot = boot_plan.expect("leapfrog needs a bootstrap plan");
            let mut dw_prev = stream.sample_increment(&table, 0, cfg.dt, 0);
            let mut layers = bootstrap_method2(&boot, &state, &dw_prev)
                .map_err(|source| RunError::Step { path, step: 0, source })?;
            emit(1, &layers.curr, &mut sink)?;
            for n in 1..steps {
                let dw = stream.sample_increment(&table, n, cfg.dt, 0);
                let next = main_plan.step_method2(&layers, &dw_prev, &dw);
                if !next.is_finite() {
                    return Err(RunError::Diverged { path, step: n });
                }
                emit(n + 1, &next, &mut sink)?;
                layers = TwoLayerState { prev: layers.curr, curr: next };
                dw_prev = dw;
            }
        }
    }
    Ok(())
}

/// Pseudo-random tangent field with entries in `[-1/2, 1/2)`, reproducible
/// from the seed alone.
pub fn random_tangent(grid: GridSpec, seed: u64) -> FieldState {
    let mut s = FieldState::zeros(grid);
    for (ci, f) in s.fields.iter_mut().enumerate() {
        let mut n = 0u64;
        *f = Lattice::from_fn(grid, |_, _, _| {
            n += 1;
            let h = mix64(seed ^ mix64(((ci as u64) << 32) ^ n));
            (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
    }
    s
}

/// Evolve a random tangent pair through `steps` steps of the planned scheme
/// and record the per-step multi-symplectic conservation-law residual,
/// relative to the magnitude of the balance terms.
pub fn tangent_residual_series(
    cfg: &ExperimentConfig,
    steps: u64,
) -> Result<Vec<(u64, f64)>, RunError> {
    let (main_plan, boot_plan) = make_plans(cfg)?;
    let mut u = random_tangent(cfg.grid, cfg.seed ^ 0x5851_F42D_4C95_7F2D);
    let mut v = random_tangent(cfg.grid, cfg.seed ^ 0x1405_7B7E_F767_814F);
    let mut rows = Vec::with_capacity(steps as usize);
    match cfg.scheme {
        SchemeId::MethodI | SchemeId::MethodIII => {
            for n in 0..steps {
                let u1 = main_plan
                    .step_tangent(&u)
                    .map_err(|source| RunError::Step { path: 0, step: n, source })?;
                let v1 = main_plan
                    .step_tangent(&v)
                    .map_err(|source| RunError::Step { path: 0, step: n, source })?;
                let (r, scale) = msymp_residual(&main_plan, &[&u, &u1], &[&v, &v1]);
                rows.push((n + 1, r / scale));
                u = u1;
                v = v1;
            }
        }
        SchemeId::MethodII => {
            let boot = boot_plan.expect("leapfrog needs a bootstrap plan");
            let u1 = boot
                .step_tangent(&u)
                .map_err(|source| RunError::Step { path: 0, step: 0, source })?;
            let v1 = boot
                .step_tangent(&v)
                .map_err(|source| RunError::Step { path: 0, step: 0, source })?;
            let mut lu = TwoLayerState { prev: u, curr: u1 };
            let mut lv = TwoLayerState { prev: v, curr: v1 };
            for n in 1..steps {
                let u2 = main_plan.step_tangent_two_layer(&lu);
                let v2 = main_plan.step_tangent_two_layer(&lv);
                if !u2.is_finite() || !v2.is_finite() {
                    return Err(RunError::Diverged { path: 0, step: n });
                }
                let (r, scale) = msymp_residual(
                    &main_plan,
                    &[&lu.prev, &lu.curr, &u2],
                    &[&lv.prev, &lv.curr, &v2],
                );
                rows.push((n + 1, r / scale));
                lu = TwoLayerState { prev: lu.curr, curr: u2 };
                lv = TwoLayerState { prev: lv.curr, curr: v2 };
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg(scheme: SchemeId) -> ExperimentConfig {
        ExperimentConfig {
            scheme,
            grid: GridSpec::two_d(9, 7, 2.0 / 3.0, 0.5),
            dt: 0.002,
            t_end: 0.02,
            lambda1: 0.1,
            lambda2: 0.1,
            basis: SpectralBasis { trunc_m: 10, trunc_l: 10, ..SpectralBasis::default() },
            mode: FieldMode::Tm,
            paths: 6,
            seed: 77,
            solver_tol: 1e-12,
        }
    }

    #[test]
    fn steps_rounding() {
        let cfg = base_cfg(SchemeId::MethodIII);
        assert_eq!(cfg.steps(), 10);
    }

    #[test]
    fn noiseless_energy_is_constant_for_one_step_schemes() {
        for scheme in [SchemeId::MethodI, SchemeId::MethodIII] {
            let mut cfg = base_cfg(scheme);
            cfg.lambda1 = 0.0;
            cfg.lambda2 = 0.0;
            cfg.paths = 1;
            let stats = run_ensemble(&cfg).unwrap();
            let phi0 = stats.energy[0].mean_phi;
            for row in &stats.energy {
                assert!(
                    (row.mean_phi - phi0).abs() < 1e-10 * phi0,
                    "{scheme:?} step {} drifted: {} vs {}",
                    row.step,
                    row.mean_phi,
                    phi0
                );
                assert!(row.var_phi.abs() < 1e-18);
                assert!((row.predicted - phi0).abs() < 1e-14);
            }
            for row in &stats.divergence {
                assert!(row.err_div_h < 1e-11);
                assert!(row.err_div_e < 1e-14);
            }
        }
    }

    #[test]
    fn ensemble_is_deterministic_across_worker_counts() {
        let cfg = base_cfg(SchemeId::MethodIII);
        let a = run_ensemble(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_ensemble(&cfg).unwrap());
        for (x, y) in a.energy.iter().zip(&b.energy) {
            assert_eq!(x.mean_phi.to_bits(), y.mean_phi.to_bits());
            assert_eq!(x.var_phi.to_bits(), y.var_phi.to_bits());
        }
        for (x, y) in a.divergence.iter().zip(&b.divergence) {
            assert_eq!(x.err_div_h.to_bits(), y.err_div_h.to_bits());
        }
    }

    #[test]
    fn method2_rows_have_expected_shape() {
        let cfg = base_cfg(SchemeId::MethodII);
        let stats = run_ensemble(&cfg).unwrap();
        assert_eq!(stats.energy.len(), 11);
        assert_eq!(stats.divergence.len(), 9);
        assert_eq!(stats.divergence[0].step, 2);
        // TM mode: E-divergence vanishes identically
        for row in &stats.divergence {
            assert!(row.err_div_e < 1e-13);
        }
    }

    #[test]
    fn msconv_zero_noise_slope_matches_deterministic_order_two() {
        // squared error of a second-order scheme scales as dt^4
        let mut cfg = base_cfg(SchemeId::MethodIII);
        cfg.lambda1 = 0.0;
        cfg.lambda2 = 0.0;
        cfg.paths = 1;
        cfg.t_end = 0.5;
        let table = msconv_study(&cfg, &[3, 4, 5, 6], 9, false).unwrap();
        assert!(
            (table.fitted_order - 4.0).abs() < 0.4,
            "order {}",
            table.fitted_order
        );
        for w in table.rows.windows(2) {
            assert!(w[1].ms_error < w[0].ms_error);
        }
    }

    #[test]
    fn msconv_rejects_bad_levels() {
        let cfg = base_cfg(SchemeId::MethodIII);
        assert!(msconv_study(&cfg, &[4], 9, false).is_err());
        assert!(msconv_study(&cfg, &[5, 4], 9, false).is_err());
        assert!(msconv_study(&cfg, &[4, 9], 9, false).is_err());
        assert!(msconv_study(&base_cfg(SchemeId::MethodII), &[4, 5], 9, false).is_err());
    }

    #[test]
    fn path_sweep_zero_lambda2_is_zero_and_counts_match() {
        let mut cfg = base_cfg(SchemeId::MethodIII);
        cfg.lambda2 = 0.0;
        let rows = path_count_sweep(&cfg, &[10, 100]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, 10);
        assert_eq!(rows[1].0, 100);
        for (_, e) in rows {
            assert_eq!(e, 0.0);
        }
    }

    #[test]
    fn path_sweep_decreases_with_paths() {
        let cfg = base_cfg(SchemeId::MethodIII);
        let rows = path_count_sweep(&cfg, &[10, 1000]).unwrap();
        assert!(rows[1].1 < rows[0].1, "{rows:?}");
    }

    #[test]
    fn tangent_series_is_small_for_all_schemes() {
        for scheme in [SchemeId::MethodI, SchemeId::MethodII, SchemeId::MethodIII] {
            let mut cfg = base_cfg(scheme);
            cfg.solver_tol = 1e-13;
            let rows = tangent_residual_series(&cfg, 5).unwrap();
            assert!(!rows.is_empty());
            for (step, r) in rows {
                assert!(r < 1e-10, "{scheme:?} step {step}: residual {r}");
            }
        }
    }
}
