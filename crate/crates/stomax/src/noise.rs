//! Truncated Q-Wiener process on the rectangle, with counter-based sampling.
//!
//! The covariance eigenpairs are
//! `e_{m,l}(x,y) = 2*sqrt(3) * sin(1.5*m*pi*x) * sin(2*l*pi*y)` and
//! `eta_{m,l} = 1/(m^3 + l^3)`. An increment over `[t_n, t_n + dt]` at the
//! grid nodes is
//! `dW_ij = sum_{m,l} sqrt(eta_{m,l}) e_{m,l}(x_i,y_j) sqrt(dt) xi_{m,l}^n`
//! with standard normals `xi` drawn from a counter-based generator keyed by
//! `(seed, path, level, step, m, l)`. Every draw is a pure function of its
//! key, so increments can be regenerated in any order, from any worker, and
//! coarse increments are exact sums of the fine ones they cover.

use crate::mesh::{centered_diff, Axis, GridSpec, Lattice};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    /// Full truncated expansion varying in space and time.
    SpaceTime,
    /// A single scalar Brownian motion: the same increment at every node.
    TimeOnly,
}

/// Truncated eigen-decomposition of the noise covariance on `[0,lx] x [0,ly]`.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub lx: f64,
    pub ly: f64,
    pub trunc_m: usize,
    pub trunc_l: usize,
    pub mode: NoiseMode,
}

impl Default for SpectralBasis {
    fn default() -> Self {
        Self { lx: 2.0 / 3.0, ly: 0.5, trunc_m: 50, trunc_l: 50, mode: NoiseMode::SpaceTime }
    }
}

impl SpectralBasis {
    pub fn time_only() -> Self {
        Self { mode: NoiseMode::TimeOnly, ..Self::default() }
    }

    /// Covariance eigenvalue `eta_{m,l} = 1/(m^3 + l^3)`.
    pub fn eigenvalue(&self, m: usize, l: usize) -> f64 {
        assert!(m >= 1 && l >= 1, "mode indices start at 1");
        1.0 / ((m * m * m + l * l * l) as f64)
    }

    /// Eigenfunction `2*sqrt(3) * sin(1.5*m*pi*x) * sin(2*l*pi*y)`.
    pub fn eigenfunction(&self, m: usize, l: usize, x: f64, y: f64) -> f64 {
        assert!(
            m >= 1 && m <= self.trunc_m && l >= 1 && l <= self.trunc_l,
            "mode index ({m},{l}) outside truncation {}x{}",
            self.trunc_m,
            self.trunc_l
        );
        2.0 * 3.0f64.sqrt()
            * (1.5 * m as f64 * std::f64::consts::PI * x).sin()
            * (2.0 * l as f64 * std::f64::consts::PI * y).sin()
    }

    /// Modal amplitude `a(m,l) = 2*sqrt(3/(m^3+l^3))`; the quantity whose
    /// decay motivates truncating at 50 modes per index.
    pub fn coefficient_magnitude(&self, m: usize, l: usize) -> f64 {
        assert!(m >= 1 && l >= 1);
        2.0 * (3.0 / (m * m * m + l * l * l) as f64).sqrt()
    }

    /// Truncated trace `sum eta_{m,l}`. In time-only mode the scalar Brownian
    /// motion has unit variance per unit time, so the trace degenerates to 1.
    pub fn trace_q(&self) -> f64 {
        match self.mode {
            NoiseMode::TimeOnly => 1.0,
            NoiseMode::SpaceTime => {
                let mut s = 0.0;
                for m in 1..=self.trunc_m {
                    for l in 1..=self.trunc_l {
                        s += self.eigenvalue(m, l);
                    }
                }
                s
            }
        }
    }

    /// Grid-quadrature approximations of the trace:
    /// `vbar = dV * sum_ij sum_ml eta e^2(x_i,y_j)` and `vhat`, which adds the
    /// centered-difference gradient terms of the eigenfunctions.
    pub fn discrete_trace(&self, grid: &GridSpec) -> (f64, f64) {
        assert_eq!(self.mode, NoiseMode::SpaceTime, "discrete trace needs a spatial basis");
        let mut vbar = 0.0;
        let mut grad = 0.0;
        for m in 1..=self.trunc_m {
            for l in 1..=self.trunc_l {
                let eta = self.eigenvalue(m, l);
                let e = Lattice::from_fn(*grid, |x, y, _| self.eigenfunction(m, l, x, y));
                let ex = centered_diff(&e, Axis::X);
                let ey = centered_diff(&e, Axis::Y);
                let mut s2 = 0.0;
                let mut g2 = 0.0;
                for ((v, dx), dy) in e.as_slice().iter().zip(ex.as_slice()).zip(ey.as_slice()) {
                    s2 += v * v;
                    g2 += dx * dx + dy * dy;
                }
                vbar += eta * s2;
                grad += eta * g2;
            }
        }
        let w = grid.cell_volume();
        (vbar * w, (vbar + grad) * w)
    }
}

/// One Wiener increment sampled at the grid nodes.
#[derive(Clone, Debug)]
pub struct IncrementField {
    pub values: Lattice,
    pub step_index: u64,
    pub path_index: u64,
    /// Refinement level `k`: the increment spans a step of `dt_run / 2^k`
    /// aggregated back to the run's step (0 for plain runs).
    pub dt_level: u32,
}

const MIX_CONST: u64 = 0x9E3779B97F4A7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).unwrap())
}

/// Deterministic per-path noise stream over a spectral basis.
///
/// Sampling is a pure function of `(seed, path, level, step, m, l)`; the
/// struct only carries the key prefix plus the per-grid eigenfunction tables.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    pub seed: u64,
    pub path: u64,
    pub basis: SpectralBasis,
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64, basis: SpectralBasis) -> Self {
        Self { seed, path, basis }
    }

    /// Counter-based standard normal for mode `(m,l)` at `step` on refinement
    /// `level`. Inverse-CDF transform of a hashed uniform, so the value is
    /// identical on every platform and independent of evaluation order.
    pub fn xi(&self, level: u32, step: u64, m: usize, l: usize) -> f64 {
        let mut h = mix64(self.seed ^ MIX_CONST);
        h = mix64(h ^ self.path);
        h = mix64(h ^ ((level as u64) << 48) ^ step);
        h = mix64(h ^ (((m as u64) << 32) | l as u64));
        // 53-bit uniform strictly inside (0,1)
        let u = ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0);
        std_normal().inverse_cdf(u)
    }

    /// Cache the separable eigenfunction factors for one grid.
    pub fn table(&self, grid: &GridSpec) -> BasisTable {
        BasisTable::new(&self.basis, grid)
    }

    /// Sample `dW^step` spanning `dt` at every node of `grid`.
    pub fn sample_increment(
        &self,
        table: &BasisTable,
        step: u64,
        dt: f64,
        level: u32,
    ) -> IncrementField {
        assert!(dt > 0.0, "dt must be positive");
        let grid = table.grid;
        let mut values = Lattice::zeros(grid);
        let sqrt_dt = dt.sqrt();
        match self.basis.mode {
            NoiseMode::TimeOnly => {
                let v = sqrt_dt * self.xi(level, step, 1, 1);
                values.fill(v);
            }
            NoiseMode::SpaceTime => {
                let (nx, ny) = (grid.nx, grid.ny);
                // dW_ij = sum_m ax[m][i] * t_m[j],
                // t_m[j] = sum_l c[m][l] * by[l][j] * xi_{m,l}
                let mut plane = vec![0.0f64; nx * ny];
                let mut t = vec![0.0f64; ny];
                for m in 1..=self.basis.trunc_m {
                    t.fill(0.0);
                    for l in 1..=self.basis.trunc_l {
                        let w = table.coeff(m, l) * self.xi(level, step, m, l);
                        let by = table.sin_y(l);
                        for (tj, bj) in t.iter_mut().zip(by) {
                            *tj += w * bj;
                        }
                    }
                    let ax = table.sin_x(m);
                    for j in 0..ny {
                        let tj = t[j];
                        let row = &mut plane[j * nx..(j + 1) * nx];
                        for (p, a) in row.iter_mut().zip(ax) {
                            *p += a * tj;
                        }
                    }
                }
                for k in 0..grid.nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            values[(i, j, k)] = sqrt_dt * plane[j * nx + i];
                        }
                    }
                }
            }
        }
        IncrementField { values, step_index: step, path_index: self.path, dt_level: level }
    }

    /// Increment for coarse step `n_coarse` assembled as the exact sum of the
    /// `ratio` consecutive finest-level increments it covers. `dt_fine` is the
    /// finest step size and `fine_level` its refinement level.
    pub fn coarse_from_fine(
        &self,
        table: &BasisTable,
        n_coarse: u64,
        ratio: u64,
        dt_fine: f64,
        fine_level: u32,
    ) -> IncrementField {
        assert!(ratio.is_power_of_two(), "refinement ratio must be a power of two");
        let mut acc = self.sample_increment(table, n_coarse * ratio, dt_fine, fine_level);
        for r in 1..ratio {
            let fine = self.sample_increment(table, n_coarse * ratio + r, dt_fine, fine_level);
            acc.values.axpy(1.0, &fine.values);
        }
        IncrementField {
            values: acc.values,
            step_index: n_coarse,
            path_index: self.path,
            dt_level: fine_level,
        }
    }
}

/// Precomputed separable eigenfunction factors on one grid.
#[derive(Clone, Debug)]
pub struct BasisTable {
    grid: GridSpec,
    trunc_m: usize,
    trunc_l: usize,
    /// `sin(1.5*m*pi*x_i)`, row per mode m (1-based), nx entries
    sx: Vec<f64>,
    /// `sin(2*l*pi*y_j)`, row per mode l (1-based), ny entries
    sy: Vec<f64>,
    /// `2*sqrt(3*eta_{m,l})`, row-major (m-1, l-1)
    c: Vec<f64>,
}

impl BasisTable {
    fn new(basis: &SpectralBasis, grid: &GridSpec) -> Self {
        let (tm, tl) = (basis.trunc_m, basis.trunc_l);
        let mut sx = vec![0.0; tm * grid.nx];
        for m in 1..=tm {
            for i in 0..grid.nx {
                sx[(m - 1) * grid.nx + i] =
                    (1.5 * m as f64 * std::f64::consts::PI * grid.x(i)).sin();
            }
        }
        let mut sy = vec![0.0; tl * grid.ny];
        for l in 1..=tl {
            for j in 0..grid.ny {
                sy[(l - 1) * grid.ny + j] =
                    (2.0 * l as f64 * std::f64::consts::PI * grid.y(j)).sin();
            }
        }
        let mut c = vec![0.0; tm * tl];
        for m in 1..=tm {
            for l in 1..=tl {
                c[(m - 1) * tl + (l - 1)] = 2.0 * (3.0 * basis.eigenvalue(m, l)).sqrt();
            }
        }
        Self { grid: *grid, trunc_m: tm, trunc_l: tl, sx, sy, c }
    }

    #[inline]
    fn sin_x(&self, m: usize) -> &[f64] {
        &self.sx[(m - 1) * self.grid.nx..m * self.grid.nx]
    }

    #[inline]
    fn sin_y(&self, l: usize) -> &[f64] {
        &self.sy[(l - 1) * self.grid.ny..l * self.grid.ny]
    }

    #[inline]
    fn coeff(&self, m: usize, l: usize) -> f64 {
        debug_assert!(m <= self.trunc_m && l <= self.trunc_l);
        self.c[(m - 1) * self.trunc_l + (l - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis_small(tm: usize, tl: usize) -> SpectralBasis {
        SpectralBasis { trunc_m: tm, trunc_l: tl, ..SpectralBasis::default() }
    }

    #[test]
    fn eigenfunction_vanishes_on_boundary() {
        let b = SpectralBasis::default();
        assert_eq!(b.eigenfunction(1, 1, 0.0, 0.3), 0.0);
        assert!(b.eigenfunction(2, 3, b.lx, 0.1).abs() < 1e-12);
        assert!(b.eigenfunction(2, 3, 0.2, b.ly).abs() < 1e-12);
    }

    #[test]
    fn eigenfunction_interior_value() {
        // sin(pi/2) = sin(pi/2) = 1 at (1/3, 1/4)
        let b = SpectralBasis::default();
        let v = b.eigenfunction(1, 1, 1.0 / 3.0, 0.25);
        assert!((v - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);
        assert!((v - 3.4641).abs() < 1e-3);
    }

    #[test]
    fn eigenvalues_decrease_and_first_is_half() {
        let b = SpectralBasis::default();
        assert_eq!(b.eigenvalue(1, 1), 0.5);
        for m in 1..10 {
            for l in 1..10 {
                assert!(b.eigenvalue(m + 1, l) < b.eigenvalue(m, l));
                assert!(b.eigenvalue(m, l + 1) < b.eigenvalue(m, l));
                assert!(b.eigenvalue(m, l) > 0.0);
            }
        }
    }

    #[test]
    fn coefficient_magnitude_values() {
        let b = SpectralBasis::default();
        assert!((b.coefficient_magnitude(1, 1) - 2.0 * (1.5f64).sqrt()).abs() < 1e-12);
        assert!((b.coefficient_magnitude(1, 1) - 2.4495).abs() < 1e-3);
        assert!(b.coefficient_magnitude(25, 25) < 0.02);
        for m in 1..20 {
            assert!(b.coefficient_magnitude(m + 1, 3) < b.coefficient_magnitude(m, 3));
        }
    }

    #[test]
    fn trace_values() {
        assert_eq!(basis_small(1, 1).trace_q(), 0.5);
        let t50 = SpectralBasis::default().trace_q();
        let direct: f64 = (1..=50)
            .flat_map(|m| (1..=50).map(move |l| 1.0 / ((m * m * m + l * l * l) as f64)))
            .sum();
        assert!((t50 - direct).abs() < 1e-12, "trace_q(50) = {t50}");
        assert!(t50 > 1.3 && t50 < 1.4, "trace_q(50) = {t50}");
        let t25 = basis_small(25, 25).trace_q();
        assert!(t50 > t25 && t50 - t25 < 0.05);
        assert_eq!(SpectralBasis::time_only().trace_q(), 1.0);
    }

    #[test]
    fn discrete_trace_single_mode() {
        // e_{1,1} is L2-normalized on the rectangle, so vbar ~ eta_{1,1} = 0.5
        let b = basis_small(1, 1);
        let g = GridSpec::two_d(64, 48, b.lx, b.ly);
        let (vbar, vhat) = b.discrete_trace(&g);
        assert!((vbar - 0.5).abs() / 0.5 < 0.01, "vbar = {vbar}");
        assert!(vhat >= vbar);
    }

    #[test]
    fn discrete_trace_tracks_trace_q() {
        let b = SpectralBasis::default();
        let g = GridSpec::two_d(100, 75, b.lx, b.ly);
        let (vbar, vhat) = b.discrete_trace(&g);
        let tq = b.trace_q();
        assert!((vbar - tq).abs() / tq < 0.02, "vbar = {vbar}, Tr(Q) = {tq}");
        assert!(vhat >= vbar);
    }

    #[test]
    fn sampling_is_deterministic_and_boundary_null() {
        let b = basis_small(8, 8);
        let g = GridSpec::two_d(12, 10, b.lx, b.ly);
        let s = NoiseStream::new(42, 3, b);
        let t = s.table(&g);
        let a = s.sample_increment(&t, 7, 0.01, 0);
        let c = s.sample_increment(&t, 7, 0.01, 0);
        assert_eq!(a.values.as_slice(), c.values.as_slice());
        // nodes on x=0 / y=0 carry exact zeros
        for j in 0..g.ny {
            assert_eq!(a.values[(0, j, 0)], 0.0);
        }
        for i in 0..g.nx {
            assert_eq!(a.values[(i, 0, 0)], 0.0);
        }
    }

    #[test]
    fn distinct_keys_give_distinct_fields() {
        let b = basis_small(4, 4);
        let g = GridSpec::two_d(8, 8, b.lx, b.ly);
        let s0 = NoiseStream::new(42, 0, b.clone());
        let s1 = NoiseStream::new(42, 1, b);
        let t = s0.table(&g);
        let a = s0.sample_increment(&t, 0, 0.01, 0);
        let c = s1.table(&g);
        let d = s1.sample_increment(&c, 0, 0.01, 0);
        let e = s0.sample_increment(&t, 1, 0.01, 0);
        assert_ne!(a.values.as_slice(), d.values.as_slice());
        assert_ne!(a.values.as_slice(), e.values.as_slice());
    }

    #[test]
    fn node_variance_matches_closed_form() {
        let b = basis_small(6, 6);
        let g = GridSpec::two_d(10, 8, b.lx, b.ly);
        let s = NoiseStream::new(7, 0, b.clone());
        let t = s.table(&g);
        let dt = 0.02;
        let (i0, j0) = (3, 5);
        let n = 100_000u64;
        let (mut sum, mut sq) = (0.0, 0.0);
        for step in 0..n {
            let v = s.sample_increment(&t, step, dt, 0).values[(i0, j0, 0)];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let (x, y) = (g.x(i0), g.y(j0));
        let mut expect = 0.0;
        for m in 1..=b.trunc_m {
            for l in 1..=b.trunc_l {
                let e = b.eigenfunction(m, l, x, y);
                expect += b.eigenvalue(m, l) * e * e;
            }
        }
        expect *= dt;
        assert!(mean.abs() < 3.0 * (expect / n as f64).sqrt() * 1.5, "mean = {mean}");
        assert!((var - expect).abs() / expect < 0.03, "var = {var}, expect = {expect}");
    }

    #[test]
    fn coarse_is_exact_sum_of_fine() {
        let b = basis_small(5, 5);
        let g = GridSpec::two_d(9, 7, b.lx, b.ly);
        let s = NoiseStream::new(11, 2, b);
        let t = s.table(&g);
        let dt_fine = 1.0 / 512.0;
        // ratio 1 is the identity aggregation
        let one = s.coarse_from_fine(&t, 5, 1, dt_fine, 9);
        let fine = s.sample_increment(&t, 5, dt_fine, 9);
        assert_eq!(one.values.as_slice(), fine.values.as_slice());
        // two ratio-2 increments sum to one ratio-4 increment
        let mut two = s.coarse_from_fine(&t, 2, 2, dt_fine, 9);
        let second = s.coarse_from_fine(&t, 3, 2, dt_fine, 9);
        two.values.axpy(1.0, &second.values);
        let four = s.coarse_from_fine(&t, 1, 4, dt_fine, 9);
        for (a, c) in two.values.as_slice().iter().zip(four.values.as_slice()) {
            assert!((a - c).abs() < 1e-15);
        }
    }

    #[test]
    fn coarse_variance_doubles() {
        let b = basis_small(3, 3);
        let g = GridSpec::two_d(6, 6, b.lx, b.ly);
        let dt_fine = 0.01;
        let (i0, j0) = (2, 3);
        let n = 40_000u64;
        let (mut var1, mut var2) = (0.0, 0.0);
        for p in 0..n {
            let s = NoiseStream::new(5, p, b.clone());
            let t = s.table(&g);
            let f = s.sample_increment(&t, 0, dt_fine, 4).values[(i0, j0, 0)];
            let c = s.coarse_from_fine(&t, 0, 2, dt_fine, 4).values[(i0, j0, 0)];
            var1 += f * f;
            var2 += c * c;
        }
        let ratio = var2 / var1;
        assert!((ratio - 2.0).abs() < 0.15, "variance ratio = {ratio}");
    }

    #[test]
    fn time_only_is_spatially_constant() {
        let b = SpectralBasis::time_only();
        let g = GridSpec::two_d(6, 5, b.lx, b.ly);
        let s = NoiseStream::new(1, 0, b);
        let t = s.table(&g);
        let inc = s.sample_increment(&t, 3, 0.5, 0);
        let v0 = inc.values[(0, 0, 0)];
        assert!(v0 != 0.0);
        for v in inc.values.as_slice() {
            assert_eq!(*v, v0);
        }
    }

    #[test]
    fn node_covariance_matches_kernel() {
        let b = basis_small(4, 4);
        let g = GridSpec::two_d(8, 6, b.lx, b.ly);
        let dt = 0.05;
        let (a, c) = ((2, 2), (5, 4));
        let n = 120_000u64;
        let mut cov = 0.0;
        for p in 0..n {
            let s = NoiseStream::new(99, p, b.clone());
            let t = s.table(&g);
            let inc = s.sample_increment(&t, 0, dt, 0);
            cov += inc.values[(a.0, a.1, 0)] * inc.values[(c.0, c.1, 0)];
        }
        cov /= n as f64;
        let mut expect = 0.0;
        for m in 1..=b.trunc_m {
            for l in 1..=b.trunc_l {
                expect += b.eigenvalue(m, l)
                    * b.eigenfunction(m, l, g.x(a.0), g.y(a.1))
                    * b.eigenfunction(m, l, g.x(c.0), g.y(c.1));
            }
        }
        expect *= dt;
        // 3 standard errors of the product estimator
        let se = (dt * dt / n as f64).sqrt() * 3.0;
        assert!((cov - expect).abs() < 3.0 * se.max(0.02 * expect.abs()), "cov {cov} vs {expect}");
    }
}
