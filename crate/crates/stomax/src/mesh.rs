//! Uniform periodic lattice and the finite-difference building blocks.
//!
//! All schemes live on a node-collocated grid with periodic identification
//! of node `n` with node `0` along each axis. An axis with a single node is
//! degenerate: every difference along it is zero and every average is the
//! identity, which is how the 2-D TM runs reuse the 3-D stencils.

use std::ops::{Index, IndexMut};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

/// Uniform periodic grid. `dx * nx == lx` per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Self {
        assert!(nx >= 1 && ny >= 1 && nz >= 1, "node counts must be >= 1");
        assert!(lx > 0.0 && ly > 0.0 && lz > 0.0, "lengths must be positive");
        Self { nx, ny, nz, lx, ly, lz }
    }

    /// 2-D grid over `[0,lx] x [0,ly]` with a degenerate z axis of length 1.
    pub fn two_d(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self::new(nx, ny, 1, lx, ly, 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn dz(&self) -> f64 {
        self.lz / self.nz as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Cell volume `dx*dy*dz`; the quadrature weight of every node.
    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }

    /// Domain volume `lx*ly*lz`.
    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    pub fn count(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dx(),
            Axis::Y => self.dy(),
            Axis::Z => self.dz(),
        }
    }

    /// An axis participates in differencing only if it has more than one node.
    pub fn is_active(&self, axis: Axis) -> bool {
        self.count(axis) > 1
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub fn z(&self, k: usize) -> f64 {
        k as f64 * self.dz()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }
}

/// Scalar field on a periodic grid, row-major with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    grid: GridSpec,
    data: Vec<f64>,
}

impl Lattice {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    out[(i, j, k)] = f(grid.x(i), grid.y(j), grid.z(k));
                }
            }
        }
        out
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Lattice) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    /// Periodic inner product weighted by the cell volume.
    pub fn inner(&self, other: &Lattice) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        s * self.grid.cell_volume()
    }

    /// Apply `f` to each node value together with the values at offsets
    /// `off` (in nodes, periodic wrap) along `axis`.
    fn map_shifted(&self, axis: Axis, off: isize, mut f: impl FnMut(f64, f64) -> f64) -> Lattice {
        let g = self.grid;
        let n = g.count(axis);
        let mut out = Lattice::zeros(g);
        let wrap = |c: usize| -> usize {
            let c = c as isize + off;
            c.rem_euclid(n as isize) as usize
        };
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (si, sj, sk) = match axis {
                        Axis::X => (wrap(i), j, k),
                        Axis::Y => (i, wrap(j), k),
                        Axis::Z => (i, j, wrap(k)),
                    };
                    out[(i, j, k)] = f(self[(i, j, k)], self[(si, sj, sk)]);
                }
            }
        }
        out
    }
}

impl Index<(usize, usize, usize)> for Lattice {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.grid.idx(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Lattice {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let idx = self.grid.idx(i, j, k);
        &mut self.data[idx]
    }
}

/// Forward difference `(f_{i+1} - f_i) / h` with periodic wrap.
pub fn forward_diff(f: &Lattice, axis: Axis) -> Lattice {
    let h = f.grid().spacing(axis);
    f.map_shifted(axis, 1, |c, s| (s - c) / h)
}

/// Backward difference `(f_i - f_{i-1}) / h` with periodic wrap.
pub fn backward_diff(f: &Lattice, axis: Axis) -> Lattice {
    let h = f.grid().spacing(axis);
    f.map_shifted(axis, -1, |c, s| (c - s) / h)
}

/// Centered difference `(f_{i+1} - f_{i-1}) / (2h)` with periodic wrap.
pub fn centered_diff(f: &Lattice, axis: Axis) -> Lattice {
    let g = f.grid();
    if !g.is_active(axis) {
        return Lattice::zeros(g);
    }
    let h = g.spacing(axis);
    let fwd = f.map_shifted(axis, 1, |_, s| s);
    let mut out = f.map_shifted(axis, -1, |_, s| -s);
    out.axpy(1.0, &fwd);
    out.scale(1.0 / (2.0 * h));
    out
}

/// Forward half-point average `(f_i + f_{i+1}) / 2` along one axis.
pub fn forward_average(f: &Lattice, axis: Axis) -> Lattice {
    f.map_shifted(axis, 1, |c, s| 0.5 * (c + s))
}

/// Backward half-point average `(f_i + f_{i-1}) / 2` along one axis.
pub fn backward_average(f: &Lattice, axis: Axis) -> Lattice {
    f.map_shifted(axis, -1, |c, s| 0.5 * (c + s))
}

/// Average onto the half-index point over every axis in `axes`; the
/// value at index `i` stands for the point `i + 1/2` along each chosen axis.
pub fn half_average(f: &Lattice, axes: &[Axis]) -> Lattice {
    let mut out = f.clone();
    for &a in axes {
        out = forward_average(&out, a);
    }
    out
}

/// Exact inverse of `forward_average` along one axis.
///
/// The periodic half-point average `(I + S)/2` is invertible only for odd
/// node counts, where `(I + S)^{-1} = (1/2) * sum_k (-1)^k S^k`; the sum
/// telescopes into the O(1)-per-node recurrence `g_{i+1} = 2 f_i - g_i`.
pub fn forward_average_inverse(f: &Lattice, axis: Axis) -> Lattice {
    let g = f.grid();
    let n = g.count(axis);
    if n == 1 {
        return f.clone();
    }
    assert!(n % 2 == 1, "periodic half-point average is singular for even count {n}");
    let mut out = Lattice::zeros(g);
    let line = |fix: &mut dyn FnMut(usize) -> (usize, usize, usize), f: &Lattice, out: &mut Lattice| {
        let mut g0 = 0.0;
        let mut sign = 1.0;
        for c in 0..n {
            g0 += sign * f[fix(c)];
            sign = -sign;
        }
        let mut gi = g0;
        for c in 0..n {
            out[fix(c)] = gi;
            gi = 2.0 * f[fix(c)] - gi;
        }
    };
    match axis {
        Axis::X => {
            for k in 0..g.nz {
                for j in 0..g.ny {
                    line(&mut |i| (i, j, k), f, &mut out);
                }
            }
        }
        Axis::Y => {
            for k in 0..g.nz {
                for i in 0..g.nx {
                    line(&mut |j| (i, j, k), f, &mut out);
                }
            }
        }
        Axis::Z => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    line(&mut |k| (i, j, k), f, &mut out);
                }
            }
        }
    }
    out
}

/// Shift by `off` nodes (periodic) along `axis`: out_i = f_{i+off}.
pub fn shift(f: &Lattice, axis: Axis, off: isize) -> Lattice {
    f.map_shifted(axis, off, |_, s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid_4() -> GridSpec {
        GridSpec::two_d(4, 4, 1.0, 1.0)
    }

    #[test]
    fn constant_has_zero_differences() {
        let g = grid_4();
        let f = Lattice::from_fn(g, |_, _, _| 3.25);
        for a in AXES {
            assert_eq!(forward_diff(&f, a).max_abs(), 0.0);
            assert_eq!(centered_diff(&f, a).max_abs(), 0.0);
            let avg = half_average(&f, &[a]);
            for v in avg.as_slice() {
                assert_eq!(*v, 3.25);
            }
        }
    }

    #[test]
    fn degenerate_axis_is_null() {
        let g = GridSpec::two_d(8, 8, 1.0, 1.0);
        let f = Lattice::from_fn(g, |x, y, _| x * y + 1.0);
        assert_eq!(forward_diff(&f, Axis::Z).max_abs(), 0.0);
        assert_eq!(centered_diff(&f, Axis::Z).max_abs(), 0.0);
        assert_eq!(half_average(&f, &[Axis::Z]), f);
    }

    #[test]
    fn forward_diff_matches_pointwise_formula() {
        let g = GridSpec::two_d(64, 3, 2.0, 1.0);
        let f = Lattice::from_fn(g, |x, _, _| (2.0 * PI * x / g.lx).sin());
        let d = forward_diff(&f, Axis::X);
        let dx = g.dx();
        for i in 0..g.nx {
            let x = g.x(i);
            let expect =
                ((2.0 * PI * (x + dx) / g.lx).sin() - (2.0 * PI * x / g.lx).sin()) / dx;
            assert!((d[(i, 0, 0)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_diff_fourier_symbol() {
        // On the mode cos(2*pi*q*i/n) + i sin(...) the centered difference acts
        // as multiplication by i*sin(2*pi*q/n)/dx; check the real pair.
        let n = 16;
        let q = 3.0;
        let g = GridSpec::two_d(n, 2, 1.0, 1.0);
        let c = Lattice::from_fn(g, |x, _, _| (2.0 * PI * q * x).cos());
        let s = Lattice::from_fn(g, |x, _, _| (2.0 * PI * q * x).sin());
        let sym = (2.0 * PI * q / n as f64).sin() / g.dx();
        let dc = centered_diff(&c, Axis::X);
        for i in 0..n {
            let expect = -sym * s[(i, 0, 0)];
            assert!((dc[(i, 0, 0)] - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn half_average_wraps_at_seam() {
        let g = GridSpec::two_d(4, 1, 4.0, 1.0);
        let f = Lattice::from_fn(g, |x, _, _| x);
        let m = half_average(&f, &[Axis::X]);
        assert_eq!(m[(0, 0, 0)], 0.5);
        assert_eq!(m[(1, 0, 0)], 1.5);
        assert_eq!(m[(2, 0, 0)], 2.5);
        // seam: average of x=3 and x=0
        assert_eq!(m[(3, 0, 0)], 1.5);
    }

    #[test]
    fn half_average_axes_commute() {
        let g = GridSpec::two_d(6, 5, 1.0, 1.0);
        let f = Lattice::from_fn(g, |x, y, _| (x * 7.0).sin() + y * y);
        let xy = half_average(&f, &[Axis::X, Axis::Y]);
        let yx = half_average(&f, &[Axis::Y, Axis::X]);
        for (a, b) in xy.as_slice().iter().zip(yx.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_average_inverse_round_trips() {
        let g = GridSpec::two_d(9, 7, 1.0, 1.0);
        let f = Lattice::from_fn(g, |x, y, _| (x * 11.0).sin() + (y * 3.0).cos() * 0.4);
        for a in [Axis::X, Axis::Y] {
            let inv = forward_average_inverse(&f, a);
            let back = forward_average(&inv, a);
            for (u, v) in back.as_slice().iter().zip(f.as_slice()) {
                assert!((u - v).abs() < 1e-12);
            }
            let other = forward_average_inverse(&forward_average(&f, a), a);
            for (u, v) in other.as_slice().iter().zip(f.as_slice()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        // degenerate axis: identity
        assert_eq!(forward_average_inverse(&f, Axis::Z), f);
    }

    #[test]
    #[should_panic(expected = "singular for even count")]
    fn forward_average_inverse_rejects_even_counts() {
        let g = GridSpec::two_d(8, 7, 1.0, 1.0);
        let f = Lattice::zeros(g);
        forward_average_inverse(&f, Axis::X);
    }

    #[test]
    fn summation_by_parts_centered() {
        let g = GridSpec::two_d(10, 7, 2.0 / 3.0, 0.5);
        let f = Lattice::from_fn(g, |x, y, _| (3.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let h = Lattice::from_fn(g, |x, y, _| x * 0.3 + (2.0 * PI * y * 2.0).sin());
        for a in [Axis::X, Axis::Y] {
            let lhs = centered_diff(&f, a).inner(&h);
            let rhs = -f.inner(&centered_diff(&h, a));
            assert!((lhs - rhs).abs() < 1e-12, "axis {a:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn forward_adjoint_is_negated_backward() {
        let g = GridSpec::two_d(9, 6, 1.0, 2.0);
        let f = Lattice::from_fn(g, |x, y, _| (x + 0.3).powi(2) * (y * 5.0).sin());
        let h = Lattice::from_fn(g, |x, y, _| (x * 9.0).cos() + y);
        for a in [Axis::X, Axis::Y] {
            let lhs = forward_diff(&f, a).inner(&h);
            let rhs = -f.inner(&backward_diff(&h, a));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn operators_are_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..1000) {
            let g = GridSpec::two_d(5, 4, 1.0, 1.0);
            let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s as f64 / u64::MAX as f64) - 0.5
            };
            let f = Lattice::from_fn(g, |_, _, _| next());
            let h = Lattice::from_fn(g, |_, _, _| next());
            let mut combo = f.clone();
            combo.scale(alpha);
            combo.axpy(beta, &h);
            for a in [Axis::X, Axis::Y] {
                let d_combo = centered_diff(&combo, a);
                let mut expect = centered_diff(&f, a);
                expect.scale(alpha);
                expect.axpy(beta, &centered_diff(&h, a));
                for (u, v) in d_combo.as_slice().iter().zip(expect.as_slice()) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn cyclic_shift_commutes_with_operators(off in 0isize..5, seed in 0u64..1000) {
            let g = GridSpec::two_d(5, 6, 1.0, 1.0);
            let mut s = seed.wrapping_mul(0x2545F4914F6CDD1D) | 1;
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s as f64 / u64::MAX as f64) - 0.5
            };
            let f = Lattice::from_fn(g, |_, _, _| next());
            let shifted = shift(&f, Axis::X, off);
            let a = centered_diff(&shifted, Axis::Y);
            let b = shift(&centered_diff(&f, Axis::Y), Axis::X, off);
            for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
