//! Electromagnetic state, field modes, and the noise-coupling vector.
//!
//! The solver always carries the six components `(H1,H2,H3,E1,E2,E3)`.
//! The 2-D TM reduction is realized entirely through the coupling vector
//! and the initial data: with z-invariant data the `(H3,E1,E2)` block stays
//! zero under every scheme, so no reduced state type is needed.

use crate::mesh::{GridSpec, Lattice};
use std::io::{self, Write};

pub const NUM_COMPONENTS: usize = 6;
pub const H1: usize = 0;
pub const H2: usize = 1;
pub const H3: usize = 2;
pub const E1: usize = 3;
pub const E2: usize = 4;
pub const E3: usize = 5;

pub const COMPONENT_NAMES: [&str; 6] = ["h1", "h2", "h3", "e1", "e2", "e3"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldMode {
    /// Transverse-magnetic 2-D reduction: active components (E3, H1, H2).
    Tm,
    /// Full six-component 3-D system.
    Full3d,
}

/// Per-component coefficient multiplying the Wiener increment in the schemes,
/// i.e. the gradient of `S2(Z) = lambda2*(H1+H2+H3) - lambda1*(E1+E2+E3)`
/// restricted to the active components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingVector {
    pub c: [f64; NUM_COMPONENTS],
}

impl CouplingVector {
    pub fn new(mode: FieldMode, lambda1: f64, lambda2: f64) -> Self {
        let c = match mode {
            FieldMode::Full3d => [lambda2, lambda2, lambda2, -lambda1, -lambda1, -lambda1],
            FieldMode::Tm => [lambda2, lambda2, 0.0, 0.0, 0.0, -lambda1],
        };
        Self { c }
    }

    /// Sum of squared coefficients; the per-unit-time energy injection is
    /// this times the (discrete) trace of the covariance.
    pub fn sum_sq(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum()
    }
}

/// Six-component electromagnetic lattice at one time level.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub fields: [Lattice; NUM_COMPONENTS],
    pub time: f64,
}

impl FieldState {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            fields: std::array::from_fn(|_| Lattice::zeros(grid)),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.fields[0].grid()
    }

    pub fn h(&self, c: usize) -> &Lattice {
        &self.fields[c]
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(|f| f.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// Max absolute value over the components that must vanish in TM mode.
    pub fn tm_residual(&self) -> f64 {
        [H3, E1, E2].iter().map(|&c| self.fields[c].max_abs()).fold(0.0, f64::max)
    }

    /// Write a node snapshot as CSV `i,j,x,y,h1,h2,h3,e1,e2,e3` (k = 0 plane).
    pub fn write_snapshot_csv(&self, w: &mut impl Write) -> io::Result<()> {
        let g = self.grid();
        writeln!(w, "i,j,x,y,h1,h2,h3,e1,e2,e3")?;
        for j in 0..g.ny {
            for i in 0..g.nx {
                write!(w, "{},{},{},{}", i, j, g.x(i), g.y(j))?;
                for c in 0..NUM_COMPONENTS {
                    write!(w, ",{}", self.fields[c][(i, j, 0)])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Reference 2-D TM test data on `[0,2/3] x [0,1/2]`:
/// `E3 = sin(3*pi*x) sin(4*pi*y)`, `H1 = -(4/5) cos(3*pi*x) cos(4*pi*y)`,
/// `H2 = -(3/5) sin(3*pi*x) sin(4*pi*y)`. Periodic on the default rectangle;
/// other domain sizes are accepted but lose exact periodicity of the data.
pub fn initial_condition_tm(grid: GridSpec) -> FieldState {
    use std::f64::consts::PI;
    assert_eq!(grid.nz, 1, "TM initial data needs nz = 1");
    if (grid.lx - 2.0 / 3.0).abs() > 1e-12 || (grid.ly - 0.5).abs() > 1e-12 {
        eprintln!(
            "warning: TM initial data on {} x {} is not periodic (expected 2/3 x 1/2)",
            grid.lx, grid.ly
        );
    }
    let mut state = FieldState::zeros(grid);
    state.fields[E3] = Lattice::from_fn(grid, |x, y, _| (3.0 * PI * x).sin() * (4.0 * PI * y).sin());
    state.fields[H1] =
        Lattice::from_fn(grid, |x, y, _| -0.8 * (3.0 * PI * x).cos() * (4.0 * PI * y).cos());
    state.fields[H2] =
        Lattice::from_fn(grid, |x, y, _| -0.6 * (3.0 * PI * x).sin() * (4.0 * PI * y).sin());
    state
}
