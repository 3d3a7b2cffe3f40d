//! Finite-volume diffusion operator `u -> d/dx(A du/dx)` with zero-flux boundaries.

use crate::coeff::CoefficientSpec;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

/// Tridiagonal discretization of `d/dx (A(x) du/dx)` on a cell-centered grid.
///
/// Interior face `i + 1/2` carries `A_{i+1/2} = (A_i + A_{i+1}) / 2`; the two
/// boundary faces carry zero flux. Rows sum to zero and the matrix is symmetric,
/// so the operator is self-adjoint and conservative for the midpoint inner product.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    grid: Grid1D,
    /// `n + 1` face coefficients; entries 0 and n are zero.
    faces: Vec<f64>,
}

impl DiffusionOperator {
    /// Builds the operator from cell values of `A`.
    pub fn from_cells(a_cells: &Field) -> Result<Self> {
        let grid = *a_cells.grid();
        let a = a_cells.values();
        let n = grid.len();
        let mut faces = vec![0.0; n + 1];
        for i in 1..n {
            faces[i] = 0.5 * (a[i - 1] + a[i]);
        }
        let min_face = faces[1..n].iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_face > 0.0) || !min_face.is_finite() {
            return Err(Error::NotElliptic(min_face));
        }
        Ok(Self { grid, faces })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Sub-, main and super-diagonals of the matrix.
    pub fn bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let h2 = self.grid.dx() * self.grid.dx();
        let lower: Vec<f64> = (1..n).map(|i| self.faces[i] / h2).collect();
        let upper = lower.clone();
        let diag: Vec<f64> = (0..n)
            .map(|i| -(self.faces[i] + self.faces[i + 1]) / h2)
            .collect();
        (lower, diag, upper)
    }

    pub fn apply_slice(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let h2 = self.grid.dx() * self.grid.dx();
        for i in 0..n {
            let right = if i + 1 < n {
                self.faces[i + 1] * (u[i + 1] - u[i])
            } else {
                0.0
            };
            let left = if i > 0 {
                self.faces[i] * (u[i] - u[i - 1])
            } else {
                0.0
            };
            out[i] = (right - left) / h2;
        }
    }

    pub fn apply(&self, u: &Field) -> Field {
        let mut out = vec![0.0; u.len()];
        self.apply_slice(u.values(), &mut out);
        Field::new(self.grid, out).expect("same grid")
    }

    /// Infinity norm of the matrix.
    pub fn norm_inf(&self) -> f64 {
        let h2 = self.grid.dx() * self.grid.dx();
        (0..self.grid.len())
            .map(|i| 2.0 * (self.faces[i] + self.faces[i + 1]) / h2)
            .fold(0.0, f64::max)
    }

    /// Solves `(diag(shift) - L) u = rhs`.
    pub fn solve_with_diagonal(&self, shift: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let (lower, diag, upper) = self.bands();
        let d: Vec<f64> = diag.iter().zip(shift).map(|(l, s)| s - l).collect();
        let lo: Vec<f64> = lower.iter().map(|v| -v).collect();
        let up: Vec<f64> = upper.iter().map(|v| -v).collect();
        solve_tridiagonal(&lo, &d, &up, rhs)
    }

    /// Discrete weighted Dirichlet form
    /// `sum_faces A_f * mean(weight)_f * ((g_{i+1} - g_i) / dx)^2 * dx`.
    pub fn weighted_energy(&self, weight: &[f64], g: &[f64]) -> f64 {
        let n = g.len();
        let dx = self.grid.dx();
        (1..n)
            .map(|f| {
                let dg = g[f] - g[f - 1];
                self.faces[f] * 0.5 * (weight[f - 1] + weight[f]) * dg * dg
            })
            .sum::<f64>()
            / dx
    }
}

/// Assembles the operator for a coefficient spec sampled at cell centers.
pub fn assemble_diffusion(grid: &Grid1D, a: &CoefficientSpec) -> Result<DiffusionOperator> {
    DiffusionOperator::from_cells(&a.sample(grid)?)
}

/// Solves `(sigma I - L) u = rhs` by a direct tridiagonal solve.
pub fn solve_shifted(op: &DiffusionOperator, sigma: f64, rhs: &Field) -> Result<Field> {
    let shift = vec![sigma; rhs.len()];
    let u = op.solve_with_diagonal(&shift, rhs.values())?;
    Field::new(*rhs.grid(), u)
}

/// Thomas algorithm for a tridiagonal system. `lower[i]` couples row `i + 1` to
/// column `i`; `upper[i]` couples row `i` to column `i + 1`.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    debug_assert!(lower.len() + 1 == n && upper.len() + 1 == n && rhs.len() == n);
    let scale = diag
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
        .max(f64::MIN_POSITIVE);
    let tiny = scale * f64::EPSILON * 1e-3;
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() <= tiny || !pivot.is_finite() {
        return Err(Error::SingularSystem(0));
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i - 1] * c[i - 1];
        if pivot.abs() <= tiny || !pivot.is_finite() {
            return Err(Error::SingularSystem(i));
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
