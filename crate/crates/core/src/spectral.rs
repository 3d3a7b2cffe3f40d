//! Principal eigenpair of `d/dx(A d/dx) + r` and the spectral gap of the
//! `vbar`-weighted Neumann problem.

use crate::coeff::CoefficientSpec;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{solve_tridiagonal, DiffusionOperator};

pub const DEFAULT_TOL_EIG: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 10_000;

/// `L phi1 + r phi1 = -lambda1 phi1`, with `phi1 > 0` and `max phi1 = 1`.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi1: Field,
    /// `||L phi1 + r phi1 + lambda1 phi1||_inf`.
    pub residual: f64,
    pub iterations: usize,
}

/// Second eigenvalue `rho1` of `g -> -(1/vbar^2) d/dx(A vbar^2 dg/dx)` and its
/// eigenfunction in `h = vbar g` coordinates.
#[derive(Clone, Debug)]
pub struct SpectralGap {
    pub rho1: f64,
    pub psi2: Field,
    /// Relative residual of the symmetrized eigenproblem.
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest residual the iteration can be asked for at this matrix norm.
fn attainable(tol: f64, norm: f64) -> f64 {
    tol.max(64.0 * f64::EPSILON * norm)
}

fn sup_normalize(x: &mut [f64]) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v /= m);
    }
}

pub fn principal_eigenpair(op: &DiffusionOperator, r: &Field, tol_eig: f64) -> Result<EigenPair> {
    principal_eigenpair_from(op, r, tol_eig, &Field::constant(*op.grid(), 1.0))
}

/// Shifted inverse power iteration from a given positive start vector.
pub fn principal_eigenpair_from(
    op: &DiffusionOperator,
    r: &Field,
    tol_eig: f64,
    start: &Field,
) -> Result<EigenPair> {
    if !(tol_eig > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol_eig must be positive, got {tol_eig}"
        )));
    }
    if r.len() != op.grid().len() || start.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: op.grid().len(),
            got: r.len().min(start.len()),
        });
    }
    let n = r.len();
    let rv = r.values();
    let sigma = r.max() + 1.0;
    let shift: Vec<f64> = rv.iter().map(|ri| sigma - ri).collect();
    let norm = op.norm_inf() + r.sup_norm();
    let target = attainable(tol_eig, norm);

    let mut x: Vec<f64> = start.values().iter().map(|v| v.abs()).collect();
    if x.iter().all(|&v| v == 0.0) {
        x = vec![1.0; n];
    }
    sup_normalize(&mut x);
    let mut mx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        x = op.solve_with_diagonal(&shift, &x)?;
        // the inverse of an M-matrix is positive; clip roundoff-level negatives
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        sup_normalize(&mut x);
        op.apply_slice(&x, &mut mx);
        mx.iter_mut()
            .zip(rv)
            .zip(&x)
            .for_each(|((m, ri), xi)| *m += ri * xi);
        let theta = dot(&mx, &x) / dot(&x, &x);
        residual = mx
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - theta * b).abs()));
        if residual <= target {
            let phi1 = Field::new(*op.grid(), x)?;
            if !(phi1.min() > 0.0) {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual,
                });
            }
            return Ok(EigenPair {
                lambda1: -theta,
                phi1,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric tridiagonal `B = V^{-1} K V^{-1}` for the weighted problem, where
/// `K g` is `-(1/dx^2)` times the second difference with face weights
/// `A_f * mean(vbar^2)_f` and `V = diag(vbar)`. `B vbar = 0`.
pub(crate) fn weighted_bands(vbar: &Field, op: &DiffusionOperator) -> (Vec<f64>, Vec<f64>) {
    let n = vbar.len();
    let v = vbar.values();
    let h2 = op.grid().dx() * op.grid().dx();
    let faces = op.faces();
    let c: Vec<f64> = (0..=n)
        .map(|f| {
            if f == 0 || f == n {
                0.0
            } else {
                faces[f] * 0.5 * (v[f - 1] * v[f - 1] + v[f] * v[f]) / h2
            }
        })
        .collect();
    let diag: Vec<f64> = (0..n).map(|i| (c[i] + c[i + 1]) / (v[i] * v[i])).collect();
    let off: Vec<f64> = (1..n).map(|i| -c[i] / (v[i - 1] * v[i])).collect();
    (diag, off)
}

fn tridiag_apply(diag: &[f64], off: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let mut s = diag[i] * x[i];
        if i > 0 {
            s += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            s += off[i] * x[i + 1];
        }
        out[i] = s;
    }
}

/// Spectral gap for the diffusion coefficient given as a spec.
pub fn spectral_gap(vbar: &Field, a: &CoefficientSpec) -> Result<SpectralGap> {
    let op = DiffusionOperator::from_cells(&a.sample(vbar.grid())?)?;
    spectral_gap_with(vbar, &op)
}

/// Deflated inverse iteration on the symmetrized weighted problem.
pub fn spectral_gap_with(vbar: &Field, op: &DiffusionOperator) -> Result<SpectralGap> {
    let vmin = vbar.min();
    if !(vmin > 0.0) || !vbar.is_finite() {
        return Err(Error::NotPositiveWeight(vmin));
    }
    let n = vbar.len();
    let (diag, off) = weighted_bands(vbar, op);
    let norm = (0..n)
        .map(|i| {
            diag[i].abs()
                + if i > 0 { off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { off[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    // null vector of B is vbar itself
    let vn = vbar.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let null: Vec<f64> = vbar.values().iter().map(|v| v / vn).collect();
    let deflate = |x: &mut Vec<f64>| {
        let c = dot(x, &null);
        x.iter_mut().zip(&null).for_each(|(xi, ni)| *xi -= c * ni);
        let m = dot(x, x).sqrt();
        x.iter_mut().for_each(|xi| *xi /= m);
    };

    let vmax = vbar.max();
    let min_face = op.faces()[1..n]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let length = op.grid().length();
    // a lower estimate of the gap keeps B + sigma I well conditioned
    let sigma = (min_face * vmin * vmin / (vmax * vmax) / (length * length)).max(f64::MIN_POSITIVE);
    let shifted: Vec<f64> = diag.iter().map(|d| d + sigma).collect();

    let mut x: Vec<f64> = op
        .grid()
        .centers()
        .map(|c| (std::f64::consts::PI * op.grid().normalized(c)).cos())
        .collect();
    deflate(&mut x);
    let target = attainable(1e-12, 1.0);
    let mut bx = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut rho = f64::NAN;
    for it in 1..=MAX_ITERATIONS {
        x = solve_tridiagonal(&off, &shifted, &off, &x)?;
        deflate(&mut x);
        tridiag_apply(&diag, &off, &x, &mut bx);
        rho = dot(&bx, &x);
        residual = bx
            .iter()
            .zip(&x)
            .map(|(b, xi)| (b - rho * xi).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm;
        if residual <= target.max(64.0 * f64::EPSILON) {
            if !(rho > 1e-12 * norm) {
                return Err(Error::DegenerateGap(rho));
            }
            // y = vbar g and h = vbar g, so psi2 is y itself
            let psi2 = Field::new(*vbar.grid(), x)?;
            return Ok(SpectralGap {
                rho1: rho,
                psi2,
                residual,
                iterations: it,
            });
        }
    }
    if rho.is_finite() && !(rho > 1e-12 * norm) {
        return Err(Error::DegenerateGap(rho));
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Dirichlet form `int vbar^2 A |d(h/vbar)/dx|^2` of the weighted problem.
pub fn weighted_dirichlet(vbar: &Field, h: &Field, op: &DiffusionOperator) -> f64 {
    let w: Vec<f64> = vbar.values().iter().map(|v| v * v).collect();
    let g: Vec<f64> = h
        .values()
        .iter()
        .zip(vbar.values())
        .map(|(h, v)| h / v)
        .collect();
    op.weighted_energy(&w, &g)
}
