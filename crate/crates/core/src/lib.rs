//! Numerical laboratory for the nonlocal mutation-selection equation
//!
//! `u_t = u (r(x) - int K(x, y) |u|^p dy) + d/dx(A(x) u_x)` on `[a, b]`
//! with zero-flux boundary conditions.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeff;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod harness;
pub mod operator;
pub mod selection;
pub mod spectral;
pub mod steady;

pub use coeff::{CoefficientSpec, Kernel2DSpec, KernelSpec};
pub use dynamics::{simulate, step_imex, Problem, SimConfig, SimOutput, SimState, Target};
pub use entropy::{decompose, dissipation_d, entropy_h, lyapunov_f, Decomposition, EntropySample};
pub use error::{Error, Result};
pub use grid::{quadrature, Field, Grid1D};
pub use operator::{assemble_diffusion, solve_shifted, DiffusionOperator};
pub use selection::{alpha_bounds, psi, Kernel, KernelMatrix};
pub use spectral::{principal_eigenpair, spectral_gap, EigenPair, SpectralGap};
pub use steady::{blind_steady, homotopy_steady, stationary_residual, SteadyState};
