//! Positive stationary solutions: the closed form `mu phi1` for blind kernels and
//! continuation along `K^s = s K + (1 - s) K(x0, .)` for general ones.

use crate::dynamics::{simulate, Convergence, Problem, SimConfig, Target};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::solve_tridiagonal;
use crate::selection::{pow_abs, psi, Kernel};
use crate::spectral::{principal_eigenpair, EigenPair, DEFAULT_TOL_EIG};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteadyMethod {
    BlindClosedForm,
    Homotopy,
    LongTimeLimit,
}

impl SteadyMethod {
    pub fn name(self) -> &'static str {
        match self {
            SteadyMethod::BlindClosedForm => "blind_closed_form",
            SteadyMethod::Homotopy => "homotopy",
            SteadyMethod::LongTimeLimit => "long_time_limit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomotopyStage {
    pub s: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub ubar: Field,
    pub residual: f64,
    pub method: SteadyMethod,
    pub mu: Option<f64>,
    pub homotopy_trace: Vec<HomotopyStage>,
}

/// `||L v + v (r - Psi(v))||_inf`.
pub fn stationary_residual(v: &Field, problem: &Problem) -> f64 {
    let lv = problem.op.apply(v);
    let ps = problem.psi(v);
    lv.values()
        .iter()
        .zip(v.values())
        .zip(problem.r.values().iter().zip(ps.values()))
        .fold(0.0f64, |m, ((l, v), (r, s))| m.max((l + v * (r - s)).abs()))
}

/// `mu phi1` with `mu = (-lambda1 / int k phi1^p)^(1/p)`.
pub fn blind_steady(eig: &EigenPair, problem: &Problem) -> Result<SteadyState> {
    let Kernel::Blind { k } = &problem.kernel else {
        return Err(Error::InvalidKernel(
            "closed form needs a blind kernel".into(),
        ));
    };
    if !(eig.lambda1 < 0.0) {
        return Err(Error::NoPositiveSteadyState(eig.lambda1));
    }
    let p = problem.p;
    let denom = k.zip_map(&eig.phi1, |k, f| k * pow_abs(f, p)).integral();
    let mu = (-eig.lambda1 / denom).powf(1.0 / p);
    let ubar = eig.phi1.scaled(mu);
    let residual = stationary_residual(&ubar, problem);
    Ok(SteadyState {
        ubar,
        residual,
        method: SteadyMethod::BlindClosedForm,
        mu: Some(mu),
        homotopy_trace: Vec::new(),
    })
}

#[derive(Clone, Debug)]
pub struct HomotopyOptions {
    /// Increasing, from 0 to 1.
    pub schedule: Vec<f64>,
    pub x0: usize,
    pub tol: f64,
    /// Upper bound on the pseudo-time step.
    pub theta_max: f64,
    pub max_iterations: usize,
}

impl HomotopyOptions {
    pub fn new(n: usize) -> Self {
        Self {
            schedule: (0..=10).map(|i| i as f64 / 10.0).collect(),
            x0: n / 2,
            tol: 1e-8,
            theta_max: 1.0,
            max_iterations: 50_000,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let s = &self.schedule;
        if s.first() != Some(&0.0) || s.last() != Some(&1.0) || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "schedule must increase from 0 to 1".into(),
            ));
        }
        if self.x0 >= n {
            return Err(Error::InvalidArgument(format!(
                "x0 index {} outside grid of {n} cells",
                self.x0
            )));
        }
        if !(self.tol > 0.0) || !(self.theta_max > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "tol, theta_max and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Pseudo-time iteration `(I - theta (L + diag(r - Psi(v)))) v_new = v` whose
/// fixed points are exactly the discrete stationary solutions. `theta` is kept
/// small enough for the matrix to stay an M-matrix and for the lagged
/// nonlocal term not to overshoot.
fn relax(
    problem: &Problem,
    v0: Field,
    tol: f64,
    theta_max: f64,
    max_iterations: usize,
) -> (Field, usize, f64) {
    let (lower, diag, upper) = problem.op.bands();
    let p = problem.p;
    let mut v = v0;
    let mut residual = stationary_residual(&v, problem);
    let mut iterations = 0;
    while residual > tol && iterations < max_iterations {
        let ps = psi(&problem.kernel, &v, p);
        let growth = problem
            .r
            .values()
            .iter()
            .zip(ps.values())
            .fold(0.0f64, |m, (r, s)| m.max(r - s));
        let theta = theta_max
            .min(0.5 / (p * ps.max()).max(f64::MIN_POSITIVE))
            .min(0.5 / growth.max(f64::MIN_POSITIVE));
        let lo: Vec<f64> = lower.iter().map(|l| -theta * l).collect();
        let up: Vec<f64> = upper.iter().map(|u| -theta * u).collect();
        let d: Vec<f64> = diag
            .iter()
            .zip(problem.r.values().iter().zip(ps.values()))
            .map(|(l, (r, s))| 1.0 - theta * (l + r - s))
            .collect();
        let Ok(next) = solve_tridiagonal(&lo, &d, &up, v.values()) else {
            break;
        };
        v = Field::new(*v.grid(), next).expect("same grid");
        iterations += 1;
        residual = stationary_residual(&v, problem);
        if !residual.is_finite() {
            break;
        }
    }
    (v, iterations, residual)
}

/// Continuation from the blind kernel `K(x0, .)` at `s = 0` to `K` at `s = 1`.
pub fn homotopy_steady(problem: &Problem, opts: &HomotopyOptions) -> Result<SteadyState> {
    let grid = *problem.grid();
    opts.validate(grid.len())?;
    let eig = principal_eigenpair(&problem.op, &problem.r, DEFAULT_TOL_EIG)?;
    if !(eig.lambda1 < 0.0) {
        return Err(Error::NoPositiveSteadyState(eig.lambda1));
    }
    let blind = Problem {
        kernel: problem.kernel.frozen_row(&grid, opts.x0)?,
        ..problem.clone()
    };
    let seed = blind_steady(&eig, &blind)?;
    let mut trace = vec![HomotopyStage {
        s: 0.0,
        iterations: 0,
        residual: seed.residual,
    }];
    let mut v = seed.ubar;
    for &s in &opts.schedule[1..] {
        let stage = Problem {
            kernel: problem.kernel.homotopy(s, opts.x0),
            ..problem.clone()
        };
        let (next, iterations, residual) =
            relax(&stage, v, opts.tol, opts.theta_max, opts.max_iterations);
        if !(residual <= opts.tol) || !(next.min() > 0.0) {
            return Err(Error::ContinuationStall {
                s,
                iterations,
                residual,
            });
        }
        trace.push(HomotopyStage {
            s,
            iterations,
            residual,
        });
        v = next;
    }
    let residual = stationary_residual(&v, problem);
    Ok(SteadyState {
        ubar: v,
        residual,
        method: SteadyMethod::Homotopy,
        mu: None,
        homotopy_trace: trace,
    })
}

/// Long-time limit of the dynamics, stopped by the stationarity test.
pub fn long_time_steady(
    problem: &Problem,
    u0: Field,
    dt: f64,
    t_end: f64,
    tol: f64,
) -> Result<SteadyState> {
    let mut cfg = SimConfig::new(u0, dt, t_end);
    cfg.convergence = Convergence {
        target: Target::Stationary,
        tol,
    };
    let out = simulate(problem, &cfg)?;
    let ubar = out.final_state.u;
    Ok(SteadyState {
        residual: stationary_residual(&ubar, problem),
        ubar,
        method: SteadyMethod::LongTimeLimit,
        mu: None,
        homotopy_trace: Vec::new(),
    })
}

/// Positivity and integral bounds
/// `|lambda1| / K_max <= int ubar^p <= ||r||_inf / K_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct AprioriReport {
    pub positive: bool,
    pub integral_p: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub min: f64,
    pub max: f64,
}

impl AprioriReport {
    pub fn all_ok(&self) -> bool {
        self.positive && self.upper_ok && self.lower_ok
    }
}

pub fn apriori_check(ubar: &Field, problem: &Problem, eig: &EigenPair) -> AprioriReport {
    let integral_p = ubar.map(|v| pow_abs(v, problem.p)).integral();
    let upper_bound = problem.r.sup_norm() / problem.kernel.min_entry();
    let lower_bound = eig.lambda1.abs() / problem.kernel.max_entry();
    let slack = 1e-9 * upper_bound.max(1.0);
    AprioriReport {
        positive: ubar.min() > 0.0,
        integral_p,
        upper_bound,
        lower_bound,
        upper_ok: integral_p <= upper_bound + slack,
        lower_ok: integral_p >= lower_bound - slack,
        min: ubar.min(),
        max: ubar.max(),
    }
}

/// Smallest minimum and largest maximum over a family of steady states.
pub fn sweep_bounds(states: &[Field]) -> (f64, f64) {
    states
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.min()), hi.max(s.max()))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::operator::DiffusionOperator;
    use crate::selection::KernelMatrix;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    fn blind_problem(g: Grid1D, r: Field, p: f64) -> Problem {
        let op = DiffusionOperator::from_cells(&Field::constant(g, 1.0)).unwrap();
        Problem::new(op, r, Kernel::blind(Field::constant(g, 1.0)).unwrap(), p).unwrap()
    }

    #[test]
    fn constant_closed_forms() {
        let g = unit(32);
        for (p, expect) in [(1.0, 2.0), (2.0, 2f64.sqrt())] {
            let pr = blind_problem(g, Field::constant(g, 2.0), p);
            let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
            let st = blind_steady(&eig, &pr).unwrap();
            assert!(st.ubar.values().iter().all(|v| (v - expect).abs() < 1e-12));
            assert!(st.residual <= 1e-12);
            assert_eq!(st.method, SteadyMethod::BlindClosedForm);
        }
        let pr = blind_problem(g, Field::constant(g, -0.5), 1.0);
        let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
        assert!(matches!(
            blind_steady(&eig, &pr),
            Err(Error::NoPositiveSteadyState(_))
        ));
    }

    #[test]
    fn residual_examples() {
        let g = unit(32);
        let pr = blind_problem(g, Field::constant(g, 2.0), 1.0);
        assert_eq!(stationary_residual(&Field::zeros(g), &pr), 0.0);
        assert!(stationary_residual(&Field::constant(g, 2.0), &pr) <= 1e-12);
        assert!(stationary_residual(&Field::constant(g, 2.1), &pr) > 0.01);
    }

    #[test]
    fn closed_form_is_normalization_invariant() {
        let g = unit(64);
        let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x)).unwrap();
        let pr = Problem::new(
            op,
            Field::from_fn(g, |x| 2.0 + (PI * x).cos()),
            Kernel::blind(Field::from_fn(g, |y| 1.0 + y)).unwrap(),
            2.0,
        )
        .unwrap();
        let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
        let base = blind_steady(&eig, &pr).unwrap();
        for c in [0.01, 3.0, 250.0] {
            let scaled = EigenPair {
                phi1: eig.phi1.scaled(c),
                ..eig.clone()
            };
            let st = blind_steady(&scaled, &pr).unwrap();
            assert!(st.ubar.distance_sup(&base.ubar) <= 1e-10);
            assert!((st.mu.unwrap() * c - base.mu.unwrap()).abs() <= 1e-10 * base.mu.unwrap());
        }
    }

    #[test]
    fn dichotomy_in_constant_growth_rate() {
        let g = unit(16);
        for c in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            let pr = blind_problem(g, Field::constant(g, c), 1.0);
            let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
            let res = blind_steady(&eig, &pr);
            assert_eq!(res.is_err(), eig.lambda1 >= 0.0, "c = {c}");
        }
    }

    #[test]
    fn homotopy_with_blind_rows_matches_closed_form() {
        let g = unit(48);
        let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x)).unwrap();
        let r = Field::from_fn(g, |x| 2.0 + (PI * x).cos());
        let general = Kernel::general(KernelMatrix::from_fn(&g, |_, y| 1.0 + y)).unwrap();
        let pr = Problem::new(op.clone(), r.clone(), general, 1.0).unwrap();
        let blind = Problem::new(
            op,
            r,
            Kernel::blind(Field::from_fn(g, |y| 1.0 + y)).unwrap(),
            1.0,
        )
        .unwrap();
        let eig = principal_eigenpair(&blind.op, &blind.r, 1e-10).unwrap();
        let closed = blind_steady(&eig, &blind).unwrap();
        let mut opts = HomotopyOptions::new(48);
        opts.tol = 1e-10;
        let h = homotopy_steady(&pr, &opts).unwrap();
        assert_eq!(h.homotopy_trace.len(), 11);
        assert!(h.ubar.distance_sup(&closed.ubar) <= 1e-8);
    }

    #[test]
    fn homotopy_solves_general_kernel() {
        let g = unit(64);
        let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x)).unwrap();
        let r = Field::from_fn(g, |x| 2.0 + (PI * x).cos());
        let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| {
            1.0 + 0.5 * (PI * x).cos() * y
        }))
        .unwrap();
        let pr = Problem::new(op, r, k, 2.0).unwrap();
        let h = homotopy_steady(&pr, &HomotopyOptions::new(64)).unwrap();
        assert!(h.residual <= 1e-8 && h.ubar.min() > 0.0);
        let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
        assert!(apriori_check(&h.ubar, &pr, &eig).all_ok());
    }

    #[test]
    fn homotopy_reports_extinction_branch() {
        let g = unit(16);
        let op = DiffusionOperator::from_cells(&Field::constant(g, 1.0)).unwrap();
        let k = Kernel::general(KernelMatrix::from_fn(&g, |_, _| 1.0)).unwrap();
        let pr = Problem::new(op, Field::constant(g, -0.5), k, 1.0).unwrap();
        assert!(matches!(
            homotopy_steady(&pr, &HomotopyOptions::new(16)),
            Err(Error::NoPositiveSteadyState(_))
        ));
        let mut bad = HomotopyOptions::new(16);
        bad.schedule = vec![0.0, 0.5];
        assert!(homotopy_steady(&pr, &bad).is_err());
    }

    #[test]
    fn apriori_bounds_in_constant_case() {
        let g = unit(32);
        let pr = blind_problem(g, Field::constant(g, 2.0), 1.0);
        let eig = principal_eigenpair(&pr.op, &pr.r, 1e-10).unwrap();
        let st = blind_steady(&eig, &pr).unwrap();
        let rep = apriori_check(&st.ubar, &pr, &eig);
        assert!(rep.all_ok());
        assert!((rep.integral_p - 2.0).abs() < 1e-12 && (rep.upper_bound - 2.0).abs() < 1e-12);
        let zero = apriori_check(&Field::zeros(g), &pr, &eig);
        assert!(!zero.positive);
        let (lo, hi) = sweep_bounds(&[st.ubar.clone(), st.ubar.scaled(2.0)]);
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }
}
