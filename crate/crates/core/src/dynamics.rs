//! Time integration of `u_t = u (r - Psi(x, u)) + d/dx(A u_x)` by Lie splitting:
//! an exact exponential reaction step followed by implicit diffusion.

use crate::entropy::{sample_entropy, EntropySample};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::operator::{solve_tridiagonal, DiffusionOperator};
use crate::selection::{psi, Kernel};

/// Sup-norm above which a run is declared to have blown up.
pub const BLOW_UP: f64 = 1e12;

/// Coefficients of the equation on a fixed grid.
#[derive(Clone, Debug)]
pub struct Problem {
    pub op: DiffusionOperator,
    pub r: Field,
    pub kernel: Kernel,
    pub p: f64,
}

impl Problem {
    pub fn new(op: DiffusionOperator, r: Field, kernel: Kernel, p: f64) -> Result<Self> {
        let n = op.grid().len();
        if r.len() != n || kernel.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: if r.len() != n { r.len() } else { kernel.len() },
            });
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "selection exponent must be >= 1, got {p}"
            )));
        }
        Ok(Self { op, r, kernel, p })
    }

    pub fn grid(&self) -> &Grid1D {
        self.op.grid()
    }

    pub fn psi(&self, u: &Field) -> Field {
        psi(&self.kernel, u, self.p)
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub enum Target {
    /// Stop when `||u - ubar||_inf <= tol`.
    Steady(Field),
    /// Stop when `||u||_inf <= tol`.
    Extinction,
    /// Stop when `||u_{k+1} - u_k||_inf / dt <= tol`.
    Stationary,
    None,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Steady(_) => "steady",
            Target::Extinction => "extinction",
            Target::Stationary => "stationary",
            Target::None => "none",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Convergence {
    pub target: Target,
    pub tol: f64,
}

/// Reference state and exponents for the entropy diagnostics.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub reference: Field,
    pub qs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub u0: Field,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub convergence: Convergence,
    pub diagnostics: Option<Diagnostics>,
    /// Keep every recorded state, not just the last one.
    pub keep_trajectory: bool,
}

impl SimConfig {
    pub fn new(u0: Field, dt: f64, t_end: f64) -> Self {
        Self {
            u0,
            dt,
            t_end,
            record_every: 1,
            convergence: Convergence {
                target: Target::None,
                tol: 0.0,
            },
            diagnostics: None,
            keep_trajectory: false,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.u0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.u0.len(),
            });
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument(
                "record_every must be at least 1".into(),
            ));
        }
        if !(self.u0.min() >= 0.0) {
            return Err(Error::InvalidArgument(
                "initial datum must be nonnegative".into(),
            ));
        }
        if self.u0.sup_norm() == 0.0 {
            return Err(Error::InvalidArgument(
                "initial datum must not vanish identically".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    /// Recorded states; only the final one unless `keep_trajectory` is set.
    pub trajectory: Vec<SimState>,
    pub diagnostics: Vec<EntropySample>,
    pub converged: bool,
    pub t_final: f64,
    /// Distance to the convergence target at the final time.
    pub distance: f64,
    pub final_state: SimState,
}

/// `(I - dt L)` factored into its three bands.
#[derive(Clone, Debug)]
pub struct ImplicitDiffusion {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl ImplicitDiffusion {
    pub fn new(op: &DiffusionOperator, dt: f64) -> Self {
        let (lower, diag, upper) = op.bands();
        Self {
            lower: lower.iter().map(|v| -dt * v).collect(),
            diag: diag.iter().map(|v| 1.0 - dt * v).collect(),
            upper: upper.iter().map(|v| -dt * v).collect(),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        solve_tridiagonal(&self.lower, &self.diag, &self.upper, rhs)
    }
}

/// One splitting step with a given selection pressure.
pub fn step_frozen(
    problem: &Problem,
    implicit: &ImplicitDiffusion,
    state: &SimState,
    psi: &Field,
    dt: f64,
) -> Result<SimState> {
    let reacted: Vec<f64> = state
        .u
        .values()
        .iter()
        .zip(problem.r.values())
        .zip(psi.values())
        .map(|((u, r), s)| u * (dt * (r - s)).exp())
        .collect();
    let next = implicit.solve(&reacted)?;
    let step = state.step + 1;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step });
    }
    Ok(SimState {
        t: step as f64 * dt,
        u: Field::new(*problem.grid(), next)?,
        step,
    })
}

/// One IMEX step `u* = u exp(dt (r - Psi(u)))`, `(I - dt L) u_new = u*`.
pub fn step_imex(problem: &Problem, state: &SimState, dt: f64) -> Result<SimState> {
    let implicit = ImplicitDiffusion::new(&problem.op, dt);
    step_frozen(problem, &implicit, state, &problem.psi(&state.u), dt)
}

fn record(
    problem: &Problem,
    cfg: &SimConfig,
    state: &SimState,
    out_traj: &mut Vec<SimState>,
    out_diag: &mut Vec<EntropySample>,
) -> Result<()> {
    if let Some(d) = &cfg.diagnostics {
        out_diag.push(sample_entropy(
            state.t,
            &state.u,
            &d.reference,
            &d.qs,
            problem,
        )?);
    }
    if cfg.keep_trajectory {
        out_traj.push(state.clone());
    }
    Ok(())
}

/// Integrates to `t_end` or until the convergence target is met.
pub fn simulate(problem: &Problem, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate(problem.grid().len())?;
    let dt = cfg.dt;
    let implicit = ImplicitDiffusion::new(&problem.op, dt);
    let steps = cfg.steps();
    let tol = cfg.convergence.tol;
    let mut trajectory = Vec::new();
    let mut diagnostics = Vec::new();
    let mut state = SimState {
        t: 0.0,
        u: cfg.u0.clone(),
        step: 0,
    };
    record(problem, cfg, &state, &mut trajectory, &mut diagnostics)?;
    let distance = |s: &SimState, prev: &Field| match &cfg.convergence.target {
        Target::Steady(ubar) => s.u.distance_sup(ubar),
        Target::Extinction => s.u.sup_norm(),
        Target::Stationary | Target::None => s.u.distance_sup(prev) / dt,
    };
    let mut dist = distance(&state, &state.u);
    let mut converged = false;
    for _ in 0..steps {
        let psi = problem.psi(&state.u);
        let next = step_frozen(problem, &implicit, &state, &psi, dt)?;
        let sup = next.u.sup_norm();
        if sup > BLOW_UP {
            return Err(Error::BlowUp { t: next.t, sup });
        }
        dist = distance(&next, &state.u);
        state = next;
        converged = !matches!(cfg.convergence.target, Target::None) && dist <= tol;
        if state.step.is_multiple_of(cfg.record_every) || converged || state.step == steps {
            record(problem, cfg, &state, &mut trajectory, &mut diagnostics)?;
        }
        if converged {
            break;
        }
    }
    if !cfg.keep_trajectory {
        trajectory.push(state.clone());
    }
    Ok(SimOutput {
        trajectory,
        diagnostics,
        converged,
        t_final: state.t,
        distance: dist,
        final_state: state,
    })
}

/// Recursive construction where round `n + 1` solves the linear problem with the
/// selection pressure frozen along round `n`, starting from `u_0(t, x) = u_0(x)`.
/// Returns the value at `t_end` of every round.
pub fn frozen_nonlocal_iteration(
    problem: &Problem,
    cfg: &SimConfig,
    n_outer: usize,
) -> Result<Vec<Field>> {
    cfg.validate(problem.grid().len())?;
    if n_outer == 0 {
        return Err(Error::InvalidArgument("n_outer must be at least 1".into()));
    }
    let dt = cfg.dt;
    let implicit = ImplicitDiffusion::new(&problem.op, dt);
    let steps = cfg.steps();
    let mut frozen = vec![problem.psi(&cfg.u0); steps];
    let mut finals = Vec::with_capacity(n_outer);
    for _ in 0..n_outer {
        let mut state = SimState {
            t: 0.0,
            u: cfg.u0.clone(),
            step: 0,
        };
        let mut next_frozen = Vec::with_capacity(steps);
        for psi_k in &frozen {
            next_frozen.push(problem.psi(&state.u));
            state = step_frozen(problem, &implicit, &state, psi_k, dt)?;
            let sup = state.u.sup_norm();
            if sup > BLOW_UP {
                return Err(Error::BlowUp { t: state.t, sup });
            }
        }
        frozen = next_frozen;
        finals.push(state.u);
    }
    Ok(finals)
}
