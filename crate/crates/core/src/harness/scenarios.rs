//! Scenario runners composing the numerical modules into reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::Config;
use super::io::{read_trajectory_csv, write_fields, write_series, write_snapshots, write_table};
use super::report::{config_hash, number, numbers, Report};
use super::rng::{random_positive_field, seeded_rng};
use crate::coeff::{CoefficientSpec, KernelSpec};
use crate::dynamics::{simulate, Convergence, Diagnostics, Problem, SimConfig, SimState, Target};
use crate::entropy::{identity_residual, max_f_increase, sample_entropy, IdentityCheck};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};
use crate::operator::{assemble_diffusion, DiffusionOperator};
use crate::selection::{Kernel, KernelMatrix};
use crate::spectral::{principal_eigenpair, spectral_gap_with, EigenPair, DEFAULT_TOL_EIG};
use crate::steady::{
    apriori_check, blind_steady, homotopy_steady, sweep_bounds, HomotopyOptions, SteadyState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Eig,
    Gap,
    Simulate,
    Steady,
    EntropyCheck,
    EpsilonSweep,
    ConvergenceStudy,
    Dichotomy,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Eig => "eig",
            Scenario::Gap => "gap",
            Scenario::Simulate => "simulate",
            Scenario::Steady => "steady",
            Scenario::EntropyCheck => "entropy_check",
            Scenario::EpsilonSweep => "epsilon_sweep",
            Scenario::ConvergenceStudy => "convergence_study",
            Scenario::Dichotomy => "dichotomy",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts both config names and subcommand names.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "eig" => Scenario::Eig,
            "gap" => Scenario::Gap,
            "simulate" => Scenario::Simulate,
            "steady" => Scenario::Steady,
            "entropy_check" | "entropy" => Scenario::EntropyCheck,
            "epsilon_sweep" | "sweep" => Scenario::EpsilonSweep,
            "convergence_study" | "convergence" => Scenario::ConvergenceStudy,
            "dichotomy" => Scenario::Dichotomy,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown scenario `{other}`"
                )))
            }
        })
    }
}

/// A parsed config plus the run-time choices made on the command line.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub config: Config,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub traj: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Uses the `scenario` key of the config.
    pub fn from_config(config: Config) -> Result<Self> {
        let name = config
            .str("scenario")
            .ok_or_else(|| Error::config(0, "missing required key `scenario`"))?;
        let scenario = name
            .parse()
            .map_err(|e: Error| Error::config(config.line("scenario"), e.to_string()))?;
        Self::with_scenario(scenario, config)
    }

    /// Runs `scenario`; a `scenario` key in the config must agree with it.
    pub fn with_scenario(scenario: Scenario, config: Config) -> Result<Self> {
        if let Some(name) = config.str("scenario") {
            let declared: Scenario = name
                .parse()
                .map_err(|e: Error| Error::config(config.line("scenario"), e.to_string()))?;
            if declared != scenario {
                return Err(Error::config(
                    config.line("scenario"),
                    format!("config is for `{declared}`, not `{scenario}`"),
                ));
            }
        }
        let seed = config.u64("seed")?.unwrap_or(0);
        let out_dir = PathBuf::from(config.str("output.dir").unwrap_or("out"));
        Ok(Self {
            scenario,
            config,
            out_dir,
            seed,
            traj: None,
        })
    }

    fn hash(&self) -> String {
        let mut overrides = vec![("seed", self.seed.to_string())];
        if let Some(t) = &self.traj {
            overrides.push(("traj", t.display().to_string()));
        }
        config_hash(self.config.text(), &overrides)
    }
}

/// Thread pool honoring `MUTSEL_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MUTSEL_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "MUTSEL_THREADS must be a positive integer, got `{v}`"
            ))
        })?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn run(exp: &ExperimentConfig) -> Result<Report> {
    std::fs::create_dir_all(&exp.out_dir)?;
    let mut report = Report::new(exp.scenario.name(), exp.hash());
    let result = match exp.scenario {
        Scenario::Eig => run_eig(exp, &mut report),
        Scenario::Gap => run_gap(exp, &mut report),
        Scenario::Simulate => run_simulate(exp, &mut report),
        Scenario::Steady => run_steady(exp, &mut report),
        Scenario::EntropyCheck => run_entropy(exp, &mut report),
        Scenario::EpsilonSweep => run_sweep(exp, &mut report),
        Scenario::ConvergenceStudy => run_convergence(exp, &mut report),
        Scenario::Dichotomy => run_dichotomy(exp, &mut report),
    };
    result.map_err(|e| match e {
        Error::Config { .. } => e,
        other => other.in_scenario(exp.scenario.name()),
    })?;
    report.write(&exp.out_dir)?;
    Ok(report)
}

pub fn build_grid(cfg: &Config) -> Result<Grid1D> {
    let a = cfg.f64_or("grid.a", 0.0)?;
    let b = cfg.f64_or("grid.b", 1.0)?;
    let n = cfg.usize_or("grid.n", 128)?;
    Grid1D::new(a, b, n).map_err(|e| Error::config(cfg.line("grid.n"), e.to_string()))
}

fn kernel_spec(cfg: &Config) -> Result<KernelSpec> {
    let k = cfg.kernel()?;
    cfg.require("kernel", k)
}

/// Problem from the config, optionally with a replaced growth rate or kernel.
pub fn build_problem(
    cfg: &Config,
    grid: Grid1D,
    r: Option<&CoefficientSpec>,
    kernel: Option<&KernelSpec>,
) -> Result<Problem> {
    let a = cfg
        .coeff("coeff.A")?
        .unwrap_or_else(|| CoefficientSpec::constant(1.0));
    let op = assemble_diffusion(&grid, &a)
        .map_err(|e| Error::config(cfg.line("coeff.A"), e.to_string()))?;
    let r_spec = match r {
        Some(r) => r.clone(),
        None => {
            let r = cfg.coeff("coeff.r")?;
            cfg.require("coeff.r", r)?
        }
    };
    let r = r_spec
        .sample(&grid)
        .map_err(|e| Error::config(cfg.line("coeff.r"), e.to_string()))?;
    let kspec = match kernel {
        Some(k) => k.clone(),
        None => kernel_spec(cfg)?,
    };
    let kernel = Kernel::from_spec(&kspec, &grid, cfg.base_dir())
        .map_err(|e| Error::config(cfg.line("kernel"), e.to_string()))?;
    let p = cfg.f64_or("selection.p", 1.0)?;
    Problem::new(op, r, kernel, p)
        .map_err(|e| Error::config(cfg.line("selection.p"), e.to_string()))
}

fn eigenpair(cfg: &Config, problem: &Problem) -> Result<EigenPair> {
    principal_eigenpair(
        &problem.op,
        &problem.r,
        cfg.f64_or("tol.eig", DEFAULT_TOL_EIG)?,
    )
}

pub fn homotopy_options(cfg: &Config, n: usize) -> Result<HomotopyOptions> {
    let mut o = HomotopyOptions::new(n);
    if let Some(s) = cfg.f64_list("steady.schedule")? {
        o.schedule = s;
    }
    o.x0 = cfg.usize_or("steady.x0", o.x0)?;
    o.tol = cfg.f64_or("steady.tol", o.tol)?;
    o.theta_max = cfg.f64_or("steady.theta_max", o.theta_max)?;
    o.max_iterations = cfg.usize_or("steady.max_iterations", o.max_iterations)?;
    Ok(o)
}

/// Closed form for blind kernels, continuation otherwise (or as configured).
pub fn steady_state(cfg: &Config, problem: &Problem, eig: &EigenPair) -> Result<SteadyState> {
    let method = cfg.str("steady.method").unwrap_or("auto");
    match method {
        "auto" if problem.kernel.is_blind() => blind_steady(eig, problem),
        "blind" => blind_steady(eig, problem),
        "auto" | "homotopy" => {
            homotopy_steady(problem, &homotopy_options(cfg, problem.grid().len())?)
        }
        other => Err(Error::config(
            cfg.line("steady.method"),
            format!("steady.method must be auto, blind or homotopy, got `{other}`"),
        )),
    }
}

fn initial_datum(cfg: &Config, grid: Grid1D, seed: u64) -> Result<Field> {
    match cfg.str("dynamics.u0") {
        Some("random") => {
            let scale = cfg.f64_or("dynamics.u0_scale", 1.0)?;
            Ok(random_positive_field(grid, &mut seeded_rng(seed), scale))
        }
        Some(_) => {
            let spec = cfg.coeff("dynamics.u0")?.expect("present");
            spec.sample(&grid)
        }
        None => Err(Error::config(0, "missing required key `dynamics.u0`")),
    }
}

fn qs(cfg: &Config) -> Result<Vec<f64>> {
    let mut qs = cfg
        .f64_list("entropy.q")?
        .unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
    if let Some(bad) = qs.iter().find(|q| **q < 1.0) {
        return Err(Error::config(
            cfg.line("entropy.q"),
            format!("entropy exponents must be >= 1, got {bad}"),
        ));
    }
    qs.extend([1.0, 2.0]);
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    Ok(qs)
}

fn sim_config(cfg: &Config, u0: Field) -> Result<SimConfig> {
    let dt = cfg.f64("dynamics.dt")?;
    let t_end = cfg.f64("dynamics.t_end")?;
    let mut sc = SimConfig::new(
        u0,
        cfg.require("dynamics.dt", dt)?,
        cfg.require("dynamics.t_end", t_end)?,
    );
    sc.record_every = cfg.usize_or("dynamics.record_every", 10)?;
    Ok(sc)
}

fn expect_close(
    report: &mut Report,
    cfg: &Config,
    key: &str,
    name: &str,
    value: f64,
    rel: bool,
) -> Result<()> {
    if let Some(want) = cfg.f64(key)? {
        let ok = if rel {
            let tol = cfg.f64_or("expect.rel_tol", 5e-3)?;
            (value / want - 1.0).abs() <= tol
        } else {
            let tol = cfg.f64_or("expect.abs_tol", 1e-9)?;
            (value - want).abs() <= tol
        };
        report.verdict(name, ok);
    }
    Ok(())
}

fn run_eig(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let grid = build_grid(cfg)?;
    let problem = build_problem(cfg, grid, None, None)?;
    let eig = eigenpair(cfg, &problem)?;
    report.num("lambda1", eig.lambda1);
    report.num("min_phi1", eig.phi1.min());
    report.num("residual", eig.residual);
    report.set("iterations", json!(eig.iterations));
    report.verdict("phi1_positive", eig.phi1.min() > 0.0);
    expect_close(
        report,
        cfg,
        "expect.lambda1",
        "lambda1_matches",
        eig.lambda1,
        false,
    )?;
    let path = exp.out_dir.join("eigenfunction.csv");
    write_fields(&path, &grid, &[("phi1", &eig.phi1)])?;
    report.file(&path);
    Ok(())
}

fn run_gap(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let grid = build_grid(cfg)?;
    let a = cfg
        .coeff("coeff.A")?
        .unwrap_or_else(|| CoefficientSpec::constant(1.0));
    let op = assemble_diffusion(&grid, &a)?;
    let vbar = match cfg.str("gap.vbar") {
        Some("steady") => {
            let problem = build_problem(cfg, grid, None, None)?;
            let eig = eigenpair(cfg, &problem)?;
            steady_state(cfg, &problem, &eig)?.ubar
        }
        Some(_) => cfg.coeff("gap.vbar")?.expect("present").sample(&grid)?,
        None => Field::constant(grid, 1.0),
    };
    let gap = spectral_gap_with(&vbar, &op)?;
    report.num("rho1", gap.rho1);
    report.num("residual", gap.residual);
    report.set("iterations", json!(gap.iterations));
    let orth = gap.psi2.dot(&vbar).abs();
    report.num("psi2_vbar_inner", orth);
    report.verdict("rho1_positive", gap.rho1 > 0.0);
    report.verdict(
        "psi2_orthogonal",
        orth <= 1e-8 * gap.psi2.norm_l2() * vbar.norm_l2(),
    );
    expect_close(report, cfg, "expect.rho1", "rho1_matches", gap.rho1, true)?;
    let path = exp.out_dir.join("gap.csv");
    write_fields(&path, &grid, &[("vbar", &vbar), ("psi2", &gap.psi2)])?;
    report.file(&path);
    Ok(())
}

/// Positive steady state when one exists, otherwise the principal eigenfunction.
fn reference(
    cfg: &Config,
    problem: &Problem,
    eig: &EigenPair,
) -> Result<(Field, Option<SteadyState>)> {
    if eig.lambda1 < 0.0 {
        let st = steady_state(cfg, problem, eig)?;
        Ok((st.ubar.clone(), Some(st)))
    } else {
        Ok((eig.phi1.clone(), None))
    }
}

fn run_simulate(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let grid = build_grid(cfg)?;
    let problem = build_problem(cfg, grid, None, None)?;
    let eig = eigenpair(cfg, &problem)?;
    let (reference, steady) = reference(cfg, &problem, &eig)?;
    let mut sc = sim_config(cfg, initial_datum(cfg, grid, exp.seed)?)?;
    let tol = cfg.f64_or("convergence.tol", 1e-4)?;
    let target_name = cfg.str("convergence.target").unwrap_or("none");
    let target = match target_name {
        "steady" | "steady_blind" | "steady_general" => match &steady {
            Some(st) => Target::Steady(st.ubar.clone()),
            None => return Err(Error::NoPositiveSteadyState(eig.lambda1)),
        },
        "extinction" => Target::Extinction,
        "stationary" => Target::Stationary,
        "none" => Target::None,
        other => {
            return Err(Error::config(
                cfg.line("convergence.target"),
                format!("unknown convergence target `{other}`"),
            ))
        }
    };
    let has_target = !matches!(target, Target::None);
    sc.convergence = Convergence { target, tol };
    let qs = qs(cfg)?;
    sc.diagnostics = Some(Diagnostics {
        reference: reference.clone(),
        qs: qs.clone(),
    });
    sc.keep_trajectory = cfg.bool("output.snapshots")?.unwrap_or(false);
    let out = simulate(&problem, &sc)?;

    report.set("converged", json!(out.converged));
    report.set("target", json!(target_name));
    report.num("t_final", out.t_final);
    report.num("distance_to_target", out.distance);
    report.num("lambda1", eig.lambda1);
    report.num("min_u", out.final_state.u.min());
    report.num("sup_u", out.final_state.u.sup_norm());
    if let Some(last) = out.diagnostics.last() {
        report.num("final_h_norm2", last.h_norm2);
        report.num("final_lambda", last.lambda);
    }
    if has_target {
        report.verdict("converged", out.converged);
    }
    report.verdict("positive", out.final_state.u.min() >= 0.0);
    if steady.is_some() {
        for &q in qs.iter().filter(|&&q| q > 1.0) {
            let inc = max_f_increase(&out.diagnostics, q);
            report.num(&format!("max_F_increase_q{q}"), inc);
            if problem.kernel.is_blind() {
                report.verdict(&format!("F_monotone_q{q}"), inc <= 1e-8);
            }
        }
    }

    let series = exp.out_dir.join("timeseries.csv");
    write_series(&series, &out.diagnostics)?;
    report.file(&series);
    let fin = exp.out_dir.join("final.csv");
    write_fields(
        &fin,
        &grid,
        &[("u", &out.final_state.u), ("reference", &reference)],
    )?;
    report.file(&fin);
    if sc.keep_trajectory {
        let snaps = exp.out_dir.join("snapshots.csv");
        write_snapshots(&snaps, &out.trajectory)?;
        report.file(&snaps);
    }
    Ok(())
}

fn run_steady(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let grid = build_grid(cfg)?;
    let problem = build_problem(cfg, grid, None, None)?;
    let eig = eigenpair(cfg, &problem)?;
    let expect_exists = cfg.bool("expect.exists")?.unwrap_or(true);
    report.num("lambda1", eig.lambda1);
    let st = match steady_state(cfg, &problem, &eig) {
        Err(Error::NoPositiveSteadyState(l)) => {
            report.set("exists", json!(false));
            report.set("error", json!(Error::NoPositiveSteadyState(l).to_string()));
            report.verdict("existence_matches", !expect_exists);
            return Ok(());
        }
        other => other?,
    };
    report.set("exists", json!(true));
    report.verdict("existence_matches", expect_exists);
    report.set("method", json!(st.method.name()));
    report.num("residual", st.residual);
    if let Some(mu) = st.mu {
        report.num("mu", mu);
    }
    let trace: Vec<Value> = st
        .homotopy_trace
        .iter()
        .map(|s| json!({"s": number(s.s), "iterations": s.iterations, "residual": number(s.residual)}))
        .collect();
    report.set("homotopy_trace", Value::Array(trace));
    let ap = apriori_check(&st.ubar, &problem, &eig);
    report.num("integral_ubar_p", ap.integral_p);
    report.num("apriori_upper", ap.upper_bound);
    report.num("apriori_lower", ap.lower_bound);
    report.num("min_ubar", ap.min);
    report.num("max_ubar", ap.max);
    let tol = cfg.f64_or("steady.tol", 1e-8)?;
    report.verdict("residual_ok", st.residual <= tol);
    report.verdict("positive", ap.positive);
    report.verdict("apriori_upper", ap.upper_ok);
    report.verdict("apriori_lower", ap.lower_ok);
    let path = exp.out_dir.join("steady.csv");
    write_fields(&path, &grid, &[("ubar", &st.ubar)])?;
    report.file(&path);
    Ok(())
}

/// Summary of the entropy checks along one trajectory.
#[derive(Clone, Debug)]
pub struct EntropyVerdict {
    pub identity: IdentityCheck,
    pub max_f_increase: Vec<(f64, f64)>,
    pub rho1: f64,
    /// Smallest `D_h / (rho1 |h|^2)` over snapshots with `h != 0`.
    pub gap_ratio_min: f64,
    pub h_norms: Vec<f64>,
}

/// Identity residual, Lyapunov monotonicity and spectral-gap bound along `traj`.
pub fn check_entropy(
    traj: &[SimState],
    problem: &Problem,
    ubar: &Field,
    qs: &[f64],
    identity_q: f64,
    stationary_tol: f64,
) -> Result<EntropyVerdict> {
    let identity = identity_residual(traj, identity_q, ubar, problem, stationary_tol)?;
    let samples = traj
        .iter()
        .map(|s| sample_entropy(s.t, &s.u, ubar, qs, problem))
        .collect::<Result<Vec<_>>>()?;
    let max_f_increase = qs
        .iter()
        .filter(|&&q| q > 1.0)
        .map(|&q| (q, max_f_increase(&samples, q)))
        .collect();
    let rho1 = spectral_gap_with(ubar, &problem.op)?.rho1;
    let gap_ratio_min = samples
        .iter()
        .filter(|s| s.h_norm2 > 0.0)
        .map(|s| s.h_dirichlet / (rho1 * s.h_norm2 * s.h_norm2))
        .fold(f64::INFINITY, f64::min);
    Ok(EntropyVerdict {
        identity,
        max_f_increase,
        rho1,
        gap_ratio_min,
        h_norms: samples.iter().map(|s| s.h_norm2).collect(),
    })
}

fn run_entropy(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let grid = build_grid(cfg)?;
    let problem = build_problem(cfg, grid, None, None)?;
    let eig = eigenpair(cfg, &problem)?;
    let st = steady_state(cfg, &problem, &eig)?;
    let traj = match &exp.traj {
        Some(path) => read_trajectory_csv(&std::fs::read_to_string(path)?, grid)?,
        None => {
            let mut sc = sim_config(cfg, initial_datum(cfg, grid, exp.seed)?)?;
            sc.keep_trajectory = true;
            simulate(&problem, &sc)?.trajectory
        }
    };
    let qs = qs(cfg)?;
    let q_id = cfg.f64_or("entropy.identity_q", 2.0)?;
    let stat_tol = cfg.f64_or("tol.stationary", 1e-8)?;
    let v = check_entropy(&traj, &problem, &st.ubar, &qs, q_id, stat_tol)?;
    let max_res = v.identity.max_residual();
    let max_rate = v.identity.max_rate();
    let rel_tol = cfg.f64_or("entropy.identity_rel_tol", 1e-3)?;
    let slack = cfg.f64_or("entropy.gap_slack", 5e-2)?;
    let f_monotone = v.max_f_increase.iter().all(|(_, inc)| *inc <= 1e-8);
    let gap_ok = v.gap_ratio_min >= 1.0 - slack;
    report.num("max_residual", max_res);
    report.num("max_dHdt", max_rate);
    report.num("residual_ratio", max_res / max_rate);
    report.num("rho1", v.rho1);
    report.num("gap_ratio_min", v.gap_ratio_min);
    report.set("F_monotone", json!(f_monotone));
    report.set("gap_bound_ok", json!(gap_ok));
    report.set("snapshots", json!(traj.len()));
    report.verdict("identity_residual", max_res <= rel_tol * max_rate);
    report.verdict("gap_bound", gap_ok);
    if problem.kernel.is_blind() {
        report.verdict("F_monotone", f_monotone);
    }
    let rows: Vec<Vec<f64>> = v
        .identity
        .times
        .iter()
        .zip(&v.identity.residuals)
        .zip(&v.identity.dhdt)
        .map(|((t, r), d)| vec![*t, *r, *d])
        .collect();
    let path = exp.out_dir.join("identity_residual.csv");
    write_table(&path, &["t", "residual", "dHdt"], &rows)?;
    report.file(&path);
    Ok(())
}

/// Results of the perturbation sweep for one exponent.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub p: f64,
    pub eps: Vec<f64>,
    /// Largest pairwise sup distance between the long-time states per `eps`.
    pub pairwise: Vec<f64>,
    /// `||ubar_eps - ubar_0||_inf / eps`.
    pub slopes: Vec<f64>,
    pub gaps: Vec<f64>,
    pub gap0: f64,
    /// Sup distance between dynamics and continuation per `eps`.
    pub dynamics_vs_steady: Vec<f64>,
    pub bounds: (f64, f64),
}

impl SweepResult {
    pub fn slope_spread(&self) -> f64 {
        let lo = self.slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .slopes
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        hi / lo - 1.0
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Perturbed-kernel sweep: `seeds` random starts per `eps`, each run to `t_end`.
pub fn epsilon_sweep(
    cfg: &Config,
    p: f64,
    eps: &[f64],
    seeds: usize,
    base_seed: u64,
) -> Result<SweepResult> {
    let grid = build_grid(cfg)?;
    let KernelSpec::Perturbed { k0, k1, .. } = kernel_spec(cfg)? else {
        return Err(Error::config(
            cfg.line("kernel"),
            "epsilon sweep needs a perturbed kernel",
        ));
    };
    let with_eps = |e: f64| -> Result<Problem> {
        let spec = KernelSpec::Perturbed {
            k0: k0.clone(),
            k1: k1.clone(),
            eps: e,
        };
        let mut pr = build_problem(cfg, grid, None, Some(&spec))?;
        pr.p = p;
        Ok(pr)
    };
    let blind = {
        let mut pr = build_problem(cfg, grid, None, Some(&KernelSpec::Blind(k0.clone())))?;
        pr.p = p;
        pr
    };
    let eig = eigenpair(cfg, &blind)?;
    let ubar0 = blind_steady(&eig, &blind)?.ubar;
    let gap0 = spectral_gap_with(&ubar0, &blind.op)?.rho1;
    let scale = cfg.f64_or("dynamics.u0_scale", 1.0)?;

    let jobs: Vec<(usize, usize)> = (0..eps.len())
        .flat_map(|i| (0..seeds).map(move |s| (i, s)))
        .collect();
    let pool = thread_pool()?;
    let finals: Vec<Result<Field>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| {
                let pr = with_eps(eps[i])?;
                let seed = base_seed.wrapping_add(1 + s as u64);
                let u0 = random_positive_field(grid, &mut seeded_rng(seed), scale);
                let sc = sim_config(cfg, u0)?;
                Ok(simulate(&pr, &sc)?.final_state.u)
            })
            .collect()
    });
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let steadies: Vec<Result<Field>> = pool.install(|| {
        eps.par_iter()
            .map(|&e| {
                let pr = with_eps(e)?;
                Ok(homotopy_steady(&pr, &homotopy_options(cfg, grid.len())?)?.ubar)
            })
            .collect()
    });
    let steadies = steadies.into_iter().collect::<Result<Vec<_>>>()?;

    let mut pairwise = Vec::new();
    let mut dynamics_vs_steady = Vec::new();
    for (i, ub) in steadies.iter().enumerate() {
        let runs = &finals[i * seeds..(i + 1) * seeds];
        let mut worst = 0.0f64;
        for a in 0..runs.len() {
            for b in a + 1..runs.len() {
                worst = worst.max(runs[a].distance_sup(&runs[b]));
            }
        }
        pairwise.push(worst);
        dynamics_vs_steady.push(runs.iter().map(|u| u.distance_sup(ub)).fold(0.0, f64::max));
    }
    let slopes = steadies
        .iter()
        .zip(eps)
        .map(|(u, e)| u.distance_sup(&ubar0) / e)
        .collect();
    let gaps = steadies
        .iter()
        .map(|u| Ok(spectral_gap_with(u, &blind.op)?.rho1))
        .collect::<Result<Vec<_>>>()?;
    let mut all = steadies.clone();
    all.push(ubar0);
    Ok(SweepResult {
        p,
        eps: eps.to_vec(),
        pairwise,
        slopes,
        gaps,
        gap0,
        dynamics_vs_steady,
        bounds: sweep_bounds(&all),
    })
}

fn run_sweep(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let eps = cfg
        .f64_list("sweep.eps")?
        .unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::config(
            cfg.line("sweep.eps"),
            "sweep.eps values must be positive",
        ));
    }
    let ps = match cfg.f64_list("sweep.p")? {
        Some(ps) => ps,
        None => vec![cfg.f64_or("selection.p", 1.0)?],
    };
    let seeds = cfg.usize_or("sweep.seeds", 3)?;
    let pair_tol = cfg.f64_or("sweep.pair_tol", 2.0 * cfg.f64_or("convergence.tol", 1e-4)?)?;
    let spread_tol = cfg.f64_or("sweep.slope_spread", 0.25)?;
    let gap_ratio = cfg.f64_or("sweep.gap_ratio", 0.9)?;
    let mut rows = Vec::new();
    for &p in &ps {
        let r = epsilon_sweep(cfg, p, &eps, seeds, exp.seed)?;
        let tag = format!("p{p}");
        report.set(&format!("{tag}_pairwise"), numbers(&r.pairwise));
        report.set(&format!("{tag}_slopes"), numbers(&r.slopes));
        report.set(&format!("{tag}_gaps"), numbers(&r.gaps));
        report.num(&format!("{tag}_gap0"), r.gap0);
        report.set(
            &format!("{tag}_dynamics_vs_steady"),
            numbers(&r.dynamics_vs_steady),
        );
        report.num(&format!("{tag}_min_ubar"), r.bounds.0);
        report.num(&format!("{tag}_max_ubar"), r.bounds.1);
        report.verdict(
            &format!("{tag}_pairwise"),
            r.pairwise.iter().all(|d| *d <= pair_tol),
        );
        report.verdict(
            &format!("{tag}_slope_spread"),
            r.slope_spread() <= spread_tol,
        );
        report.verdict(
            &format!("{tag}_gap_uniform"),
            r.min_gap() >= gap_ratio * r.gap0,
        );
        report.verdict(
            &format!("{tag}_bounds"),
            r.bounds.0 > 0.0 && r.bounds.1.is_finite(),
        );
        for (i, e) in eps.iter().enumerate() {
            rows.push(vec![p, *e, r.pairwise[i], r.slopes[i], r.gaps[i]]);
        }
    }
    let path = exp.out_dir.join("sweep.csv");
    write_table(&path, &["p", "eps", "pairwise", "slope", "gap"], &rows)?;
    report.file(&path);
    Ok(())
}

/// Interior max error of the discrete operator on `u = cos(pi x)`, `A = 1 + x`
/// over `[0, 1]`, for each cell count.
pub fn manufactured_errors(ns: &[usize]) -> Result<Vec<f64>> {
    use std::f64::consts::PI;
    ns.iter()
        .map(|&n| {
            let g = Grid1D::new(0.0, 1.0, n)?;
            let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x))?;
            let lu = op.apply(&Field::from_fn(g, |x| (PI * x).cos()));
            let exact = Field::from_fn(g, |x| {
                -PI * (PI * x).sin() - PI * PI * (1.0 + x) * (PI * x).cos()
            });
            Ok((1..n - 1)
                .map(|i| (lu.values()[i] - exact.values()[i]).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Error at `t_end` against `u = 2 / (1 + 19 exp(-2t))` for `r = 2`, `K = 1`,
/// `p = 1`, `u0 = 0.1`, for each time step.
pub fn logistic_errors(dts: &[f64], t_end: f64) -> Result<Vec<f64>> {
    let g = Grid1D::new(0.0, 1.0, 8)?;
    let op = DiffusionOperator::from_cells(&Field::constant(g, 1.0))?;
    let kernel = Kernel::general(KernelMatrix::from_fn(&g, |_, _| 1.0))?;
    let problem = Problem::new(op, Field::constant(g, 2.0), kernel, 1.0)?;
    let exact = 2.0 / (1.0 + 19.0 * (-2.0 * t_end).exp());
    dts.iter()
        .map(|&dt| {
            let out = simulate(
                &problem,
                &SimConfig::new(Field::constant(g, 0.1), dt, t_end),
            )?;
            Ok(out
                .final_state
                .u
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max((v - exact).abs())))
        })
        .collect()
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn observed_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Identity residual on the configured problem for each `(n, dt)` rung.
pub fn identity_ladder(
    cfg: &Config,
    ladder: &[(usize, f64)],
    t_end: f64,
    seed: u64,
) -> Result<Vec<IdentityCheck>> {
    let base = build_grid(cfg)?;
    let q_id = cfg.f64_or("entropy.identity_q", 2.0)?;
    let stat_tol = cfg.f64_or("tol.stationary", 1e-8)?;
    ladder
        .iter()
        .map(|&(n, dt)| {
            let grid = Grid1D::new(base.a(), base.b(), n)?;
            let problem = build_problem(cfg, grid, None, None)?;
            let eig = eigenpair(cfg, &problem)?;
            let st = steady_state(cfg, &problem, &eig)?;
            let mut sc = SimConfig::new(initial_datum(cfg, grid, seed)?, dt, t_end);
            sc.keep_trajectory = true;
            let traj = simulate(&problem, &sc)?.trajectory;
            identity_residual(&traj, q_id, &st.ubar, &problem, stat_tol)
        })
        .collect()
}

/// Operator, time and (optionally) identity refinement studies.
pub fn convergence_study(exp: &ExperimentConfig) -> Result<Report> {
    run(&ExperimentConfig {
        scenario: Scenario::ConvergenceStudy,
        ..exp.clone()
    })
}

fn run_convergence(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let ns: Vec<usize> = match cfg.f64_list("study.n")? {
        Some(v) => v.iter().map(|x| *x as usize).collect(),
        None => vec![64, 128, 256],
    };
    let dts = cfg
        .f64_list("study.dt")?
        .unwrap_or_else(|| vec![1e-2, 5e-3, 2.5e-3]);
    let t_end = cfg.f64_or("study.t_end", 5.0)?;
    let min_space = cfg.f64_or("study.min_order_space", 1.9)?;
    let min_time = cfg.f64_or("study.min_order_time", 0.9)?;

    let op_err = manufactured_errors(&ns)?;
    let hs: Vec<f64> = ns.iter().map(|n| 1.0 / *n as f64).collect();
    let op_orders = observed_orders(&hs, &op_err);
    let t_err = logistic_errors(&dts, t_end)?;
    let t_orders = observed_orders(&dts, &t_err);
    let min_of = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    report.set("operator_n", json!(ns));
    report.set("operator_errors", numbers(&op_err));
    report.set("operator_orders", numbers(&op_orders));
    report.set("time_dt", numbers(&dts));
    report.set("time_errors", numbers(&t_err));
    report.set("time_orders", numbers(&t_orders));
    report.verdict(
        "operator_order",
        !op_orders.is_empty() && min_of(&op_orders) >= min_space,
    );
    report.verdict(
        "time_order",
        !t_orders.is_empty() && min_of(&t_orders) >= min_time,
    );
    let mut rows: Vec<Vec<f64>> = ns
        .iter()
        .zip(&op_err)
        .map(|(n, e)| vec![0.0, *n as f64, *e])
        .collect();
    rows.extend(dts.iter().zip(&t_err).map(|(d, e)| vec![1.0, *d, *e]));

    if let Some(ladder) = cfg.ladder("study.identity_ladder")? {
        let t_id = cfg.f64_or("study.identity_t_end", 6.0)?;
        let min_ratio = cfg.f64_or("study.identity_min_ratio", 2.0)?;
        let checks = identity_ladder(cfg, &ladder, t_id, exp.seed)?;
        let maxes: Vec<f64> = checks.iter().map(|c| c.max_residual()).collect();
        let ratios: Vec<f64> = maxes.windows(2).map(|w| w[0] / w[1]).collect();
        report.set("identity_max_residual", numbers(&maxes));
        report.set(
            "identity_relative",
            numbers(
                &checks
                    .iter()
                    .map(|c| c.max_residual() / c.max_rate())
                    .collect::<Vec<_>>(),
            ),
        );
        report.set("identity_ratios", numbers(&ratios));
        report.verdict(
            "identity_refinement",
            !ratios.is_empty() && ratios.iter().all(|r| *r >= min_ratio),
        );
        rows.extend(
            ladder
                .iter()
                .zip(&maxes)
                .map(|((n, _), e)| vec![2.0, *n as f64, *e]),
        );
    }
    let path = exp.out_dir.join("convergence.csv");
    write_table(&path, &["study", "h", "error"], &rows)?;
    report.file(&path);
    Ok(())
}

/// Existence of a positive steady state for constant growth rates `r = c`.
pub fn dichotomy(cfg: &Config, cs: &[f64]) -> Result<Vec<(f64, f64, bool)>> {
    let grid = build_grid(cfg)?;
    cs.iter()
        .map(|&c| {
            let problem = build_problem(cfg, grid, Some(&CoefficientSpec::constant(c)), None)?;
            let eig = eigenpair(cfg, &problem)?;
            let exists = match steady_state(cfg, &problem, &eig) {
                Ok(_) => true,
                Err(Error::NoPositiveSteadyState(_)) => false,
                Err(e) => return Err(e),
            };
            Ok((c, eig.lambda1, exists))
        })
        .collect()
}

fn run_dichotomy(exp: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let cfg = &exp.config;
    let cs = cfg
        .f64_list("dichotomy.c")?
        .unwrap_or_else(|| vec![-1.0, -0.5, 0.5, 1.0, 2.0]);
    let rows = dichotomy(cfg, &cs)?;
    let entries: Vec<Value> = rows
        .iter()
        .map(|(c, l, e)| json!({"c": number(*c), "lambda1": number(*l), "exists": e}))
        .collect();
    report.set("cases", Value::Array(entries));
    report.verdict(
        "exists_iff_lambda1_negative",
        rows.iter().all(|(_, l, e)| *e == (*l < 0.0)),
    );
    report.verdict(
        "exists_iff_c_positive",
        rows.iter().all(|(c, _, e)| *e == (*c > 0.0)),
    );
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|(c, l, e)| vec![*c, *l, if *e { 1.0 } else { 0.0 }])
        .collect();
    let path = exp.out_dir.join("dichotomy.csv");
    write_table(&path, &["c", "lambda1", "exists"], &table)?;
    report.file(&path);
    Ok(())
}

/// Writes `text` as a config next to the outputs and runs it; used by tests.
pub fn run_text(text: &str, scenario: Scenario, out_dir: &Path) -> Result<Report> {
    let mut exp = ExperimentConfig::with_scenario(scenario, Config::parse(text)?)?;
    exp.out_dir = out_dir.to_path_buf();
    run(&exp)
}
