//! Relative entropies `H_q[ubar, u] = int ubar^2 (u/ubar)^q`, their dissipation,
//! the Lyapunov functional and the decomposition `u = lambda ubar + h`.

use crate::dynamics::{Problem, SimState};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::DiffusionOperator;
use crate::selection::{apply_kernel, psi, Kernel};
use crate::spectral::weighted_dirichlet;
use crate::steady::stationary_residual;

/// Entropy, dissipation and Lyapunov functional for one exponent `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QEntry {
    pub q: f64,
    pub h: f64,
    pub d: f64,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropySample {
    pub t: f64,
    pub mass: f64,
    pub sup_u: f64,
    pub h1: f64,
    pub per_q: Vec<QEntry>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub lambda: f64,
    pub h_norm2: f64,
    /// `int ubar^2 A |d(h/ubar)/dx|^2`.
    pub h_dirichlet: f64,
}

impl EntropySample {
    pub fn entry(&self, q: f64) -> Option<&QEntry> {
        self.per_q.iter().find(|e| e.q == q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub lambda: f64,
    pub h: Field,
}

/// Right-hand side pieces of the equation for `lambda(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaRhs {
    pub main: f64,
    pub r1: f64,
    pub r2: f64,
}

impl LambdaRhs {
    pub fn total(&self) -> f64 {
        self.main + self.r1 + self.r2
    }
}

/// Per-snapshot residuals of the entropy balance.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Centered estimates of `dH_q/dt`.
    pub dhdt: Vec<f64>,
}

impl IdentityCheck {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_rate(&self) -> f64 {
        self.dhdt.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn spow(s: f64, q: f64) -> f64 {
    if q.fract() == 0.0 && q.abs() <= 64.0 {
        s.powi(q as i32)
    } else {
        s.powf(q)
    }
}

fn check_reference(ubar: &Field) -> Result<()> {
    let m = ubar.min();
    if !(m > 0.0) {
        return Err(Error::NotPositiveReference(m));
    }
    Ok(())
}

/// `sum_i w_i ubar_i^2 (u_i / ubar_i)^q`.
pub fn entropy_h(q: f64, ubar: &Field, u: &Field) -> Result<f64> {
    check_reference(ubar)?;
    Ok(u.zip_map(ubar, |u, b| b * b * spow(u / b, q)).integral())
}

/// Discrete `int ubar^2 H''(u/ubar) A |d(u/ubar)/dx|^2` for `H(s) = s^q`.
pub fn dissipation_d(q: f64, ubar: &Field, u: &Field, op: &DiffusionOperator) -> Result<f64> {
    check_reference(ubar)?;
    if q == 1.0 {
        return Ok(0.0);
    }
    let s: Vec<f64> = u
        .values()
        .iter()
        .zip(ubar.values())
        .map(|(u, b)| u / b)
        .collect();
    let w: Vec<f64> = s
        .iter()
        .zip(ubar.values())
        .map(|(s, b)| b * b * q * (q - 1.0) * spow(*s, q - 2.0))
        .collect();
    Ok(op.weighted_energy(&w, &s))
}

/// `log(H_q / H_1^q)`.
pub fn lyapunov_f(q: f64, ubar: &Field, u: &Field) -> Result<f64> {
    let h1 = entropy_h(1.0, ubar, u)?;
    if !(h1 > 0.0) {
        return Err(Error::DegenerateState(format!(
            "H_1 = {h1} is not positive"
        )));
    }
    Ok(entropy_h(q, ubar, u)?.ln() - q * h1.ln())
}

/// `Gamma = Psi(ubar) - Psi(u)` and its range over the cells.
pub fn gamma(ubar: &Field, u: &Field, kernel: &Kernel, p: f64) -> Field {
    psi(kernel, ubar, p).zip_map(&psi(kernel, u, p), |a, b| a - b)
}

pub fn gamma_range(ubar: &Field, u: &Field, kernel: &Kernel, p: f64) -> (f64, f64) {
    let g = gamma(ubar, u, kernel, p);
    (g.min(), g.max())
}

/// `lambda = <u, ubar> / <ubar, ubar>`, `h = u - lambda ubar`.
pub fn decompose(u: &Field, ubar: &Field) -> Result<Decomposition> {
    let nn = ubar.dot(ubar);
    if !(nn > 0.0) {
        return Err(Error::ZeroReference);
    }
    let lambda = u.dot(ubar) / nn;
    let h = u.zip_map(ubar, |u, b| u - lambda * b);
    Ok(Decomposition { lambda, h })
}

/// All diagnostics of one state relative to `ubar`.
pub fn sample_entropy(
    t: f64,
    u: &Field,
    ubar: &Field,
    qs: &[f64],
    problem: &Problem,
) -> Result<EntropySample> {
    let h1 = entropy_h(1.0, ubar, u)?;
    let per_q = qs
        .iter()
        .map(|&q| {
            let h = entropy_h(q, ubar, u)?;
            let d = dissipation_d(q, ubar, u, &problem.op)?;
            let f = if h1 > 0.0 {
                h.ln() - q * h1.ln()
            } else {
                f64::NAN
            };
            Ok(QEntry { q, h, d, f })
        })
        .collect::<Result<Vec<_>>>()?;
    let (gamma_min, gamma_max) = gamma_range(ubar, u, &problem.kernel, problem.p);
    let dec = decompose(u, ubar)?;
    Ok(EntropySample {
        t,
        mass: u.integral(),
        sup_u: u.sup_norm(),
        h1,
        per_q,
        gamma_min,
        gamma_max,
        lambda: dec.lambda,
        h_norm2: dec.h.norm_l2(),
        h_dirichlet: weighted_dirichlet(ubar, &dec.h, &problem.op),
    })
}

/// Residual of `dH_q/dt = -D + int ubar H'(u/ubar) Gamma u` at every interior
/// snapshot, with the time derivative taken by centered differences.
pub fn identity_residual(
    traj: &[SimState],
    q: f64,
    ubar: &Field,
    problem: &Problem,
    stationary_tol: f64,
) -> Result<IdentityCheck> {
    check_reference(ubar)?;
    let residual = stationary_residual(ubar, problem);
    if !(residual <= stationary_tol) {
        return Err(Error::NotStationaryReference {
            residual,
            tol: stationary_tol,
        });
    }
    if traj.len() >= 3 {
        let dt0 = traj[1].t - traj[0].t;
        let uniform = traj
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - dt0).abs() <= 1e-9 * dt0.abs().max(1e-300));
        if !uniform || !(dt0 > 0.0) {
            return Err(Error::InvalidArgument(
                "trajectory must be recorded at uniform spacing".into(),
            ));
        }
    }
    let hs = traj
        .iter()
        .map(|s| entropy_h(q, ubar, &s.u))
        .collect::<Result<Vec<_>>>()?;
    let psi_bar = psi(&problem.kernel, ubar, problem.p);
    let mut out = IdentityCheck {
        times: Vec::new(),
        residuals: Vec::new(),
        dhdt: Vec::new(),
    };
    for k in 1..traj.len().saturating_sub(1) {
        let u = &traj[k].u;
        let rate = (hs[k + 1] - hs[k - 1]) / (traj[k + 1].t - traj[k - 1].t);
        let d = dissipation_d(q, ubar, u, &problem.op)?;
        let g = psi_bar.zip_map(&psi(&problem.kernel, u, problem.p), |a, b| a - b);
        let source = u
            .values()
            .iter()
            .zip(ubar.values())
            .zip(g.values())
            .map(|((u, b), g)| b * q * spow(u / b, q - 1.0) * g * u)
            .sum::<f64>()
            * u.grid().dx();
        out.times.push(traj[k].t);
        out.residuals.push((rate + d - source).abs());
        out.dhdt.push(rate);
    }
    Ok(out)
}

/// `Psi~(v) = int Psi(x, v) v^2`.
pub fn psi_tilde(kernel: &Kernel, v: &Field, p: f64) -> f64 {
    psi(kernel, v, p).zip_map(v, |s, v| s * v * v).integral()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Pieces of `lambda' = Psi~(ubar) lambda (1 - lambda^p) / |ubar|^2 + R1 + R2`
/// for integer `p` in {1, 2}, where
/// `R1 = int Gamma ubar h / |ubar|^2` and
/// `R2 = -(lambda / |ubar|^2) int (sum_k C(p,k) lambda^(p-k) int K ubar^(p-k) h^k dy) ubar^2 dx`.
pub fn lambda_ode_rhs(
    lambda: f64,
    h: &Field,
    ubar: &Field,
    kernel: &Kernel,
    p: f64,
) -> Result<LambdaRhs> {
    let pi = if p == 1.0 {
        1u32
    } else if p == 2.0 {
        2u32
    } else {
        return Err(Error::UnsupportedExponent(p));
    };
    let nn = ubar.dot(ubar);
    if !(nn > 0.0) {
        return Err(Error::ZeroReference);
    }
    let main = psi_tilde(kernel, ubar, p) * lambda * (1.0 - lambda.powi(pi as i32)) / nn;
    let u = ubar.zip_map(h, |b, h| lambda * b + h);
    let g = gamma(ubar, &u, kernel, p);
    let r1 = g.zip_map(ubar, |g, b| g * b).dot(h) / nn;
    let mut inner = Field::zeros(*ubar.grid());
    for k in 1..=pi {
        let f = ubar.zip_map(h, |b, h| b.powi((pi - k) as i32) * h.powi(k as i32));
        let c = binomial(pi, k) * lambda.powi((pi - k) as i32);
        inner = inner.zip_map(&apply_kernel(kernel, &f), |a, b| a + c * b);
    }
    let r2 = -lambda * inner.zip_map(ubar, |s, b| s * b * b).integral() / nn;
    Ok(LambdaRhs { main, r1, r2 })
}

/// Blind form `lambda' = (-lambda1 - Psi(lambda ubar + h)) lambda`, valid when
/// `ubar` is a multiple of the principal eigenfunction.
pub fn lambda_ode_blind(
    lambda: f64,
    h: &Field,
    ubar: &Field,
    kernel: &Kernel,
    p: f64,
    lambda1: f64,
) -> Result<f64> {
    if !kernel.is_blind() {
        return Err(Error::InvalidKernel(
            "blind lambda equation needs a blind kernel".into(),
        ));
    }
    let u = ubar.zip_map(h, |b, h| lambda * b + h);
    let s = psi(kernel, &u, p).values()[0];
    Ok((-lambda1 - s) * lambda)
}

/// Largest increase `F(t_{k+1}) - F(t_k)` of the Lyapunov functional for `q`.
pub fn max_f_increase(samples: &[EntropySample], q: f64) -> f64 {
    let fs: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.entry(q).map(|e| e.f))
        .collect();
    fs.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimConfig};
    use crate::grid::Grid1D;
    use crate::selection::KernelMatrix;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    fn laplacian(g: Grid1D) -> DiffusionOperator {
        DiffusionOperator::from_cells(&Field::constant(g, 1.0)).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let g = unit(32);
        let ubar = Field::from_fn(g, |x| 1.0 + x);
        for q in [1.0, 2.0, 3.5] {
            let h = entropy_h(q, &ubar, &ubar).unwrap();
            assert!((h - ubar.dot(&ubar)).abs() < 1e-14);
        }
        let u = Field::from_fn(g, |x| (3.0 * x).sin() + 1.2);
        assert!((entropy_h(2.0, &ubar, &u).unwrap() - u.dot(&u)).abs() < 1e-13);
        let h = entropy_h(1.0, &Field::constant(g, 1.0), &Field::from_fn(g, |x| x)).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
        assert!(matches!(
            entropy_h(2.0, &Field::zeros(g), &u),
            Err(Error::NotPositiveReference(_))
        ));
    }

    #[test]
    fn dissipation_examples() {
        let g = unit(256);
        let op = laplacian(g);
        let ubar = Field::from_fn(g, |x| 2.0 + x * x);
        assert!(
            dissipation_d(3.0, &ubar, &ubar.scaled(1.7), &op)
                .unwrap()
                .abs()
                < 1e-10
        );
        let u = Field::from_fn(g, |x| 1.0 + x);
        assert_eq!(dissipation_d(1.0, &ubar, &u, &op).unwrap(), 0.0);
        let d = dissipation_d(
            2.0,
            &Field::constant(g, 1.0),
            &Field::from_fn(g, |x| (PI * x).cos()),
            &op,
        )
        .unwrap();
        assert!((d / (PI * PI) - 1.0).abs() < 1e-2, "D = {d}");
    }

    #[test]
    fn lyapunov_scale_invariance() {
        let g = unit(40);
        let ubar = Field::from_fn(g, |x| 1.0 + 0.5 * x);
        let nn = ubar.dot(&ubar);
        for q in [2.0, 4.0] {
            for c in [0.1, 3.0] {
                let f = lyapunov_f(q, &ubar, &ubar.scaled(c)).unwrap();
                assert!((f - (1.0 - q) * nn.ln()).abs() < 1e-12);
            }
            let u = Field::from_fn(g, |x| 0.2 + x * x);
            let f = lyapunov_f(q, &ubar, &u).unwrap();
            assert!((lyapunov_f(q, &ubar, &u.scaled(7.5)).unwrap() - f).abs() < 1e-12);
        }
        assert!(matches!(
            lyapunov_f(2.0, &ubar, &Field::zeros(g)),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn gamma_examples() {
        let g = unit(24);
        let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x * y)).unwrap();
        let ubar = Field::from_fn(g, |x| 1.0 + x);
        assert_eq!(gamma_range(&ubar, &ubar, &k, 2.0), (0.0, 0.0));
        let blind = Kernel::blind(Field::from_fn(g, |y| 1.0 + y)).unwrap();
        let (lo, hi) = gamma_range(&ubar, &Field::from_fn(g, |x| x), &blind, 1.5);
        assert_eq!(lo, hi);
    }

    #[test]
    fn decomposition_examples() {
        let g = unit(30);
        let ubar = Field::from_fn(g, |x| 1.0 + x);
        let d = decompose(&ubar.scaled(3.0), &ubar).unwrap();
        assert!((d.lambda - 3.0).abs() < 1e-14 && d.h.sup_norm() < 1e-14);
        let psi0 = Field::from_fn(g, |x| (2.0 * PI * x).cos());
        let c = psi0.dot(&ubar) / ubar.dot(&ubar);
        let psi0 = psi0.zip_map(&ubar, |a, b| a - c * b);
        let d = decompose(&ubar.zip_map(&psi0, |a, b| a + b), &ubar).unwrap();
        assert!((d.lambda - 1.0).abs() < 1e-13 && d.h.distance_sup(&psi0) < 1e-13);
        assert!(matches!(
            decompose(&ubar, &Field::zeros(g)),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn lambda_rhs_vanishes_at_equilibrium() {
        let g = unit(20);
        let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x * y)).unwrap();
        let ubar = Field::from_fn(g, |x| 1.0 + x);
        let zero = Field::zeros(g);
        for p in [1.0, 2.0] {
            let r = lambda_ode_rhs(1.0, &zero, &ubar, &k, p).unwrap();
            assert_eq!(
                r,
                LambdaRhs {
                    main: 0.0,
                    r1: 0.0,
                    r2: 0.0
                }
            );
            for l in [0.3, 1.7] {
                let r = lambda_ode_rhs(l, &zero, &ubar, &k, p).unwrap();
                assert!(r.r1 == 0.0 && r.r2 == 0.0);
                assert_eq!(r.main.signum(), (1.0 - l.powf(p)).signum());
            }
        }
        assert!(matches!(
            lambda_ode_rhs(1.0, &zero, &ubar, &k, 1.5),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn blind_lambda_equation_matches_general_form() {
        let g = unit(64);
        let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x)).unwrap();
        let r = Field::from_fn(g, |x| 2.0 + (PI * x).cos());
        let kernel = Kernel::blind(Field::from_fn(g, |y| 1.0 + y)).unwrap();
        let pr = Problem::new(op, r, kernel, 2.0).unwrap();
        let eig = crate::spectral::principal_eigenpair(&pr.op, &pr.r, 1e-12).unwrap();
        let ubar = crate::steady::blind_steady(&eig, &pr).unwrap().ubar;
        let u = Field::from_fn(g, |x| 0.5 + x * x);
        let d = decompose(&u, &ubar).unwrap();
        let blind = lambda_ode_blind(d.lambda, &d.h, &ubar, &pr.kernel, 2.0, eig.lambda1).unwrap();
        let general = lambda_ode_rhs(d.lambda, &d.h, &ubar, &pr.kernel, 2.0).unwrap();
        assert!((blind - general.total()).abs() < 1e-8 * blind.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn lambda_pieces_sum_to_projected_rate(
            ub in prop::collection::vec(0.2..2.0f64, 12),
            uu in prop::collection::vec(0.0..3.0f64, 12),
            p in prop::sample::select(vec![1.0, 2.0]),
        ) {
            // lambda' |ubar|^2 = int Gamma ubar u for any stationary ubar
            let g = unit(12);
            let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + 0.3 * (x - 2.0 * y).sin())).unwrap();
            let ubar = Field::new(g, ub).unwrap();
            let u = Field::new(g, uu).unwrap();
            let d = decompose(&u, &ubar).unwrap();
            let rhs = lambda_ode_rhs(d.lambda, &d.h, &ubar, &k, p).unwrap();
            let direct = gamma(&ubar, &u, &k, p).zip_map(&ubar, |g, b| g * b).dot(&u) / ubar.dot(&ubar);
            prop_assert!((rhs.total() - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        }

        #[test]
        fn decomposition_round_trip(ub in prop::collection::vec(0.1..2.0f64, 16), uu in prop::collection::vec(-3.0..3.0f64, 16)) {
            let g = unit(16);
            let ubar = Field::new(g, ub).unwrap();
            let u = Field::new(g, uu).unwrap();
            let d = decompose(&u, &ubar).unwrap();
            let back = ubar.zip_map(&d.h, |b, h| d.lambda * b + h);
            prop_assert!(back.distance_sup(&u) <= 1e-12 * (1.0 + u.sup_norm()));
            prop_assert!(d.h.dot(&ubar).abs() <= 1e-10 * d.h.norm_l2().max(1e-300) * ubar.norm_l2() + 1e-14);
        }

        #[test]
        fn gamma_is_nonpositive_above_reference(
            ub in prop::collection::vec(0.1..2.0f64, 10),
            du in prop::collection::vec(0.0..1.0f64, 10),
            p in 1.0..3.0f64,
        ) {
            let g = unit(10);
            let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x + y)).unwrap();
            let ubar = Field::new(g, ub).unwrap();
            let u = ubar.zip_map(&Field::new(g, du).unwrap(), |a, b| a + b);
            let (lo, hi) = gamma_range(&ubar, &u, &k, p);
            prop_assert!(lo <= 0.0 && hi <= 0.0);
        }

        #[test]
        fn dissipation_is_nonnegative(
            ub in prop::collection::vec(0.1..2.0f64, 10),
            uu in prop::collection::vec(0.0..2.0f64, 10),
            q in 1.0..5.0f64,
        ) {
            let g = unit(10);
            let op = DiffusionOperator::from_cells(&Field::from_fn(g, |x| 1.0 + x)).unwrap();
            let d = dissipation_d(q, &Field::new(g, ub).unwrap(), &Field::new(g, uu).unwrap(), &op).unwrap();
            prop_assert!(d >= 0.0);
        }
    }

    fn constant_blind(n: usize) -> Problem {
        let g = unit(n);
        Problem::new(
            laplacian(g),
            Field::constant(g, 2.0),
            Kernel::blind(Field::constant(g, 1.0)).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_on_stationary_trajectory() {
        let pr = constant_blind(16);
        let ubar = Field::constant(*pr.grid(), 2.0);
        let traj: Vec<SimState> = (0..5)
            .map(|k| SimState {
                t: k as f64 * 0.1,
                u: ubar.clone(),
                step: k,
            })
            .collect();
        let check = identity_residual(&traj, 2.0, &ubar, &pr, 1e-10).unwrap();
        assert_eq!(check.residuals.len(), 3);
        assert!(check.max_residual() <= 1e-10);
        assert!(matches!(
            identity_residual(&traj, 2.0, &ubar.scaled(1.1), &pr, 1e-10),
            Err(Error::NotStationaryReference { .. })
        ));
    }

    #[test]
    fn h1_evolution_and_f_monotonicity_in_blind_case() {
        let pr = constant_blind(64);
        let g = *pr.grid();
        let ubar = Field::constant(g, 2.0);
        let mut cfg = SimConfig::new(
            Field::from_fn(g, |x| 0.1 + 0.05 * (PI * x).cos()),
            1e-3,
            3.0,
        );
        cfg.keep_trajectory = true;
        cfg.diagnostics = Some(crate::dynamics::Diagnostics {
            reference: ubar.clone(),
            qs: vec![1.0, 2.0, 4.0],
        });
        let out = simulate(&pr, &cfg).unwrap();
        assert!(max_f_increase(&out.diagnostics, 2.0) <= 1e-8);
        assert!(max_f_increase(&out.diagnostics, 4.0) <= 1e-8);
        let q1 = identity_residual(&out.trajectory, 1.0, &ubar, &pr, 1e-10).unwrap();
        assert!(q1.max_residual() <= 1e-2 * q1.max_rate());
    }
}
