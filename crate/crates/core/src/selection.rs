//! Competition kernels and the nonlocal selection pressure
//! `Psi(x, u) = int K(x, y) |u(y)|^p dy`.

use std::path::Path;

use crate::coeff::KernelSpec;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

/// Dense `n x n` kernel samples `K(x_i, y_j)`, row-major in `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs: Vec<f64> = grid.centers().collect();
        let data = xs
            .iter()
            .flat_map(|&x| xs.iter().map(move |&y| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { n: xs.len(), data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `s * self + (1 - s) * (row x0 repeated)`.
    fn homotopy(&self, s: f64, x0: usize) -> Self {
        let base = self.row(x0).to_vec();
        let data = self
            .data
            .chunks(self.n)
            .flat_map(|row| {
                row.iter()
                    .zip(&base)
                    .map(move |(k, b)| s * k + (1.0 - s) * b)
            })
            .collect();
        Self { n: self.n, data }
    }
}

/// Competition kernel on a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `K(x, y) = k(y)`.
    Blind {
        k: Field,
    },
    /// `K(x, y) = k0(y) + eps k1(x, y)`.
    Perturbed {
        k0: Field,
        k1: KernelMatrix,
        eps: f64,
    },
    General {
        k: KernelMatrix,
    },
}

impl Kernel {
    pub fn blind(k: Field) -> Result<Self> {
        if !(k.min() > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "blind kernel must be positive (min {})",
                k.min()
            )));
        }
        Ok(Kernel::Blind { k })
    }

    pub fn perturbed(k0: Field, k1: KernelMatrix, eps: f64) -> Result<Self> {
        if k1.n() != k0.len() {
            return Err(Error::LengthMismatch {
                expected: k0.len(),
                got: k1.n(),
            });
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidKernel(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }
        if !(k0.min() > 0.0) {
            return Err(Error::InvalidKernel("k0 must be positive".into()));
        }
        let kernel = Kernel::Perturbed { k0, k1, eps };
        if !(kernel.min_entry() > 0.0) {
            return Err(Error::InvalidKernel("k0 + eps k1 must be positive".into()));
        }
        Ok(kernel)
    }

    pub fn general(k: KernelMatrix) -> Result<Self> {
        if !(k.min() > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "kernel must be positive (min {})",
                k.min()
            )));
        }
        Ok(Kernel::General { k })
    }

    /// Samples a textual kernel spec; relative table paths resolve against `base_dir`.
    pub fn from_spec(spec: &KernelSpec, grid: &Grid1D, base_dir: Option<&Path>) -> Result<Self> {
        let n = grid.len();
        match spec {
            KernelSpec::Blind(k) => Kernel::blind(k.sample(grid)?),
            KernelSpec::Perturbed { k0, k1, eps } => Kernel::perturbed(
                k0.sample(grid)?,
                KernelMatrix::new(n, k1.sample(grid, base_dir)?)?,
                *eps,
            ),
            KernelSpec::General(k) => {
                Kernel::general(KernelMatrix::new(n, k.sample(grid, base_dir)?)?)
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Kernel::Blind { k } => k.len(),
            Kernel::Perturbed { k0, .. } => k0.len(),
            Kernel::General { k } => k.n(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_blind(&self) -> bool {
        matches!(self, Kernel::Blind { .. })
    }

    /// `K(x_i, y_j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Blind { k } => k.values()[j],
            Kernel::Perturbed { k0, k1, eps } => k0.values()[j] + eps * k1.get(i, j),
            Kernel::General { k } => k.get(i, j),
        }
    }

    pub fn min_entry(&self) -> f64 {
        match self {
            Kernel::Blind { k } => k.min(),
            Kernel::General { k } => k.min(),
            Kernel::Perturbed { .. } => self.fold_entries(f64::INFINITY, f64::min),
        }
    }

    pub fn max_entry(&self) -> f64 {
        match self {
            Kernel::Blind { k } => k.max(),
            Kernel::General { k } => k.max(),
            Kernel::Perturbed { .. } => self.fold_entries(f64::NEG_INFINITY, f64::max),
        }
    }

    fn fold_entries(&self, init: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.len();
        let mut acc = init;
        for i in 0..n {
            for j in 0..n {
                acc = f(acc, self.entry(i, j));
            }
        }
        acc
    }

    /// Blind kernel obtained by freezing the focal trait at cell `x0`.
    pub fn frozen_row(&self, grid: &Grid1D, x0: usize) -> Result<Kernel> {
        let row: Vec<f64> = (0..self.len()).map(|j| self.entry(x0, j)).collect();
        Kernel::blind(Field::new(*grid, row)?)
    }

    /// `K^s(x, y) = s K(x, y) + (1 - s) K(x0, y)`.
    pub fn homotopy(&self, s: f64, x0: usize) -> Kernel {
        match self {
            Kernel::Blind { .. } => self.clone(),
            Kernel::General { k } => Kernel::General {
                k: k.homotopy(s, x0),
            },
            Kernel::Perturbed { k0, k1, eps } => Kernel::Perturbed {
                k0: k0.clone(),
                k1: k1.homotopy(s, x0),
                eps: *eps,
            },
        }
    }
}

/// `|u|^p`, with `0^p = 0`.
pub fn pow_abs(u: f64, p: f64) -> f64 {
    let a = u.abs();
    if a == 0.0 {
        0.0
    } else if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        (p * a.ln()).exp()
    }
}

/// Selection pressure `Psi_i = sum_j w_j K(x_i, y_j) |u_j|^p`.
pub fn psi(kernel: &Kernel, u: &Field, p: f64) -> Field {
    apply_kernel(kernel, &u.map(|v| pow_abs(v, p)))
}

/// Linear integral operator `f -> sum_j w_j K(x_i, y_j) f_j`.
pub fn apply_kernel(kernel: &Kernel, f: &Field) -> Field {
    let dx = f.grid().dx();
    let fv = f.values();
    let values = match kernel {
        Kernel::Blind { k } => {
            let s = dx * k.values().iter().zip(fv).map(|(k, v)| k * v).sum::<f64>();
            vec![s; f.len()]
        }
        Kernel::General { k } => (0..f.len())
            .map(|i| dx * k.row(i).iter().zip(fv).map(|(k, v)| k * v).sum::<f64>())
            .collect(),
        Kernel::Perturbed { k0, k1, eps } => {
            let base = k0.values().iter().zip(fv).map(|(k, v)| k * v).sum::<f64>();
            (0..f.len())
                .map(|i| {
                    dx * (base + eps * k1.row(i).iter().zip(fv).map(|(k, v)| k * v).sum::<f64>())
                })
                .collect()
        }
    };
    Field::new(*f.grid(), values).expect("kernel and field share the grid")
}

/// Bracketing rates `alpha_{eps,+-}(u) = int (k0 +- eps ||k1||_inf) |u|^p`.
pub fn alpha_bounds(kernel: &Kernel, u: &Field, p: f64) -> Result<(f64, f64)> {
    let Kernel::Perturbed { k0, k1, eps } = kernel else {
        return Err(Error::InvalidKernel(
            "alpha bounds need a perturbed kernel".into(),
        ));
    };
    let up = u.map(|v| pow_abs(v, p));
    let base = k0.dot(&up);
    let spread = eps * k1.max_abs() * up.integral();
    Ok((base - spread, base + spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn constant_kernels() {
        let g = unit(16);
        let u = Field::constant(g, 1.0);
        let k = Kernel::general(KernelMatrix::from_fn(&g, |_, _| 1.0)).unwrap();
        for v in psi(&k, &u, 1.0).values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-15);
        }
        let b = Kernel::blind(Field::constant(g, 1.0)).unwrap();
        for v in psi(&b, &u, 2.0).values() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn bilinear_kernel_against_closed_form() {
        let g = unit(128);
        let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x * y)).unwrap();
        let u = Field::from_fn(g, |y| y);
        let ps = psi(&k, &u, 1.0);
        for (v, x) in ps.values().iter().zip(g.centers()) {
            assert!((v - (0.5 + x / 3.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn alpha_bounds_constant_data() {
        let g = unit(10);
        let k = Kernel::perturbed(
            Field::constant(g, 1.0),
            KernelMatrix::from_fn(&g, |_, _| 1.0),
            0.1,
        )
        .unwrap();
        let (lo, hi) = alpha_bounds(&k, &Field::constant(g, 1.0), 1.0).unwrap();
        assert_relative_eq!(lo, 0.9, epsilon = 1e-14);
        assert_relative_eq!(hi, 1.1, epsilon = 1e-14);

        let k0 = Kernel::perturbed(
            Field::constant(g, 1.0),
            KernelMatrix::from_fn(&g, |x, y| x - y),
            0.0,
        )
        .unwrap();
        let u = Field::from_fn(g, |x| 1.0 + x);
        let (lo, hi) = alpha_bounds(&k0, &u, 2.0).unwrap();
        assert_eq!(lo, hi);
        assert_relative_eq!(lo, u.map(|v| v * v).integral(), epsilon = 1e-14);
        let blind = Kernel::blind(Field::constant(g, 1.0)).unwrap();
        assert!(alpha_bounds(&blind, &u, 1.0).is_err());
    }

    #[test]
    fn kernel_positivity_is_enforced() {
        let g = unit(8);
        assert!(Kernel::blind(Field::constant(g, 0.0)).is_err());
        assert!(Kernel::general(KernelMatrix::from_fn(&g, |x, _| x - 0.5)).is_err());
        assert!(Kernel::perturbed(
            Field::constant(g, 1.0),
            KernelMatrix::from_fn(&g, |_, _| -1.0),
            2.0
        )
        .is_err());
    }

    #[test]
    fn homotopy_endpoints() {
        let g = unit(9);
        let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x * y * y)).unwrap();
        let start = k.homotopy(0.0, 4);
        let blind = k.frozen_row(&g, 4).unwrap();
        let u = Field::from_fn(g, |x| 0.5 + x);
        assert!(psi(&start, &u, 1.5).distance_sup(&psi(&blind, &u, 1.5)) < 1e-14);
        assert_eq!(k.homotopy(1.0, 4), k);
    }

    fn positive_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0..3.0f64, n)
    }

    proptest! {
        #[test]
        fn homogeneity(u in positive_field(12), c in -3.0..3.0f64, p in 1.0..3.0f64) {
            let g = unit(12);
            let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + 0.5 * (x - y).sin())).unwrap();
            let u = Field::new(g, u).unwrap();
            let lhs = psi(&k, &u.scaled(c), p);
            let rhs = psi(&k, &u, p).scaled(c.abs().powf(p));
            prop_assert!(lhs.distance_sup(&rhs) <= 1e-10 * (1.0 + rhs.sup_norm()));
        }

        #[test]
        fn monotone_in_u(u in positive_field(12), d in positive_field(12), p in 1.0..3.0f64) {
            let g = unit(12);
            let k = Kernel::general(KernelMatrix::from_fn(&g, |x, y| 1.0 + x * y)).unwrap();
            let u = Field::new(g, u).unwrap();
            let v = u.zip_map(&Field::new(g, d).unwrap(), |a, b| a + b);
            let (pu, pv) = (psi(&k, &u, p), psi(&k, &v, p));
            prop_assert!(pu.values().iter().zip(pv.values()).all(|(a, b)| a <= b));
        }

        #[test]
        fn blind_consistency(k in prop::collection::vec(0.1..2.0f64, 10), u in positive_field(10), p in 1.0..3.0f64) {
            let g = unit(10);
            let kf = Field::new(g, k.clone()).unwrap();
            let general = Kernel::general(KernelMatrix::from_fn(&g, |_, y| {
                let j = ((y - 0.05) / 0.1).round() as usize;
                k[j]
            })).unwrap();
            let blind = Kernel::blind(kf).unwrap();
            let u = Field::new(g, u).unwrap();
            prop_assert!(psi(&general, &u, p).distance_sup(&psi(&blind, &u, p)) <= 1e-12);
        }

        #[test]
        fn alpha_brackets_psi(u in prop::collection::vec(0.01..3.0f64, 16), eps in 0.0..0.4f64, p in 1.0..2.5f64) {
            let g = unit(16);
            let k = Kernel::perturbed(
                Field::from_fn(g, |y| 1.0 + y),
                KernelMatrix::from_fn(&g, |x, y| (3.0 * x).cos() * (2.0 * y).sin()),
                eps,
            ).unwrap();
            let u = Field::new(g, u).unwrap();
            let (lo, hi) = alpha_bounds(&k, &u, p).unwrap();
            let ps = psi(&k, &u, p);
            let tol = 1e-12 * hi.abs().max(1.0);
            prop_assert!(lo <= ps.min() + tol && ps.max() <= hi + tol);
        }
    }
}
