//! Textual coefficient and kernel specifications.
//!
//! One-dimensional coefficients are sums of built-in terms:
//!
//! ```text
//! const(c)                     c
//! poly(c0, c1, ...)            c0 + c1 x + c2 x^2 + ...
//! cos(k, phase[, amp])         amp * cos(k pi xh + phase), xh = (x - a) / (b - a)
//! gaussian(center, width, amp) amp * exp(-(x - center)^2 / (2 width^2))
//! tabulated(v1, ..., vn)       one value per cell
//! ```
//!
//! e.g. `const(2) + cos(1, 0)`. Kernel specs wrap these:
//! `blind(<1d>)`, `perturbed(<1d k0>, <2d k1>, eps)`, `general(<2d>)` with
//! two-dimensional specs `const2(c)`, `sepcos(c)` (= 1 + c cos(pi xh) cos(pi yh))
//! and `tabulated2(path)` (CSV matrix, row i = focal trait x_i).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Const(f64),
    Poly(Vec<f64>),
    Cos { k: f64, phase: f64, amp: f64 },
    Gaussian { center: f64, width: f64, amp: f64 },
    Tabulated(Vec<f64>),
}

/// A scalar coefficient on the trait interval, as a sum of [`Term`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSpec {
    terms: Vec<Term>,
}

impl CoefficientSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        assert!(
            !terms.is_empty(),
            "coefficient spec needs at least one term"
        );
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Term::Const(c)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Evaluates the spec at every cell center.
    pub fn sample(&self, grid: &Grid1D) -> Result<Field> {
        let mut out = vec![0.0; grid.len()];
        for term in &self.terms {
            match term {
                Term::Tabulated(v) => {
                    if v.len() != grid.len() {
                        return Err(Error::LengthMismatch {
                            expected: grid.len(),
                            got: v.len(),
                        });
                    }
                    out.iter_mut().zip(v).for_each(|(o, t)| *o += t);
                }
                _ => {
                    for (o, x) in out.iter_mut().zip(grid.centers()) {
                        *o += term.eval(x, grid);
                    }
                }
            }
        }
        Field::new(*grid, out)
    }
}

impl Term {
    fn eval(&self, x: f64, grid: &Grid1D) -> f64 {
        match self {
            Term::Const(c) => *c,
            Term::Poly(c) => c.iter().rev().fold(0.0, |acc, ck| acc * x + ck),
            Term::Cos { k, phase, amp } => {
                amp * (k * std::f64::consts::PI * grid.normalized(x) + phase).cos()
            }
            Term::Gaussian { center, width, amp } => {
                let z = (x - center) / width;
                amp * (-0.5 * z * z).exp()
            }
            Term::Tabulated(_) => unreachable!("tabulated terms are sampled per cell"),
        }
    }
}

/// Two-dimensional kernel shape `K(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel2DSpec {
    Const(f64),
    SepCos(f64),
    Tabulated(PathBuf),
}

impl Kernel2DSpec {
    /// Samples on the tensor grid, row-major with row index = x.
    pub fn sample(&self, grid: &Grid1D, base_dir: Option<&Path>) -> Result<Vec<f64>> {
        let n = grid.len();
        match self {
            Kernel2DSpec::Const(c) => Ok(vec![*c; n * n]),
            Kernel2DSpec::SepCos(c) => {
                let pi = std::f64::consts::PI;
                let cosines: Vec<f64> = grid
                    .centers()
                    .map(|x| (pi * grid.normalized(x)).cos())
                    .collect();
                let mut m = Vec::with_capacity(n * n);
                for ci in &cosines {
                    for cj in &cosines {
                        m.push(1.0 + c * ci * cj);
                    }
                }
                Ok(m)
            }
            Kernel2DSpec::Tabulated(path) => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full)?;
                read_matrix_csv(&text, n)
            }
        }
    }
}

/// Parses a headerless CSV matrix with exactly `n` rows of `n` values.
pub fn read_matrix_csv(text: &str, n: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::with_capacity(n * n);
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        if record.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: record.len(),
            });
        }
        for cell in record.iter() {
            out.push(parse_number(cell, text)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rows,
        });
    }
    Ok(out)
}

/// Competition kernel as written in a config file.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    Blind(CoefficientSpec),
    Perturbed {
        k0: CoefficientSpec,
        k1: Kernel2DSpec,
        eps: f64,
    },
    General(Kernel2DSpec),
}

fn parse_number(s: &str, whole: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::malformed(whole, format!("`{}` is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::malformed(whole, "non-finite number"));
    }
    Ok(v)
}

/// Splits `name(args)` into name and the raw argument text.
fn split_call(s: &str) -> Result<(&str, &str)> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| Error::malformed(s, "expected `name(...)`"))?;
    if !s.ends_with(')') {
        return Err(Error::malformed(s, "missing closing parenthesis"));
    }
    let name = s[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::malformed(s, "bad function name"));
    }
    let inner = &s[open + 1..s.len() - 1];
    // The closing paren must match the opening one.
    if depth_profile(inner).is_none() {
        return Err(Error::malformed(s, "unbalanced parentheses"));
    }
    Ok((name, inner))
}

fn depth_profile(s: &str) -> Option<()> {
    let mut depth = 0i32;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    (depth == 0).then_some(())
}

/// Splits on `sep` at parenthesis depth zero.
fn split_top(s: &str, sep: char) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::malformed(s, "unbalanced parentheses"));
                }
            }
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::malformed(s, "unbalanced parentheses"));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn numbers(args: &str, whole: &str) -> Result<Vec<f64>> {
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',').map(|a| parse_number(a, whole)).collect()
}

fn expect_arity(name: &str, got: usize, allowed: &[usize], whole: &str) -> Result<()> {
    if allowed.contains(&got) {
        Ok(())
    } else {
        Err(Error::malformed(
            whole,
            format!("`{name}` takes {allowed:?} arguments, got {got}"),
        ))
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, inner) = split_call(s)?;
        let args = numbers(inner, s)?;
        let n = args.len();
        Ok(match name {
            "const" => {
                expect_arity(name, n, &[1], s)?;
                Term::Const(args[0])
            }
            "poly" => {
                if n == 0 {
                    return Err(Error::malformed(s, "poly needs at least one coefficient"));
                }
                Term::Poly(args)
            }
            "cos" => {
                expect_arity(name, n, &[2, 3], s)?;
                Term::Cos {
                    k: args[0],
                    phase: args[1],
                    amp: args.get(2).copied().unwrap_or(1.0),
                }
            }
            "gaussian" => {
                expect_arity(name, n, &[3], s)?;
                if args[1] <= 0.0 {
                    return Err(Error::malformed(s, "gaussian width must be positive"));
                }
                Term::Gaussian {
                    center: args[0],
                    width: args[1],
                    amp: args[2],
                }
            }
            "tabulated" => {
                if n == 0 {
                    return Err(Error::malformed(s, "tabulated needs values"));
                }
                Term::Tabulated(args)
            }
            other => return Err(Error::UnknownSpec(other.to_string())),
        })
    }
}

impl FromStr for CoefficientSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let terms = split_top(s, '+')?
            .into_iter()
            .map(str::parse)
            .collect::<Result<Vec<Term>>>()?;
        Ok(Self { terms })
    }
}

impl FromStr for Kernel2DSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, inner) = split_call(s)?;
        match name {
            "const2" | "sepcos" => {
                let args = numbers(inner, s)?;
                expect_arity(name, args.len(), &[1], s)?;
                Ok(if name == "const2" {
                    Kernel2DSpec::Const(args[0])
                } else {
                    Kernel2DSpec::SepCos(args[0])
                })
            }
            "tabulated2" => {
                let path = inner.trim();
                if path.is_empty() {
                    return Err(Error::malformed(s, "tabulated2 needs a file path"));
                }
                Ok(Kernel2DSpec::Tabulated(PathBuf::from(path)))
            }
            other => Err(Error::UnknownSpec(other.to_string())),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, inner) = split_call(s)?;
        match name {
            "blind" => Ok(KernelSpec::Blind(inner.parse()?)),
            "general" => Ok(KernelSpec::General(inner.parse()?)),
            "perturbed" => {
                let parts = split_top(inner, ',')?;
                if parts.len() != 3 {
                    return Err(Error::malformed(
                        s,
                        format!("perturbed takes 3 arguments, got {}", parts.len()),
                    ));
                }
                let eps = parse_number(parts[2], s)?;
                if eps < 0.0 {
                    return Err(Error::malformed(s, "eps must be nonnegative"));
                }
                Ok(KernelSpec::Perturbed {
                    k0: parts[0].parse()?,
                    k1: parts[1].parse()?,
                    eps,
                })
            }
            other => Err(Error::UnknownSpec(other.to_string())),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "const({c})"),
            Term::Poly(c) => write!(f, "poly({})", join(c)),
            Term::Cos { k, phase, amp } => write!(f, "cos({k},{phase},{amp})"),
            Term::Gaussian { center, width, amp } => {
                write!(f, "gaussian({center},{width},{amp})")
            }
            Term::Tabulated(v) => write!(f, "tabulated({})", join(v)),
        }
    }
}

impl fmt::Display for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Display for Kernel2DSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel2DSpec::Const(c) => write!(f, "const2({c})"),
            Kernel2DSpec::SepCos(c) => write!(f, "sepcos({c})"),
            Kernel2DSpec::Tabulated(p) => write!(f, "tabulated2({})", p.display()),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Blind(k) => write!(f, "blind({k})"),
            KernelSpec::Perturbed { k0, k1, eps } => write!(f, "perturbed({k0}, {k1}, {eps})"),
            KernelSpec::General(k) => write!(f, "general({k})"),
        }
    }
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
    fn constant_spec() {
        let f = "const(2)"
            .parse::<CoefficientSpec>()
            .unwrap()
            .sample(&unit(4))
            .unwrap();
        assert_eq!(f.values(), &[2.0; 4]);
    }

    #[test]
    fn cosine_spec() {
        let f = "cos(1,0)"
            .parse::<CoefficientSpec>()
            .unwrap()
            .sample(&unit(2))
            .unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(f.values()[0], (pi / 4.0).cos(), epsilon = 1e-15);
        assert_relative_eq!(f.values()[1], (3.0 * pi / 4.0).cos(), epsilon = 1e-15);
    }

    #[test]
    fn tabulated_length_is_checked() {
        let spec: CoefficientSpec = "tabulated(1,2,3)".parse().unwrap();
        assert!(matches!(
            spec.sample(&unit(4)),
            Err(Error::LengthMismatch {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            "bessel(1)".parse::<CoefficientSpec>(),
            Err(Error::UnknownSpec(name)) if name == "bessel"
        ));
    }

    #[test]
    fn sums_and_polynomials() {
        let spec: CoefficientSpec = "const(2) + cos(1, 0)".parse().unwrap();
        let g = unit(8);
        let f = spec.sample(&g).unwrap();
        for (v, x) in f.values().iter().zip(g.centers()) {
            assert_relative_eq!(*v, 2.0 + (std::f64::consts::PI * x).cos(), epsilon = 1e-14);
        }
        let p = "poly(1, 1)"
            .parse::<CoefficientSpec>()
            .unwrap()
            .sample(&g)
            .unwrap();
        for (v, x) in p.values().iter().zip(g.centers()) {
            assert_relative_eq!(*v, 1.0 + x, epsilon = 1e-15);
        }
    }

    #[test]
    fn gaussian_peak() {
        let g = Grid1D::new(-1.0, 1.0, 2).unwrap();
        let f = "gaussian(0.5, 1, 3)"
            .parse::<CoefficientSpec>()
            .unwrap()
            .sample(&g)
            .unwrap();
        assert_relative_eq!(f.values()[1], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "",
            "const",
            "const(",
            "const(1",
            "const(1,2)",
            "cos(1)",
            "poly()",
            "const(x)",
            "const(1))",
            "gaussian(0,-1,1)",
            "const(1) +",
            "const(inf)",
        ] {
            assert!(
                bad.parse::<CoefficientSpec>().is_err(),
                "{bad:?} should fail"
            );
        }
    }

    #[test]
    fn kernel_specs() {
        let k: KernelSpec = "perturbed(const(1), sepcos(1), 0.05)".parse().unwrap();
        assert_eq!(
            k,
            KernelSpec::Perturbed {
                k0: CoefficientSpec::constant(1.0),
                k1: Kernel2DSpec::SepCos(1.0),
                eps: 0.05
            }
        );
        let k: KernelSpec = "blind(poly(1,1))".parse().unwrap();
        assert!(matches!(k, KernelSpec::Blind(_)));
        let k: KernelSpec = "general(tabulated2(k.csv))".parse().unwrap();
        assert_eq!(
            k,
            KernelSpec::General(Kernel2DSpec::Tabulated("k.csv".into()))
        );
        assert!("perturbed(const(1), sepcos(1))"
            .parse::<KernelSpec>()
            .is_err());
        assert!("perturbed(const(1), sepcos(1), -1)"
            .parse::<KernelSpec>()
            .is_err());
        assert!("gen(const2(1))".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn sepcos_sampling() {
        let g = unit(4);
        let m = Kernel2DSpec::SepCos(0.5).sample(&g, None).unwrap();
        let pi = std::f64::consts::PI;
        let (x, y) = (g.center(1), g.center(3));
        assert_relative_eq!(
            m[4 + 3],
            1.0 + 0.5 * (pi * x).cos() * (pi * y).cos(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn matrix_csv() {
        let m = read_matrix_csv("1,2\n3, 4\n", 2).unwrap();
        assert_eq!(m, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(read_matrix_csv("1,2\n3,4\n5,6\n", 2).is_err());
        assert!(read_matrix_csv("1,2,3\n3,4,5\n", 2).is_err());
        assert!(read_matrix_csv("1,a\n3,4\n", 2).is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, Just(0.0), Just(1e-300)]
    }

    fn term() -> impl Strategy<Value = Term> {
        prop_oneof![
            finite().prop_map(Term::Const),
            prop::collection::vec(finite(), 1..5).prop_map(Term::Poly),
            (finite(), finite(), finite()).prop_map(|(k, phase, amp)| Term::Cos { k, phase, amp }),
            (finite(), 1e-3..10.0f64, finite()).prop_map(|(center, width, amp)| Term::Gaussian {
                center,
                width,
                amp
            }),
            prop::collection::vec(finite(), 1..6).prop_map(Term::Tabulated),
        ]
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(terms in prop::collection::vec(term(), 1..4)) {
            let spec = CoefficientSpec::new(terms);
            let back: CoefficientSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn parser_never_panics(s in "\\PC{0,40}") {
            let _ = s.parse::<CoefficientSpec>();
            let _ = s.parse::<KernelSpec>();
        }
    }
}
