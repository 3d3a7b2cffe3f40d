//! Flat `key.path = value` experiment files.
//!
//! ```text
//! # constant blind case
//! scenario = simulate
//! grid.n = 128
//! coeff.r = const(2)
//! kernel = blind(const(1))
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::coeff::{CoefficientSpec, KernelSpec};
use crate::error::{Error, Result};

const KEYS: &[&str] = &[
    "scenario",
    "seed",
    "grid.a",
    "grid.b",
    "grid.n",
    "coeff.A",
    "coeff.r",
    "kernel",
    "selection.p",
    "tol.eig",
    "tol.stationary",
    "dynamics.dt",
    "dynamics.t_end",
    "dynamics.record_every",
    "dynamics.u0",
    "dynamics.u0_scale",
    "convergence.target",
    "convergence.tol",
    "entropy.q",
    "entropy.identity_q",
    "entropy.identity_rel_tol",
    "entropy.gap_slack",
    "gap.vbar",
    "steady.method",
    "steady.x0",
    "steady.tol",
    "steady.theta_max",
    "steady.max_iterations",
    "steady.schedule",
    "sweep.eps",
    "sweep.p",
    "sweep.seeds",
    "sweep.pair_tol",
    "sweep.slope_spread",
    "sweep.gap_ratio",
    "dichotomy.c",
    "study.n",
    "study.dt",
    "study.t_end",
    "study.min_order_space",
    "study.min_order_time",
    "study.identity_ladder",
    "study.identity_t_end",
    "study.identity_min_ratio",
    "expect.lambda1",
    "expect.rho1",
    "expect.rel_tol",
    "expect.abs_tol",
    "expect.exists",
    "output.dir",
    "output.snapshots",
];

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs with the line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    base_dir: Option<PathBuf>,
    text: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::config(line, format!("expected `key = value`, got `{content}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(Error::config(line, format!("bad key `{key}`")));
            }
            if !KEYS.contains(&key) {
                return Err(Error::config(line, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(Error::config(line, format!("empty value for `{key}`")));
            }
            if let Some(prev) = entries.get(key) {
                let Entry { line: first, .. } = prev;
                return Err(Error::config(
                    line,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Self {
            entries,
            base_dir: None,
            text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    /// Sets or replaces a key, as from a command-line override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::config(0, format!("unknown key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| {
                Error::config(e.line, format!("`{key}` must be {what}, got `{}`", e.value))
            }),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(Error::config(
                self.line(key),
                format!("`{key}` must be finite"),
            )),
            _ => Ok(v),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize(key)?.unwrap_or(default))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key, "`true` or `false`")
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::config(e.line, format!("`{key}`: `{s}` is not a finite number"))
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Comma-separated `n:dt` pairs.
    pub fn ladder(&self, key: &str) -> Result<Option<Vec<(usize, f64)>>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|item| {
                let bad = || {
                    Error::config(
                        e.line,
                        format!("`{key}`: expected `n:dt`, got `{}`", item.trim()),
                    )
                };
                let (n, dt) = item.trim().split_once(':').ok_or_else(bad)?;
                let n: usize = n.trim().parse().map_err(|_| bad())?;
                let dt: f64 = dt.trim().parse().map_err(|_| bad())?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(bad());
                }
                Ok((n, dt))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn coeff(&self, key: &str) -> Result<Option<CoefficientSpec>> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .parse()
            .map(Some)
            .map_err(|err: Error| Error::config(e.line, format!("`{key}`: {err}")))
    }

    pub fn kernel(&self) -> Result<Option<KernelSpec>> {
        let Some(e) = self.entries.get("kernel") else {
            return Ok(None);
        };
        e.value
            .parse()
            .map(Some)
            .map_err(|err: Error| Error::config(e.line, format!("`kernel`: {err}")))
    }

    pub fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::config(0, format!("missing required key `{key}`")))
    }
}
