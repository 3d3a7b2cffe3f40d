//! CSV output of time series, snapshots and fields, and the trajectory reader.

use std::path::Path;

use crate::dynamics::SimState;
use crate::entropy::EntropySample;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid1D};

pub const SERIES_HEADER: [&str; 8] = ["t", "mass", "sup_u", "H1", "H2", "F", "lambda", "h_norm2"];

/// Shortest decimal that round-trips.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// `t, mass, sup_u, H1, H2, F, lambda, h_norm2`, with `F` taken at `q = 2`.
pub fn write_series(path: &Path, samples: &[EntropySample]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SERIES_HEADER)?;
    for s in samples {
        let (h2, f) = s.entry(2.0).map_or((f64::NAN, f64::NAN), |e| (e.h, e.f));
        w.write_record([s.t, s.mass, s.sup_u, s.h1, h2, f, s.lambda, s.h_norm2].map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

/// One row per state: `t, u_0, ..., u_{n-1}`.
pub fn write_snapshots(path: &Path, states: &[SimState]) -> Result<()> {
    let mut w = writer(path)?;
    if let Some(first) = states.first() {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..first.u.len()).map(|i| format!("u{i}")))
            .collect();
        w.write_record(&header)?;
    }
    for s in states {
        let row: Vec<String> = std::iter::once(s.t)
            .chain(s.u.values().iter().copied())
            .map(fmt)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x, <name>` for each named field.
pub fn write_fields(path: &Path, grid: &Grid1D, fields: &[(&str, &Field)]) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = std::iter::once("x")
        .chain(fields.iter().map(|(n, _)| *n))
        .collect();
    w.write_record(&header)?;
    for (i, x) in grid.centers().enumerate() {
        let row: Vec<String> = std::iter::once(x)
            .chain(fields.iter().map(|(_, f)| f.values()[i]))
            .map(fmt)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Arbitrary numeric table with a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads snapshot rows `t, u_0, ..., u_{n-1}` written by [`write_snapshots`].
pub fn read_trajectory_csv(text: &str, grid: Grid1D) -> Result<Vec<SimState>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let n = grid.len();
    let mut out = Vec::new();
    for (step, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n + 1 {
            return Err(Error::LengthMismatch {
                expected: n + 1,
                got: rec.len(),
            });
        }
        let vals = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::malformed(s, format!("row {}: not a finite number", step + 1))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SimState {
            t: vals[0],
            u: Field::new(grid, vals[1..].to_vec())?,
            step,
        });
    }
    Ok(out)
}
