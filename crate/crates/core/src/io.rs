//! Data export: JSON lines for paths, CSV tables for grids and sampled orbits.
//!
//! JSON floats use the shortest representation that parses back to the same value.
//! CSV floats are written with 17 significant digits.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::detline::TraceRow;
use crate::elliptic::GridRow;
use crate::error::{Error, Result};
use crate::helium::{PairCert, PairSample};
use crate::levi_civita::Orbit;
use crate::solve::{FrozenStep, PathPoint};

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

fn format_cell(c: Cell) -> String {
    match c {
        Cell::Float(v) => format!("{v:.16e}"),
        Cell::Int(v) => v.to_string(),
        Cell::Missing => String::new(),
    }
}

/// Write `# key=value` comment lines, a header and the rows.
pub fn write_csv<W: Write>(
    mut out: W,
    comments: &[(String, String)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<Cell>>,
) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "row of {} cells under a header of {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.into_iter().map(format_cell))?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a table written by [`write_csv`]; missing cells become NaN.
pub fn read_csv<R: std::io::Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad CSV number {s:?}: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub const GRID_HEADER: [&str; 12] = [
    "m", "I0", "I1", "I2", "I3", "I4", "K", "E", "rec_res", "i2_res", "der_res", "riccati_res",
];

pub fn grid_rows(rows: &[GridRow]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    rows.iter().map(|r| {
        vec![
            r.m.into(),
            r.i0.into(),
            r.i1.into(),
            r.i2.into(),
            r.i3.into(),
            r.i4.into(),
            r.k.into(),
            r.e.into(),
            r.rec_res.into(),
            r.i2_res.into(),
            r.der_res.into(),
            r.riccati_res.into(),
        ]
    })
}

pub const ORBIT_HEADER: [&str; 4] = ["t", "q", "qdot", "zero_flag"];

/// `t, q, q̇` (eighth-order central difference) and whether the sample is a collision.
pub fn orbit_rows(orbit: &Orbit) -> Vec<Vec<Cell>> {
    let qdot = orbit.derivative_fd();
    (0..orbit.len())
        .map(|j| {
            let collision = orbit.is_collision_sample(j);
            vec![
                orbit.t(j).into(),
                orbit.samples()[j].into(),
                if collision { Cell::Missing } else { qdot[j].into() },
                collision.into(),
            ]
        })
        .collect()
}

pub const PAIR_HEADER: [&str; 4] = ["t", "q1", "q2", "gap"];

pub fn pair_rows(samples: &[PairSample]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    samples
        .iter()
        .map(|p| vec![p.t.into(), p.q1.into(), p.q2.into(), p.gap.into()])
}

pub const TRACE_HEADER: [&str; 8] = ["tau", "c_m2", "c_m1", "c_0", "c_1", "c_2", "zeta", "alignment"];

pub fn trace_rows(rows: &[TraceRow]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    rows.iter().map(|r| {
        vec![
            r.tau.into(),
            r.c_m2.into(),
            r.c_m1.into(),
            r.c_0.into(),
            r.c_1.into(),
            r.c_2.into(),
            r.zeta.into(),
            r.alignment.into(),
        ]
    })
}

pub const FROZEN_SUMMARY_HEADER: [&str; 16] = [
    "r",
    "value",
    "a",
    "b",
    "v",
    "w",
    "index",
    "nullity",
    "min_abs_eigenvalue",
    "grad_res",
    "vw_res1",
    "vw_res2",
    "energy_res",
    "ode_res",
    "beta_mu_res",
    "sup_norm",
];

pub fn frozen_summary_rows(
    points: &[PathPoint<FrozenStep>],
) -> impl Iterator<Item = Vec<Cell>> + '_ {
    points.iter().map(|p| {
        let s = &p.cert;
        let c = &s.cert;
        vec![
            p.param.into(),
            c.value.into(),
            c.coeffs.a.into(),
            c.coeffs.b.into(),
            c.v.into(),
            c.w.into(),
            s.spectrum.morse_index.into(),
            s.spectrum.nullity.into(),
            s.spectrum.min_abs.into(),
            c.residuals.grad.into(),
            c.residuals.vw1.into(),
            c.residuals.vw2.into(),
            c.residuals.energy.into(),
            s.orbit.ode_res.into(),
            s.orbit.beta_mu_res.into(),
            c.bounds.sup.into(),
        ]
    })
}

pub const PAIR_SUMMARY_HEADER: [&str; 11] = [
    "s",
    "value",
    "grad_res",
    "index",
    "nullity",
    "min_eigenvalue",
    "r_bound",
    "euler",
    "fd_check",
    "z1_deviation",
    "min_gap",
];

pub fn pair_summary_rows(points: &[PathPoint<PairCert>]) -> impl Iterator<Item = Vec<Cell>> + '_ {
    points.iter().map(|p| {
        let c = &p.cert;
        vec![
            p.param.into(),
            c.value.into(),
            c.grad_res.into(),
            c.spectrum.morse_index.into(),
            c.spectrum.nullity.into(),
            c.bound.min_eigenvalue.into(),
            c.bound.r_bound.into(),
            c.euler.map_or(Cell::Missing, Cell::Int),
            c.fd_check.into(),
            c.z1_deviation.into(),
            c.min_gap.into(),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::{Loop, SymmetryClass};

    #[test]
    fn csv_roundtrip_is_lossless() {
        let values = [std::f64::consts::PI, -1e-300, 0.1 + 0.2, 12345.678];
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &[("grid".into(), "a:b".into())],
            &["x", "flag", "gap"],
            values.iter().map(|&v| vec![v.into(), true.into(), Cell::Missing]),
        )
        .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# grid=a:b\nx,flag,gap\n"));
        let (header, rows) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(header, ["x", "flag", "gap"]);
        for (row, v) in rows.iter().zip(values) {
            assert_eq!(row[0], v);
            assert_eq!(row[1], 1.0);
            assert!(row[2].is_nan());
        }
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let err = write_csv(Vec::new(), &[], &["a", "b"], [vec![Cell::Int(1)]]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn jsonl_roundtrip() {
        let loops = vec![
            Loop::new(SymmetryClass::OddSine, vec![1.0, 0.1 + 0.2]).unwrap(),
            Loop::new(SymmetryClass::EvenCosine, vec![2.0]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &loops).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        let back: Vec<Loop> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, loops);
    }

    #[test]
    fn orbit_table_flags_collisions() {
        let z = Loop::new(SymmetryClass::OddSine, vec![1.0, 0.0]).unwrap();
        let orbit = crate::levi_civita::forward_with(&z, 1024).unwrap();
        let rows = orbit_rows(&orbit);
        assert_eq!(rows.len(), 1024);
        assert_eq!(rows[0][3], Cell::Int(1));
        assert_eq!(rows[0][2], Cell::Missing);
        assert_eq!(rows[512][3], Cell::Int(0));
        // q̇ vanishes at the turning point t = 1/2.
        match rows[512][2] {
            Cell::Float(v) => assert!(v.abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }
}
