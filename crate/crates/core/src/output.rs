//! CSV and JSON emitters.
//!
//! Numbers are written in shortest round-trip form, so identical inputs give
//! byte-identical files.

use std::io::Write;

use serde::Serialize;

use crate::boundary_model::EventTrajectory;
use crate::master_equation::LindbladTrajectory;
use crate::quantum_grid::OperatorSet;
use crate::sde_engine::TrajectoryRecord;
use crate::{Error, Result};

/// Formats a float so that parsing it back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Column-named table of pre-formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.headers.len() {
            return Err(Error::invalid(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.headers.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push_f64(&mut self, row: &[f64]) -> Result<()> {
        self.push(row.iter().map(|v| fmt_f64(*v)).collect())
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::numerical(format!("CSV write failed: {e}"));
        out.write_record(&self.headers).map_err(io)?;
        for r in &self.rows {
            out.write_record(r).map_err(io)?;
        }
        out.flush().map_err(|e| Error::numerical(format!("CSV write failed: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::numerical(e.to_string()))
    }
}

fn channel_headers(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |k| format!("{prefix}_{k}"))
}

fn trajectory_headers(d: usize, with_index: bool) -> Table {
    let mut h: Vec<String> = Vec::new();
    if with_index {
        h.push("trajectory_index".into());
    }
    h.extend(["t", "norm_sq", "q_mean", "p_mean", "q_dispersion"].map(String::from));
    h.extend(channel_headers("dY", d));
    h.extend(channel_headers("dw", d));
    h.extend(channel_headers("dwt", d));
    Table::new(h)
}

fn append_trajectory(t: &mut Table, r: &TrajectoryRecord, with_index: bool) -> Result<()> {
    let d = r.d;
    for i in 0..r.times.len() {
        let mut row = Vec::with_capacity(t.headers.len());
        if with_index {
            row.push(r.trajectory_index.to_string());
        }
        for v in [r.times[i], r.norms_sq[i], r.q_mean[i], r.p_mean[i], r.q_dispersion[i]] {
            row.push(fmt_f64(v));
        }
        // Row i carries the increment that ends at t_i; row 0 has none.
        for inc in [&r.dy, &r.dw, &r.dwt] {
            for k in 0..d {
                row.push(fmt_f64(if i == 0 { 0.0 } else { inc[(i - 1) * d + k] }));
            }
        }
        t.push(row)?;
    }
    Ok(())
}

/// Columns `t, norm_sq, q_mean, p_mean, q_dispersion, dY_k, dw_k, dwt_k`.
pub fn trajectory_table(r: &TrajectoryRecord) -> Result<Table> {
    let mut t = trajectory_headers(r.d, false);
    append_trajectory(&mut t, r, false)?;
    Ok(t)
}

/// Concatenation of several trajectories with a leading `trajectory_index`.
pub fn ensemble_table(rs: &[TrajectoryRecord]) -> Result<Table> {
    let d = rs.first().map_or(1, |r| r.d);
    let mut t = trajectory_headers(d, true);
    for r in rs {
        if r.d != d {
            return Err(Error::invalid("trajectories have different channel counts"));
        }
        append_trajectory(&mut t, r, true)?;
    }
    Ok(t)
}

/// Columns `t, trace, purity, q_mean, q_dispersion`.
pub fn lindblad_table(tr: &LindbladTrajectory, ops: &OperatorSet) -> Result<Table> {
    let mut t = Table::new(["t", "trace", "purity", "q_mean", "q_dispersion"]);
    for (time, rho) in tr.times.iter().zip(&tr.states) {
        t.push_f64(&[*time, rho.trace(), rho.purity(), rho.position_mean(ops), rho.position_dispersion(ops)])?;
    }
    Ok(t)
}

/// Columns `step, outcome, q_mean, dispersion`, one row per recorded step.
pub fn event_table(tr: &EventTrajectory) -> Result<Table> {
    let mut t = Table::new(["step", "outcome", "q_mean", "dispersion"]);
    for (i, s) in tr.moment_steps.iter().enumerate() {
        let outcome = if *s == 0 { String::new() } else { tr.outcomes[s - 1].to_string() };
        t.push(vec![s.to_string(), outcome, fmt_f64(tr.q_mean[i]), fmt_f64(tr.dispersion[i])])?;
    }
    Ok(t)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::numerical(format!("JSON encoding failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.0, -0.0, 1.0, 0.1, 1e-300, 5e-324, -3.25e-7, 1e20, f64::MAX, std::f64::consts::PI] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn table_shape_is_enforced() {
        let mut t = Table::new(["a", "b"]);
        t.push_f64(&[1.0, 2.5]).unwrap();
        assert!(t.push_f64(&[1.0]).is_err());
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n1,2.5\n");
    }
}
