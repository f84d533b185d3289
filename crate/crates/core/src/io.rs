//! CSV formats shared with the command-line front end.
//!
//! All floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly and keeps output byte-stable.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimation::SnapshotSet;
use crate::nonlinear::SweepResult;
use crate::solvers::Trajectory;
use crate::Vector;

/// Relative tolerance on the spacing of snapshot times.
pub const DT_REL_TOL: f64 = 1e-9;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Csv { row: p.line() as usize, message: e.to_string() },
        None => Error::Io(e.to_string()),
    }
}

fn header(prefixes: &[&str], n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for p in prefixes {
        h.extend((1..=n).map(|i| format!("{p}_{i}")));
    }
    h
}

/// Writes `t,alpha_1,...,alpha_n`, one row per sample.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["alpha"], traj.n())).map_err(csv_err)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let row = std::iter::once(fmt_f64(*t)).chain(s.iter().map(|v| fmt_f64(*v)));
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,alpha_1..alpha_n,u_1..u_n`. Row `k` pairs the state at `t_k`
/// with the input held over `[t_k, t_{k+1})`.
pub fn write_snapshots<W: Write>(out: W, data: &SnapshotSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["alpha", "u"], data.n())).map_err(csv_err)?;
    for (k, (s, u)) in data.states().iter().zip(data.inputs()).enumerate() {
        let row = std::iter::once(fmt_f64(data.time(k)))
            .chain(s.iter().map(|v| fmt_f64(*v)))
            .chain(u.iter().map(|v| fmt_f64(*v)));
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot CSV. The header fixes `n`; times must be uniformly
/// spaced to within [`DT_REL_TOL`]. Errors carry the 1-based file line.
pub fn read_snapshots<R: Read>(input: R) -> Result<SnapshotSet> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let head: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if head.len() < 3 || head.len().is_multiple_of(2) {
        return Err(Error::Csv { row: 1, message: format!("expected t,alpha_1..alpha_n,u_1..u_n, found {} columns", head.len()) });
    }
    let n = (head.len() - 1) / 2;
    let expected = header(&["alpha", "u"], n);
    if let Some((got, want)) = head.iter().zip(&expected).find(|(g, w)| g != w) {
        return Err(Error::Csv { row: 1, message: format!("expected column '{want}', found '{got}'") });
    }

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut vals = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv { row: line, message: format!("column '{}': cannot parse '{field}'", head[col]) })?;
            if !v.is_finite() {
                return Err(Error::Csv { row: line, message: format!("column '{}': non-finite value", head[col]) });
            }
            if col > 0 && v < 0.0 {
                return Err(Error::Csv { row: line, message: format!("column '{}': negative value {v}", head[col]) });
            }
            vals.push(v);
        }
        times.push((line, vals[0]));
        states.push(Vector::from_column_slice(&vals[1..=n]));
        inputs.push(Vector::from_column_slice(&vals[n + 1..]));
    }
    if times.len() < 2 {
        return Err(Error::Csv { row: times.first().map_or(1, |t| t.0), message: "need at least two snapshots".into() });
    }

    let t0 = times[0].1;
    let dt = times[1].1 - t0;
    if dt <= 0.0 {
        return Err(Error::Csv { row: times[1].0, message: format!("time must increase, step {dt}") });
    }
    for w in times.windows(2) {
        let step = w[1].1 - w[0].1;
        if (step - dt).abs() > DT_REL_TOL * dt {
            return Err(Error::Csv { row: w[1].0, message: format!("non-uniform spacing: step {step} vs dt {dt}") });
        }
    }
    // Average spacing is less sensitive to rounding in the written times.
    let dt = (times[times.len() - 1].1 - t0) / (times.len() - 1) as f64;
    SnapshotSet::with_start(t0, dt, states, inputs)
}

/// Writes `tau,status,final_norm`.
pub fn write_sweep<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "status", "final_norm"]).map_err(csv_err)?;
    for p in &sweep.points {
        w.write_record([fmt_f64(p.tau), p.status.as_str().to_string(), fmt_f64(p.final_norm)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
