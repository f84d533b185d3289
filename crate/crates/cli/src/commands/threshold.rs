use std::path::{Path, PathBuf};

use ecodyn::matfun::spectral_radius;
use ecodyn::nonlinear::{sweep_tau, PersistenceStatus, SweepResult};
use ecodyn::Vector;
use serde::Serialize;

use crate::config::{invalid, positive, ScenarioConfig, SweepBlock};
use crate::error::CliError;
use crate::output::{self, Format};

#[derive(Serialize)]
struct BracketJson {
    graph: String,
    nodes: usize,
    lambda_max: f64,
    /// `1/λ_max`; null when `λ_max = 0`.
    tau_c: Option<f64>,
    /// `[last extinct τ, first persistent τ]`.
    bracket: Option<[f64; 2]>,
    contains_tau_c: Option<bool>,
    message: String,
    inconclusive: Vec<f64>,
}

#[derive(Serialize)]
struct SweepJson {
    tau: Vec<f64>,
    status: Vec<&'static str>,
    final_norm: Vec<f64>,
}

/// τ grid from an explicit list or from `tau_min:tau_step:tau_max`.
pub fn tau_grid(s: &SweepBlock) -> Result<Vec<f64>, CliError> {
    match (&s.tau, s.tau_min, s.tau_max, s.tau_step) {
        (Some(t), None, None, None) => {
            if t.is_empty() {
                return Err(invalid("sweep.tau", "must not be empty"));
            }
            Ok(t.clone())
        }
        (None, Some(lo), Some(hi), Some(step)) => {
            positive("sweep.tau_min", lo)?;
            positive("sweep.tau_step", step)?;
            if !(hi >= lo) || !hi.is_finite() {
                return Err(invalid("sweep.tau_max", format!("must be >= tau_min = {lo}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|k| lo + k as f64 * step).collect())
        }
        _ => Err(invalid("sweep.tau", "give either tau, or all of tau_min, tau_max and tau_step")),
    }
}

pub fn threshold(cfg: &ScenarioConfig, out: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.sweep()?;
    let adj = s.graph.adjacency()?;
    let grid = tau_grid(s)?;
    positive("sweep.horizon", s.horizon)?;
    if !(s.initial > 0.0 && s.initial <= 1.0) {
        return Err(invalid("sweep.initial", "must lie in (0, 1]"));
    }
    let x0 = Vector::from_element(adj.nrows(), s.initial);
    let lambda_max = spectral_radius(&adj)?.value;
    let tau_c = (lambda_max > 0.0).then(|| 1.0 / lambda_max);

    let sweep = sweep_tau(&adj, &grid, &x0, s.horizon).map_err(|e| match e {
        ecodyn::Error::InvalidInput(m) => invalid("sweep", m),
        e => e.into(),
    })?;

    let mut written = vec![write_sweep(out, &sweep, format)?];
    let report = BracketJson {
        graph: s.graph.name(),
        nodes: adj.nrows(),
        lambda_max,
        tau_c,
        bracket: sweep.bracket.map(|(lo, hi)| [lo, hi]),
        contains_tau_c: match (sweep.bracket, tau_c) {
            (Some((lo, hi)), Some(tc)) => Some(lo <= tc && tc <= hi),
            _ => None,
        },
        message: message(&sweep),
        inconclusive: sweep.inconclusive.clone(),
    };
    written.push(output::write_json(out, "bracket.json", &report)?);

    if sweep.points.iter().all(|p| p.status == PersistenceStatus::Inconclusive) {
        return Err(CliError::Inconclusive(format!(
            "all {} sweep points were inconclusive; lengthen sweep.horizon",
            sweep.points.len()
        )));
    }
    Ok(written)
}

fn message(sweep: &SweepResult) -> String {
    let has = |st| sweep.points.iter().any(|p| p.status == st);
    match (sweep.bracket, has(PersistenceStatus::Extinct), has(PersistenceStatus::Persistent)) {
        (Some((lo, hi)), _, _) => format!("transition between tau = {lo} and tau = {hi}"),
        (None, true, false) => "no transition observed: every conclusive point is extinct".into(),
        (None, false, true) => "no transition observed: every conclusive point is persistent".into(),
        _ => "no transition observed".into(),
    }
}

fn write_sweep(out: &Path, sweep: &SweepResult, format: Format) -> Result<PathBuf, CliError> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            ecodyn::io::write_sweep(&mut buf, sweep)?;
            output::write_bytes(out, "sweep.csv", &buf)
        }
        Format::Json => output::write_json(
            out,
            "sweep.json",
            &SweepJson {
                tau: sweep.points.iter().map(|p| p.tau).collect(),
                status: sweep.points.iter().map(|p| p.status.as_str()).collect(),
                final_norm: sweep.points.iter().map(|p| p.final_norm).collect(),
            },
        ),
    }
}
