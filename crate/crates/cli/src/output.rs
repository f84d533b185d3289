//! Artifact writing. JSON floats use the shortest round-trip form; CSV uses
//! the fixed 17-digit format of the core crate.

use std::path::{Path, PathBuf};

use ecodyn::solvers::Trajectory;
use ecodyn::{Matrix, Vector};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_bytes(dir, name, text.as_bytes())
}

#[derive(Serialize)]
struct TrajectoryJson {
    t: Vec<f64>,
    alpha: Vec<Vec<f64>>,
}

/// Writes `trajectory.csv` or `trajectory.json`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, format: Format) -> Result<PathBuf, CliError> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            ecodyn::io::write_trajectory(&mut buf, traj)?;
            write_bytes(dir, "trajectory.csv", &buf)
        }
        Format::Json => write_json(
            dir,
            "trajectory.json",
            &TrajectoryJson {
                t: traj.times.clone(),
                alpha: traj.states.iter().map(vec).collect(),
            },
        ),
    }
}
