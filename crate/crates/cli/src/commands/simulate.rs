use std::path::{Path, PathBuf};

use ecodyn::estimation::SnapshotSet;
use ecodyn::model::{Generator, GeneratorPath, Schedule, Segment};
use ecodyn::nonlinear::{integrate_saturating, CrowdingMatrix};
use ecodyn::solvers::{
    sample_grid, solve_schedule, solve_time_varying, PbOptions, TimeVaryingOptions, Trajectory, TransitionMethod,
};
use ecodyn::{Matrix, Vector};
use serde::Serialize;

use crate::config::{self, invalid, positive, MethodName, ModelBlock, ModulationTarget, RunBlock, RunMode, ScenarioConfig};
use crate::error::CliError;
use crate::output::{self, Format};

/// Saturating trajectories may not exceed `1 + BOUND_SLACK`.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Serialize)]
struct Summary {
    mode: &'static str,
    n: usize,
    t0: f64,
    t_end: f64,
    samples: usize,
    min_entry: f64,
    max_entry: f64,
    nonnegative: bool,
    /// One flag per distinct generator (segments in schedule mode).
    hurwitz: Vec<bool>,
    spectral_abscissa: Vec<f64>,
    equilibrium: Option<Vec<f64>>,
    final_state: Vec<f64>,
    clamp_events: Option<usize>,
}

struct Run {
    trajectory: Trajectory,
    generators: Vec<Generator>,
    equilibrium: Option<Vector>,
    /// Input held over `[t_k, t_{k+1})` for each sample; absent in saturating mode.
    inputs: Option<Vec<Vector>>,
    clamp_events: Option<usize>,
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let run = cfg.run()?;
    model.validate_time()?;
    run.check_mode_keys()?;

    let result = match run.mode {
        RunMode::Constant => constant(model, run)?,
        RunMode::Schedule => schedule(model, run)?,
        RunMode::TimeVarying => time_varying(model, run)?,
        RunMode::Saturating => saturating(model, run)?,
    };
    let traj = &result.trajectory;

    let mut hurwitz = Vec::new();
    let mut abscissa = Vec::new();
    for g in &result.generators {
        let check = g.is_hurwitz()?;
        hurwitz.push(check.hurwitz);
        abscissa.push(check.abscissa);
    }
    let min_entry = traj.min_entry();
    let summary = Summary {
        mode: run.mode.as_str(),
        n: model.n,
        t0: model.t0,
        t_end: model.t_end(),
        samples: traj.len(),
        min_entry,
        max_entry: traj.max_entry(),
        nonnegative: min_entry >= -1e-12,
        hurwitz,
        spectral_abscissa: abscissa,
        equilibrium: result.equilibrium.as_ref().map(output::vec),
        final_state: traj.states.last().map(output::vec).unwrap_or_default(),
        clamp_events: result.clamp_events,
    };
    if run.mode == RunMode::Saturating && summary.max_entry > 1.0 + BOUND_SLACK {
        return Err(CliError::Numerical(format!("saturating trajectory reached {}", summary.max_entry)));
    }

    let mut written = vec![output::write_trajectory(out, traj, format)?];
    if let Some(inputs) = &result.inputs {
        if let Some(snap) = snapshots(traj, inputs, run.sample_dt) {
            let mut buf = Vec::new();
            ecodyn::io::write_snapshots(&mut buf, &snap)?;
            written.push(output::write_bytes(out, "snapshots.csv", &buf)?);
        }
    }
    written.push(output::write_json(out, "summary.json", &summary)?);
    Ok(written)
}

/// Uniformly spaced prefix of the samples; a shorter final interval (when
/// the horizon is not a multiple of `sample_dt`) is dropped.
fn snapshots(traj: &Trajectory, inputs: &[Vector], dt: f64) -> Option<SnapshotSet> {
    let mut keep = traj.len();
    if keep >= 2 {
        let last = traj.times[keep - 1] - traj.times[keep - 2];
        if (last - dt).abs() > 1e-9 * dt {
            keep -= 1;
        }
    }
    if keep < 2 {
        return None;
    }
    SnapshotSet::with_start(traj.times[0], dt, traj.states[..keep].to_vec(), inputs[..keep].to_vec()).ok()
}

fn held_inputs(schedule: &Schedule, times: &[f64]) -> Vec<Vector> {
    times.iter().map(|&t| schedule.segments()[schedule.segment_at(t)].input.clone()).collect()
}

fn constant(model: &ModelBlock, run: &RunBlock) -> Result<Run, CliError> {
    let g = model.generator()?;
    let u = model.input()?;
    let alpha0 = model.alpha0()?;
    let sched = Schedule::with_input(&g, &u, model.t0, model.t_end()).map_err(|e| invalid("model.u", e))?;
    let trajectory = solve_schedule(&sched, &alpha0, run.sample_dt)?;
    let equilibrium = match (u.values().len(), g.is_hurwitz()?.hurwitz) {
        (1, true) => Some(g.equilibrium(&u.values()[0])?),
        _ => None,
    };
    Ok(Run {
        inputs: Some(held_inputs(&sched, &trajectory.times)),
        trajectory,
        generators: vec![g],
        equilibrium,
        clamp_events: None,
    })
}

fn schedule(model: &ModelBlock, run: &RunBlock) -> Result<Run, CliError> {
    let segs = run.segments.as_ref().ok_or_else(|| invalid("run.segments", "required in schedule mode"))?;
    if segs.is_empty() {
        return Err(invalid("run.segments", "at least one segment is required"));
    }
    let n = model.n;
    let base_lambda = model.interactions()?;
    let base_delta = model.decay()?;
    let u = match &model.u {
        Some(_) => Some(model.input()?),
        None => None,
    };
    let alpha0 = model.alpha0()?;

    let mut pieces: Vec<Segment> = Vec::new();
    let mut generators: Vec<Generator> = Vec::new();
    let mut start = model.t0;
    for (k, s) in segs.iter().enumerate() {
        let key = |f: &str| format!("run.segments[{k}].{f}");
        if !(s.until > start) {
            return Err(invalid(&key("until"), format!("must exceed the previous boundary {start}")));
        }
        let lambda = match &s.lambda {
            Some(l) => config::interactions(&key("lambda"), l, n)?,
            None => base_lambda.clone(),
        };
        let delta = match &s.delta {
            Some(d) => config::decay(&key("delta"), d, n)?,
            None => base_delta.clone(),
        };
        let g = Generator::assemble(&lambda, &delta).map_err(|e| invalid(&key("lambda"), e))?;
        match (&s.u, &u) {
            (Some(v), _) => {
                let v = config::nonneg_vector(&key("u"), v, n)?;
                pieces.push(Segment::new(start, s.until, g.clone(), v).map_err(|e| invalid(&key("until"), e))?);
            }
            (None, Some(signal)) => {
                let sub = Schedule::with_input(&g, signal, start, s.until).map_err(|e| invalid(&key("until"), e))?;
                pieces.extend(sub.segments().iter().cloned());
            }
            (None, None) => return Err(invalid(&key("u"), "required when model.u is absent")),
        }
        if !generators.contains(&g) {
            generators.push(g);
        }
        start = s.until;
    }
    if (start - model.t_end()).abs() > 1e-12 * model.t_end().abs().max(1.0) {
        return Err(invalid("run.segments", format!("last segment ends at {start}, expected t0 + horizon = {}", model.t_end())));
    }
    if model.u.is_some() && segs.iter().all(|s| s.u.is_some()) {
        return Err(invalid("model.u", "unused: every segment sets its own u"));
    }
    let sched = Schedule::new(pieces).map_err(|e| invalid("run.segments", e))?;
    let trajectory = solve_schedule(&sched, &alpha0, run.sample_dt)?;
    Ok(Run {
        inputs: Some(held_inputs(&sched, &trajectory.times)),
        trajectory,
        generators,
        equilibrium: None,
        clamp_events: None,
    })
}

fn time_varying(model: &ModelBlock, run: &RunBlock) -> Result<Run, CliError> {
    let modulation = run.modulation.clone().ok_or_else(|| invalid("run.modulation", "required in time-varying mode"))?;
    positive("run.modulation.period", modulation.period)?;
    if !(0.0..=1.0).contains(&modulation.amplitude) {
        return Err(invalid("run.modulation.amplitude", "must lie in [0, 1] so the modulated rates stay nonnegative"));
    }
    if !modulation.phase.is_finite() {
        return Err(invalid("run.modulation.phase", "must be finite"));
    }
    let g = model.generator()?;
    let u = model.input()?;
    let alpha0 = model.alpha0()?;
    let (t0, t_end) = (model.t0, model.t_end());

    let path = match modulation.target {
        ModulationTarget::Generator => {
            let m = modulation.clone();
            GeneratorPath::scaled(g.clone(), t0, t_end, move |t| m.factor(t))?
        }
        ModulationTarget::Interactions => {
            let lambda = model.interactions()?.matrix().clone();
            let decay = Matrix::from_diagonal(model.decay()?.rates());
            let m = modulation.clone();
            GeneratorPath::from_fn(model.n, t0, t_end, false, move |t| &lambda * m.factor(t) - &decay)?
        }
    };
    let mut pb = PbOptions::default();
    if let Some(tol) = run.pb_tol {
        pb.tol = positive("run.pb_tol", tol)?;
    }
    if let Some(terms) = run.pb_max_terms {
        if terms == 0 {
            return Err(invalid("run.pb_max_terms", "must be at least 1"));
        }
        pb.max_terms = terms;
    }
    if run.method == Some(MethodName::Product) && (run.pb_tol.is_some() || run.pb_max_terms.is_some()) {
        return Err(invalid("run.pb_tol", "only used with method = \"peano-baker\""));
    }
    let mut opts = TimeVaryingOptions::default();
    opts.method = match run.method.unwrap_or(MethodName::PeanoBaker) {
        MethodName::PeanoBaker => TransitionMethod::PeanoBaker { options: pb, chunk_norm: 0.5 },
        MethodName::Product => TransitionMethod::Product { step_norm: 0.05 },
    };
    let grid = sample_grid(t0, t_end, run.sample_dt)?;
    let trajectory = solve_time_varying(&path, &u, &alpha0, &grid, &opts)?;
    Ok(Run {
        inputs: Some(grid.iter().map(|&t| u.value_at(t).clone()).collect()),
        trajectory,
        generators: vec![g],
        equilibrium: None,
        clamp_events: None,
    })
}

fn saturating(model: &ModelBlock, run: &RunBlock) -> Result<Run, CliError> {
    if model.u.is_some() {
        return Err(invalid("model.u", "not used in saturating mode"));
    }
    let n = model.n;
    let lambda = model.interactions()?;
    let delta = model.decay()?;
    let crowd = match &run.crowding {
        Some(c) => CrowdingMatrix::new(config::matrix("run.crowding", c, n)?).map_err(|e| invalid("run.crowding", e))?,
        None => CrowdingMatrix::zeros(n),
    };
    let alpha0 = model.alpha0()?;
    if let Some(i) = alpha0.iter().position(|v| *v > 1.0) {
        return Err(invalid(&format!("model.alpha0[{i}]"), "must lie in [0, 1] in saturating mode"));
    }
    let step = positive("run.step", run.step.unwrap_or(0.01))?;
    let ratio = run.sample_dt / step;
    let every = ratio.round();
    if every < 1.0 || (ratio - every).abs() > 1e-9 * ratio {
        return Err(invalid("run.sample_dt", format!("must be an integer multiple of run.step = {step}")));
    }
    let every = every as usize;
    let sat = integrate_saturating(&lambda, &delta, &crowd, &alpha0, model.horizon, step)?;
    let full = sat.trajectory;
    let last = full.len() - 1;
    let keep: Vec<usize> = (0..full.len()).filter(|k| k % every == 0 || *k == last).collect();
    let trajectory = Trajectory {
        times: keep.iter().map(|&k| model.t0 + full.times[k]).collect(),
        states: keep.iter().map(|&k| full.states[k].clone()).collect(),
        mode: full.mode,
    };
    Ok(Run {
        trajectory,
        generators: vec![Generator::assemble(&lambda, &delta)?],
        equilibrium: None,
        inputs: None,
        clamp_events: Some(sat.clamp_events),
    })
}
