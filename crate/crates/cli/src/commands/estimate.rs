use std::fs::File;
use std::path::{Path, PathBuf};

use ecodyn::estimation::{fit_discrete_with_tol, fit_sparse_with, simulate_discrete, SnapshotSet, SparseOptions};
use ecodyn::model::Generator;
use ecodyn::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{invalid, positive, EstimationBlock, ScenarioConfig, StudyBlock};
use crate::error::CliError;
use crate::output::{self, Format};

#[derive(Serialize)]
struct FitJson {
    snapshots: usize,
    n: usize,
    dt: f64,
    l1_weight: f64,
    a_hat: Vec<Vec<f64>>,
    b_hat: Vec<Vec<f64>>,
    m_hat: Vec<Vec<f64>>,
    residual_rms: f64,
    metzler_violation: f64,
    objective: f64,
    iterations: usize,
    b_identifiable: bool,
    /// Of the stacked regressor `[α_k; u_k]`, descending.
    singular_values: Vec<f64>,
    rank_tol: f64,
}

#[derive(Serialize)]
struct StudyJson {
    seed: u64,
    n: usize,
    instances: usize,
    steps: usize,
    dt: f64,
    noise: f64,
    edge_fraction: f64,
    rows: Vec<StudyRow>,
}

#[derive(Serialize)]
struct StudyRow {
    l1_weight: f64,
    exact_support: usize,
    false_positives: usize,
    false_negatives: usize,
    failures: usize,
}

fn options(e: &EstimationBlock) -> Result<SparseOptions, CliError> {
    let mut opts = SparseOptions::default();
    if let Some(t) = e.rank_tol {
        opts.rank_tol = positive("estimation.rank_tol", t)?;
    }
    if let Some(m) = e.max_iterations {
        if m == 0 {
            return Err(invalid("estimation.max_iterations", "must be at least 1"));
        }
        opts.max_iterations = m;
    }
    Ok(opts)
}

fn check_l1(key: &str, l1: f64) -> Result<f64, CliError> {
    if l1 >= 0.0 && l1.is_finite() {
        Ok(l1)
    } else {
        Err(invalid(key, format!("must be finite and >= 0, got {l1}")))
    }
}

pub fn estimate(cfg: &ScenarioConfig, out: &Path, format: Format, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let e = cfg.estimation()?;
    let opts = options(e)?;
    match (&e.input, &e.study) {
        (Some(path), None) => {
            if seed.is_some() {
                return Err(CliError::Config("--seed is only used by estimation.study".into()));
            }
            fit_file(cfg, e, path, &opts, out)
        }
        (None, Some(study)) => {
            if e.l1_weight != 0.0 {
                return Err(invalid("estimation.l1_weight", "not used by a study; set study.l1_weights"));
            }
            run_study(study, &opts, seed.unwrap_or(0), out, format)
        }
        (Some(_), Some(_)) => Err(invalid("estimation", "give either input or study, not both")),
        (None, None) => Err(invalid("estimation", "missing input (snapshot CSV path) or study")),
    }
}

fn fit_file(cfg: &ScenarioConfig, e: &EstimationBlock, path: &str, opts: &SparseOptions, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let l1 = check_l1("estimation.l1_weight", e.l1_weight)?;
    let full = cfg.resolve(path);
    let file = File::open(&full).map_err(|err| invalid("estimation.input", format!("{}: {err}", full.display())))?;
    let data = ecodyn::io::read_snapshots(file).map_err(|err| CliError::Config(format!("{}: {err}", full.display())))?;
    let diag = fit_discrete_with_tol(&data, opts.rank_tol)?;
    let fit = fit_sparse_with(&data, l1, opts)?;
    let report = FitJson {
        snapshots: data.len(),
        n: data.n(),
        dt: data.dt(),
        l1_weight: l1,
        a_hat: output::rows(&fit.a_hat),
        b_hat: output::rows(&fit.b_hat),
        m_hat: output::rows(&fit.m_hat),
        residual_rms: fit.residual_rms,
        metzler_violation: fit.metzler_violation,
        objective: fit.objective,
        iterations: fit.iterations,
        b_identifiable: fit.b_identifiable,
        singular_values: diag.singular_values,
        rank_tol: opts.rank_tol,
    };
    Ok(vec![output::write_json(out, "fit.json", &report)?])
}

/// Random Metzler generator with `edge_fraction` of the off-diagonal
/// entries in `[0.5, 1]` and a column-dominant diagonal.
fn sparse_truth(rng: &mut ChaCha8Rng, n: usize, edge_fraction: f64) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let target = (edge_fraction * (n * (n - 1)) as f64).round() as usize;
    let mut edges = 0;
    while edges < target {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && m[(i, j)] == 0.0 {
            m[(i, j)] = rng.random_range(0.5..1.0);
            edges += 1;
        }
    }
    for j in 0..n {
        let col: f64 = m.column(j).sum();
        m[(j, j)] = -(col + rng.random_range(0.5..1.0));
    }
    m
}

fn study_instance(rng: &mut ChaCha8Rng, s: &StudyBlock) -> Result<(Matrix, SnapshotSet), CliError> {
    let n = s.n;
    let m = sparse_truth(rng, n, s.edge_fraction);
    let u: Vec<Vector> = (0..s.steps)
        .map(|_| Vector::from_fn(n, |_, _| if rng.random::<f64>() < s.pulse_probability { 3.0 } else { 0.0 }))
        .collect();
    let alpha0 = Vector::from_fn(n, |_, _| rng.random::<f64>());
    let clean = simulate_discrete(&Generator::new(m.clone())?, &u, &alpha0, s.dt, s.steps)?;
    let states = clean
        .states()
        .iter()
        .map(|x| x.map(|v| (v + s.noise * (2.0 * rng.random::<f64>() - 1.0)).max(0.0)))
        .collect();
    let data = SnapshotSet::new(s.dt, states, clean.inputs().to_vec())?;
    Ok((m, data))
}

fn run_study(s: &StudyBlock, opts: &SparseOptions, seed: u64, out: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    if s.n < 2 {
        return Err(invalid("estimation.study.n", "must be at least 2"));
    }
    if s.instances == 0 || s.steps < 2 * s.n {
        return Err(invalid("estimation.study", "need instances >= 1 and steps >= 2n"));
    }
    positive("estimation.study.dt", s.dt)?;
    if !(s.noise >= 0.0) || !s.noise.is_finite() {
        return Err(invalid("estimation.study.noise", "must be finite and >= 0"));
    }
    if !(0.0..=1.0).contains(&s.edge_fraction) {
        return Err(invalid("estimation.study.edge_fraction", "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&s.pulse_probability) {
        return Err(invalid("estimation.study.pulse_probability", "must lie in [0, 1]"));
    }
    if s.l1_weights.is_empty() {
        return Err(invalid("estimation.study.l1_weights", "must not be empty"));
    }
    for (k, l) in s.l1_weights.iter().enumerate() {
        check_l1(&format!("estimation.study.l1_weights[{k}]"), *l)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..s.instances).map(|_| study_instance(&mut rng, s)).collect::<Result<Vec<_>, _>>()?;
    let rows = s
        .l1_weights
        .iter()
        .map(|&l1| {
            let mut row = StudyRow { l1_weight: l1, exact_support: 0, false_positives: 0, false_negatives: 0, failures: 0 };
            for (truth, data) in &instances {
                let Ok(fit) = fit_sparse_with(data, l1, opts) else {
                    row.failures += 1;
                    continue;
                };
                let (mut fp, mut fneg) = (0, 0);
                for i in 0..s.n {
                    for j in (0..s.n).filter(|&j| j != i) {
                        match (fit.m_hat[(i, j)] > 0.0, truth[(i, j)] > 0.0) {
                            (true, false) => fp += 1,
                            (false, true) => fneg += 1,
                            _ => {}
                        }
                    }
                }
                row.false_positives += fp;
                row.false_negatives += fneg;
                if fp + fneg == 0 {
                    row.exact_support += 1;
                }
            }
            row
        })
        .collect::<Vec<_>>();

    let report = StudyJson {
        seed,
        n: s.n,
        instances: s.instances,
        steps: s.steps,
        dt: s.dt,
        noise: s.noise,
        edge_fraction: s.edge_fraction,
        rows,
    };
    let mut written = Vec::new();
    if format == Format::Csv {
        let mut text = String::from("l1_weight,exact_support,false_positives,false_negatives,failures\n");
        for r in &report.rows {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                ecodyn::io::fmt_f64(r.l1_weight),
                r.exact_support,
                r.false_positives,
                r.false_negatives,
                r.failures
            ));
        }
        written.push(output::write_bytes(out, "support.csv", text.as_bytes())?);
    }
    written.push(output::write_json(out, "support.json", &report)?);
    Ok(written)
}
