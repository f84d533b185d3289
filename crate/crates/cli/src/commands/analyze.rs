use std::path::{Path, PathBuf};

use ecodyn::analysis::{
    amplification, baseline_trajectory, cumulative_amplification, edge_roi, frequency_amplification,
    frequency_amplification_discrete, perceived_utility, saturation_point, sensitivity_delta_j, uniform_weights,
    PerceptionParams, SaturationPoint, BASELINE_FLOOR,
};
use ecodyn::model::Schedule;
use ecodyn::solvers::{sample_grid, solve_schedule_at};
use ecodyn::{Matrix, Vector};
use serde::Serialize;

use crate::config::{self, invalid, positive, ScenarioConfig};
use crate::error::CliError;
use crate::output::{self, Format};

#[derive(Serialize)]
struct Report {
    weights: Vec<f64>,
    amplification: AmplificationJson,
    cumulative_amplification: f64,
    sensitivity: SensitivityJson,
    roi: Option<Vec<RoiJson>>,
    perception: Option<PerceptionJson>,
    frequency: Option<Vec<FrequencyRow>>,
}

#[derive(Serialize)]
struct AmplificationJson {
    times: Vec<f64>,
    /// `ratios[k][i]` for product `i` at `times[k]`; null where the baseline
    /// is below the floor.
    ratios: Vec<Vec<Option<f64>>>,
    min: Option<f64>,
    max: Option<f64>,
    violations: Vec<ViolationJson>,
}

#[derive(Serialize)]
struct ViolationJson {
    product: usize,
    sample: usize,
    ratio: f64,
}

#[derive(Serialize)]
struct SensitivityJson {
    delta_j: f64,
    edge_values: Vec<Vec<f64>>,
    node_values: Vec<f64>,
    quad_error_estimate: f64,
    coarse_grid: bool,
}

#[derive(Serialize)]
struct RoiJson {
    source: usize,
    target: usize,
    value: f64,
    cost: f64,
    roi: f64,
}

#[derive(Serialize)]
struct PerceptionJson {
    kappa: f64,
    beta: f64,
    saturation_point: f64,
    before_first_device: bool,
    utility: Vec<f64>,
}

#[derive(Serialize)]
struct FrequencyRow {
    s: u32,
    closed_form: f64,
    discrete: f64,
}

pub fn analyze(cfg: &ScenarioConfig, out: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model()?;
    let a = cfg.analysis()?;
    model.validate_time()?;
    let n = model.n;
    let dt = positive("analysis.sample_dt", a.sample_dt)?;
    let g = model.generator()?;
    let delta = model.decay()?;
    let u = model.input()?;
    let alpha0 = model.alpha0()?;
    let w = match &a.weights {
        Some(w) => config::nonneg_vector("analysis.weights", w, n)?,
        None => uniform_weights(n),
    };
    if w.sum() <= 0.0 {
        return Err(invalid("analysis.weights", "must not be all zero"));
    }

    let (t0, t_end) = (model.t0, model.t_end());
    let schedule = Schedule::with_input(&g, &u, t0, t_end).map_err(|e| invalid("model.u", e))?;
    let grid = sample_grid(t0, t_end, dt)?;
    let coupled = solve_schedule_at(&schedule, &alpha0, &grid)?;
    let baseline = baseline_trajectory(&delta, &u, &alpha0, &grid)?;
    let amp = amplification(&coupled, &baseline, BASELINE_FLOOR)?;
    let cumulative = cumulative_amplification(&w, &coupled, &baseline)?;

    let d_lambda = match &a.d_lambda {
        Some(m) => config::matrix("analysis.d_lambda", m, n)?,
        None => Matrix::zeros(n, n),
    };
    if (0..n).any(|i| d_lambda[(i, i)] != 0.0) {
        return Err(invalid("analysis.d_lambda", "diagonal must be zero"));
    }
    let d_delta = match &a.d_delta {
        Some(d) => config::vector("analysis.d_delta", d, n)?,
        None => Vector::zeros(n),
    };
    let sens = sensitivity_delta_j(&schedule, &alpha0, &w, &d_lambda, &d_delta, &grid)?;
    let roi = match &a.edge_costs {
        Some(c) => {
            let costs = config::matrix("analysis.edge_costs", c, n)?;
            let ranked = edge_roi(&sens, &costs).map_err(|e| invalid("analysis.edge_costs", e))?;
            Some(
                ranked
                    .into_iter()
                    .map(|r| RoiJson {
                        source: r.j,
                        target: r.i,
                        value: r.value,
                        cost: r.cost,
                        roi: r.roi,
                    })
                    .collect(),
            )
        }
        None => None,
    };

    let perception = match &a.perception {
        Some(p) => {
            let params = PerceptionParams::new(p.kappa, p.beta).map_err(|e| invalid("analysis.perception", e))?;
            let sat = saturation_point(p.beta).map_err(|e| invalid("analysis.perception.beta", e))?;
            Some(PerceptionJson {
                kappa: p.kappa,
                beta: p.beta,
                saturation_point: sat.value(),
                before_first_device: matches!(sat, SaturationPoint::BeforeFirstDevice(_)),
                utility: (0..=p.max_devices).map(|k| perceived_utility(k, &params)).collect(),
            })
        }
        None => None,
    };

    let frequency = match &a.frequency {
        Some(f) => {
            if !(f.beta >= 0.0) || !f.beta.is_finite() {
                return Err(invalid("analysis.frequency.beta", "must be finite and >= 0"));
            }
            let fdt = positive("analysis.frequency.dt", f.dt)?;
            let u0 = u.value_at(t0);
            let rows = (1..=f.s_max)
                .map(|s| {
                    Ok(FrequencyRow {
                        s,
                        closed_form: frequency_amplification(f.beta, f.n_g, s),
                        discrete: frequency_amplification_discrete(&g, u0, &alpha0, f.beta, f.n_g, s, &w, fdt)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Some(rows)
        }
        None => None,
    };

    let report = Report {
        weights: output::vec(&w),
        amplification: AmplificationJson {
            times: amp.times.clone(),
            ratios: amp.per_product.clone(),
            min: amp.min_ratio(),
            max: amp.max_ratio(),
            violations: amp
                .violations
                .iter()
                .map(|&(sample, product, ratio)| ViolationJson { product, sample, ratio })
                .collect(),
        },
        cumulative_amplification: cumulative,
        sensitivity: SensitivityJson {
            delta_j: sens.delta_j,
            edge_values: output::rows(&sens.edge_values),
            node_values: output::vec(&sens.node_values),
            quad_error_estimate: sens.quad_error_estimate,
            coarse_grid: sens.coarse_grid,
        },
        roi,
        perception,
        frequency,
    };

    let mut written = Vec::new();
    if format == Format::Csv {
        written.push(amplification_csv(out, &amp.times, &amp.per_product)?);
    }
    written.push(output::write_json(out, "analysis.json", &report)?);
    Ok(written)
}

/// `t,A_1,...,A_n`, empty cells where the ratio is undefined.
fn amplification_csv(out: &Path, times: &[f64], ratios: &[Vec<Option<f64>>]) -> Result<PathBuf, CliError> {
    let n = ratios.first().map_or(0, Vec::len);
    let mut text = String::from("t");
    for i in 1..=n {
        text.push_str(&format!(",A_{i}"));
    }
    text.push('\n');
    for (t, row) in times.iter().zip(ratios) {
        text.push_str(&ecodyn::io::fmt_f64(*t));
        for r in row {
            text.push(',');
            if let Some(v) = r {
                text.push_str(&ecodyn::io::fmt_f64(*v));
            }
        }
        text.push('\n');
    }
    output::write_bytes(out, "amplification.csv", text.as_bytes())
}
