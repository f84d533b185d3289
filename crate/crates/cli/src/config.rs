//! Scenario configuration (TOML). Every table rejects unknown keys, and keys
//! that the selected mode does not use are reported rather than ignored.

use std::path::{Path, PathBuf};

use ecodyn::model::{DecayVector, Generator, InputSignal, InteractionMatrix};
use ecodyn::{Matrix, Vector};
use serde::Deserialize;

use crate::error::CliError;
use crate::graph::GraphSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: Option<ModelBlock>,
    pub run: Option<RunBlock>,
    pub analysis: Option<AnalysisBlock>,
    pub sweep: Option<SweepBlock>,
    pub estimation: Option<EstimationBlock>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    pub lambda: Vec<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub delta_base: Option<Vec<f64>>,
    pub delta_sensitivity: Option<Vec<f64>>,
    pub costs: Option<Vec<f64>>,
    pub u: Option<InputBlock>,
    pub alpha0: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBlock {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Constant,
    Schedule,
    TimeVarying,
    Saturating,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Constant => "constant",
            RunMode::Schedule => "schedule",
            RunMode::TimeVarying => "time-varying",
            RunMode::Saturating => "saturating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    PeanoBaker,
    Product,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub mode: RunMode,
    pub sample_dt: f64,
    /// schedule mode
    pub segments: Option<Vec<SegmentBlock>>,
    /// time-varying mode
    pub modulation: Option<Modulation>,
    pub method: Option<MethodName>,
    pub pb_tol: Option<f64>,
    pub pb_max_terms: Option<usize>,
    /// saturating mode
    pub crowding: Option<Vec<Vec<f64>>>,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentBlock {
    pub until: f64,
    pub lambda: Option<Vec<Vec<f64>>>,
    pub delta: Option<Vec<f64>>,
    pub u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationTarget {
    /// `M(t) = f(t)·M`: a commuting family.
    Generator,
    /// `M(t) = f(t)·Λ − diag(δ)`.
    Interactions,
}

/// `f(t) = 1 + amplitude·sin(2πt/period + phase)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub target: ModulationTarget,
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Modulation {
    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (std::f64::consts::TAU * t / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    pub sample_dt: f64,
    pub weights: Option<Vec<f64>>,
    pub d_lambda: Option<Vec<Vec<f64>>>,
    pub d_delta: Option<Vec<f64>>,
    pub edge_costs: Option<Vec<Vec<f64>>>,
    pub perception: Option<PerceptionBlock>,
    pub frequency: Option<FrequencyBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionBlock {
    pub kappa: f64,
    pub beta: f64,
    #[serde(default = "default_max_devices")]
    pub max_devices: u64,
}

fn default_max_devices() -> u64 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyBlock {
    pub beta: f64,
    pub n_g: u32,
    pub s_max: u32,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub graph: GraphSpec,
    pub tau: Option<Vec<f64>>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_step: Option<f64>,
    pub horizon: f64,
    #[serde(default = "default_initial")]
    pub initial: f64,
}

fn default_initial() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationBlock {
    pub input: Option<String>,
    #[serde(default)]
    pub l1_weight: f64,
    pub rank_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub study: Option<StudyBlock>,
}

/// Synthetic sparse-recovery study: random sparse Metzler generators,
/// pulse inputs, noisy snapshots, and a sweep over `l1_weights`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub n: usize,
    pub instances: usize,
    pub steps: usize,
    pub dt: f64,
    pub noise: f64,
    pub l1_weights: Vec<f64>,
    #[serde(default = "default_edge_fraction")]
    pub edge_fraction: f64,
    #[serde(default = "default_pulse_probability")]
    pub pulse_probability: f64,
}

fn default_edge_fraction() -> f64 {
    0.2
}

fn default_pulse_probability() -> f64 {
    0.02
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelBlock, CliError> {
        self.model.as_ref().ok_or_else(|| missing("model"))
    }

    pub fn run(&self) -> Result<&RunBlock, CliError> {
        self.run.as_ref().ok_or_else(|| missing("run"))
    }

    pub fn analysis(&self) -> Result<&AnalysisBlock, CliError> {
        self.analysis.as_ref().ok_or_else(|| missing("analysis"))
    }

    pub fn sweep(&self) -> Result<&SweepBlock, CliError> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep"))
    }

    pub fn estimation(&self) -> Result<&EstimationBlock, CliError> {
        self.estimation.as_ref().ok_or_else(|| missing("estimation"))
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("missing [{block}] table"))
}

pub fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

pub fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

pub fn vector(key: &str, v: &[f64], n: usize) -> Result<Vector, CliError> {
    if v.len() != n {
        return Err(invalid(key, format!("expected {n} entries, found {}", v.len())));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(key, format!("non-finite entry {x}")));
    }
    Ok(Vector::from_column_slice(v))
}

pub fn nonneg_vector(key: &str, v: &[f64], n: usize) -> Result<Vector, CliError> {
    let out = vector(key, v, n)?;
    if let Some(i) = out.iter().position(|x| *x < 0.0) {
        return Err(invalid(&format!("{key}[{i}]"), format!("must be >= 0, got {}", out[i])));
    }
    Ok(out)
}

pub fn matrix(key: &str, rows: &[Vec<f64>], n: usize) -> Result<Matrix, CliError> {
    if rows.len() != n {
        return Err(invalid(key, format!("expected {n} rows, found {}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(invalid(&format!("{key}[{i}]"), format!("expected {n} entries, found {}", r.len())));
        }
        if let Some(x) = r.iter().find(|x| !x.is_finite()) {
            return Err(invalid(&format!("{key}[{i}]"), format!("non-finite entry {x}")));
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ModelBlock {
    pub fn t_end(&self) -> f64 {
        self.t0 + self.horizon
    }

    pub fn validate_time(&self) -> Result<(), CliError> {
        if !self.t0.is_finite() {
            return Err(invalid("model.t0", "must be finite"));
        }
        positive("model.horizon", self.horizon)?;
        if self.n == 0 {
            return Err(invalid("model.n", "must be at least 1"));
        }
        Ok(())
    }

    pub fn interactions(&self) -> Result<InteractionMatrix, CliError> {
        interactions("model.lambda", &self.lambda, self.n)
    }

    pub fn decay(&self) -> Result<DecayVector, CliError> {
        let n = self.n;
        let affine = [&self.delta_base, &self.delta_sensitivity, &self.costs];
        match (&self.delta, affine.iter().all(|x| x.is_none()), affine.iter().all(|x| x.is_some())) {
            (Some(d), true, _) => decay("model.delta", d, n),
            (None, _, true) => {
                let base = vector("model.delta_base", self.delta_base.as_ref().unwrap(), n)?;
                let sens = vector("model.delta_sensitivity", self.delta_sensitivity.as_ref().unwrap(), n)?;
                let costs = vector("model.costs", self.costs.as_ref().unwrap(), n)?;
                DecayVector::from_costs(base, sens, costs).map_err(|e| invalid("model.delta_base", e))
            }
            (Some(_), false, _) => Err(invalid("model.delta", "give either delta or delta_base/delta_sensitivity/costs, not both")),
            (None, _, false) => Err(invalid("model.delta", "missing: give delta, or all of delta_base, delta_sensitivity and costs")),
        }
    }

    pub fn generator(&self) -> Result<Generator, CliError> {
        Generator::assemble(&self.interactions()?, &self.decay()?).map_err(|e| invalid("model", e))
    }

    pub fn alpha0(&self) -> Result<Vector, CliError> {
        nonneg_vector("model.alpha0", &self.alpha0, self.n)
    }

    pub fn input(&self) -> Result<InputSignal, CliError> {
        let u = self.u.as_ref().ok_or_else(|| invalid("model.u", "missing"))?;
        if u.breakpoints.first() != Some(&self.t0) {
            return Err(invalid("model.u.breakpoints", format!("must start at t0 = {}", self.t0)));
        }
        if u.values.len() != u.breakpoints.len() {
            return Err(invalid("model.u.values", format!("expected {} rows, found {}", u.breakpoints.len(), u.values.len())));
        }
        let values = u
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| nonneg_vector(&format!("model.u.values[{k}]"), v, self.n))
            .collect::<Result<Vec<_>, _>>()?;
        InputSignal::new(u.breakpoints.clone(), values).map_err(|e| invalid("model.u", e))
    }
}

pub fn interactions(key: &str, rows: &[Vec<f64>], n: usize) -> Result<InteractionMatrix, CliError> {
    InteractionMatrix::new(matrix(key, rows, n)?).map_err(|e| invalid(key, e))
}

pub fn decay(key: &str, d: &[f64], n: usize) -> Result<DecayVector, CliError> {
    DecayVector::from_rates(vector(key, d, n)?).map_err(|e| invalid(key, e))
}

impl RunBlock {
    /// Rejects keys that belong to other modes.
    pub fn check_mode_keys(&self) -> Result<(), CliError> {
        let used: &[&str] = match self.mode {
            RunMode::Constant => &[],
            RunMode::Schedule => &["segments"],
            RunMode::TimeVarying => &["modulation", "method", "pb_tol", "pb_max_terms"],
            RunMode::Saturating => &["crowding", "step"],
        };
        let present = [
            ("segments", self.segments.is_some()),
            ("modulation", self.modulation.is_some()),
            ("method", self.method.is_some()),
            ("pb_tol", self.pb_tol.is_some()),
            ("pb_max_terms", self.pb_max_terms.is_some()),
            ("crowding", self.crowding.is_some()),
            ("step", self.step.is_some()),
        ];
        for (key, set) in present {
            if set && !used.contains(&key) {
                return Err(invalid(&format!("run.{key}"), format!("not used in {} mode", self.mode.as_str())));
            }
        }
        positive("run.sample_dt", self.sample_dt)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[model]
n = 2
lambda = [[0.0, 0.3], [0.2, 0.0]]
delta = [1.0, 0.7]
alpha0 = [0.0, 0.0]
horizon = 5.0
u = { breakpoints = [0.0], values = [[1.0, 1.0]] }

[run]
mode = "constant"
sample_dt = 0.5
"#;

    #[test]
    fn parses_and_builds_model() {
        let cfg = ScenarioConfig::parse(BASE).unwrap();
        let m = cfg.model().unwrap();
        let g = m.generator().unwrap();
        assert_eq!(g.matrix()[(0, 0)], -1.0);
        assert_eq!(g.matrix()[(0, 1)], 0.3);
        assert_eq!(cfg.run().unwrap().mode, RunMode::Constant);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("horizon = 5.0", "horizon = 5.0\nhorizn = 3.0");
        let err = ScenarioConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("horizn"), "{err}");
        let text = format!("{BASE}\n[extra]\nx = 1\n");
        assert!(ScenarioConfig::parse(&text).is_err());
    }

    #[test]
    fn keys_of_other_modes_are_rejected() {
        let text = BASE.replace("sample_dt = 0.5", "sample_dt = 0.5\nstep = 0.01");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let err = cfg.run().unwrap().check_mode_keys().unwrap_err().to_string();
        assert!(err.contains("run.step"), "{err}");
    }

    #[test]
    fn errors_carry_key_paths() {
        let text = BASE.replace("lambda = [[0.0, 0.3], [0.2, 0.0]]", "lambda = [[0.0, -0.3], [0.2, 0.0]]");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let err = cfg.model().unwrap().generator().unwrap_err().to_string();
        assert!(err.starts_with("config error: model.lambda"), "{err}");

        let text = BASE.replace("alpha0 = [0.0, 0.0]", "alpha0 = [0.0]");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert!(cfg.model().unwrap().alpha0().unwrap_err().to_string().starts_with("config error: model.alpha0"));
    }

    #[test]
    fn affine_decay_and_conflicts() {
        let text = BASE.replace("delta = [1.0, 0.7]", "delta_base = [0.5, 0.5]\ndelta_sensitivity = [1.0, 2.0]\ncosts = [0.5, 0.1]");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let d = cfg.model().unwrap().decay().unwrap();
        assert_eq!(d.rates().as_slice(), &[1.0, 0.7]);

        let text = BASE.replace("delta = [1.0, 0.7]", "delta = [1.0, 0.7]\ncosts = [0.5, 0.1]");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert!(cfg.model().unwrap().decay().is_err());
    }

    #[test]
    fn graph_spec_parses() {
        let cfg = ScenarioConfig::parse(
            "[sweep]\nhorizon = 100.0\ntau = [0.1]\ngraph = { family = \"star\", leaves = 4 }\n",
        )
        .unwrap();
        assert_eq!(cfg.sweep().unwrap().graph, GraphSpec::Star { leaves: 4 });
        assert!(ScenarioConfig::parse("[sweep]\nhorizon = 1.0\ngraph = { family = \"star\", nodes = 4 }\n").is_err());
    }
}
