//! Domain types for the ecosystem model.
//!
//! All types validate on construction and are immutable afterwards. Rates
//! (`Λ`, `δ`, `u`) are per unit time; the crate does not fix a time unit.

use std::fmt;
use std::sync::Arc;

use crate::matfun::{eigenvalues, norm_inf};
use crate::{Error, Matrix, Result, Vector};

fn check_square(m: &Matrix, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidInput(format!("{context}: empty matrix")));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput(format!("{context}: non-finite entry")));
    }
    Ok(m.nrows())
}

fn check_len(v: &Vector, n: usize, context: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            context,
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_nonnegative(v: &Vector, context: &str) -> Result<()> {
    match v.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{context}: entry {i} = {} must be finite and >= 0",
            v[i]
        ))),
        None => Ok(()),
    }
}

/// First negative off-diagonal entry, if any.
fn metzler_violation(m: &Matrix) -> Option<(usize, usize, f64)> {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] < 0.0 {
                return Some((i, j, m[(i, j)]));
            }
        }
    }
    None
}

/// Pairwise interaction rates `Λ_ij ≥ 0` (how product `j` enhances product
/// `i`) with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix(Matrix);

impl InteractionMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        let n = check_square(&entries, "interaction matrix")?;
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "interaction matrix diagonal must be 0, entry ({i}, {i}) = {}",
                    entries[(i, i)]
                )));
            }
        }
        if let Some((row, col, value)) = metzler_violation(&entries) {
            return Err(Error::NotMetzler { row, col, value });
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Graph Laplacian `L = D − Λ` with `D` the diagonal of row sums.
    pub fn laplacian(&self) -> Matrix {
        let mut l = -self.0.clone();
        for i in 0..self.n() {
            l[(i, i)] = self.0.row(i).sum();
        }
        l
    }
}

/// Per-product decay rates `δ_i > 0`, optionally derived from costs through
/// the affine map `δ = base + sensitivity ⊙ costs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayVector {
    rates: Vector,
    costs: Option<Vector>,
    base: Option<Vector>,
    sensitivity: Option<Vector>,
}

impl DecayVector {
    pub fn from_rates(rates: Vector) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidInput("decay vector is empty".into()));
        }
        for (index, &value) in rates.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveDecay { index, value });
            }
        }
        Ok(Self {
            rates,
            costs: None,
            base: None,
            sensitivity: None,
        })
    }

    pub fn from_costs(base: Vector, sensitivity: Vector, costs: Vector) -> Result<Self> {
        let n = base.len();
        check_len(&sensitivity, n, "decay sensitivity")?;
        check_len(&costs, n, "decay costs")?;
        for (index, &value) in base.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveDecay { index, value });
            }
        }
        check_nonnegative(&sensitivity, "decay sensitivity")?;
        if !costs.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("decay costs must be finite".into()));
        }
        let rates = &base + sensitivity.component_mul(&costs);
        let mut d = Self::from_rates(rates)?;
        d.base = Some(base);
        d.sensitivity = Some(sensitivity);
        d.costs = Some(costs);
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &Vector {
        &self.rates
    }

    pub fn costs(&self) -> Option<&Vector> {
        self.costs.as_ref()
    }
}

/// Metzler generator `M` (nonnegative off-diagonals).
#[derive(Debug, Clone, PartialEq)]
pub struct Generator(Matrix);

/// Result of a Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzCheck {
    pub hurwitz: bool,
    /// Largest real part over the spectrum.
    pub abscissa: f64,
}

impl Generator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        check_square(&matrix, "generator")?;
        if let Some((row, col, value)) = metzler_violation(&matrix) {
            return Err(Error::NotMetzler { row, col, value });
        }
        Ok(Self(matrix))
    }

    /// `M_ij = Λ_ij` off the diagonal, `M_ii = −δ_i`.
    pub fn assemble(lambda: &InteractionMatrix, delta: &DecayVector) -> Result<Self> {
        if lambda.n() != delta.len() {
            return Err(Error::DimensionMismatch {
                context: "assemble_generator",
                expected: lambda.n(),
                found: delta.len(),
            });
        }
        let mut m = lambda.matrix().clone();
        for i in 0..lambda.n() {
            m[(i, i)] = -delta.rates()[i];
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn is_hurwitz(&self) -> Result<HurwitzCheck> {
        let abscissa = eigenvalues(&self.0)?
            .into_iter()
            .map(|(re, _)| re)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(HurwitzCheck {
            hurwitz: abscissa < 0.0,
            abscissa,
        })
    }

    /// Steady state `−M⁻¹u0` of a Hurwitz generator under constant input.
    pub fn equilibrium(&self, u0: &Vector) -> Result<Vector> {
        check_len(u0, self.n(), "equilibrium input")?;
        check_nonnegative(u0, "equilibrium input")?;
        let check = self.is_hurwitz()?;
        if !check.hurwitz {
            return Err(Error::NotHurwitz {
                abscissa: check.abscissa,
            });
        }
        let x = self
            .0
            .clone()
            .lu()
            .solve(&(-u0))
            .ok_or_else(|| Error::Singular("equilibrium solve".into()))?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("equilibrium solve".into()));
        }
        Ok(x)
    }
}

/// Piecewise-constant, right-continuous nonnegative input `u(t)`.
///
/// `breakpoints[k]` is the start of piece `k`; the last piece extends
/// indefinitely. Times before the first breakpoint take the first value.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vector>,
}

impl InputSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vector>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "input signal needs one value per breakpoint ({} breakpoints, {} values)",
                breakpoints.len(),
                values.len()
            )));
        }
        if !breakpoints.iter().all(|t| t.is_finite()) || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("input breakpoints must be finite and strictly increasing".into()));
        }
        let n = values[0].len();
        for v in &values {
            check_len(v, n, "input value")?;
            check_nonnegative(v, "input value")?;
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(t0: f64, value: Vector) -> Result<Self> {
        Self::new(vec![t0], vec![value])
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    fn piece(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> &Vector {
        &self.values[self.piece(t)]
    }

    /// Breakpoints strictly inside `(a, b)`.
    pub fn breakpoints_within(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.iter().copied().filter(move |&t| t > a && t < b)
    }

    /// The scalar signal of component `i`.
    pub fn component(&self, i: usize) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| Vector::from_element(1, v[i])).collect(),
        }
    }
}

/// Influence vector at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceState {
    pub time: f64,
    pub values: Vector,
}

/// One constant piece of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub generator: Generator,
    pub input: Vector,
}

impl Segment {
    pub fn new(t_start: f64, t_end: f64, generator: Generator, input: Vector) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::Schedule(format!(
                "segment [{t_start}, {t_end}] must have positive finite length"
            )));
        }
        check_len(&input, generator.n(), "segment input")?;
        check_nonnegative(&input, "segment input")?;
        Ok(Self {
            t_start,
            t_end,
            generator,
            input,
        })
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Contiguous, time-ordered piecewise-constant `(M_k, u_k)` segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::Schedule("empty schedule".into()))?;
        let n = first.generator.n();
        for (k, pair) in segments.windows(2).enumerate() {
            if pair[1].generator.n() != n {
                return Err(Error::DimensionMismatch {
                    context: "schedule segment",
                    expected: n,
                    found: pair[1].generator.n(),
                });
            }
            let (end, start) = (pair[0].t_end, pair[1].t_start);
            if end < start {
                return Err(Error::Schedule(format!("gap between segment {k} (ends {end}) and {} (starts {start})", k + 1)));
            }
            if end > start {
                return Err(Error::Schedule(format!("segment {k} (ends {end}) overlaps {} (starts {start})", k + 1)));
            }
        }
        Ok(Self { segments })
    }

    /// A single segment `[t0, t_end]` with fixed generator and input.
    pub fn constant(generator: Generator, input: Vector, t0: f64, t_end: f64) -> Result<Self> {
        Self::new(vec![Segment::new(t0, t_end, generator, input)?])
    }

    /// Constant generator with a piecewise-constant input, split at the
    /// input breakpoints inside `(t0, t_end)`.
    pub fn with_input(generator: &Generator, input: &InputSignal, t0: f64, t_end: f64) -> Result<Self> {
        if input.n() != generator.n() {
            return Err(Error::DimensionMismatch {
                context: "schedule input",
                expected: generator.n(),
                found: input.n(),
            });
        }
        let mut cuts = vec![t0];
        cuts.extend(input.breakpoints_within(t0, t_end));
        cuts.push(t_end);
        let segments = cuts
            .windows(2)
            .map(|w| Segment::new(w[0], w[1], generator.clone(), input.value_at(w[0]).clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n(&self) -> usize {
        self.segments[0].generator.n()
    }

    pub fn t0(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end
    }

    /// Segment index containing `t` (right-open, the last segment is closed).
    pub fn segment_at(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.t_end <= t)
            .min(self.segments.len() - 1)
    }
}

type MatrixFn = dyn Fn(f64) -> Matrix + Send + Sync;

/// Time-varying generator `t ↦ M(t)` on `[t0, t_end]`.
///
/// `breakpoints` lists known discontinuities (used by the solvers to split
/// quadrature intervals); `commuting_hint` asserts `[M(s), M(t)] = 0`, which
/// enables the closed-form exponential of the integrated generator.
#[derive(Clone)]
pub struct GeneratorPath {
    eval: Arc<MatrixFn>,
    n: usize,
    t0: f64,
    t_end: f64,
    commuting_hint: bool,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for GeneratorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorPath")
            .field("n", &self.n)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("commuting_hint", &self.commuting_hint)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl GeneratorPath {
    pub fn from_fn<F>(n: usize, t0: f64, t_end: f64, commuting_hint: bool, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Matrix + Send + Sync + 'static,
    {
        if !(t_end >= t0) {
            return Err(Error::InvalidInput(format!("path domain [{t0}, {t_end}] is empty")));
        }
        Ok(Self {
            eval: Arc::new(f),
            n,
            t0,
            t_end,
            commuting_hint,
            breakpoints: Vec::new(),
        })
    }

    pub fn constant(generator: Generator, t0: f64, t_end: f64) -> Result<Self> {
        let n = generator.n();
        let m = generator.into_matrix();
        Self::from_fn(n, t0, t_end, true, move |_| m.clone())
    }

    /// `M(t) = f(t)·M0` with `f ≥ 0`; a commuting family.
    pub fn scaled<F>(base: Generator, t0: f64, t_end: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let n = base.n();
        let m0 = base.into_matrix();
        Self::from_fn(n, t0, t_end, true, move |t| &m0 * f(t))
    }

    /// Piecewise-constant path following a schedule's generators.
    pub fn from_schedule(schedule: &Schedule) -> Result<Self> {
        let segs = schedule.clone();
        let mut path = Self::from_fn(schedule.n(), schedule.t0(), schedule.t_end(), false, move |t| {
            segs.segments()[segs.segment_at(t)].generator.matrix().clone()
        })?;
        path.breakpoints = schedule.segments()[1..].iter().map(|s| s.t_start).collect();
        Ok(path)
    }

    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        self.breakpoints = breakpoints;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn commuting_hint(&self) -> bool {
        self.commuting_hint
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `M(t)`, validated as an `n×n` Metzler matrix.
    pub fn at(&self, t: f64) -> Result<Matrix> {
        let m = (self.eval)(t);
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                context: "generator path evaluation",
                expected: self.n,
                found: m.nrows(),
            });
        }
        if let Some((row, col, value)) = metzler_violation(&m) {
            return Err(Error::NotMetzler { row, col, value });
        }
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(format!("generator path non-finite at t = {t}")));
        }
        Ok(m)
    }

    /// Checks the commuting hint on 8 deterministic time pairs:
    /// `‖[M(s), M(t)]‖ ≤ 1e-10·‖M(s)‖‖M(t)‖`.
    pub fn verify_commuting(&self) -> Result<bool> {
        let span = self.t_end - self.t0;
        for k in 0..8 {
            let s = self.t0 + span * (k as f64 + 0.25) / 8.0;
            let t = self.t0 + span * ((7 - k) as f64 + 0.6) / 8.0;
            let (ms, mt) = (self.at(s)?, self.at(t)?);
            let comm = &ms * &mt - &mt * &ms;
            if norm_inf(&comm) > 1e-10 * norm_inf(&ms) * norm_inf(&mt) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
