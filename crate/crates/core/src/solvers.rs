//! Exact solution tiers for `α' = M(t) α + u(t)`.
//!
//! * scalar closed form ([`solve_scalar`]);
//! * constant generator through the exponential integral ([`solve_constant`]);
//! * piecewise-constant schedules, chained segment by segment
//!   ([`step_piecewise`], [`solve_schedule`]);
//! * fully time-varying generators through state-transition matrices
//!   ([`transition_matrix_pb`], [`transition_matrix_product`],
//!   [`solve_time_varying`]).

use crate::matfun::{expm, expm_integral, norm_inf};
use crate::model::{check_nonnegative, Generator, GeneratorPath, InfluenceState, InputSignal, Schedule, Segment};
use crate::quadrature::{gauss3, gauss_legendre};
use crate::{Error, Matrix, Result, Vector};

/// Which model produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryMode {
    Linear,
    Saturating,
    Sis,
}

/// Time-stamped sequence of states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub mode: TrajectoryMode,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<InfluenceState> {
        Some(InfluenceState {
            time: *self.times.last()?,
            values: self.states.last()?.clone(),
        })
    }

    /// Time series of component `i`.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn min_entry(&self) -> f64 {
        self.states.iter().map(|s| s.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.states.iter().map(|s| s.max()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Transition matrix `Φ(t_to, t_from)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub t_from: f64,
    pub t_to: f64,
    pub matrix: Matrix,
}

fn check_state(alpha: &Vector, n: usize, context: &'static str) -> Result<()> {
    if alpha.len() != n {
        return Err(Error::DimensionMismatch {
            context,
            expected: n,
            found: alpha.len(),
        });
    }
    check_nonnegative(alpha, context)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if !t_grid.iter().all(|t| t.is_finite()) || t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `(e^z − 1)/z`, accurate near zero.
fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Closed-form solution of `x' = a x + u(t)` for a piecewise-constant scalar
/// signal, reported at every time in `t_grid` (starting from `x(t_grid[0]) = x0`).
pub fn solve_scalar(a: f64, x0: f64, u: &InputSignal, t_grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(t_grid)?;
    if u.n() != 1 {
        return Err(Error::DimensionMismatch {
            context: "scalar input signal",
            expected: 1,
            found: u.n(),
        });
    }
    let mut out = Vec::with_capacity(t_grid.len());
    let mut x = x0;
    out.push(x);
    for w in t_grid.windows(2) {
        let mut start = w[0];
        let cuts: Vec<f64> = u.breakpoints_within(w[0], w[1]).chain(std::iter::once(w[1])).collect();
        for end in cuts {
            let dt = end - start;
            let c = u.value_at(start)[0];
            x = (a * dt).exp() * x + c * dt * phi1(a * dt);
            start = end;
        }
        out.push(x);
    }
    Ok(out)
}

/// `α(t0 + dt) = e^{M dt} α0 + (∫_0^dt e^{Mτ} dτ) u0`; valid for singular `M`.
pub fn solve_constant(m: &Generator, alpha0: &Vector, u0: &Vector, dt: f64) -> Result<Vector> {
    check_state(alpha0, m.n(), "initial state")?;
    check_state(u0, m.n(), "constant input")?;
    if !(dt >= 0.0) {
        return Err(Error::InvalidInput(format!("negative time step {dt}")));
    }
    if dt == 0.0 {
        return Ok(alpha0.clone());
    }
    let (e, b) = expm_integral(m.matrix(), dt)?;
    Ok(e * alpha0 + b * u0)
}

/// Advances a state across one schedule segment.
pub fn step_piecewise(segment: &Segment, alpha_in: &Vector) -> Result<Vector> {
    solve_constant(&segment.generator, alpha_in, &segment.input, segment.duration())
}

/// Uniform grid `t0, t0 + dt, …` up to `t_end`, with `t_end` appended when it
/// is not (within `1e-9·dt`) already a grid point.
pub fn sample_grid(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("sample step must be positive, got {dt}")));
    }
    if !(t_end >= t0) {
        return Err(Error::InvalidInput(format!("horizon end {t_end} precedes start {t0}")));
    }
    let steps = ((t_end - t0) / dt + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    let last = *grid.last().unwrap();
    if t_end - last > 1e-9 * dt {
        grid.push(t_end);
    } else if let Some(l) = grid.last_mut() {
        *l = t_end;
    }
    Ok(grid)
}

/// Schedule solution sampled every `sample_dt` on `[t0, T]` (plus `T`).
pub fn solve_schedule(schedule: &Schedule, alpha0: &Vector, sample_dt: f64) -> Result<Trajectory> {
    let times = sample_grid(schedule.t0(), schedule.t_end(), sample_dt)?;
    solve_schedule_at(schedule, alpha0, &times)
}

/// Schedule solution at arbitrary increasing times inside `[t0, T]`.
///
/// Segment boundaries are propagated exactly; each sample is solved from the
/// last boundary. Consecutive segments with identical `(M, u)` are merged
/// first, so splitting a constant segment never changes the output.
pub fn solve_schedule_at(schedule: &Schedule, alpha0: &Vector, times: &[f64]) -> Result<Trajectory> {
    check_state(alpha0, schedule.n(), "initial state")?;
    check_grid(times)?;
    let (t0, t_end) = (schedule.t0(), schedule.t_end());
    if times[0] < t0 || *times.last().unwrap() > t_end {
        return Err(Error::InvalidInput(format!(
            "sample times [{}, {}] fall outside the schedule [{t0}, {t_end}]",
            times[0],
            times.last().unwrap()
        )));
    }

    let merged = coalesce(schedule.segments());
    let mut seg = 0;
    let mut at_boundary = alpha0.clone();
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        while seg + 1 < merged.len() && t >= merged[seg].t_end {
            at_boundary = step_piecewise(&merged[seg], &at_boundary)?;
            seg += 1;
        }
        let s = &merged[seg];
        states.push(solve_constant(&s.generator, &at_boundary, &s.input, t - s.t_start)?);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        mode: TrajectoryMode::Linear,
    })
}

fn coalesce(segments: &[Segment]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for s in segments {
        match out.last_mut() {
            Some(last) if last.generator == s.generator && last.input == s.input => last.t_end = s.t_end,
            _ => out.push(s.clone()),
        }
    }
    out
}

/// Knobs for the Peano–Baker series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbOptions {
    /// Truncate once a term's max-abs entry drops below this.
    pub tol: f64,
    pub max_terms: usize,
    /// Lower bound on the number of quadrature sub-intervals.
    pub min_subintervals: usize,
    /// Upper bound on `h·max‖M‖_∞` per sub-interval.
    pub max_step_norm: f64,
}

impl Default for PbOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_terms: 30,
            min_subintervals: 16,
            max_step_norm: 0.1,
        }
    }
}

fn max_norm_on<F>(f: &F, a: f64, b: f64, samples: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let mut worst: f64 = 0.0;
    for k in 0..=samples {
        let t = a + (b - a) * k as f64 / samples as f64;
        worst = worst.max(norm_inf(&f(t)?));
    }
    Ok(worst)
}

/// Peano–Baker series `I + ∫M + ∫M∫M + …` on `[a, b]`.
///
/// Each iterated integral is evaluated on a uniform grid of three-point
/// Gauss–Legendre panels; the inner (cumulative) integrals at the nodes use
/// the Lagrange interpolant of the integrand through the same nodes.
fn peano_baker<F>(f: &F, dim: usize, a: f64, b: f64, opts: &PbOptions) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let ident = Matrix::identity(dim, dim);
    if b == a {
        return Ok(ident);
    }
    let span = b - a;
    let mmax = max_norm_on(f, a, b, 16)?;
    let panels = opts
        .min_subintervals
        .max((span * mmax / opts.max_step_norm).ceil() as usize)
        .max(1);
    let h = span / panels as f64;
    let g = gauss3();

    let mut gen = Vec::with_capacity(3 * panels);
    for j in 0..panels {
        for q in 0..3 {
            gen.push(f(a + (j as f64 + g.nodes[q]) * h)?);
        }
    }

    let mut prev: Vec<Matrix> = vec![ident.clone(); 3 * panels];
    let mut phi = ident;
    let mut last_term = f64::INFINITY;
    for _ in 0..opts.max_terms {
        let integrand: Vec<Matrix> = gen.iter().zip(&prev).map(|(m, p)| m * p).collect();
        let mut acc = Matrix::zeros(dim, dim);
        let mut next = Vec::with_capacity(3 * panels);
        for j in 0..panels {
            let fj = &integrand[3 * j..3 * j + 3];
            for q in 0..3 {
                let mut node = acc.clone();
                for r in 0..3 {
                    node += &fj[r] * (h * g.partial[q][r]);
                }
                next.push(node);
            }
            for r in 0..3 {
                acc += &fj[r] * (h * g.weights[r]);
            }
        }
        last_term = acc.amax();
        phi += &acc;
        if last_term < opts.tol {
            return Ok(phi);
        }
        prev = next;
    }
    Err(Error::SeriesNonConvergence {
        terms: opts.max_terms,
        last_term,
    })
}

fn check_path_interval(path: &GeneratorPath, t0: f64, t: f64) -> Result<()> {
    if !(t >= t0) {
        return Err(Error::InvalidInput(format!("transition requires t >= t0 (got t0 = {t0}, t = {t})")));
    }
    let slack = 1e-12 * (1.0 + path.t_end().abs().max(path.t0().abs()));
    if t0 < path.t0() - slack || t > path.t_end() + slack {
        return Err(Error::InvalidInput(format!(
            "[{t0}, {t}] is outside the path domain [{}, {}]",
            path.t0(),
            path.t_end()
        )));
    }
    Ok(())
}

/// `Φ(t, t0)` by a truncated Peano–Baker series over the whole interval.
///
/// Fails with [`Error::SeriesNonConvergence`] when the interval is too long
/// for the series to converge within `opts.max_terms` terms.
pub fn transition_matrix_pb(path: &GeneratorPath, t0: f64, t: f64, opts: &PbOptions) -> Result<TransitionMatrix> {
    check_path_interval(path, t0, t)?;
    let matrix = peano_baker(&|s| path.at(s), path.n(), t0, t, opts)?;
    Ok(TransitionMatrix {
        t_from: t0,
        t_to: t,
        matrix,
    })
}

/// `Φ(t, t0) ≈ Π_k e^{M(mid_k) h}`, ordered latest-left. Second order in `h`.
pub fn transition_matrix_product(path: &GeneratorPath, t0: f64, t: f64, substeps: usize) -> Result<TransitionMatrix> {
    check_path_interval(path, t0, t)?;
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be >= 1".into()));
    }
    let matrix = midpoint_product(&|s| path.at(s), path.n(), t0, t, substeps)?;
    Ok(TransitionMatrix {
        t_from: t0,
        t_to: t,
        matrix,
    })
}

fn midpoint_product<F>(f: &F, dim: usize, a: f64, b: f64, substeps: usize) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let mut phi = Matrix::identity(dim, dim);
    if b == a {
        return Ok(phi);
    }
    let h = (b - a) / substeps as f64;
    for k in 0..substeps {
        let mid = a + (k as f64 + 0.5) * h;
        phi = expm(&(f(mid)? * h))?.value * phi;
    }
    Ok(phi)
}

/// How [`solve_time_varying`] builds transition matrices between samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionMethod {
    /// Peano–Baker on chunks with `Δ·max‖M‖_∞ ≤ chunk_norm`.
    PeanoBaker { options: PbOptions, chunk_norm: f64 },
    /// Midpoint exponential product with `h·max‖M‖_∞ ≤ step_norm`.
    Product { step_norm: f64 },
}

impl Default for TransitionMethod {
    fn default() -> Self {
        TransitionMethod::PeanoBaker {
            options: PbOptions::default(),
            chunk_norm: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeVaryingOptions {
    pub method: TransitionMethod,
    /// Honour the path's commuting hint (closed-form exponential of the
    /// integrated generator).
    pub use_commuting_hint: bool,
    /// Panel width for the quadratures of the commuting route.
    pub quad_width: f64,
}

impl Default for TimeVaryingOptions {
    fn default() -> Self {
        Self {
            method: TransitionMethod::default(),
            use_commuting_hint: true,
            quad_width: 0.05,
        }
    }
}

fn chunked_transition<F>(f: &F, dim: usize, a: f64, b: f64, method: &TransitionMethod) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    if b == a {
        return Ok(Matrix::identity(dim, dim));
    }
    let mmax = max_norm_on(f, a, b, 8)?;
    match method {
        TransitionMethod::PeanoBaker { options, chunk_norm } => {
            let chunks = (((b - a) * mmax / chunk_norm).ceil() as usize).max(1);
            let h = (b - a) / chunks as f64;
            let mut phi = Matrix::identity(dim, dim);
            for k in 0..chunks {
                let lo = a + k as f64 * h;
                let hi = if k + 1 == chunks { b } else { lo + h };
                phi = peano_baker(f, dim, lo, hi, options)? * phi;
            }
            Ok(phi)
        }
        TransitionMethod::Product { step_norm } => {
            let substeps = (((b - a) * mmax / step_norm).ceil() as usize).max(1);
            midpoint_product(f, dim, a, b, substeps)
        }
    }
}

/// Composite Gauss–Legendre integral of `M` over `[a, b]`.
fn integrate_generator(path: &GeneratorPath, a: f64, b: f64, width: f64, rule: &(Vec<f64>, Vec<f64>)) -> Result<Matrix> {
    let n = path.n();
    let mut acc = Matrix::zeros(n, n);
    if b <= a {
        return Ok(acc);
    }
    let panels = (((b - a) / width).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    for j in 0..panels {
        for (x, w) in rule.0.iter().zip(&rule.1) {
            acc += path.at(a + (j as f64 + x) * h)? * (w * h);
        }
    }
    Ok(acc)
}

/// Solution of `α' = M(t) α + u(t)` at every time in `t_grid`, starting from
/// `α(t_grid[0]) = alpha0`.
///
/// Between consecutive samples the interval is split at the path's and the
/// input's breakpoints and states are composed piece by piece
/// (`Φ(t, t0) = Φ(t, s) Φ(s, t0)`). On each piece the input is constant and
/// the forced response comes from the transition matrix of the augmented
/// generator `[[M(t), u], [0, 0]]`, whose last column is `∫ Φ(t, s) u ds`.
/// With a commuting path the transition is the exponential of the integrated
/// generator and the forcing integral is evaluated by Gauss–Legendre
/// quadrature.
pub fn solve_time_varying(
    path: &GeneratorPath,
    u: &InputSignal,
    alpha0: &Vector,
    t_grid: &[f64],
    opts: &TimeVaryingOptions,
) -> Result<Trajectory> {
    let n = path.n();
    check_state(alpha0, n, "initial state")?;
    if u.n() != n {
        return Err(Error::DimensionMismatch {
            context: "time-varying input",
            expected: n,
            found: u.n(),
        });
    }
    check_grid(t_grid)?;
    check_path_interval(path, t_grid[0], *t_grid.last().unwrap())?;

    let commuting = opts.use_commuting_hint && path.commuting_hint();
    let rule = gauss_legendre(5);
    let mut alpha = alpha0.clone();
    let mut states = Vec::with_capacity(t_grid.len());
    states.push(alpha.clone());
    for w in t_grid.windows(2) {
        let mut cuts: Vec<f64> = path
            .breakpoints()
            .iter()
            .copied()
            .filter(|&t| t > w[0] && t < w[1])
            .chain(u.breakpoints_within(w[0], w[1]))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.push(w[1]);
        let mut a = w[0];
        for b in cuts {
            let uval = u.value_at(a).clone();
            alpha = if commuting {
                commuting_step(path, &alpha, &uval, a, b, opts.quad_width, &rule)?
            } else {
                augmented_step(path, &alpha, &uval, a, b, &opts.method)?
            };
            a = b;
        }
        states.push(alpha.clone());
    }
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        mode: TrajectoryMode::Linear,
    })
}

fn augmented_step(path: &GeneratorPath, alpha: &Vector, u: &Vector, a: f64, b: f64, method: &TransitionMethod) -> Result<Vector> {
    let n = path.n();
    let aug = |t: f64| -> Result<Matrix> {
        let m = path.at(t)?;
        let mut g = Matrix::zeros(n + 1, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&m);
        g.view_mut((0, n), (n, 1)).copy_from(u);
        Ok(g)
    };
    let phi = chunked_transition(&aug, n + 1, a, b, method)?;
    Ok(phi.view((0, 0), (n, n)) * alpha + phi.view((0, n), (n, 1)))
}

fn commuting_step(
    path: &GeneratorPath,
    alpha: &Vector,
    u: &Vector,
    a: f64,
    b: f64,
    width: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<Vector> {
    let phi = expm(&integrate_generator(path, a, b, width, rule)?)?.value;
    let mut next = phi * alpha;
    if u.iter().any(|&x| x != 0.0) {
        let panels = (((b - a) / width).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        for j in 0..panels {
            for (x, w) in rule.0.iter().zip(&rule.1) {
                let s = a + (j as f64 + x) * h;
                let kernel = expm(&integrate_generator(path, s, b, width, rule)?)?.value;
                next += kernel * u * (w * h);
            }
        }
    }
    Ok(next)
}
