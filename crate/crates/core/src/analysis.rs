//! Amplification, perception, release-frequency and sensitivity analyses.

use crate::matfun::expm_integral;
use crate::model::{check_nonnegative, DecayVector, Generator, GeneratorPath, InputSignal, Schedule, Segment};
use crate::quadrature::{gauss_legendre, trapezoid, trapezoid_with_estimate};
use crate::solvers::{solve_scalar, solve_schedule_at, transition_matrix_pb, PbOptions, Trajectory, TrajectoryMode};
use crate::{Error, Matrix, Result, Vector};

/// Baseline values below this are treated as zero and their ratio is absent.
pub const BASELINE_FLOOR: f64 = 1e-12;

/// Ratios below `1 − AMPLIFICATION_SLACK` are reported as violations.
pub const AMPLIFICATION_SLACK: f64 = 1e-9;

/// Relative quadrature self-estimate above which a grid is flagged as coarse.
pub const COARSE_GRID_TOL: f64 = 1e-3;

/// Decoupled trajectory (`Λ = 0`, same `δ`, `u`, `α0`), one scalar closed
/// form per product.
pub fn baseline_trajectory(delta: &DecayVector, u: &InputSignal, alpha0: &Vector, t_grid: &[f64]) -> Result<Trajectory> {
    let n = delta.len();
    for (found, context) in [(u.n(), "baseline input"), (alpha0.len(), "baseline initial state")] {
        if found != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found,
            });
        }
    }
    check_nonnegative(alpha0, "baseline initial state")?;
    let columns = (0..n)
        .map(|i| solve_scalar(-delta.rates()[i], alpha0[i], &u.component(i), t_grid))
        .collect::<Result<Vec<_>>>()?;
    let states = (0..t_grid.len())
        .map(|k| Vector::from_fn(n, |i, _| columns[i][k]))
        .collect();
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        mode: TrajectoryMode::Linear,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplificationReport {
    pub times: Vec<f64>,
    /// `per_product[k][i] = α_i(t_k) / α°_i(t_k)`, absent where the baseline
    /// is below the floor.
    pub per_product: Vec<Vec<Option<f64>>>,
    pub baseline: Trajectory,
    pub coupled: Trajectory,
    /// `(time index, product, ratio)` for ratios below `1 − 1e-9`.
    pub violations: Vec<(usize, usize, f64)>,
}

impl AmplificationReport {
    /// Smallest defined ratio.
    pub fn min_ratio(&self) -> Option<f64> {
        self.per_product.iter().flatten().flatten().copied().reduce(f64::min)
    }

    /// Largest defined ratio.
    pub fn max_ratio(&self) -> Option<f64> {
        self.per_product.iter().flatten().flatten().copied().reduce(f64::max)
    }
}

fn check_same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.times != b.times {
        return Err(Error::InvalidInput("trajectories are sampled on different grids".into()));
    }
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            context: "trajectory dimension",
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(())
}

/// `𝒜_i(t) = α_i(t) / α°_i(t)` wherever `α°_i(t) > floor`.
pub fn amplification(coupled: &Trajectory, baseline: &Trajectory, floor: f64) -> Result<AmplificationReport> {
    check_same_grid(coupled, baseline)?;
    let mut violations = Vec::new();
    let per_product = coupled
        .states
        .iter()
        .zip(&baseline.states)
        .enumerate()
        .map(|(k, (c, b))| {
            (0..c.len())
                .map(|i| {
                    (b[i] > floor).then(|| {
                        let r = c[i] / b[i];
                        if r < 1.0 - AMPLIFICATION_SLACK {
                            violations.push((k, i, r));
                        }
                        r
                    })
                })
                .collect()
        })
        .collect();
    Ok(AmplificationReport {
        times: coupled.times.clone(),
        per_product,
        baseline: baseline.clone(),
        coupled: coupled.clone(),
        violations,
    })
}

fn check_weights(w: &Vector, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            context: "weight vector",
            expected: n,
            found: w.len(),
        });
    }
    check_nonnegative(w, "weight vector")?;
    if w.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("weight vector must be nonzero".into()));
    }
    Ok(())
}

/// Uniform weights `1/n`.
pub fn uniform_weights(n: usize) -> Vector {
    Vector::from_element(n, 1.0 / n as f64)
}

fn weighted_integral(w: &Vector, traj: &Trajectory) -> f64 {
    let values: Vec<f64> = traj.states.iter().map(|s| w.dot(s)).collect();
    trapezoid(&traj.times, &values)
}

/// `∫wᵀα dt / ∫wᵀα° dt` by the trapezoid rule on the shared grid.
pub fn cumulative_amplification(w: &Vector, coupled: &Trajectory, baseline: &Trajectory) -> Result<f64> {
    check_same_grid(coupled, baseline)?;
    check_weights(w, coupled.n())?;
    let den = weighted_integral(w, baseline);
    if !(den > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    Ok(weighted_integral(w, coupled) / den)
}

/// `q(s) = ∫_s^T Φ(t, s)ᵀ w dt` by composite Gauss–Legendre quadrature with
/// `quad_points` nodes per panel.
///
/// `[s, T]` is cut at the path's breakpoints and into panels with
/// `width·max‖M‖_∞ ≤ 0.5`; transition matrices are chained node to node.
pub fn downstream_value(path: &GeneratorPath, w: &Vector, s: f64, t_end: f64, quad_points: usize) -> Result<Vector> {
    let n = path.n();
    check_weights(w, n)?;
    if !(t_end >= s) {
        return Err(Error::InvalidInput(format!("downstream value needs s <= T (s = {s}, T = {t_end})")));
    }
    if quad_points == 0 {
        return Err(Error::InvalidInput("quad_points must be >= 1".into()));
    }
    if t_end == s {
        return Ok(Vector::zeros(n));
    }
    let mut cuts = vec![s];
    cuts.extend(path.breakpoints().iter().copied().filter(|&b| b > s && b < t_end));
    cuts.push(t_end);

    let (nodes, weights) = gauss_legendre(quad_points);
    // (time, quadrature weight) pairs in increasing time, with piece
    // boundaries included at zero weight so transitions never straddle a jump.
    let mut points: Vec<(f64, f64)> = Vec::new();
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let mut mmax: f64 = 0.0;
        for k in 0..=8 {
            let t = a + (b - a) * k as f64 / 8.0;
            mmax = mmax.max(path.at(t)?.abs().row_sum().max());
        }
        let panels = (((b - a) * mmax / 0.5).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        for j in 0..panels {
            let lo = a + j as f64 * h;
            for (x, wt) in nodes.iter().zip(&weights) {
                points.push((lo + x * h, wt * h));
            }
            let hi = if j + 1 == panels { b } else { lo + h };
            points.push((hi, 0.0));
        }
    }

    let opts = PbOptions::default();
    let mut phi = Matrix::identity(n, n);
    let mut prev = s;
    let mut q = Vector::zeros(n);
    for (t, wt) in points {
        if t > prev {
            phi = transition_matrix_pb(path, prev, t, &opts)?.matrix * phi;
            prev = t;
        }
        if wt > 0.0 {
            q += phi.tr_mul(w) * wt;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// `∫ q_i(s) α_j(s) ds` for every ordered pair (the diagonal is
    /// `node_values`).
    pub edge_values: Matrix,
    pub node_values: Vector,
    pub delta_j: f64,
    /// Largest trapezoid self-estimate relative to the largest edge value.
    pub quad_error_estimate: f64,
    /// `quad_error_estimate > 1e-3`.
    pub coarse_grid: bool,
    pub times: Vec<f64>,
    pub alpha: Vec<Vector>,
    pub q: Vec<Vector>,
}

/// Downstream values on `grid` from the adjoint system
/// `−q' = M(s)ᵀ q + w`, `q(T) = 0`, solved backwards as a schedule.
pub fn adjoint_downstream(schedule: &Schedule, w: &Vector, grid: &[f64]) -> Result<Vec<Vector>> {
    check_weights(w, schedule.n())?;
    let t_end = schedule.t_end();
    let span = t_end - schedule.t0();
    let reversed = schedule
        .segments()
        .iter()
        .rev()
        .map(|s| Segment::new(t_end - s.t_end, t_end - s.t_start, s.generator.transpose(), w.clone()))
        .collect::<Result<Vec<_>>>()?;
    let reversed = Schedule::new(reversed)?;
    let mut back: Vec<f64> = grid.iter().rev().map(|t| (t_end - t).clamp(0.0, span)).collect();
    // Clamping can only collide at the ends; keep strict monotonicity there.
    back.dedup();
    if back.len() != grid.len() {
        return Err(Error::InvalidInput("sample grid is too fine near the horizon ends".into()));
    }
    let traj = solve_schedule_at(&reversed, &Vector::zeros(schedule.n()), &back)?;
    Ok(traj.states.into_iter().rev().collect())
}

/// First-order change of `J = ∫_{t0}^T wᵀα dt` under `Λ → Λ + dΛ`,
/// `δ → δ + dδ` applied to every schedule segment:
/// `ΔJ = Σ_{i≠j} dΛ_ij ∫q_iα_j − Σ_i dδ_i ∫q_iα_i`.
///
/// `α` is the exact schedule solution and `q` the adjoint solution on `grid`
/// (which must span the schedule); integrals use the trapezoid rule.
pub fn sensitivity_delta_j(
    schedule: &Schedule,
    alpha0: &Vector,
    w: &Vector,
    d_lambda: &Matrix,
    d_delta: &Vector,
    grid: &[f64],
) -> Result<SensitivityReport> {
    let n = schedule.n();
    if d_lambda.nrows() != n || d_lambda.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "interaction perturbation",
            expected: n,
            found: d_lambda.nrows(),
        });
    }
    if d_delta.len() != n {
        return Err(Error::DimensionMismatch {
            context: "decay perturbation",
            expected: n,
            found: d_delta.len(),
        });
    }
    if (0..n).any(|i| d_lambda[(i, i)] != 0.0) {
        return Err(Error::InvalidInput("interaction perturbation must have a zero diagonal".into()));
    }
    if grid.len() < 2 || grid[0] != schedule.t0() || *grid.last().unwrap() != schedule.t_end() {
        return Err(Error::InvalidInput("sensitivity grid must start at t0 and end at T".into()));
    }
    let alpha = solve_schedule_at(schedule, alpha0, grid)?.states;
    let q = adjoint_downstream(schedule, w, grid)?;

    let mut edge_values = Matrix::zeros(n, n);
    let mut estimates = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let values: Vec<f64> = q.iter().zip(&alpha).map(|(qs, a)| qs[i] * a[j]).collect();
            let (v, e) = trapezoid_with_estimate(grid, &values);
            edge_values[(i, j)] = v;
            estimates[(i, j)] = e;
        }
    }
    let node_values = edge_values.diagonal();
    let mut delta_j = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                delta_j += d_lambda[(i, j)] * edge_values[(i, j)];
            }
        }
        delta_j -= d_delta[i] * node_values[i];
    }
    let scale = edge_values.amax();
    let quad_error_estimate = if scale > 0.0 { estimates.amax() / scale } else { 0.0 };
    Ok(SensitivityReport {
        edge_values,
        node_values,
        delta_j,
        quad_error_estimate,
        coarse_grid: quad_error_estimate > COARSE_GRID_TOL,
        times: grid.to_vec(),
        alpha,
        q,
    })
}

/// Applies `(dΛ, dδ)` to every segment of a schedule.
pub fn perturb_schedule(schedule: &Schedule, d_lambda: &Matrix, d_delta: &Vector) -> Result<Schedule> {
    let segs = schedule
        .segments()
        .iter()
        .map(|s| {
            let m = s.generator.matrix() + d_lambda - Matrix::from_diagonal(d_delta);
            Segment::new(s.t_start, s.t_end, Generator::new(m)?, s.input.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Schedule::new(segs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRoi {
    /// Target product (row of `Λ`).
    pub i: usize,
    /// Source product (column of `Λ`).
    pub j: usize,
    pub value: f64,
    pub cost: f64,
    pub roi: f64,
}

/// Off-diagonal edges ranked by `edge_values_ij / k_ij`, descending; ties
/// broken by `(i, j)` ascending.
pub fn edge_roi(report: &SensitivityReport, costs: &Matrix) -> Result<Vec<EdgeRoi>> {
    let n = report.edge_values.nrows();
    if costs.nrows() != n || costs.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "edge costs",
            expected: n,
            found: costs.nrows(),
        });
    }
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let cost = costs[(i, j)];
            if !(cost > 0.0) || !cost.is_finite() {
                return Err(Error::InvalidInput(format!("edge cost ({i}, {j}) = {cost} must be positive")));
            }
            let value = report.edge_values[(i, j)];
            out.push(EdgeRoi {
                i,
                j,
                value,
                cost,
                roi: value / cost,
            });
        }
    }
    out.sort_by(|a, b| b.roi.total_cmp(&a.roi).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    Ok(out)
}

/// Weber–Fechner perception parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionParams {
    kappa: f64,
    beta_addon: f64,
}

impl PerceptionParams {
    pub fn new(kappa: f64, beta_addon: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) || !(beta_addon > 0.0 && beta_addon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "perception parameters must be positive (kappa = {kappa}, beta = {beta_addon})"
            )));
        }
        Ok(Self { kappa, beta_addon })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta_addon(&self) -> f64 {
        self.beta_addon
    }
}

/// `p(N) = κ log(1 + Nβ)`.
pub fn perceived_utility(n_devices: u64, params: &PerceptionParams) -> f64 {
    params.kappa * (n_devices as f64 * params.beta_addon).ln_1p()
}

/// Saturation device count `N* = 1/β − 1`.
///
/// Note that the continuous marginal gain `κβ/(1+Nβ)` reaches half its
/// `N = 0` value at `N = 1/β`, one device later than `N*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaturationPoint {
    AtDevices(f64),
    /// `β > 1`: saturation already sets in before the first device (`N* < 0`).
    BeforeFirstDevice(f64),
}

impl SaturationPoint {
    pub fn value(&self) -> f64 {
        match *self {
            SaturationPoint::AtDevices(v) | SaturationPoint::BeforeFirstDevice(v) => v,
        }
    }
}

pub fn saturation_point(beta_addon: f64) -> Result<SaturationPoint> {
    if !(beta_addon > 0.0) || !beta_addon.is_finite() {
        return Err(Error::InvalidInput(format!("add-on gain must be positive, got {beta_addon}")));
    }
    let n_star = 1.0 / beta_addon - 1.0;
    Ok(if beta_addon > 1.0 {
        SaturationPoint::BeforeFirstDevice(n_star)
    } else {
        SaturationPoint::AtDevices(n_star)
    })
}

/// `𝒜 = 1 + β N_g S(S+1)/2`.
pub fn frequency_amplification(beta_addon: f64, n_g: u32, s_steps: u32) -> f64 {
    let s = s_steps as f64;
    1.0 + beta_addon * n_g as f64 * s * (s + 1.0) / 2.0
}

/// Release-frequency amplification by unrolling the discrete recursion.
///
/// With `(A, B)` from the exponential integral over one release period `dt`,
/// the add-on-free state is `α°_{s+1} = Aα°_s + Bu` and the state with
/// add-ons is `α_{s+1} = Aα_s + B(u + βN_g(s+1)·α°_s)`: after release `s+1`,
/// `(s+1)N_g` add-ons each lift influence in proportion to the add-on-free
/// level. Returns `wᵀα_S / wᵀα°_S`.
#[allow(clippy::too_many_arguments)]
pub fn frequency_amplification_discrete(
    m: &Generator,
    u: &Vector,
    alpha0: &Vector,
    beta_addon: f64,
    n_g: u32,
    s_steps: u32,
    w: &Vector,
    dt: f64,
) -> Result<f64> {
    let n = m.n();
    for (v, context) in [(u, "input"), (alpha0, "initial state")] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: v.len(),
            });
        }
        check_nonnegative(v, context)?;
    }
    check_weights(w, n)?;
    if !(beta_addon >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need beta >= 0 and dt > 0 (beta = {beta_addon}, dt = {dt})"
        )));
    }
    let (a, b) = expm_integral(m.matrix(), dt)?;
    let gain = beta_addon * n_g as f64;
    let mut base = alpha0.clone();
    let mut with = alpha0.clone();
    for s in 0..s_steps {
        let boost = &base * (gain * (s + 1) as f64);
        with = &a * &with + &b * (u + boost);
        base = &a * &base + &b * u;
    }
    let den = w.dot(&base);
    if !(den > 0.0) {
        return Err(Error::ZeroBaseline);
    }
    Ok(w.dot(&with) / den)
}

/// Heuristic per-add-on gain from two amplification values observed at
/// add-on counts `n1 ≠ n2`: the slope of the linear first-order model
/// `𝒜 ≈ 1 + βN`.
pub fn fit_beta_addon(a1: f64, n1: f64, a2: f64, n2: f64) -> Result<f64> {
    if n1 == n2 || ![a1, n1, a2, n2].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("need two distinct, finite add-on counts".into()));
    }
    Ok((a2 - a1) / (n2 - n1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InteractionMatrix;
    use crate::solvers::{sample_grid, solve_constant, solve_schedule};
    use ecodyn_testkit as tk;
    use proptest::prelude::*;

    fn vector(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn coupled_and_baseline(lambda: Matrix, delta: Vector, u: Vector, a0: Vector, t_end: f64, dt: f64) -> (Trajectory, Trajectory) {
        let d = DecayVector::from_rates(delta).unwrap();
        let g = Generator::assemble(&InteractionMatrix::new(lambda).unwrap(), &d).unwrap();
        let sched = Schedule::constant(g, u.clone(), 0.0, t_end).unwrap();
        let coupled = solve_schedule(&sched, &a0, dt).unwrap();
        let base = baseline_trajectory(&d, &InputSignal::constant(0.0, u).unwrap(), &a0, &coupled.times).unwrap();
        (coupled, base)
    }

    #[test]
    fn baseline_examples() {
        let d = DecayVector::from_rates(vector(&[0.5, 2.0])).unwrap();
        let grid = sample_grid(0.0, 20.0, 0.5).unwrap();
        let a0 = vector(&[1.0, 3.0]);
        let zero = InputSignal::constant(0.0, vector(&[0.0, 0.0])).unwrap();
        let b = baseline_trajectory(&d, &zero, &a0, &grid).unwrap();
        for (t, s) in grid.iter().zip(&b.states) {
            assert!((s[0] - (-0.5 * t).exp()).abs() < 1e-15);
            assert!((s[1] - 3.0 * (-2.0 * t).exp()).abs() < 1e-15);
        }

        let u = vector(&[0.4, 1.0]);
        let b = baseline_trajectory(&d, &InputSignal::constant(0.0, u.clone()).unwrap(), &a0, &grid).unwrap();
        let last = b.states.last().unwrap();
        assert!((last[0] - 0.8).abs() < 1e-3 && (last[1] - 0.5).abs() < 1e-12);

        let g = Generator::new(Matrix::from_diagonal(&vector(&[-0.5, -2.0]))).unwrap();
        for (t, s) in grid.iter().zip(&b.states) {
            let direct = solve_constant(&g, &a0, &u, *t).unwrap();
            assert!((s - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn amplification_examples() {
        let (c, b) = coupled_and_baseline(Matrix::zeros(2, 2), vector(&[0.5, 1.0]), vector(&[0.1, 0.2]), vector(&[0.3, 0.0]), 10.0, 0.5);
        let r = amplification(&c, &b, BASELINE_FLOOR).unwrap();
        // t = 0, product 1 has a zero baseline: absent rather than zero.
        assert_eq!(r.per_product[0][1], None);
        for v in r.per_product.iter().flatten().flatten() {
            assert!((v - 1.0).abs() < 1e-12);
        }

        let lambda = mat(&[&[0.0, 0.0], &[0.8, 0.0]]);
        let (c, b) = coupled_and_baseline(lambda, vector(&[0.5, 1.0]), vector(&[0.1, 0.2]), vector(&[0.3, 0.1]), 10.0, 0.5);
        let r = amplification(&c, &b, BASELINE_FLOOR).unwrap();
        assert!(r.violations.is_empty());
        for row in &r.per_product[1..] {
            assert!((row[0].unwrap() - 1.0).abs() < 1e-12);
            assert!(row[1].unwrap() > 1.0 + 1e-6);
        }
        assert!(cumulative_amplification(&vector(&[0.0, 1.0]), &c, &b).unwrap() > 1.0);
        assert!((cumulative_amplification(&vector(&[1.0, 0.0]), &c, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_amplification_edge_cases() {
        let (c, b) = coupled_and_baseline(Matrix::zeros(2, 2), vector(&[0.5, 1.0]), vector(&[0.1, 0.2]), vector(&[0.3, 0.0]), 5.0, 0.5);
        assert!((cumulative_amplification(&uniform_weights(2), &c, &b).unwrap() - 1.0).abs() < 1e-14);
        let (c, b) = coupled_and_baseline(Matrix::zeros(2, 2), vector(&[0.5, 1.0]), vector(&[0.0, 0.0]), vector(&[0.0, 0.0]), 5.0, 0.5);
        assert_eq!(cumulative_amplification(&uniform_weights(2), &c, &b), Err(Error::ZeroBaseline));
    }

    #[test]
    fn cumulative_amplification_monotone_in_coupling() {
        let mut rng = tk::rng(61);
        let delta = vector(&[1.0, 1.5, 0.8]);
        let u = vector(&[0.2, 0.1, 0.3]);
        let a0 = vector(&[0.1, 0.1, 0.1]);
        let w = uniform_weights(3);
        let mut lambda = Matrix::zeros(3, 3);
        let mut last = 1.0;
        for _ in 0..10 {
            let (i, j) = loop {
                let i = (tk::uniform(&mut rng, 0.0, 3.0)) as usize;
                let j = (tk::uniform(&mut rng, 0.0, 3.0)) as usize;
                if i != j {
                    break (i, j);
                }
            };
            lambda[(i, j)] += 0.05;
            let (c, b) = coupled_and_baseline(lambda.clone(), delta.clone(), u.clone(), a0.clone(), 8.0, 0.25);
            let now = cumulative_amplification(&w, &c, &b).unwrap();
            assert!(now >= last - 1e-12);
            last = now;
        }
    }

    #[test]
    fn downstream_value_examples() {
        let zero = GeneratorPath::constant(Generator::new(Matrix::zeros(2, 2)).unwrap(), 0.0, 3.0).unwrap();
        let e1 = vector(&[1.0, 0.0]);
        assert_eq!(downstream_value(&zero, &e1, 3.0, 3.0, 4).unwrap(), Vector::zeros(2));
        let q = downstream_value(&zero, &e1, 1.0, 3.0, 4).unwrap();
        assert!((q - vector(&[2.0, 0.0])).amax() < 1e-13);

        let d = vector(&[0.7, 2.5]);
        let diag = GeneratorPath::constant(Generator::new(-Matrix::from_diagonal(&d)).unwrap(), 0.0, 3.0).unwrap();
        let w = vector(&[0.4, 1.1]);
        let q = downstream_value(&diag, &w, 0.5, 3.0, 6).unwrap();
        for i in 0..2 {
            let want = w[i] * (1.0 - (-d[i] * 2.5).exp()) / d[i];
            assert!((q[i] - want).abs() < 1e-10);
        }
    }

    fn random_schedule(rng: &mut tk::Rng8, n: usize, pieces: usize, length: f64) -> Schedule {
        let segs = (0..pieces)
            .map(|k| {
                let m = tk::random_stable_metzler(rng, n, 0.8, 0.2);
                let u = tk::random_nonneg_vector(rng, n, 1.0);
                let h = length / pieces as f64;
                Segment::new(k as f64 * h, (k + 1) as f64 * h, Generator::new(m).unwrap(), u).unwrap()
            })
            .collect();
        Schedule::new(segs).unwrap()
    }

    #[test]
    fn adjoint_matches_direct_downstream_value() {
        let mut rng = tk::rng(62);
        let sched = random_schedule(&mut rng, 3, 3, 6.0);
        let path = GeneratorPath::from_schedule(&sched).unwrap();
        let w = tk::random_nonneg_vector(&mut rng, 3, 1.0);
        let grid = sample_grid(0.0, 6.0, 0.5).unwrap();
        let q = adjoint_downstream(&sched, &w, &grid).unwrap();
        for (t, qa) in grid.iter().zip(&q) {
            let qd = downstream_value(&path, &w, *t, 6.0, 6).unwrap();
            assert!(tk::rel_err_vec(qa, &qd, 1e-12) < 1e-9, "t = {t}");
            assert!(qa.min() >= 0.0);
        }
        assert_eq!(q.last().unwrap(), &Vector::zeros(3));
    }

    fn objective(sched: &Schedule, a0: &Vector, w: &Vector, grid: &[f64]) -> f64 {
        let traj = solve_schedule_at(sched, a0, grid).unwrap();
        weighted_integral(w, &traj)
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        let mut rng = tk::rng(63);
        for _ in 0..5 {
            let n = 3;
            let sched = random_schedule(&mut rng, n, 2, 5.0);
            let a0 = tk::random_nonneg_vector(&mut rng, n, 1.0);
            let w = tk::random_nonneg_vector(&mut rng, n, 1.0);
            let grid = sample_grid(0.0, 5.0, 0.005).unwrap();
            let mut d_lambda = tk::random_interactions(&mut rng, n, 1.0, 1.0);
            let mut d_delta = tk::random_nonneg_vector(&mut rng, n, 1.0).add_scalar(-0.5);
            let scale = 1e-4;
            d_lambda *= scale;
            d_delta *= scale;
            let report = sensitivity_delta_j(&sched, &a0, &w, &d_lambda, &d_delta, &grid).unwrap();
            assert!(!report.coarse_grid);
            let plus = perturb_schedule(&sched, &d_lambda, &d_delta).unwrap();
            let fd = objective(&plus, &a0, &w, &grid) - objective(&sched, &a0, &w, &grid);
            assert!(((report.delta_j - fd) / fd).abs() < 1e-3, "{} vs {fd}", report.delta_j);
        }
    }

    #[test]
    fn sensitivity_trivial_and_sign() {
        let mut rng = tk::rng(64);
        let sched = random_schedule(&mut rng, 3, 2, 4.0);
        let a0 = tk::random_nonneg_vector(&mut rng, 3, 1.0);
        let w = uniform_weights(3);
        let grid = sample_grid(0.0, 4.0, 0.01).unwrap();
        let r = sensitivity_delta_j(&sched, &a0, &w, &Matrix::zeros(3, 3), &Vector::zeros(3), &grid).unwrap();
        assert_eq!(r.delta_j, 0.0);
        assert!(r.edge_values.min() >= 0.0);
        let r = sensitivity_delta_j(&sched, &a0, &w, &tk::random_interactions(&mut rng, 3, 1.0, 0.5), &Vector::zeros(3), &grid).unwrap();
        assert!(r.delta_j >= 0.0);
        assert!(sensitivity_delta_j(&sched, &a0, &w, &Matrix::identity(3, 3), &Vector::zeros(3), &grid).is_err());
    }

    #[test]
    fn sensitivity_sign_is_ambiguous_for_joint_policies() {
        let mut rng = tk::rng(65);
        let sched = random_schedule(&mut rng, 2, 1, 4.0);
        let a0 = vector(&[0.3, 0.3]);
        let w = uniform_weights(2);
        let grid = sample_grid(0.0, 4.0, 0.01).unwrap();
        // Cheaper decay (dδ < 0) bought with weaker coupling (dΛ ≤ 0).
        let mut signs = Vec::new();
        for (cut, relief) in [(1e-3, 1e-2), (1e-2, 1e-4)] {
            let d_lambda = mat(&[&[0.0, -cut], &[-cut, 0.0]]);
            let d_delta = vector(&[-relief, -relief]);
            signs.push(sensitivity_delta_j(&sched, &a0, &w, &d_lambda, &d_delta, &grid).unwrap().delta_j);
        }
        assert!(signs[0] > 0.0 && signs[1] < 0.0, "{signs:?}");
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let g = Generator::new(mat(&[&[-6.0, 2.0], &[3.0, -5.0]])).unwrap();
        let sched = Schedule::constant(g, vector(&[1.0, 0.0]), 0.0, 4.0).unwrap();
        let grid = sample_grid(0.0, 4.0, 1.0).unwrap();
        let r = sensitivity_delta_j(&sched, &vector(&[1.0, 1.0]), &uniform_weights(2), &Matrix::zeros(2, 2), &Vector::zeros(2), &grid).unwrap();
        assert!(r.coarse_grid);
    }

    #[test]
    fn roi_ranking() {
        let report = SensitivityReport {
            edge_values: mat(&[&[9.0, 2.0, 4.0], &[1.0, 9.0, 4.0], &[3.0, 0.5, 9.0]]),
            node_values: vector(&[9.0, 9.0, 9.0]),
            delta_j: 0.0,
            quad_error_estimate: 0.0,
            coarse_grid: false,
            times: vec![],
            alpha: vec![],
            q: vec![],
        };
        let ones = Matrix::from_element(3, 3, 1.0);
        let r = edge_roi(&report, &ones).unwrap();
        let order: Vec<(usize, usize)> = r.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(order, vec![(0, 2), (1, 2), (2, 0), (0, 1), (1, 0), (2, 1)]);

        let mut costs = ones.clone();
        costs[(0, 2)] = 2.0;
        let r = edge_roi(&report, &costs).unwrap();
        let top = r.iter().find(|e| (e.i, e.j) == (0, 2)).unwrap();
        assert_eq!(top.roi, 2.0);
        assert_eq!((r[0].i, r[0].j), (1, 2));

        costs[(1, 0)] = 0.0;
        assert!(edge_roi(&report, &costs).is_err());
    }

    #[test]
    fn roi_chain_prefers_edge_into_heavy_product() {
        // Chain 0 → 1 → 2 with all weight on product 2.
        let d = DecayVector::from_rates(vector(&[1.0, 1.0, 1.0])).unwrap();
        let lambda = InteractionMatrix::new(mat(&[&[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0], &[0.0, 0.5, 0.0]])).unwrap();
        let g = Generator::assemble(&lambda, &d).unwrap();
        let sched = Schedule::constant(g, vector(&[1.0, 0.2, 0.2]), 0.0, 6.0).unwrap();
        let a0 = vector(&[0.5, 0.2, 0.1]);
        let w = vector(&[0.0, 0.0, 1.0]);
        let grid = sample_grid(0.0, 6.0, 0.005).unwrap();
        let report = sensitivity_delta_j(&sched, &a0, &w, &Matrix::zeros(3, 3), &Vector::zeros(3), &grid).unwrap();
        let ranked = edge_roi(&report, &Matrix::from_element(3, 3, 1.0)).unwrap();
        let base = objective(&sched, &a0, &w, &grid);
        let best = ranked
            .iter()
            .map(|e| {
                let mut dl = Matrix::zeros(3, 3);
                dl[(e.i, e.j)] = 1e-4;
                let p = perturb_schedule(&sched, &dl, &Vector::zeros(3)).unwrap();
                ((e.i, e.j), (objective(&p, &a0, &w, &grid) - base) / 1e-4)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!((ranked[0].i, ranked[0].j), best.0);
        assert_eq!(ranked[0].i, 2);
    }

    #[test]
    fn perception_examples() {
        let p = PerceptionParams::new(1.0, 1.0).unwrap();
        assert_eq!(perceived_utility(0, &p), 0.0);
        assert!((perceived_utility(1, &p) - 2f64.ln()).abs() < 1e-15);
        assert!(PerceptionParams::new(0.0, 1.0).is_err());
        let p = PerceptionParams::new(2.0, 0.3).unwrap();
        let mut prev_gain = f64::INFINITY;
        for n in 0..10_000u64 {
            let gain = perceived_utility(n + 1, &p) - perceived_utility(n, &p);
            assert!(gain < prev_gain);
            prev_gain = gain;
        }
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturation_point(0.25).unwrap(), SaturationPoint::AtDevices(3.0));
        assert_eq!(saturation_point(0.5).unwrap(), SaturationPoint::AtDevices(1.0));
        assert_eq!(saturation_point(1.0).unwrap(), SaturationPoint::AtDevices(0.0));
        assert!(matches!(saturation_point(2.0).unwrap(), SaturationPoint::BeforeFirstDevice(v) if v == -0.5));
        assert!(saturation_point(0.0).is_err());
        let beta = 0.25;
        let n_star = saturation_point(beta).unwrap().value();
        let marginal = |n: f64| beta / (1.0 + n * beta);
        assert!((marginal(n_star + 1.0) / marginal(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frequency_closed_form_examples() {
        assert_eq!(frequency_amplification(0.3, 2, 1), 1.6);
        assert!((frequency_amplification(0.01, 2, 10) - 2.1).abs() < 1e-15);
        let gain = |s| frequency_amplification(0.01, 2, s) - 1.0;
        let r = gain(200) / gain(100);
        assert!((r - 4.0).abs() < 0.05);
    }

    #[test]
    fn frequency_discrete_examples() {
        let g = Generator::new(mat(&[&[-0.004, 0.002], &[0.001, -0.005]])).unwrap();
        let u = vector(&[0.0, 0.0]);
        let a0 = vector(&[1.0, 0.5]);
        let w = uniform_weights(2);
        assert_eq!(frequency_amplification_discrete(&g, &u, &a0, 0.0, 3, 10, &w, 1.0).unwrap(), 1.0);
        for s in [1, 5, 10, 20] {
            let disc = frequency_amplification_discrete(&g, &u, &a0, 0.01, 2, s, &w, 1.0).unwrap();
            let closed = frequency_amplification(0.01, 2, s);
            assert!(((disc - closed) / closed).abs() < 0.05);
        }
        // Fast decay with steady input: the closed form overestimates.
        let fast = Generator::new(mat(&[&[-2.0, 0.1], &[0.1, -3.0]])).unwrap();
        let disc = frequency_amplification_discrete(&fast, &vector(&[1.0, 1.0]), &a0, 0.01, 2, 10, &w, 1.0).unwrap();
        assert!(disc < frequency_amplification(0.01, 2, 10));
        assert!(disc > 1.0);
        assert_eq!(
            frequency_amplification_discrete(&g, &u, &Vector::zeros(2), 0.01, 2, 10, &w, 1.0),
            Err(Error::ZeroBaseline)
        );
    }

    #[test]
    fn beta_fit() {
        let b = fit_beta_addon(frequency_amplification(0.02, 1, 1), 1.0, frequency_amplification(0.02, 3, 1), 3.0).unwrap();
        assert!((b - 0.02).abs() < 1e-15);
        assert!(fit_beta_addon(1.1, 2.0, 1.2, 2.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn amplification_at_least_one(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = tk::rng(seed);
            let lambda = tk::random_interactions(&mut rng, n, 1.0, 0.6);
            let delta = tk::random_nonneg_vector(&mut rng, n, 2.0).add_scalar(0.05);
            let (c, b) = coupled_and_baseline(
                lambda,
                delta,
                tk::random_nonneg_vector(&mut rng, n, 1.0),
                tk::random_nonneg_vector(&mut rng, n, 1.0),
                5.0,
                0.25,
            );
            let r = amplification(&c, &b, BASELINE_FLOOR).unwrap();
            prop_assert!(r.violations.is_empty());
        }

        #[test]
        fn downstream_nonnegative(seed in any::<u64>()) {
            let mut rng = tk::rng(seed);
            let sched = random_schedule(&mut rng, 3, 2, 3.0);
            let w = tk::random_nonneg_vector(&mut rng, 3, 1.0).add_scalar(0.01);
            let grid = sample_grid(0.0, 3.0, 0.25).unwrap();
            for q in adjoint_downstream(&sched, &w, &grid).unwrap() {
                prop_assert!(q.min() >= 0.0);
            }
        }
    }
}
