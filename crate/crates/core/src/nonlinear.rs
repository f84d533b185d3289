//! Bounded nonlinear models: the saturating influence model with crowding and
//! the SIS adoption layer with its spectral-radius threshold.

use rayon::prelude::*;

use crate::matfun::spectral_radius;
use crate::model::{DecayVector, InteractionMatrix};
use crate::solvers::{Trajectory, TrajectoryMode};
use crate::{Error, Matrix, Result, Vector};

/// Pairwise crowding penalties `c_ij ≥ 0` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdingMatrix(Matrix);

impl CrowdingMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "crowding matrix",
                expected: n,
                found: entries.ncols(),
            });
        }
        for j in 0..n {
            for i in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "crowding entry ({i}, {j}) = {v}; need finite, >= 0, zero diagonal"
                    )));
                }
            }
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
}

/// SIS adoption on a weighted user graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AdoptionSystem {
    adjacency: Matrix,
    beta: f64,
    delta: f64,
}

impl AdoptionSystem {
    /// `beta = 0` (pure churn) is accepted; `delta` must be positive.
    pub fn new(adjacency: Matrix, beta: f64, delta: f64) -> Result<Self> {
        check_adjacency(&adjacency)?;
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!("adoption rate must be finite and >= 0, got {beta}")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("churn rate must be finite and > 0, got {delta}")));
        }
        Ok(Self { adjacency, beta, delta })
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// `τ = β/δ`.
    pub fn tau(&self) -> f64 {
        self.beta / self.delta
    }
}

fn check_adjacency(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            context: "adjacency",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if let Some(v) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("adjacency entries must be finite and >= 0, found {v}")));
    }
    Ok(())
}

fn check_unit_box(x: &Vector) -> Result<()> {
    match x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::OutOfRange { index, value: x[index] }),
        None => Ok(()),
    }
}

/// Dense row-major copy used by the inner integration loops.
struct Dense {
    n: usize,
    rows: Vec<f64>,
}

impl Dense {
    fn new(m: &Matrix) -> Self {
        let n = m.nrows();
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rows.push(m[(i, j)]);
            }
        }
        Self { n, rows }
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

struct Saturating {
    lambda: Dense,
    crowd: Dense,
    delta: Vec<f64>,
}

impl Saturating {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            // Diagonals of Λ and c are zero, so full row sums equal the j ≠ i sums.
            let push = self.lambda.row_dot(i, x);
            let crowd = self.crowd.row_dot(i, x);
            out[i] = (1.0 - x[i]) * push - self.delta[i] * x[i] - crowd * x[i];
        }
    }
}

struct Sis {
    adj: Dense,
    beta: f64,
    delta: f64,
}

impl Sis {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.beta * (1.0 - x[i]) * self.adj.row_dot(i, x) - self.delta * x[i];
        }
    }
}

fn check_saturating_dims(lambda: &InteractionMatrix, delta: &DecayVector, c: &CrowdingMatrix, n: usize) -> Result<()> {
    for (found, context) in [
        (lambda.n(), "interaction matrix"),
        (delta.len(), "decay vector"),
        (c.n(), "crowding matrix"),
    ] {
        if found != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found,
            });
        }
    }
    Ok(())
}

/// `(1−α_i) Σ_{j≠i} Λ_ij α_j − δ_i α_i − Σ_{j≠i} c_ij α_i α_j`.
pub fn saturating_rhs(alpha: &Vector, lambda: &InteractionMatrix, delta: &DecayVector, c: &CrowdingMatrix) -> Result<Vector> {
    check_saturating_dims(lambda, delta, c, alpha.len())?;
    check_unit_box(alpha)?;
    let sys = Saturating {
        lambda: Dense::new(lambda.matrix()),
        crowd: Dense::new(c.matrix()),
        delta: delta.rates().iter().copied().collect(),
    };
    let mut out = vec![0.0; alpha.len()];
    sys.eval(alpha.as_slice(), &mut out);
    Ok(Vector::from_vec(out))
}

/// Classical RK4 over `[0, horizon]` with `steps` equal steps. `after_step`
/// may post-process each new state; every `record_every`-th step is kept.
fn rk4<F, P>(f: F, x0: &[f64], horizon: f64, steps: usize, mut after_step: P, record_every: usize) -> (Vec<f64>, Vec<Vec<f64>>)
where
    F: Fn(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
{
    let n = x0.len();
    let h = horizon / steps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for step in 1..=steps {
        f(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        after_step(&mut x);
        if step % record_every == 0 || step == steps {
            times.push(if step == steps { horizon } else { step as f64 * h });
            states.push(x.clone());
        }
    }
    (times, states)
}

fn step_count(horizon: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidInput(format!("integration step must be positive, got {step}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    Ok(((horizon / step) - 1e-9).ceil().max(1.0) as usize)
}

/// Saturating trajectory with its clamping diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatingRun {
    pub trajectory: Trajectory,
    /// Component updates that left `[0, 1]` and were clamped back.
    pub clamp_events: usize,
    /// Total component updates (`steps × n`).
    pub updates: usize,
}

/// Fixed-step RK4 integration of the saturating model on `[0, horizon]`.
///
/// Every step is recorded. Each updated component is clamped to `[0, 1]`; if
/// more than 1% of updates need clamping the step is rejected as too large.
pub fn integrate_saturating(
    lambda: &InteractionMatrix,
    delta: &DecayVector,
    c: &CrowdingMatrix,
    alpha0: &Vector,
    horizon: f64,
    step: f64,
) -> Result<SaturatingRun> {
    let n = alpha0.len();
    check_saturating_dims(lambda, delta, c, n)?;
    check_unit_box(alpha0)?;
    let steps = step_count(horizon, step)?;
    let sys = Saturating {
        lambda: Dense::new(lambda.matrix()),
        crowd: Dense::new(c.matrix()),
        delta: delta.rates().iter().copied().collect(),
    };
    let mut clamps = 0usize;
    let (times, states) = rk4(
        |x, out| sys.eval(x, out),
        alpha0.as_slice(),
        horizon,
        steps,
        |x| {
            for v in x.iter_mut() {
                if *v < 0.0 || *v > 1.0 {
                    clamps += 1;
                    *v = v.clamp(0.0, 1.0);
                }
            }
        },
        1,
    );
    let updates = steps * n;
    if clamps * 100 > updates {
        return Err(Error::StepSizeRejected {
            clamps,
            evaluations: updates,
        });
    }
    Ok(SaturatingRun {
        trajectory: Trajectory {
            times,
            states: states.into_iter().map(Vector::from_vec).collect(),
            mode: TrajectoryMode::Saturating,
        },
        clamp_events: clamps,
        updates,
    })
}

/// `β(1−x_i) Σ_j A_ij x_j − δ x_i`.
pub fn sis_rhs(x: &Vector, sys: &AdoptionSystem) -> Result<Vector> {
    if x.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            context: "SIS state",
            expected: sys.n(),
            found: x.len(),
        });
    }
    check_unit_box(x)?;
    let model = Sis {
        adj: Dense::new(&sys.adjacency),
        beta: sys.beta,
        delta: sys.delta,
    };
    let mut out = vec![0.0; x.len()];
    model.eval(x.as_slice(), &mut out);
    Ok(Vector::from_vec(out))
}

/// Default SIS step `0.01 / max(δ, β·λ_max(A))`.
pub fn default_sis_step(sys: &AdoptionSystem) -> Result<f64> {
    let rho = spectral_radius(&sys.adjacency)?.value;
    Ok(0.01 / sys.delta.max(sys.beta * rho))
}

/// Fixed-step RK4 SIS trajectory on `[0, horizon]`, keeping every
/// `record_every`-th step (and the last).
pub fn integrate_sis(sys: &AdoptionSystem, x0: &Vector, horizon: f64, step: f64, record_every: usize) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            context: "SIS initial state",
            expected: sys.n(),
            found: x0.len(),
        });
    }
    check_unit_box(x0)?;
    let steps = step_count(horizon, step)?;
    let model = Sis {
        adj: Dense::new(&sys.adjacency),
        beta: sys.beta,
        delta: sys.delta,
    };
    let (times, states) = rk4(|x, out| model.eval(x, out), x0.as_slice(), horizon, steps, |_| {}, record_every.max(1));
    Ok(Trajectory {
        times,
        states: states.into_iter().map(Vector::from_vec).collect(),
        mode: TrajectoryMode::Sis,
    })
}

/// `τ_c = 1/λ_max(A)`; [`Error::InfiniteThreshold`] when `λ_max = 0`.
pub fn critical_tau(adjacency: &Matrix) -> Result<f64> {
    check_adjacency(adjacency)?;
    let rho = spectral_radius(adjacency)?.value;
    if rho <= 0.0 {
        return Err(Error::InfiniteThreshold);
    }
    Ok(1.0 / rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PersistenceStatus {
    Extinct,
    Persistent,
    /// Neither extinct nor settled at the horizon; a longer horizon is needed.
    Inconclusive,
}

impl PersistenceStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PersistenceStatus::Extinct => "extinct",
            PersistenceStatus::Persistent => "persistent",
            PersistenceStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceResult {
    pub status: PersistenceStatus,
    pub final_state: Vector,
    /// `‖x(T)‖_∞`.
    pub final_norm: f64,
    /// `‖x(T) − x(0.9T)‖_∞ / ‖x(T)‖_∞`.
    pub settling_change: f64,
}

/// Relative change over the last tenth of the horizon below which a nonzero
/// state counts as settled.
pub const SETTLING_TOL: f64 = 1e-9;

/// Integrates the SIS model with the default step and classifies the
/// outcome at `horizon`.
///
/// Requires `horizon·δ ≥ 20` and a nonzero `x0 ∈ [0, 1]^N`.
pub fn classify_persistence(sys: &AdoptionSystem, x0: &Vector, horizon: f64, extinction_tol: f64) -> Result<PersistenceResult> {
    if !(horizon * sys.delta >= 20.0) {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} covers fewer than 20 churn time constants (delta = {})",
            sys.delta
        )));
    }
    if !(extinction_tol > 0.0) {
        return Err(Error::InvalidInput(format!("extinction tolerance must be positive, got {extinction_tol}")));
    }
    if x0.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("initial adoption must be nonzero".into()));
    }
    let step = default_sis_step(sys)?;
    let steps = step_count(horizon, step)?;
    // Record the state at 90% of the horizon and at the end.
    let mark = (steps * 9) / 10;
    let traj = integrate_sis(sys, x0, horizon, step, mark.max(1))?;
    let final_state = traj.states.last().cloned().unwrap_or_else(|| x0.clone());
    let earlier = &traj.states[traj.states.len().saturating_sub(2)];
    let final_norm = final_state.amax();
    let settling_change = if final_norm > 0.0 {
        (&final_state - earlier).amax() / final_norm
    } else {
        0.0
    };
    let status = if final_norm < extinction_tol {
        PersistenceStatus::Extinct
    } else if settling_change < SETTLING_TOL {
        PersistenceStatus::Persistent
    } else {
        PersistenceStatus::Inconclusive
    };
    Ok(PersistenceResult {
        status,
        final_state,
        final_norm,
        settling_change,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub status: PersistenceStatus,
    pub final_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// `[last extinct τ, first persistent τ]` when both occur.
    pub bracket: Option<(f64, f64)>,
    pub inconclusive: Vec<f64>,
}

/// Extinction tolerance used by [`sweep_tau`].
pub const SWEEP_EXTINCTION_TOL: f64 = 1e-6;

/// Classifies persistence at each `τ` with `δ = 1`, `β = τ`.
///
/// Points are independent and run in parallel; results keep grid order.
/// Fails with [`Error::NonMonotoneSweep`] if an extinct point follows a
/// persistent one.
pub fn sweep_tau(adjacency: &Matrix, tau_grid: &[f64], x0: &Vector, horizon: f64) -> Result<SweepResult> {
    check_adjacency(adjacency)?;
    if tau_grid.is_empty() || tau_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) || tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("tau grid must be positive and strictly increasing".into()));
    }
    let points = tau_grid
        .par_iter()
        .map(|&tau| {
            let sys = AdoptionSystem::new(adjacency.clone(), tau, 1.0)?;
            let r = classify_persistence(&sys, x0, horizon, SWEEP_EXTINCTION_TOL)?;
            Ok(SweepPoint {
                tau,
                status: r.status,
                final_norm: r.final_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut first_persistent: Option<f64> = None;
    let mut last_extinct: Option<f64> = None;
    for p in &points {
        match p.status {
            PersistenceStatus::Persistent => {
                first_persistent.get_or_insert(p.tau);
            }
            PersistenceStatus::Extinct => {
                if first_persistent.is_some() {
                    return Err(Error::NonMonotoneSweep { tau: p.tau });
                }
                last_extinct = Some(p.tau);
            }
            PersistenceStatus::Inconclusive => {}
        }
    }
    let inconclusive = points
        .iter()
        .filter(|p| p.status == PersistenceStatus::Inconclusive)
        .map(|p| p.tau)
        .collect();
    Ok(SweepResult {
        bracket: last_extinct.zip(first_persistent),
        points,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecodyn_testkit as tk;
    use proptest::prelude::*;

    fn vector(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn star(leaves: usize) -> Matrix {
        Matrix::from_fn(leaves + 1, leaves + 1, |i, j| if (i == 0) != (j == 0) { 1.0 } else { 0.0 })
    }

    fn complete(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i != j { 1.0 } else { 0.0 })
    }

    fn two_products() -> (InteractionMatrix, DecayVector) {
        let lambda = InteractionMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let delta = DecayVector::from_rates(vector(&[0.1, 0.1])).unwrap();
        (lambda, delta)
    }

    #[test]
    fn crowding_validation() {
        assert!(CrowdingMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.1, 0.0])).is_ok());
        assert!(CrowdingMatrix::new(Matrix::from_row_slice(2, 2, &[0.1, 0.5, 0.1, 0.0])).is_err());
        assert!(CrowdingMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, -0.5, 0.1, 0.0])).is_err());
    }

    #[test]
    fn saturating_rhs_examples() {
        let (lambda, delta) = two_products();
        let c = CrowdingMatrix::zeros(2);
        assert_eq!(saturating_rhs(&vector(&[0.0, 0.0]), &lambda, &delta, &c).unwrap(), vector(&[0.0, 0.0]));
        let r = saturating_rhs(&vector(&[0.5, 0.5]), &lambda, &delta, &c).unwrap();
        assert!((r - vector(&[0.2, 0.2])).amax() < 1e-15);
        let r = saturating_rhs(&vector(&[1.0, 0.3]), &lambda, &delta, &c).unwrap();
        assert_eq!(r[0], -0.1);
        assert!(matches!(
            saturating_rhs(&vector(&[1.2, 0.3]), &lambda, &delta, &c),
            Err(Error::OutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn saturating_crowding_term() {
        let (lambda, delta) = two_products();
        let c = CrowdingMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, 0.4, 0.0, 0.0])).unwrap();
        let r = saturating_rhs(&vector(&[0.5, 0.5]), &lambda, &delta, &c).unwrap();
        assert!((r[0] - (0.2 - 0.4 * 0.25)).abs() < 1e-15);
        assert!((r[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn saturating_decay_is_fourth_order() {
        let lambda = InteractionMatrix::zeros(2);
        let delta = DecayVector::from_rates(vector(&[0.7, 1.3])).unwrap();
        let c = CrowdingMatrix::zeros(2);
        let a0 = vector(&[0.9, 0.4]);
        let exact = vector(&[0.9 * (-0.7f64 * 5.0).exp(), 0.4 * (-1.3f64 * 5.0).exp()]);
        let err = |h: f64| {
            let run = integrate_saturating(&lambda, &delta, &c, &a0, 5.0, h).unwrap();
            (run.trajectory.states.last().unwrap() - &exact).amax()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-6);
        assert!((e1 / e2).log2() > 3.8, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn saturating_stays_bounded_under_strong_coupling() {
        let lambda = InteractionMatrix::new(Matrix::from_fn(3, 3, |i, j| if i != j { 8.0 } else { 0.0 })).unwrap();
        let delta = DecayVector::from_rates(vector(&[0.05, 0.05, 0.05])).unwrap();
        let run = integrate_saturating(&lambda, &delta, &CrowdingMatrix::zeros(3), &vector(&[0.5, 0.9, 1.0]), 200.0, 0.01).unwrap();
        assert!(run.trajectory.max_entry() <= 1.0 + 1e-12);
        assert!(run.trajectory.min_entry() >= -1e-12);
        assert_eq!(run.trajectory.mode, TrajectoryMode::Saturating);
    }

    #[test]
    fn saturating_rejects_huge_steps() {
        let lambda = InteractionMatrix::new(Matrix::from_fn(2, 2, |i, j| if i != j { 50.0 } else { 0.0 })).unwrap();
        let delta = DecayVector::from_rates(vector(&[50.0, 50.0])).unwrap();
        let r = integrate_saturating(&lambda, &delta, &CrowdingMatrix::zeros(2), &vector(&[0.5, 0.5]), 10.0, 1.0);
        assert!(matches!(r, Err(Error::StepSizeRejected { .. })));
    }

    #[test]
    fn sis_rhs_examples() {
        let sys = AdoptionSystem::new(complete(2), 1.0, 1.0).unwrap();
        assert_eq!(sis_rhs(&vector(&[0.0, 0.0]), &sys).unwrap(), vector(&[0.0, 0.0]));
        assert_eq!(sis_rhs(&vector(&[0.5, 0.5]), &sys).unwrap(), vector(&[-0.25, -0.25]));
        assert!(sis_rhs(&vector(&[0.5, -0.1]), &sys).is_err());
    }

    #[test]
    fn sis_linearization_remainder_is_quadratic() {
        let mut rng = tk::rng(51);
        let a = tk::random_interactions(&mut rng, 6, 1.0, 0.6);
        let sys = AdoptionSystem::new(a.clone(), 0.8, 0.5).unwrap();
        let lin = &a * 0.8 - Matrix::identity(6, 6) * 0.5;
        let anorm = a.abs().row_sum().max();
        for scale in [1e-2, 1e-3, 1e-4] {
            let x = tk::random_nonneg_vector(&mut rng, 6, scale);
            let r = sis_rhs(&x, &sys).unwrap() - &lin * &x;
            assert!(r.amax() <= 0.8 * anorm * x.amax().powi(2) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn thresholds_of_standard_graphs() {
        assert!((critical_tau(&complete(3)).unwrap() - 0.5).abs() < 1e-12);
        assert!((critical_tau(&star(4)).unwrap() - 0.5).abs() < 1e-12);
        assert!((critical_tau(&star(16)).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(critical_tau(&Matrix::zeros(1, 1)), Err(Error::InfiniteThreshold));
    }

    #[test]
    fn classification_around_threshold() {
        let a = star(4);
        let tc = critical_tau(&a).unwrap();
        let x0 = Vector::from_element(5, 0.1);
        let below = classify_persistence(&AdoptionSystem::new(a.clone(), 0.9 * tc, 1.0).unwrap(), &x0, 400.0, 1e-6).unwrap();
        assert_eq!(below.status, PersistenceStatus::Extinct);
        assert!(below.final_norm < 1e-6);
        let above = classify_persistence(&AdoptionSystem::new(a.clone(), 1.5 * tc, 1.0).unwrap(), &x0, 400.0, 1e-6).unwrap();
        assert_eq!(above.status, PersistenceStatus::Persistent);
        assert!(above.final_norm > 0.1);
        let churn = classify_persistence(&AdoptionSystem::new(a, 0.0, 1.0).unwrap(), &x0, 40.0, 1e-6).unwrap();
        assert_eq!(churn.status, PersistenceStatus::Extinct);
    }

    #[test]
    fn classification_requires_long_horizon() {
        let sys = AdoptionSystem::new(star(4), 0.5, 1.0).unwrap();
        assert!(classify_persistence(&sys, &Vector::from_element(5, 0.1), 10.0, 1e-6).is_err());
    }

    #[test]
    fn sweep_brackets_threshold() {
        let a = complete(3);
        let grid: Vec<f64> = (0..9).map(|k| 0.3 + 0.05 * k as f64).collect();
        let r = sweep_tau(&a, &grid, &Vector::from_element(3, 0.2), 400.0).unwrap();
        let (lo, hi) = r.bracket.unwrap();
        assert!(lo < 0.5 && 0.5 < hi && hi - lo <= 0.1 + 1e-12);
        let transitions = r.points.windows(2).filter(|w| w[0].status != w[1].status).count();
        assert!(transitions >= 1);

        let below: Vec<f64> = (1..5).map(|k| 0.08 * k as f64).collect();
        let r = sweep_tau(&a, &below, &Vector::from_element(3, 0.2), 400.0).unwrap();
        assert!(r.points.iter().all(|p| p.status == PersistenceStatus::Extinct));
        assert!(r.bracket.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sis_stays_in_unit_box(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = tk::rng(seed);
            let a = tk::random_interactions(&mut rng, n, 1.0, 0.7);
            let sys = AdoptionSystem::new(a, tk::uniform(&mut rng, 0.0, 3.0), tk::uniform(&mut rng, 0.2, 2.0)).unwrap();
            let x0 = tk::random_nonneg_vector(&mut rng, n, 1.0);
            let step = default_sis_step(&sys).unwrap();
            let traj = integrate_sis(&sys, &x0, 30.0, step, 7).unwrap();
            prop_assert!(traj.min_entry() >= -1e-12);
            prop_assert!(traj.max_entry() <= 1.0 + 1e-12);
        }

        #[test]
        fn zero_is_an_equilibrium(seed in any::<u64>(), n in 1usize..6) {
            let mut rng = tk::rng(seed);
            let lambda = InteractionMatrix::new(tk::random_interactions(&mut rng, n, 2.0, 0.8)).unwrap();
            let delta = DecayVector::from_rates(tk::random_nonneg_vector(&mut rng, n, 1.0).add_scalar(0.1)).unwrap();
            let crowd = CrowdingMatrix::new(tk::random_interactions(&mut rng, n, 1.0, 0.5)).unwrap();
            let zero = Vector::zeros(n);
            prop_assert_eq!(saturating_rhs(&zero, &lambda, &delta, &crowd).unwrap(), zero.clone());
            let sys = AdoptionSystem::new(tk::random_interactions(&mut rng, n, 1.0, 0.8), 1.0, 1.0).unwrap();
            prop_assert_eq!(sis_rhs(&zero, &sys).unwrap(), zero);
        }
    }
}
