//! Discrete-time identification: fit `α_{k+1} = Aα_k + Bu_k` from uniformly
//! sampled snapshots, recover the continuous generator, and enforce the
//! Metzler structure.

use crate::matfun::{expm, expm_integral, logm, svd};
use crate::model::{check_nonnegative, Generator};
use crate::{Error, Matrix, Result, Vector};

/// Default identifiability threshold on `σ_min / σ_max` of the regressor.
pub const RANK_TOL: f64 = 1e-10;

/// Uniformly spaced states with the input held over each step.
///
/// `inputs[k]` acts on `[t_k, t_{k+1})`; the last input is carried along for
/// file round trips but never used by a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    dt: f64,
    t0: f64,
    states: Vec<Vector>,
    inputs: Vec<Vector>,
}

impl SnapshotSet {
    pub fn new(dt: f64, states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self> {
        Self::with_start(0.0, dt, states, inputs)
    }

    pub fn with_start(t0: f64, dt: f64, states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidInput(format!("sampling period must be positive and finite, got {dt}")));
        }
        if states.is_empty() {
            return Err(Error::InvalidInput("snapshot set is empty".into()));
        }
        if inputs.len() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "snapshot inputs",
                expected: states.len(),
                found: inputs.len(),
            });
        }
        let n = states[0].len();
        for (s, u) in states.iter().zip(&inputs) {
            for (v, context) in [(s, "snapshot state"), (u, "snapshot input")] {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        context,
                        expected: n,
                        found: v.len(),
                    });
                }
                check_nonnegative(v, context)?;
            }
        }
        Ok(Self { dt, t0, states, inputs })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    /// Sample time of snapshot `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Number of transitions `(α_k, u_k) → α_{k+1}`.
    pub fn transitions(&self) -> usize {
        self.states.len() - 1
    }
}

/// Exact sampling of the continuous system with inputs held per step.
///
/// `u_seq[k]` drives step `k`; it needs at least `steps` entries (one entry
/// when `steps = 0`), and the last entry is repeated for the final snapshot.
pub fn simulate_discrete(m: &Generator, u_seq: &[Vector], alpha0: &Vector, dt: f64, steps: usize) -> Result<SnapshotSet> {
    if u_seq.len() < steps.max(1) {
        return Err(Error::InvalidInput(format!(
            "need at least {} input vectors, got {}",
            steps.max(1),
            u_seq.len()
        )));
    }
    let n = m.n();
    if alpha0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: n,
            found: alpha0.len(),
        });
    }
    let (a, b) = expm_integral(m.matrix(), dt)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(alpha0.clone());
    for u in &u_seq[..steps] {
        let next = &a * states.last().unwrap() + &b * u;
        states.push(next);
    }
    let mut inputs: Vec<Vector> = u_seq[..steps].to_vec();
    inputs.push(u_seq[steps.min(u_seq.len() - 1)].clone());
    SnapshotSet::new(dt, states, inputs)
}

/// Unconstrained least-squares fit of `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFit {
    pub a_hat: Matrix,
    /// Minimum-norm estimate; meaningless when `b_identifiable` is false.
    pub b_hat: Matrix,
    pub b_identifiable: bool,
    /// `sqrt(Σ‖r_k‖² / (K n))`.
    pub residual_rms: f64,
    /// Singular values of the stacked regressor `[α_k; u_k]`.
    pub singular_values: Vec<f64>,
}

pub fn fit_discrete(data: &SnapshotSet) -> Result<DiscreteFit> {
    fit_discrete_with_tol(data, RANK_TOL)
}

/// Least-squares fit with an explicit identifiability threshold.
///
/// Directions of the regressor with `σ ≤ rank_tol·σ_max` are deficient. When
/// they involve only the input block, `A` is still determined and the fit is
/// returned with `b_identifiable = false`; otherwise the fit fails with the
/// deficient directions (in `[α; u]` coordinates).
pub fn fit_discrete_with_tol(data: &SnapshotSet, rank_tol: f64) -> Result<DiscreteFit> {
    let n = data.n();
    let k = data.transitions();
    if k == 0 {
        return Err(Error::Unidentifiable {
            directions: (0..2 * n).map(|i| unit(2 * n, i)).collect(),
        });
    }
    // Rows are transitions: Zᵀ (K × 2n) Θᵀ ≈ Yᵀ (K × n).
    let zt = Matrix::from_fn(k, 2 * n, |r, c| {
        if c < n {
            data.states[r][c]
        } else {
            data.inputs[r][c - n]
        }
    });
    let yt = Matrix::from_fn(k, n, |r, c| data.states[r + 1][c]);
    // Zero rows leave the least-squares problem unchanged and make the SVD
    // return all 2n right singular vectors even when K < 2n.
    let rows = k.max(2 * n);
    let padded = Matrix::from_fn(rows, 2 * n, |r, c| if r < k { zt[(r, c)] } else { 0.0 });
    let padded_y = Matrix::from_fn(rows, n, |r, c| if r < k { yt[(r, c)] } else { 0.0 });
    // Reduce to the small triangular factor first; it has the same singular
    // values and right singular vectors as the tall regressor.
    let qr = padded.qr();
    let padded_y = qr.q().transpose() * &padded_y;
    let svd = svd(&qr.r())?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let (u, v_t) = (&svd.u, &svd.v_t);
    let deficient: Vec<Vector> = v_t
        .row_iter()
        .zip(&sv)
        .filter(|(_, &s)| !(s > rank_tol * smax))
        .map(|(row, _)| row.transpose())
        .collect();
    let state_block_hit = deficient.iter().any(|d| d.rows(0, n).norm() > 1e-8);
    if state_block_hit || smax == 0.0 {
        return Err(Error::Unidentifiable {
            directions: deficient.iter().map(|d| d.iter().copied().collect()).collect(),
        });
    }

    // Truncated pseudo-inverse solve.
    let mut theta_t = Matrix::zeros(2 * n, n);
    for (idx, &s) in sv.iter().enumerate() {
        if s > rank_tol * smax {
            let coeff = u.column(idx).transpose() * &padded_y / s;
            theta_t += v_t.row(idx).transpose() * coeff;
        }
    }
    let theta = theta_t.transpose();
    let a_hat = theta.columns(0, n).into_owned();
    let b_hat = theta.columns(n, n).into_owned();
    let resid = &yt - &zt * &theta_t;
    let residual_rms = (resid.norm_squared() / (k * n) as f64).sqrt();
    Ok(DiscreteFit {
        a_hat,
        b_hat,
        b_identifiable: deficient.is_empty(),
        residual_rms,
        singular_values: sv,
    })
}

fn unit(len: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[i] = 1.0;
    v
}

/// `M = log(A)/dt` on the principal branch.
///
/// A spectrum touching the negative real axis means the sampling period
/// aliases the dynamics; this is reported as [`Error::Aliasing`].
pub fn recover_generator(a_hat: &Matrix, dt: f64) -> Result<Matrix> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("sampling period must be positive, got {dt}")));
    }
    match logm(a_hat) {
        Ok(l) => Ok(l / dt),
        Err(Error::SpectrumOnBranchCut { re, im }) => Err(Error::Aliasing(format!(
            "eigenvalue {re}{im:+}i of the fitted transition lies on the principal-log branch cut; resample with a smaller dt"
        ))),
        Err(e) => Err(e),
    }
}

/// Clips negative off-diagonal entries to zero; returns the projection and
/// the largest clipped magnitude.
pub fn project_metzler(m: &Matrix) -> (Matrix, f64) {
    let mut out = m.clone();
    let mut violation: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && out[(i, j)] < 0.0 {
                violation = violation.max(-out[(i, j)]);
                out[(i, j)] = 0.0;
            }
        }
    }
    (out, violation)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    pub m_hat: Matrix,
    pub residual_rms: f64,
    /// Largest negative off-diagonal clipped from the warm start.
    pub metzler_violation: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Whether the free least-squares fit could identify `B`.
    pub b_identifiable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseOptions {
    pub max_iterations: usize,
    /// Stop once the relative objective change drops below this.
    pub rel_tol: f64,
    pub rank_tol: f64,
}

impl Default for SparseOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            rel_tol: 1e-10,
            rank_tol: RANK_TOL,
        }
    }
}

pub fn fit_sparse(data: &SnapshotSet, l1_weight: f64) -> Result<FitResult> {
    fit_sparse_with(data, l1_weight, &SparseOptions::default())
}

/// Sparse generator fit over Metzler-feasible `M` by proximal gradient.
///
/// Minimizes `(1/2K) Σ‖α_{k+1} − A(M)α_k − B(M)u_k‖² + λ Σ_{i≠j} M_ij` with
/// `M_ij ≥ 0` off the diagonal, where `A(M) = e^{M dt}` and
/// `B(M) = ∫_0^dt e^{Mτ}dτ`. The gradient goes through the Fréchet
/// derivative of the exponential; steps backtrack and are accelerated with a
/// restart whenever the objective increases. The warm start is
/// the projected free fit.
pub fn fit_sparse_with(data: &SnapshotSet, l1_weight: f64, opts: &SparseOptions) -> Result<FitResult> {
    if !(l1_weight >= 0.0) || !l1_weight.is_finite() {
        return Err(Error::InvalidInput(format!("l1 weight must be finite and >= 0, got {l1_weight}")));
    }
    let n = data.n();
    let k = data.transitions();
    let dt = data.dt;
    let free = fit_discrete_with_tol(data, opts.rank_tol)?;
    let (mut m, metzler_violation) = project_metzler(&recover_generator(&free.a_hat, dt)?);

    let x = Matrix::from_fn(n, k, |r, c| data.states[c][r]);
    let u = Matrix::from_fn(n, k, |r, c| data.inputs[c][r]);
    let y = Matrix::from_fn(n, k, |r, c| data.states[c + 1][r]);
    let problem = Problem { x, u, y, n, k, dt };
    let penalty = |m: &Matrix| l1_weight * off_diagonal_sum(m);

    let mut objective = problem.value(&m)? + penalty(&m);
    let data_scale = problem.y.norm_squared() / (2.0 * k as f64);
    let floor = 1e-24 * data_scale.max(f64::MIN_POSITIVE);
    let mut step = 1.0 / (dt * dt * (1.0 + problem.x.norm_squared() / k as f64 + problem.u.norm_squared() / k as f64));
    // Accelerated iterations with a function-value restart.
    let mut y = m.clone();
    let mut momentum: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (y_smooth, grad) = problem.value_and_gradient(&y)?;
        let mut trial_step = (step * 1.5).min(1e12);
        let (next, next_smooth) = loop {
            let cand = prox(&(&y - &grad * trial_step), trial_step * l1_weight);
            let diff = &cand - &y;
            let bound = y_smooth + grad.dot(&diff) + diff.norm_squared() / (2.0 * trial_step);
            let cand_smooth = problem.value(&cand)?;
            if cand_smooth <= bound + 1e-15 * y_smooth.abs() || trial_step < 1e-300 {
                break (cand, cand_smooth);
            }
            trial_step *= 0.5;
        };
        step = trial_step;
        let next_objective = next_smooth + penalty(&next);
        if next_objective > objective && momentum > 1.0 {
            y = m.clone();
            momentum = 1.0;
            continue;
        }
        let change = (objective - next_objective).abs();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &m) * ((momentum - 1.0) / t_next);
        momentum = t_next;
        m = next;
        objective = next_objective;
        if change <= opts.rel_tol * objective.abs().max(floor) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "sparse generator fit",
            iterations,
            residual: objective,
        });
    }
    let (a_hat, b_hat) = expm_integral(&m, dt)?;
    let resid = &problem.y - &a_hat * &problem.x - &b_hat * &problem.u;
    Ok(FitResult {
        residual_rms: (resid.norm_squared() / (k * n) as f64).sqrt(),
        a_hat,
        b_hat,
        m_hat: m,
        metzler_violation,
        objective,
        iterations,
        b_identifiable: free.b_identifiable,
    })
}

fn off_diagonal_sum(m: &Matrix) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                s += m[(i, j)].abs();
            }
        }
    }
    s
}

/// Soft threshold onto the nonnegative orthant for off-diagonals; the
/// diagonal is unpenalized and unconstrained.
fn prox(m: &Matrix, shrink: f64) -> Matrix {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                out[(i, j)] = (m[(i, j)] - shrink).max(0.0);
            }
        }
    }
    out
}

struct Problem {
    x: Matrix,
    u: Matrix,
    y: Matrix,
    n: usize,
    k: usize,
    dt: f64,
}

impl Problem {
    fn residual(&self, m: &Matrix) -> Result<(Matrix, Matrix)> {
        let w = augmented(m, self.dt);
        let e = expm(&w)?.value;
        let ab = e.rows(0, self.n).into_owned();
        let r = &self.y - ab.columns(0, self.n) * &self.x - ab.columns(self.n, self.n) * &self.u;
        Ok((r, w))
    }

    fn value(&self, m: &Matrix) -> Result<f64> {
        let (r, _) = self.residual(m)?;
        Ok(r.norm_squared() / (2.0 * self.k as f64))
    }

    fn value_and_gradient(&self, m: &Matrix) -> Result<(f64, Matrix)> {
        let n = self.n;
        let (r, w) = self.residual(m)?;
        let value = r.norm_squared() / (2.0 * self.k as f64);
        // ∂f/∂[A B] = −(1/K) R [X; U]ᵀ, embedded in the top rows of a 2n×2n
        // direction, pulled back through d exp(W) via L_exp(Wᵀ, ·).
        let mut g = Matrix::zeros(2 * n, 2 * n);
        let scale = -1.0 / self.k as f64;
        g.view_mut((0, 0), (n, n)).copy_from(&(&r * self.x.transpose() * scale));
        g.view_mut((0, n), (n, n)).copy_from(&(&r * self.u.transpose() * scale));
        let l = frechet_expm(&w.transpose(), &g)?;
        Ok((value, l.view((0, 0), (n, n)) * self.dt))
    }
}

/// `[[M dt, I dt], [0, 0]]`, whose exponential is `[[A, B], [0, I]]`.
fn augmented(m: &Matrix, dt: f64) -> Matrix {
    let n = m.nrows();
    let mut w = Matrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
    for i in 0..n {
        w[(i, n + i)] = dt;
    }
    w
}

/// Fréchet derivative `L_exp(X, E)` from the block identity
/// `exp([[X, E], [0, X]]) = [[e^X, L], [0, e^X]]`.
fn frechet_expm(x: &Matrix, e: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(x);
    big.view_mut((n, n), (n, n)).copy_from(x);
    big.view_mut((0, n), (n, n)).copy_from(e);
    Ok(expm(&big)?.value.view((0, n), (n, n)).into_owned())
}
