//! Test-only oracles for the `ecodyn` suites.
//!
//! Everything here is deliberately independent of the production code paths:
//! the ODE oracle is an adaptive Dormand–Prince pair, the exponential oracle is
//! a long Taylor series, and the eigenvalue oracle goes through a symmetric
//! dense eigensolver. None of it calls into `ecodyn`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample in `[lo, hi)`.
pub fn uniform(rng: &mut Rng8, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_nonneg_vector(rng: &mut Rng8, n: usize, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, 0.0, hi))
}

/// Random interaction matrix: zero diagonal, off-diagonals in `[0, hi)`,
/// each present with probability `density`.
pub fn random_interactions(rng: &mut Rng8, n: usize, hi: f64, density: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random::<f64>() < density {
            uniform(rng, 0.0, hi)
        } else {
            0.0
        }
    })
}

/// Random Metzler matrix; the diagonal is drawn from `[-diag_hi, -diag_lo)`.
/// No stability guarantee.
pub fn random_metzler(rng: &mut Rng8, n: usize, off_hi: f64, diag_lo: f64, diag_hi: f64) -> DMatrix<f64> {
    let mut m = random_interactions(rng, n, off_hi, 1.0);
    for i in 0..n {
        m[(i, i)] = -uniform(rng, diag_lo, diag_hi);
    }
    m
}

/// Random Hurwitz Metzler matrix: strictly row diagonally dominant with a
/// dominance margin of at least `margin`.
pub fn random_stable_metzler(rng: &mut Rng8, n: usize, off_hi: f64, margin: f64) -> DMatrix<f64> {
    let mut m = random_interactions(rng, n, off_hi, 1.0);
    for i in 0..n {
        let row: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = -(row + margin + uniform(rng, 0.0, margin));
    }
    m
}

/// Matrix exponential by scaling, a fixed number of Taylor terms, and squaring.
pub fn taylor_expm(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Largest eigenvalue of a symmetric matrix via a dense symmetric eigensolver.
pub fn symmetric_lambda_max(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.max()
}

/// Adaptive Dormand–Prince 5(4) integration of `x' = f(t, x)` reporting the
/// state at every time in `t_out` (which must be non-decreasing and start at
/// or after `t0`).
pub fn dopri45<F>(f: F, t0: f64, x0: &DVector<f64>, t_out: &[f64], rtol: f64, atol: f64) -> Vec<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut x = x0.clone();
    let mut h: f64 = 1e-3;
    for &target in t_out {
        assert!(target >= t, "output times must be non-decreasing");
        while t < target {
            let mut step = h.min(target - t);
            let last = step >= target - t;
            let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
            for s in 0..7 {
                let mut xs = x.clone();
                for (j, kj) in k.iter().enumerate() {
                    xs.axpy(step * A[s][j], kj, 1.0);
                }
                k.push(f(t + C[s] * step, &xs));
            }
            let mut x5 = x.clone();
            let mut x4 = x.clone();
            for s in 0..7 {
                x5.axpy(step * B5[s], &k[s], 1.0);
                x4.axpy(step * B4[s], &k[s], 1.0);
            }
            let err = (0..x.len())
                .map(|i| {
                    let sc = atol + rtol * x[i].abs().max(x5[i].abs());
                    ((x5[i] - x4[i]) / sc).powi(2)
                })
                .sum::<f64>();
            let err = (err / x.len() as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                x = x5;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            step *= factor;
            h = step.max(1e-12);
        }
        out.push(x.clone());
    }
    out
}

/// Integrate the linear system `x' = m(t) x + u(t)` with the Dormand–Prince oracle.
pub fn linear_ode<MF, UF>(m: MF, u: UF, t0: f64, x0: &DVector<f64>, t_out: &[f64]) -> Vec<DVector<f64>>
where
    MF: Fn(f64) -> DMatrix<f64>,
    UF: Fn(f64) -> DVector<f64>,
{
    dopri45(|t, x| m(t) * x + u(t), t0, x0, t_out, 1e-13, 1e-15)
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// `max|a - b| / max(max|b|, floor)`.
pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_oracle_matches_scalar_exponential() {
        let m = DMatrix::from_element(1, 1, -3.7);
        let e = taylor_expm(&m, 40);
        assert!((e[(0, 0)] - (-3.7f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn dopri_matches_scalar_decay() {
        let x0 = DVector::from_element(1, 2.0);
        let out = dopri45(|_, x| -x, 0.0, &x0, &[1.0, 3.0], 1e-12, 1e-14);
        assert!((out[0][0] - 2.0 * (-1.0f64).exp()).abs() < 1e-11);
        assert!((out[1][0] - 2.0 * (-3.0f64).exp()).abs() < 1e-11);
    }
}
