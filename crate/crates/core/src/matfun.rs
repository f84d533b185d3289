//! Dense matrix functions behind the exact solvers.
//!
//! * [`expm`]: scaling and squaring with diagonal Padé approximants of degree
//!   3, 5, 7, 9 or 13, selected from the 1-norm.
//! * [`expm_integral`]: `e^{M dt}` together with `∫_0^dt e^{Mτ} dτ`, read off
//!   the exponential of the block matrix `[[M, I], [0, 0]] dt`. Works for
//!   singular `M`.
//! * [`logm`]: principal logarithm by inverse scaling and squaring.
//! * [`spectral_radius`]: Perron root and vector of a nonnegative matrix.

use nalgebra::linalg::Schur;

use crate::quadrature::gauss_legendre;
use crate::{Error, Matrix, Result, Vector};

/// Value of a matrix function with a backward-error estimate.
#[derive(Debug, Clone)]
pub struct MatFunResult {
    pub value: Matrix,
    /// Heuristic relative backward-error estimate: unit roundoff scaled by the
    /// number of squarings performed.
    pub est_error: f64,
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm bounds below which the degree-m approximant has backward error
// below the unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

pub(crate) fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn norm_inf(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn ensure_square(m: &Matrix, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Matrix exponential.
pub fn expm(m: &Matrix) -> Result<MatFunResult> {
    ensure_square(m, "expm")?;
    ensure_finite(m)?;
    let n = m.nrows();
    if m.iter().all(|&x| x == 0.0) {
        return Ok(MatFunResult {
            value: Matrix::identity(n, n),
            est_error: 0.0,
        });
    }

    let norm = norm1(m);
    let ident = Matrix::identity(n, n);
    let a2 = m * m;
    let (value, squarings) = if norm <= THETA9 {
        let (u, v) = if norm <= THETA3 {
            pade_low(m, &a2, &ident, &PADE3)
        } else if norm <= THETA5 {
            pade_low(m, &a2, &ident, &PADE5)
        } else if norm <= THETA7 {
            pade_low(m, &a2, &ident, &PADE7)
        } else {
            pade_low(m, &a2, &ident, &PADE9)
        };
        (pade_solve(u, v)?, 0)
    } else {
        let s = (norm / THETA13).log2().ceil().max(0.0) as u32;
        let scale = 0.5f64.powi(s as i32);
        let a = m * scale;
        let a2 = &a2 * (scale * scale);
        let (u, v) = pade13(&a, &a2, &ident);
        let mut r = pade_solve(u, v)?;
        for _ in 0..s {
            r = &r * &r;
        }
        (r, s)
    };

    if !value.iter().all(|x| x.is_finite()) {
        return Err(Error::Overflow { squarings });
    }
    Ok(MatFunResult {
        value,
        est_error: f64::EPSILON * (1.0 + squarings as f64),
    })
}

/// Odd (`u`) and even (`v`) parts of a Padé approximant of degree ≤ 9.
fn pade_low(a: &Matrix, a2: &Matrix, ident: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let mut power = ident.clone();
    let mut odd = ident * b[1];
    let mut even = ident * b[0];
    let mut k = 2;
    while k < b.len() {
        power = &power * a2;
        even += &power * b[k];
        if k + 1 < b.len() {
            odd += &power * b[k + 1];
        }
        k += 2;
    }
    (a * odd, even)
}

fn pade13(a: &Matrix, a2: &Matrix, ident: &Matrix) -> (Matrix, Matrix) {
    let b = &PADE13;
    let a4 = a2 * a2;
    let a6 = a2 * &a4;
    let inner_u = &a6 * b[13] + &a4 * b[11] + a2 * b[9];
    let u = a * (&a6 * &inner_u + &a6 * b[7] + &a4 * b[5] + a2 * b[3] + ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + a2 * b[8];
    let v = &a6 * &inner_v + &a6 * b[6] + &a4 * b[4] + a2 * b[2] + ident * b[0];
    (u, v)
}

fn pade_solve(u: Matrix, v: Matrix) -> Result<Matrix> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Singular("Padé denominator".into()))
}

/// `(e^{m dt}, ∫_0^dt e^{mτ} dτ)` via the exponential of the augmented block
/// matrix `[[m, I], [0, 0]] dt`. `dt = 0` gives `(I, 0)`.
pub fn expm_integral(m: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    ensure_square(m, "expm_integral")?;
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be finite and >= 0, got {dt}")));
    }
    let n = m.nrows();
    if dt == 0.0 {
        return Ok((Matrix::identity(n, n), Matrix::zeros(n, n)));
    }
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
    for i in 0..n {
        block[(i, n + i)] = dt;
    }
    let e = expm(&block)?.value;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
    ))
}

/// Complex eigenvalues `(re, im)` of a real square matrix.
pub(crate) fn eigenvalues(m: &Matrix) -> Result<Vec<(f64, f64)>> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence)?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// Principal matrix logarithm.
///
/// Rejects matrices with an eigenvalue on the closed negative real axis
/// (including zero).
pub fn logm(a: &Matrix) -> Result<Matrix> {
    ensure_square(a, "logm")?;
    ensure_finite(a)?;
    let n = a.nrows();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for (re, im) in eigenvalues(a)? {
        let modulus = re.hypot(im);
        if modulus <= 1e-14 * scale || (re <= 0.0 && im.abs() <= 1e-12 * modulus.max(1e-300)) {
            return Err(Error::SpectrumOnBranchCut { re, im });
        }
    }

    let ident = Matrix::identity(n, n);
    let mut x = a.clone();
    let mut roots = 0;
    while norm1(&(&x - &ident)) > 0.25 {
        if roots >= 64 {
            return Err(Error::NonConvergence {
                what: "logm square-root reduction",
                iterations: roots,
                residual: norm1(&(&x - &ident)),
            });
        }
        x = sqrtm(&x)?;
        roots += 1;
    }

    // log(I + Y) = ∫_0^1 Y (I + tY)^{-1} dt, a diagonal Padé approximant when
    // evaluated with Gauss–Legendre.
    let y = &x - &ident;
    let (nodes, weights) = gauss_legendre(12);
    let mut log = Matrix::zeros(n, n);
    for (t, w) in nodes.iter().zip(&weights) {
        let denom = &ident + &y * *t;
        let term = denom
            .lu()
            .solve(&y)
            .ok_or_else(|| Error::Singular("logm Padé node".into()))?;
        log += term * *w;
    }
    Ok(log * 2f64.powi(roots as i32))
}

/// Principal square root by the product form of the Denman–Beavers iteration.
fn sqrtm(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let ident = Matrix::identity(n, n);
    let mut m = a.clone();
    let mut y = a.clone();
    let mut last = f64::INFINITY;
    for k in 0..100 {
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("square-root iteration".into()))?;
        // Determinant scaling accelerates the early iterations.
        let g = if k < 6 {
            let det = m.determinant().abs();
            if det.is_finite() && det > 0.0 {
                det.powf(-1.0 / (2.0 * n as f64))
            } else {
                1.0
            }
        } else {
            1.0
        };
        y = &y * (&ident * g + &m_inv / g) * 0.5;
        m = (&ident * 2.0 + &m * (g * g) + &m_inv / (g * g)) * 0.25;
        let res = norm1(&(&m - &ident));
        if res <= 1e-15 * n as f64 || (k >= 6 && res >= last && res < 1e-10) {
            return Ok(y);
        }
        last = res;
    }
    Err(Error::NonConvergence {
        what: "matrix square root",
        iterations: 100,
        residual: last,
    })
}

/// Perron root and nonnegative unit-sum eigenvector of a nonnegative matrix.
#[derive(Debug, Clone)]
pub struct PerronPair {
    pub value: f64,
    pub vector: Vector,
    /// `‖a v − λ v‖_∞`.
    pub residual: f64,
}

const POWER_MAX_ITERS: usize = 10_000;
const DENSE_FALLBACK_MAX_N: usize = 64;

/// Dominant eigenvalue of a nonnegative matrix.
///
/// Power iteration from the uniform vector; converged when the eigenvalue
/// estimate changes by less than `1e-12` and the residual is at most
/// `1e-10·‖a‖_∞`. Periodic (e.g. bipartite) matrices never settle under plain
/// power iteration; for those a dense eigensolve is used up to `n = 64`.
pub fn spectral_radius(a: &Matrix) -> Result<PerronPair> {
    ensure_square(a, "spectral_radius")?;
    ensure_finite(a)?;
    if let Some(((i, j), &v)) = a.iter().enumerate().map(|(k, v)| ((k % a.nrows(), k / a.nrows()), v)).find(|(_, v)| **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "spectral_radius requires a nonnegative matrix; entry ({i}, {j}) = {v}"
        )));
    }
    let n = a.nrows();
    let uniform = Vector::from_element(n, 1.0 / n as f64);
    let anorm = norm_inf(a);
    if anorm == 0.0 {
        return Ok(PerronPair {
            value: 0.0,
            vector: uniform,
            residual: 0.0,
        });
    }
    let tol = 1e-10 * anorm;

    let mut v = uniform;
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        let w = a * &v;
        let s = w.sum();
        if s <= 0.0 {
            break;
        }
        let next = s; // v has unit sum
        let change = (next - lambda).abs();
        lambda = next;
        v = w / s;
        if change < 1e-12 {
            residual = (a * &v - &v * lambda).amax();
            if residual <= tol {
                return Ok(PerronPair {
                    value: lambda,
                    vector: v,
                    residual,
                });
            }
        }
    }

    if n > DENSE_FALLBACK_MAX_N {
        return Err(Error::NonConvergence {
            what: "power iteration",
            iterations: POWER_MAX_ITERS,
            residual,
        });
    }
    dense_perron(a, tol)
}

fn dense_perron(a: &Matrix, tol: f64) -> Result<PerronPair> {
    let n = a.nrows();
    let mut lambda = eigenvalues(a)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max);
    // Inverse iteration just above the Perron root. (σI − A)⁻¹ is entrywise
    // nonnegative for σ > ρ, so iterates stay in the cone even when the
    // Perron root is repeated or defective (reducible matrices).
    let sigma = lambda + 1e-8 * norm_inf(a);
    let lu = (Matrix::identity(n, n) * sigma - a).lu();
    let mut v = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..50 {
        let w = lu.solve(&v).ok_or(Error::EigenNonConvergence)?.map(|x| x.max(0.0));
        let sum = w.sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::EigenNonConvergence);
        }
        v = w / sum;
        let next = (a * &v).sum();
        let settled = (next - lambda).abs() <= 1e-13 * norm_inf(a);
        lambda = next;
        if settled && (a * &v - &v * lambda).amax() <= tol {
            break;
        }
    }
    let residual = (a * &v - &v * lambda).amax();
    if residual > tol {
        return Err(Error::NonConvergence {
            what: "dense Perron eigenvector",
            iterations: 1,
            residual,
        });
    }
    Ok(PerronPair {
        value: lambda,
        vector: v,
        residual,
    })
}

/// Thin singular value decomposition `a = u·diag(singular_values)·v_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    /// Decreasing.
    pub singular_values: Vector,
    pub v_t: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD for matrices with at least as many rows as columns.
///
/// Meant for the small systems that arise here; accurate to high relative
/// precision in the singular values. Columns of `u` belonging to zero
/// singular values are zero.
pub fn svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidInput(format!("svd needs rows >= columns, got {m}x{n}")));
    }
    ensure_finite(a)?;
    let mut w = a.clone();
    let mut v = Matrix::identity(n, n);
    let mut converged = false;
    let mut worst = 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        worst = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * scale {
                    continue;
                }
                worst = worst.max(gamma.abs() / scale);
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if worst == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "Jacobi SVD",
            iterations: JACOBI_MAX_SWEEPS,
            residual: worst,
        });
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = Matrix::zeros(m, n);
    let mut v_t = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        }
        v_t.set_row(k, &v.column(j).transpose());
    }
    Ok(Svd {
        u,
        singular_values: Vector::from_iterator(n, order.iter().map(|&j| norms[j])),
        v_t,
    })
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (x, y) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * x - s * y;
        m[(k, q)] = s * x + c * y;
    }
}
