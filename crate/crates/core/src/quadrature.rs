//! Quadrature rules shared by the solvers and analyses.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
///
/// Nodes are returned in increasing order and the weights sum to one.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1, "at least one quadrature point required");
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1].
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Three-point Gauss–Legendre collocation data on `[0, 1]`.
///
/// `nodes` and `weights` are the usual rule; `partial[q][r]` integrates the
/// `r`-th Lagrange basis polynomial through the nodes from `0` to `nodes[q]`,
/// which gives cumulative (inner) integrals at the nodes themselves.
pub struct Gauss3 {
    pub nodes: [f64; 3],
    pub weights: [f64; 3],
    pub partial: [[f64; 3]; 3],
}

pub fn gauss3() -> Gauss3 {
    let s = 15f64.sqrt();
    Gauss3 {
        nodes: [0.5 - s / 10.0, 0.5, 0.5 + s / 10.0],
        weights: [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
        partial: [
            [5.0 / 36.0, 2.0 / 9.0 - s / 15.0, 5.0 / 36.0 - s / 30.0],
            [5.0 / 36.0 + s / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s / 24.0],
            [5.0 / 36.0 + s / 30.0, 2.0 / 9.0 + s / 15.0, 5.0 / 36.0],
        ],
    }
}

/// Composite trapezoid rule over an arbitrary increasing grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Trapezoid integral plus a Richardson self-estimate of its error.
///
/// The estimate compares the fine rule with the rule on every other grid
/// point, `|T_h − T_2h| / 3`. With an odd number of intervals the last fine
/// interval is kept as-is in the coarse rule.
pub fn trapezoid_with_estimate(times: &[f64], values: &[f64]) -> (f64, f64) {
    let fine = trapezoid(times, values);
    if times.len() < 3 {
        return (fine, 0.0);
    }
    let mut ct = Vec::with_capacity(times.len() / 2 + 2);
    let mut cv = Vec::with_capacity(times.len() / 2 + 2);
    for k in (0..times.len()).step_by(2) {
        ct.push(times[k]);
        cv.push(values[k]);
    }
    let last = times.len() - 1;
    if last % 2 == 1 {
        ct.push(times[last]);
        cv.push(values[last]);
    }
    let coarse = trapezoid(&ct, &cv);
    (fine, (fine - coarse).abs() / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn gauss3_matches_generic_rule() {
        let g = gauss3();
        let (x, w) = gauss_legendre(3);
        for q in 0..3 {
            assert!((g.nodes[q] - x[q]).abs() < 1e-15);
            assert!((g.weights[q] - w[q]).abs() < 1e-15);
            // Partial integrals of the basis reproduce ∫_0^c t^k dt for k ≤ 2.
            for k in 0..3 {
                let approx: f64 = (0..3).map(|r| g.partial[q][r] * g.nodes[r].powi(k)).sum();
                let exact = g.nodes[q].powi(k + 1) / (k as f64 + 1.0);
                assert!((approx - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trapezoid_estimate_tracks_error() {
        let t: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let v: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let (val, est) = trapezoid_with_estimate(&t, &v);
        let exact = 1.0 - (-2.0f64).exp();
        let err = (val - exact).abs();
        assert!(est > 0.5 * err && est < 2.0 * err, "est {est} err {err}");
    }
}
