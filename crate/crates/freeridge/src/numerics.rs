//! Shared numerical kernels: bracketed bisection, adaptive Simpson
//! quadrature, and Gauss-Hermite nodes for Gaussian averages.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Bisect `f` on `[lo, hi]` assuming `f(lo)` and `f(hi)` have opposite signs.
/// Stops when the bracket width falls below `tol(mid)` and returns the
/// midpoint. `f` must be continuous on the bracket.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, tol: impl Fn(f64) -> f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSolution(format!(
            "bisection bracket [{lo:e}, {hi:e}] does not change sign"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= tol(mid) {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A handful of Newton steps to polish a bisection root; falls back to the
/// input if Newton wanders outside `(lo, hi)` or the derivative degenerates.
pub fn newton_polish<F, G>(f: F, df: G, mut x: f64, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let x0 = x;
    for _ in 0..8 {
        let d = df(x);
        if !d.is_finite() || d == 0.0 {
            return x;
        }
        let step = f(x) / d;
        let next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            return x;
        }
        x = next;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    if f(x).abs() <= f(x0).abs() {
        x
    } else {
        x0
    }
}

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

const GH_NODES: usize = 64;

/// Gauss-Hermite nodes/weights (weight e^{-x²}), computed once by
/// Golub-Welsch from the Jacobi matrix of the Hermite recurrence.
fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = GH_NODES;
        let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let v0 = eig.eigenvectors[(0, i)];
                (node, std::f64::consts::PI.sqrt() * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        (
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    })
}

/// E[f(Z)] for Z ~ N(0,1) by 64-node Gauss-Hermite quadrature.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite();
    let norm = 1.0 / std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * f(std::f64::consts::SQRT_2 * x))
        .sum::<f64>()
        * norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, |_| 1e-14).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn simpson_matches_analytic_integral() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn gauss_hermite_moments() {
        assert!((gaussian_expectation(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(gaussian_expectation(|x| x).abs() < 1e-13);
        assert!((gaussian_expectation(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((gaussian_expectation(|x| x.powi(4)) - 3.0).abs() < 1e-11);
    }
}
