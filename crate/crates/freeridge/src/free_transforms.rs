//! Closed-form S-transforms of the named random-matrix ensembles, the
//! ζ-inverse of the t-transform, and spectral-density recovery from the
//! Stieltjes transform.
//!
//! Conventions: t_A(z) = tr[A(zI−A)⁻¹], ζ_A its functional inverse,
//! S_A(t) = (1+t)/(t·ζ_A(t)), and on the negative real axis
//! t_A(−κ) = −df1(κ). Densities come from ρ(λ) = (1/π)·Im g(λ−iε) with
//! g = (1+t)/z.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleTransform {
    /// Sample covariance (1/P)XᵀX of white features, q = D/P.
    WhiteWishart { q: f64 },
    /// Gram matrix (1/P)XXᵀ of white features, q = N/P (trace q, not 1).
    WishartGram { q: f64 },
    /// Projection onto a uniformly random N-dim subspace, q = N/D ≤ 1.
    SquareProjection { q: f64 },
    /// ΠᵀAΠ for a rectangular projection Π with aspect q = N/D.
    RectangularProjectionOf { inner: Box<ProjectionInner>, q: f64 },
    /// White Wishart plus a deterministic shift J·I, J ≥ 0.
    ShiftedWishart { q: f64, j: f64 },
    /// Gram chain X₁…X_L X_Lᵀ…X₁ᵀ / D^L of white layers, D×D (mean
    /// eigenvalue Π N_ℓ / D^L).
    DeepWhiteGram { widths: Vec<usize>, d: usize },
    /// Same chain with per-layer population covariances Σ_ℓ.
    DeepStructuredGram { spectra: Vec<Spectrum>, widths: Vec<usize>, d: usize },
    /// Sample covariance with population covariance Σ, q = D/P.
    StructuredWishart { population: Spectrum, q: f64 },
    /// White features, correlated samples with kernel K, q = D/P.
    CorrelatedSamples { k: Spectrum, q: f64 },
    /// Structured features and correlated samples, q = D/P.
    FullyStructured { sigma: Spectrum, k: Spectrum, q: f64 },
    /// Symmetric Wigner matrix with variance σ²/N per entry.
    Wigner { sigma2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionInner {
    Ensemble(EnsembleTransform),
    Spectrum(Spectrum),
}

/// z < 0 with t_spectrum(z) = t, i.e. −κ where df1(κ) = −t.
pub fn zeta_inverse(spectrum: &Spectrum, t: f64) -> Result<f64> {
    if !(t < 0.0) {
        return Err(Error::Domain(format!(
            "zeta_inverse needs t < 0 (range of the t-transform on the negative axis), got {t}"
        )));
    }
    if spectrum.is_finite() && t <= -1.0 {
        return Err(Error::NoSolution(format!(
            "|t| = {} is at or beyond the spectrum's rank fraction 1",
            -t
        )));
    }
    Ok(-spectrum.kappa_at_df1(-t)?)
}

/// R-transform of a Wigner matrix: its only nonzero free cumulant.
pub fn wigner_r(sigma2: f64, g: f64) -> f64 {
    sigma2 * g
}

/// S-transform of a bare spectrum at real t < 0 (or the t→0 limit 1/⟨η⟩).
pub fn spectrum_s(spectrum: &Spectrum, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0 / spectrum.mean_eigenvalue()?);
    }
    let z = zeta_inverse(spectrum, t)?;
    Ok((1.0 + t) / (t * z))
}

fn pole_check(den: f64, pole_at: f64, context: &str) -> Result<f64> {
    if den.abs() <= 1e-14 * (1.0 + pole_at.abs()) {
        Err(Error::Pole { location: pole_at, context: context.to_string() })
    } else {
        Ok(den)
    }
}

impl EnsembleTransform {
    fn validate(&self) -> Result<()> {
        let positive = |q: f64, what: &str| {
            if q > 0.0 && q.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {q}")))
            }
        };
        match self {
            EnsembleTransform::WhiteWishart { q }
            | EnsembleTransform::WishartGram { q }
            | EnsembleTransform::StructuredWishart { q, .. }
            | EnsembleTransform::CorrelatedSamples { q, .. }
            | EnsembleTransform::FullyStructured { q, .. } => positive(*q, "aspect ratio"),
            EnsembleTransform::SquareProjection { q } => {
                positive(*q, "aspect ratio")?;
                if *q > 1.0 {
                    return Err(Error::Config("projection aspect ratio must be <= 1".into()));
                }
                Ok(())
            }
            EnsembleTransform::RectangularProjectionOf { q, .. } => positive(*q, "aspect ratio"),
            EnsembleTransform::ShiftedWishart { q, j } => {
                positive(*q, "aspect ratio")?;
                if *j < 0.0 {
                    return Err(Error::Domain(
                        "shifted Wishart supports only nonnegative shifts".into(),
                    ));
                }
                Ok(())
            }
            EnsembleTransform::DeepWhiteGram { widths, d } => {
                if widths.is_empty() || widths.contains(&0) || *d == 0 {
                    return Err(Error::Config("layer widths and D must be positive".into()));
                }
                Ok(())
            }
            EnsembleTransform::DeepStructuredGram { spectra, widths, d } => {
                if widths.is_empty() || widths.contains(&0) || *d == 0 {
                    return Err(Error::Config("layer widths and D must be positive".into()));
                }
                if spectra.len() != widths.len() {
                    return Err(Error::Config(
                        "layer spectra and widths lists must have equal length".into(),
                    ));
                }
                for (s, &w) in spectra.iter().zip(widths) {
                    if s.dim() != Some(w) {
                        return Err(Error::Config(format!(
                            "layer spectrum dimension {:?} does not match width {w}",
                            s.dim()
                        )));
                    }
                }
                Ok(())
            }
            EnsembleTransform::Wigner { sigma2 } => positive(*sigma2, "Wigner variance"),
        }
    }

    /// Closed-form S-transform at real t.
    pub fn s_transform(&self, t: f64) -> Result<f64> {
        self.validate()?;
        match self {
            EnsembleTransform::WhiteWishart { q } => {
                Ok(1.0 / pole_check(1.0 + q * t, -1.0 / q, "white Wishart")?)
            }
            EnsembleTransform::WishartGram { q } => {
                Ok(1.0 / pole_check(q + t, -q, "Wishart gram")?)
            }
            EnsembleTransform::SquareProjection { q } => {
                Ok((t + 1.0) / pole_check(t + q, -q, "square projection")?)
            }
            EnsembleTransform::RectangularProjectionOf { inner, q } => match inner.as_ref() {
                ProjectionInner::Ensemble(e) => e.s_transform(q * t),
                ProjectionInner::Spectrum(s) => spectrum_s(s, q * t),
            },
            EnsembleTransform::ShiftedWishart { q, j } => {
                let b = 1.0 + j + q * t;
                let disc = b * b - 4.0 * j * q * t;
                if disc < 0.0 {
                    return Err(Error::Domain(format!(
                        "shifted-Wishart discriminant negative at t = {t}"
                    )));
                }
                let den = pole_check(b + disc.sqrt(), -(1.0 + j) / q, "shifted Wishart")?;
                Ok(2.0 / den)
            }
            EnsembleTransform::DeepWhiteGram { widths, d } => {
                let mut s = 1.0;
                for &n in widths {
                    let ratio = n as f64 / *d as f64;
                    s /= pole_check(ratio + t, -ratio, "deep white gram layer")?;
                }
                Ok(s)
            }
            EnsembleTransform::DeepStructuredGram { spectra, widths, d } => {
                // 1/S = Π_ℓ t·ζ_{Σ_ℓ}(t_ℓ) with the per-layer argument
                // t_ℓ = (D/N_ℓ)·t
                let mut inv = 1.0;
                for (sigma, &n) in spectra.iter().zip(widths) {
                    let tl = (*d as f64 / n as f64) * t;
                    if tl <= -1.0 {
                        return Err(Error::Pole {
                            location: -(n as f64) / *d as f64,
                            context: "deep structured gram layer".into(),
                        });
                    }
                    inv *= t * zeta_inverse(sigma, tl)?;
                }
                Ok(1.0 / inv)
            }
            EnsembleTransform::StructuredWishart { population, q } => {
                let w = pole_check(1.0 + q * t, -1.0 / q, "structured Wishart")?;
                Ok(spectrum_s(population, t)? / w)
            }
            EnsembleTransform::CorrelatedSamples { k, q } => {
                let w = pole_check(1.0 + q * t, -1.0 / q, "correlated samples")?;
                Ok(spectrum_s(k, q * t)? / w)
            }
            EnsembleTransform::FullyStructured { sigma, k, q } => {
                let w = pole_check(1.0 + q * t, -1.0 / q, "fully structured Wishart")?;
                Ok(spectrum_s(sigma, t)? * spectrum_s(k, q * t)? / w)
            }
            EnsembleTransform::Wigner { .. } => Err(Error::Domain(
                "Wigner matrices are traceless; their S-transform is undefined".into(),
            )),
        }
    }

    /// S-transform continued to complex t (for density recovery).
    fn s_complex(&self, t: Complex64) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        match self {
            EnsembleTransform::WhiteWishart { q } => Ok(one / (one + q * t)),
            EnsembleTransform::WishartGram { q } => Ok(one / (q + t)),
            EnsembleTransform::SquareProjection { q } => Ok((t + one) / (t + q)),
            EnsembleTransform::RectangularProjectionOf { inner, q } => match inner.as_ref() {
                ProjectionInner::Ensemble(e) => e.s_complex(q * t),
                ProjectionInner::Spectrum(s) => spectrum_s_complex(s, q * t),
            },
            EnsembleTransform::ShiftedWishart { q, j } => {
                let b = one + j + q * t;
                let mut root = (b * b - 4.0 * j * q * t).sqrt();
                // keep the branch that reduces to the white Wishart at J = 0
                if (root - b).norm() < (-root - b).norm() {
                    // principal branch already matches +b
                } else {
                    root = -root;
                }
                Ok(2.0 * one / (b + root))
            }
            EnsembleTransform::DeepWhiteGram { widths, d } => {
                let mut s = one;
                for &n in widths {
                    s /= t + n as f64 / *d as f64;
                }
                Ok(s)
            }
            EnsembleTransform::DeepStructuredGram { spectra, widths, d } => {
                let mut inv = one;
                for (sigma, &n) in spectra.iter().zip(widths) {
                    let tl = (*d as f64 / n as f64) * t;
                    inv *= t * zeta_complex(sigma, tl)?;
                }
                Ok(one / inv)
            }
            EnsembleTransform::StructuredWishart { population, q } => {
                Ok(spectrum_s_complex(population, t)? / (one + q * t))
            }
            EnsembleTransform::CorrelatedSamples { k, q } => {
                Ok(spectrum_s_complex(k, q * t)? / (one + q * t))
            }
            EnsembleTransform::FullyStructured { sigma, k, q } => {
                Ok(spectrum_s_complex(sigma, t)? * spectrum_s_complex(k, q * t)? / (one + q * t))
            }
            EnsembleTransform::Wigner { .. } => Err(Error::Domain(
                "Wigner density is closed-form; no S-transform continuation".into(),
            )),
        }
    }

    /// Point masses (location, weight) implied by rank counting.
    fn point_masses(&self) -> Vec<(f64, f64)> {
        match self {
            EnsembleTransform::WhiteWishart { q }
            | EnsembleTransform::StructuredWishart { q, .. }
            | EnsembleTransform::CorrelatedSamples { q, .. }
            | EnsembleTransform::FullyStructured { q, .. } => {
                if *q > 1.0 {
                    vec![(0.0, (q - 1.0) / q)]
                } else {
                    vec![]
                }
            }
            EnsembleTransform::WishartGram { q } => {
                if *q < 1.0 {
                    vec![(0.0, 1.0 - q)]
                } else {
                    vec![]
                }
            }
            EnsembleTransform::ShiftedWishart { q, j } => {
                if *q > 1.0 {
                    vec![(*j, (q - 1.0) / q)]
                } else {
                    vec![]
                }
            }
            EnsembleTransform::SquareProjection { q } => {
                vec![(1.0, *q), (0.0, 1.0 - q)]
            }
            EnsembleTransform::DeepWhiteGram { widths, d }
            | EnsembleTransform::DeepStructuredGram { widths, d, .. } => {
                let rank = widths.iter().copied().min().unwrap_or(*d).min(*d);
                if rank < *d {
                    vec![(0.0, (*d - rank) as f64 / *d as f64)]
                } else {
                    vec![]
                }
            }
            _ => vec![],
        }
    }
}

fn spectrum_s_complex(spectrum: &Spectrum, t: Complex64) -> Result<Complex64> {
    let z = zeta_complex(spectrum, t)?;
    Ok((1.0 + t) / (t * z))
}

/// Complex ζ: solve t_Σ(z) = t by Newton on the finite-spectrum t-transform.
fn zeta_complex(spectrum: &Spectrum, t: Complex64) -> Result<Complex64> {
    let levels = spectrum
        .levels()
        .map_err(|_| Error::Domain("density recovery needs a finite spectrum".into()))?;
    let d: f64 = levels.iter().map(|l| l.1 as f64).sum();
    let t_of = |z: Complex64| {
        levels
            .iter()
            .map(|&(e, m)| m as f64 * e / (z - e))
            .sum::<Complex64>()
            / d
    };
    let tp_of = |z: Complex64| {
        -levels
            .iter()
            .map(|&(e, m)| m as f64 * e / ((z - e) * (z - e)))
            .sum::<Complex64>()
            / d
    };
    let mean = levels.iter().map(|&(e, m)| e * m as f64).sum::<f64>() / d;
    // isotropic-like initial guess ζ ≈ ⟨η⟩(1+t)/t, then Newton
    for attempt in 0..4 {
        let mut z = mean * (1.0 + t) / t * (1.0 + 0.5 * attempt as f64);
        if z.im == 0.0 {
            z += Complex64::new(0.0, 1e-12 * mean);
        }
        let mut ok = false;
        for _ in 0..200 {
            let f = t_of(z) - t;
            let fp = tp_of(z);
            if fp.norm() == 0.0 {
                break;
            }
            let step = f / fp;
            z -= step;
            if step.norm() <= 1e-14 * (1.0 + z.norm()) {
                ok = true;
                break;
            }
        }
        if ok && (t_of(z) - t).norm() <= 1e-10 * (1.0 + t.norm()) {
            return Ok(z);
        }
    }
    Err(Error::Convergence {
        context: "complex zeta inversion".into(),
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: Vec<f64>,
    pub bulk: Vec<f64>,
    /// (location, weight) pairs; never rasterized into the grid.
    pub point_masses: Vec<(f64, f64)>,
    pub converged: Vec<bool>,
}

const FP_DAMPING: f64 = 0.5;
const FP_TOL: f64 = 1e-12;
const FP_MAX_ITER: usize = 100_000;

/// ρ(λ) over a grid via the inverse Stieltjes transform at z = λ − iε.
/// Wigner and white Wishart use their closed-form densities.
pub fn spectral_density(
    ensemble: &EnsembleTransform,
    lambda_grid: &[f64],
    epsilon: f64,
) -> Result<Density> {
    ensemble.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    match ensemble {
        EnsembleTransform::Wigner { sigma2 } => {
            let bulk = lambda_grid
                .iter()
                .map(|&l| {
                    let disc = 4.0 * sigma2 - l * l;
                    if disc > 0.0 {
                        disc.sqrt() / (2.0 * std::f64::consts::PI * sigma2)
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(Density {
                grid: lambda_grid.to_vec(),
                bulk,
                point_masses: vec![],
                converged: vec![true; lambda_grid.len()],
            })
        }
        EnsembleTransform::WhiteWishart { q } => {
            let lp = (1.0 + q.sqrt()).powi(2);
            let lm = (1.0 - q.sqrt()).powi(2);
            let bulk = lambda_grid
                .iter()
                .map(|&l| {
                    if l > lm && l < lp && l > 0.0 {
                        ((lp - l) * (l - lm)).sqrt() / (2.0 * std::f64::consts::PI * q * l)
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(Density {
                grid: lambda_grid.to_vec(),
                bulk,
                point_masses: ensemble.point_masses(),
                converged: vec![true; lambda_grid.len()],
            })
        }
        _ => density_fixed_point(ensemble, lambda_grid, epsilon),
    }
}

fn density_fixed_point(
    ensemble: &EnsembleTransform,
    lambda_grid: &[f64],
    epsilon: f64,
) -> Result<Density> {
    // Spectrum-carrying ensembles use the forward z̃ self-consistency
    // (single-valued, no ζ branch ambiguity); the rest go through the
    // S-transform fixed point.
    match ensemble {
        EnsembleTransform::StructuredWishart { population, q } => {
            structured_density(ensemble, population, *q, false, lambda_grid, epsilon)
        }
        EnsembleTransform::CorrelatedSamples { k, q } => {
            structured_density(ensemble, k, *q, true, lambda_grid, epsilon)
        }
        _ => generic_density(ensemble, lambda_grid, epsilon),
    }
}

fn generic_density(
    ensemble: &EnsembleTransform,
    lambda_grid: &[f64],
    epsilon: f64,
) -> Result<Density> {
    let mut bulk = Vec::with_capacity(lambda_grid.len());
    let mut converged = Vec::with_capacity(lambda_grid.len());
    let mut t_prev: Option<Complex64> = None;
    for &lambda in lambda_grid {
        let z = Complex64::new(lambda, -epsilon);
        let t0 = t_prev.unwrap_or(Complex64::new(-0.5, 0.3));
        let mut best = iterate_t(ensemble, z, t0)?;
        if best.1 > FP_TOL * (1.0 + best.0.norm()) {
            // walk in from a strongly contracting imaginary offset
            let mut eps_c = (1.0 + lambda.abs()).max(16.0 * epsilon);
            let mut t_c = Complex64::new(-0.5, 0.3);
            while eps_c > epsilon {
                let zc = Complex64::new(lambda, -eps_c);
                t_c = iterate_t(ensemble, zc, t_c)?.0;
                eps_c *= 0.5;
            }
            best = iterate_t(ensemble, z, t_c)?;
        }
        let (t, residual) = best;
        let g = (1.0 + t) / z;
        let ok = residual <= FP_TOL * 10.0 && g.im > -1e-8;
        if residual > 1e-6 {
            return Err(Error::Convergence {
                context: format!("density fixed point at lambda = {lambda}"),
                residual,
            });
        }
        bulk.push((g.im / std::f64::consts::PI).max(0.0));
        converged.push(ok);
        t_prev = Some(t);
    }
    Ok(Density {
        grid: lambda_grid.to_vec(),
        bulk,
        point_masses: ensemble.point_masses(),
        converged,
    })
}

/// Density of a structured Wishart (or correlated-samples kernel) from the
/// subordination equation: z̃·(1 + q·t_Σ(z̃)) = z with t(z) = t_Σ(z̃), or
/// z̃·(q + t_K(z̃)) = z with t(z) = t_K(z̃)/q in the gram convention.
fn structured_density(
    ensemble: &EnsembleTransform,
    spectrum: &Spectrum,
    q: f64,
    gram: bool,
    lambda_grid: &[f64],
    epsilon: f64,
) -> Result<Density> {
    let levels = spectrum
        .levels()
        .map_err(|_| Error::Domain("density recovery needs a finite spectrum".into()))?;
    let d: f64 = levels.iter().map(|l| l.1 as f64).sum();
    let t_of = |z: Complex64| {
        levels.iter().map(|&(e, m)| m as f64 * e / (z - e)).sum::<Complex64>() / d
    };
    let tp_of = |z: Complex64| {
        -levels.iter().map(|&(e, m)| m as f64 * e / ((z - e) * (z - e))).sum::<Complex64>() / d
    };
    let h = |zt: Complex64, z: Complex64| {
        if gram {
            zt * (q + t_of(zt)) - z
        } else {
            zt * (1.0 + q * t_of(zt)) - z
        }
    };
    let hp = |zt: Complex64| {
        if gram {
            q + t_of(zt) + zt * tp_of(zt)
        } else {
            1.0 + q * (t_of(zt) + zt * tp_of(zt))
        }
    };
    let newton = |mut zt: Complex64, z: Complex64| -> (Complex64, f64) {
        let mut res = f64::INFINITY;
        for _ in 0..500 {
            let f = h(zt, z);
            res = f.norm();
            let dp = hp(zt);
            if dp.norm() == 0.0 {
                break;
            }
            let next = zt - f / dp;
            // the physical sheet keeps Im z̃ on the same side as Im z
            zt = if next.im.signum() == z.im.signum() || next.im == 0.0 {
                next
            } else {
                Complex64::new(next.re, z.im.signum() * next.im.abs() * 0.1)
            };
            if res <= 1e-13 * (1.0 + z.norm()) {
                break;
            }
        }
        (zt, res)
    };
    let mut bulk = Vec::with_capacity(lambda_grid.len());
    let mut converged = Vec::with_capacity(lambda_grid.len());
    let mut zt_prev: Option<Complex64> = None;
    for &lambda in lambda_grid {
        let z = Complex64::new(lambda, -epsilon);
        let (mut zt, mut res) = newton(zt_prev.unwrap_or(z), z);
        if res > 1e-10 * (1.0 + z.norm()) {
            // ε-continuation restart
            let mut eps_c = (1.0 + lambda.abs()).max(16.0 * epsilon);
            let mut guess = Complex64::new(lambda, -eps_c);
            while eps_c > epsilon {
                let zc = Complex64::new(lambda, -eps_c);
                guess = newton(guess, zc).0;
                eps_c *= 0.5;
            }
            (zt, res) = newton(guess, z);
        }
        if res > 1e-6 {
            return Err(Error::Convergence {
                context: format!("subordination equation at lambda = {lambda}"),
                residual: res,
            });
        }
        let t = if gram { t_of(zt) / q } else { t_of(zt) };
        let g = (1.0 + t) / z;
        bulk.push((g.im / std::f64::consts::PI).max(0.0));
        converged.push(res <= 1e-10 * (1.0 + z.norm()) && g.im > -1e-8);
        zt_prev = Some(zt);
    }
    Ok(Density {
        grid: lambda_grid.to_vec(),
        bulk,
        point_masses: ensemble.point_masses(),
        converged,
    })
}

/// Damped fixed point on t = 1/(z·S(t) − 1), the self-consistent equation
/// equivalent to z = ζ(t). Escalates the damping when the map is not a
/// contraction and finishes with a complex Newton polish; only roots on the
/// physical branch (Im g ≥ 0 for Im z < 0) are accepted.
fn iterate_t(
    ensemble: &EnsembleTransform,
    z: Complex64,
    t0: Complex64,
) -> Result<(Complex64, f64)> {
    let map = |t: Complex64| -> Result<Complex64> {
        Ok(1.0 / (z * ensemble.s_complex(t)? - 1.0))
    };
    let physical = |t: Complex64| ((1.0 + t) / z).im >= -1e-9;
    let mut t = t0;
    let mut residual = f64::INFINITY;
    let mut spent = 0usize;
    for &damp in &[FP_DAMPING, 0.9, 0.98] {
        let budget = ((FP_MAX_ITER - spent) / 3).max(1000);
        for _ in 0..budget {
            spent += 1;
            let next = match map(t) {
                Ok(v) => v,
                Err(_) => break,
            };
            residual = (next - t).norm();
            t = damp * t + (1.0 - damp) * next;
            if residual <= FP_TOL * (1.0 + t.norm()) {
                break;
            }
        }
        if residual <= FP_TOL * (1.0 + t.norm()) && physical(t) {
            return Ok((t, residual));
        }
        if let Some(tn) = newton_t(&map, t) {
            let r = (map(tn).unwrap_or(t) - tn).norm();
            if r <= FP_TOL * (1.0 + tn.norm()) && physical(tn) {
                return Ok((tn, r));
            }
        }
    }
    Ok((t, residual))
}

/// Complex Newton on F(t) = map(t) − t with a finite-difference derivative.
fn newton_t(
    map: &dyn Fn(Complex64) -> Result<Complex64>,
    mut t: Complex64,
) -> Option<Complex64> {
    for _ in 0..60 {
        let f = map(t).ok()? - t;
        let h = 1e-7 * (1.0 + t.norm());
        let fh = map(t + h).ok()? - (t + h);
        let deriv = (fh - f) / h;
        if deriv.norm() == 0.0 {
            return None;
        }
        let step = f / deriv;
        t -= step;
        if step.norm() <= 1e-14 * (1.0 + t.norm()) {
            return Some(t);
        }
    }
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Spectrum;
    use approx::assert_relative_eq;

    #[test]
    fn white_wishart_s_oracle() {
        let w = EnsembleTransform::WhiteWishart { q: 0.5 };
        assert_relative_eq!(w.s_transform(-0.5).unwrap(), 4.0 / 3.0);
        assert_relative_eq!(w.s_transform(0.0).unwrap(), 1.0);
        assert!(matches!(w.s_transform(-2.0), Err(Error::Pole { .. })));
    }

    #[test]
    fn shifted_wishart_reduces_at_zero_shift() {
        let w = EnsembleTransform::WhiteWishart { q: 0.7 };
        let s = EnsembleTransform::ShiftedWishart { q: 0.7, j: 0.0 };
        for &t in &[-0.9, -0.5, -0.1, 0.3] {
            assert_relative_eq!(
                s.s_transform(t).unwrap(),
                w.s_transform(t).unwrap(),
                max_relative = 1e-12
            );
        }
        assert!(EnsembleTransform::ShiftedWishart { q: 0.7, j: -0.5 }
            .s_transform(-0.1)
            .is_err());
    }

    #[test]
    fn zeta_inverse_oracles() {
        let iso = Spectrum::isotropic(10).unwrap();
        assert_relative_eq!(zeta_inverse(&iso, -0.5).unwrap(), -1.0, max_relative = 1e-11);
        assert_relative_eq!(zeta_inverse(&iso, -0.25).unwrap(), -3.0, max_relative = 1e-11);
        let two = Spectrum::discrete(vec![2.0, 0.5], vec![1, 1]).unwrap();
        assert_relative_eq!(zeta_inverse(&two, -0.5).unwrap(), -1.0, max_relative = 1e-11);
        assert!(zeta_inverse(&two, -1.0).is_err());
        assert!(zeta_inverse(&two, 0.5).is_err());
    }

    #[test]
    fn s_multiplicativity_structured_wishart() {
        let pop = Spectrum::discrete(vec![3.0, 1.0, 0.2], vec![2, 3, 5]).unwrap();
        let sw = EnsembleTransform::StructuredWishart { population: pop.clone(), q: 0.4 };
        let ww = EnsembleTransform::WhiteWishart { q: 0.4 };
        for &t in &[-0.9, -0.6, -0.3, -0.05] {
            let lhs = sw.s_transform(t).unwrap();
            let rhs = ww.s_transform(t).unwrap() * spectrum_s(&pop, t).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn s_scaling_law() {
        // S_{αA}(t) = S_A(t)/α
        let a = Spectrum::discrete(vec![2.0, 1.0, 0.5], vec![1, 2, 1]).unwrap();
        let scaled = Spectrum::discrete(vec![6.0, 3.0, 1.5], vec![1, 2, 1]).unwrap();
        for &t in &[-0.8, -0.4, -0.1] {
            assert_relative_eq!(
                spectrum_s(&scaled, t).unwrap(),
                spectrum_s(&a, t).unwrap() / 3.0,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn deep_white_gram_depth_one_is_wishart_gram() {
        let deep = EnsembleTransform::DeepWhiteGram { widths: vec![300], d: 200 };
        let gram = EnsembleTransform::WishartGram { q: 1.5 };
        for &t in &[-0.9, -0.3, 0.2] {
            assert_relative_eq!(
                deep.s_transform(t).unwrap(),
                gram.s_transform(t).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn deep_structured_gram_with_identity_layers_is_white() {
        let widths = vec![120, 260];
        let spectra = vec![
            Spectrum::isotropic(120).unwrap(),
            Spectrum::isotropic(260).unwrap(),
        ];
        let structured =
            EnsembleTransform::DeepStructuredGram { spectra, widths: widths.clone(), d: 100 };
        let white = EnsembleTransform::DeepWhiteGram { widths, d: 100 };
        for &t in &[-0.8, -0.5, -0.2] {
            assert_relative_eq!(
                structured.s_transform(t).unwrap(),
                white.s_transform(t).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn rectangular_projection_composes() {
        // S_{ΠᵀAΠ}(t) = S_A(qt)
        let pop = Spectrum::discrete(vec![2.0, 0.7], vec![3, 2]).unwrap();
        let proj = EnsembleTransform::RectangularProjectionOf {
            inner: Box::new(ProjectionInner::Spectrum(pop.clone())),
            q: 0.5,
        };
        assert_relative_eq!(
            proj.s_transform(-0.6).unwrap(),
            spectrum_s(&pop, -0.3).unwrap(),
            max_relative = 1e-11
        );
    }

    #[test]
    fn marchenko_pastur_oracles() {
        let grid = [1.0];
        let d = spectral_density(&EnsembleTransform::WhiteWishart { q: 1.0 }, &grid, 1e-4).unwrap();
        assert_relative_eq!(d.bulk[0], 3f64.sqrt() / (2.0 * std::f64::consts::PI), max_relative = 1e-12);
        assert!(d.point_masses.is_empty());

        let d2 =
            spectral_density(&EnsembleTransform::WhiteWishart { q: 2.0 }, &[2.0], 1e-4).unwrap();
        assert_eq!(d2.point_masses, vec![(0.0, 0.5)]);
    }

    #[test]
    fn wigner_semicircle_oracle() {
        let d = spectral_density(&EnsembleTransform::Wigner { sigma2: 1.0 }, &[0.0, 2.5], 1e-4)
            .unwrap();
        assert_relative_eq!(d.bulk[0], 1.0 / std::f64::consts::PI);
        assert_eq!(d.bulk[1], 0.0);
    }

    #[test]
    fn fixed_point_reproduces_marchenko_pastur() {
        // identity population covariance through the generic engine
        let pop = Spectrum::isotropic(50).unwrap();
        let sw = EnsembleTransform::StructuredWishart { population: pop, q: 0.5 };
        let grid: Vec<f64> = (1..=30).map(|i| 0.1 * i as f64).collect();
        let eps = 1e-6;
        let generic = spectral_density(&sw, &grid, eps).unwrap();
        let closed =
            spectral_density(&EnsembleTransform::WhiteWishart { q: 0.5 }, &grid, eps).unwrap();
        for (g, c) in generic.bulk.iter().zip(&closed.bulk) {
            assert!((g - c).abs() < 2e-3, "generic {g} vs closed {c}");
        }
    }

    #[test]
    fn gram_density_is_rescaled_marchenko_pastur() {
        // gram (1/P)XXᵀ at q = N/P: bulk = q · MP density of the N×N side
        let gram = EnsembleTransform::WishartGram { q: 0.5 };
        let cov = EnsembleTransform::WhiteWishart { q: 0.5 };
        let grid = [0.3, 1.0, 2.0];
        let dg = spectral_density(&gram, &grid, 1e-7).unwrap();
        let dc = spectral_density(&cov, &grid, 1e-7).unwrap();
        for (g, c) in dg.bulk.iter().zip(&dc.bulk) {
            assert_relative_eq!(*g, 0.5 * c, max_relative = 1e-4);
        }
        assert_eq!(dg.point_masses, vec![(0.0, 0.5)]);
    }

    #[test]
    fn density_normalizes() {
        let pop = Spectrum::discrete(vec![2.0, 0.5], vec![1, 1]).unwrap();
        let sw = EnsembleTransform::StructuredWishart { population: pop, q: 0.3 };
        let grid: Vec<f64> = (0..2500).map(|i| 1e-3 + i as f64 * 2e-3).collect();
        let d = spectral_density(&sw, &grid, 1e-5).unwrap();
        let mut mass = 0.0;
        for i in 1..grid.len() {
            mass += 0.5 * (d.bulk[i] + d.bulk[i - 1]) * (grid[i] - grid[i - 1]);
        }
        assert!((mass - 1.0).abs() < 1e-3, "bulk mass {mass}");
    }
}
