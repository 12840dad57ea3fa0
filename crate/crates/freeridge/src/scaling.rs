//! Source–capacity scaling analysis: regime classification, asymptotic decay
//! rates under N = P^q joint scaling, crossover locations, phase-diagram
//! grids, and power-law fitting utilities.
//!
//! Conventions: the data spectrum decays as k^{-α} (capacity α), the task has
//! source exponent r (w̄_k² η_k ~ k^{-(1+2αr)}·k^α), the ridge scales as the
//! bottleneck resource to the power -l (l = +∞ encodes ridgeless), and model
//! size scales as N = P^q. Regime classifiers compare asymptotic decay
//! exponents of the competing error terms; exact exponent ties are reported
//! as `Error::Crossover` rather than forced into a region.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renormalizer::solve_kappa_lr;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingInputs {
    /// Capacity exponent of the data spectrum, η_k ~ k^{-α}.
    pub alpha: f64,
    /// Source exponent of the task.
    pub r: f64,
    /// Ridge-decay exponent, λ ~ P^{-l} (or N^{-l} when N bottlenecks);
    /// `f64::INFINITY` encodes the ridgeless limit.
    pub l: f64,
    /// Model-size exponent under the joint scaling N = P^q.
    pub q_exp: f64,
    /// Per-layer weight-structure exponent c of the narrowest layer.
    pub c: f64,
    pub sigma_eps2: f64,
}

impl ScalingInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("capacity exponent alpha must be positive".into()));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::Config("source exponent r must be positive".into()));
        }
        if self.l.is_nan() || self.l < 0.0 {
            return Err(Error::Config("ridge exponent l must be nonnegative (inf = ridgeless)".into()));
        }
        if !(self.q_exp > 0.0) || !self.q_exp.is_finite() {
            return Err(Error::Config("model-size exponent q must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::Config("weight-structure exponent c must lie in [0,1]".into()));
        }
        if self.sigma_eps2 < 0.0 || !self.sigma_eps2.is_finite() {
            return Err(Error::Config("label-noise variance must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-layer weight-structure exponent c_ℓ as a function of the layer's
/// spectral decay α_ℓ: γ^(ℓ) ~ (P/N_ℓ)^{c_ℓ} with c_ℓ = 1 for α_ℓ ≤ 1/2,
/// (1−α_ℓ)/α_ℓ for 1/2 < α_ℓ < 1, and 0 for α_ℓ ≥ 1 (residual variance
/// saturates at infinite width).
pub fn weight_structure_exponent(alpha_l: f64) -> f64 {
    ((1.0 - alpha_l) / alpha_l).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    SignalDominated,
    RidgeDominated,
    NoiseDominated,
    NoiseMitigated,
    VarFDominated,
    RidgeAndVarFDominated,
    XiDominated,
    JointXiVarF,
    NoiseXiMitigated,
}

/// Which error terms produce the dominant scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    /// Bias² + Var_X.
    #[serde(rename = "bias_and_var_x")]
    BiasAndVarX,
    /// Bias² + Var_F.
    #[serde(rename = "bias_and_var_f")]
    BiasAndVarF,
    /// Var_F + Var_XF.
    #[serde(rename = "var_f_and_var_xf")]
    VarFAndVarXF,
    /// Var_Xε + Var_XFε.
    NoiseVariances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub name: RegimeName,
    /// E_g ~ (resource)^{-predicted_exponent}; negative means growth.
    pub predicted_exponent: f64,
    pub dominant_terms: Vec<VarianceSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeAxis {
    /// Resolution-limited in the narrowest width N (N < P).
    NBottlenecked,
    /// Resolution-limited in the sample count P (P < N).
    POverparameterized,
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// min(1, l/α) with the ridgeless l = ∞ sentinel degrading gracefully.
fn ridge_fraction(l: f64, alpha: f64) -> f64 {
    if l.is_infinite() {
        1.0
    } else {
        (l / alpha).min(1.0)
    }
}

fn min_al(alpha: f64, l: f64) -> f64 {
    alpha.min(l)
}

/// Linear/kernel ridge regression scaling regime in P.
pub fn lr_regime(inputs: &ScalingInputs) -> Result<RegimeLabel> {
    inputs.validate()?;
    let a = inputs.alpha;
    let l = inputs.l;
    let rmin = inputs.r.min(1.0);
    let e_res = 2.0 * min_al(a, l) * rmin;
    let ridge_limited = l < a;
    let resolution = RegimeLabel {
        name: if ridge_limited { RegimeName::RidgeDominated } else { RegimeName::SignalDominated },
        predicted_exponent: e_res,
        dominant_terms: vec![VarianceSource::BiasAndVarX],
    };
    if inputs.sigma_eps2 == 0.0 {
        return Ok(resolution);
    }
    // Label noise contributes σ_ε² P⁰ when effectively ridgeless and
    // σ_ε² P^{-(α-l)/α} when the ridge mitigates it.
    let e_noise = 1.0 - ridge_fraction(l, a);
    if tied(e_res, e_noise) {
        return Err(Error::Crossover(format!(
            "signal and noise terms share exponent {e_res}; regime boundary"
        )));
    }
    if e_noise < e_res {
        Ok(RegimeLabel {
            name: if ridge_limited { RegimeName::NoiseMitigated } else { RegimeName::NoiseDominated },
            predicted_exponent: e_noise,
            dominant_terms: vec![VarianceSource::NoiseVariances],
        })
    } else {
        Ok(resolution)
    }
}

/// Linear random-feature scaling regime along the chosen bottleneck axis.
pub fn lrf_regimes(inputs: &ScalingInputs, axis: RegimeAxis) -> Result<RegimeLabel> {
    inputs.validate()?;
    let a = inputs.alpha;
    let l = inputs.l;
    let frac = ridge_fraction(l, a);
    let ridge_limited = l < a;
    match axis {
        RegimeAxis::NBottlenecked => {
            // E_g ~ N^{-2 min(α,l) min(r,1/2)} + σ_ε² N^{min(1,l/α)}/P.
            let e_res = 2.0 * min_al(a, l) * inputs.r.min(0.5);
            let resolution = RegimeLabel {
                name: if ridge_limited {
                    RegimeName::RidgeDominated
                } else {
                    RegimeName::SignalDominated
                },
                predicted_exponent: e_res,
                dominant_terms: vec![VarianceSource::BiasAndVarX],
            };
            if inputs.sigma_eps2 == 0.0 {
                return Ok(resolution);
            }
            let e_noise = -frac; // grows with the bottleneck width
            if tied(e_res, e_noise) {
                return Err(Error::Crossover(
                    "signal and noise terms share an exponent at the regime boundary".into(),
                ));
            }
            Ok(RegimeLabel {
                name: if ridge_limited {
                    RegimeName::NoiseMitigated
                } else {
                    RegimeName::NoiseDominated
                },
                predicted_exponent: e_noise,
                dominant_terms: vec![VarianceSource::NoiseVariances],
            })
        }
        RegimeAxis::POverparameterized => {
            let mut candidates: Vec<RegimeLabel> = Vec::new();
            candidates.push(RegimeLabel {
                name: if ridge_limited {
                    RegimeName::RidgeDominated
                } else {
                    RegimeName::SignalDominated
                },
                predicted_exponent: 2.0 * min_al(a, l) * inputs.r.min(1.0),
                dominant_terms: vec![VarianceSource::BiasAndVarX],
            });
            // The Var_F branch needs a finite-norm target (r > 1/2) to
            // separate from the signal branch over an extended range.
            if inputs.r > 0.5 {
                candidates.push(RegimeLabel {
                    name: if ridge_limited {
                        RegimeName::RidgeAndVarFDominated
                    } else {
                        RegimeName::VarFDominated
                    },
                    predicted_exponent: min_al(a, l) - inputs.c * frac,
                    dominant_terms: vec![VarianceSource::VarFAndVarXF],
                });
            }
            if inputs.sigma_eps2 > 0.0 {
                candidates.push(RegimeLabel {
                    name: if ridge_limited {
                        RegimeName::NoiseMitigated
                    } else {
                        RegimeName::NoiseDominated
                    },
                    predicted_exponent: 1.0 - frac,
                    dominant_terms: vec![VarianceSource::NoiseVariances],
                });
            }
            pick_dominant(candidates)
        }
    }
}

/// Nonlinear random-feature regimes under the σ̃_ξ² = σ_ξ²D = const scaling,
/// where the feature noise acts as an effective self-induced ridge.
pub fn nlrf_regimes(inputs: &ScalingInputs, axis: RegimeAxis) -> Result<RegimeLabel> {
    inputs.validate()?;
    let a = inputs.alpha;
    match axis {
        RegimeAxis::NBottlenecked => {
            let e_res = 2.0 * inputs.r.min(0.5);
            if inputs.sigma_eps2 == 0.0 {
                return Ok(RegimeLabel {
                    name: RegimeName::XiDominated,
                    predicted_exponent: e_res,
                    dominant_terms: vec![VarianceSource::BiasAndVarX],
                });
            }
            // σ_ε² (N/σ̃_ξ²)^{1/α}/P grows with the bottleneck width.
            Ok(RegimeLabel {
                name: RegimeName::NoiseXiMitigated,
                predicted_exponent: -1.0 / a,
                dominant_terms: vec![VarianceSource::NoiseVariances],
            })
        }
        RegimeAxis::POverparameterized => {
            let mut candidates = vec![RegimeLabel {
                name: RegimeName::XiDominated,
                predicted_exponent: 2.0 * inputs.r.min(1.0),
                dominant_terms: vec![VarianceSource::BiasAndVarX],
            }];
            if inputs.r > 0.5 {
                candidates.push(RegimeLabel {
                    name: RegimeName::JointXiVarF,
                    predicted_exponent: 0.0,
                    dominant_terms: vec![VarianceSource::VarFAndVarXF],
                });
            }
            if inputs.sigma_eps2 > 0.0 {
                candidates.push(RegimeLabel {
                    name: RegimeName::NoiseXiMitigated,
                    predicted_exponent: (a - 1.0) / a,
                    dominant_terms: vec![VarianceSource::NoiseVariances],
                });
            }
            pick_dominant(candidates)
        }
    }
}

fn pick_dominant(candidates: Vec<RegimeLabel>) -> Result<RegimeLabel> {
    let best = candidates
        .iter()
        .map(|c| c.predicted_exponent)
        .fold(f64::INFINITY, f64::min);
    let winners: Vec<&RegimeLabel> =
        candidates.iter().filter(|c| tied(c.predicted_exponent, best)).collect();
    if winners.len() > 1 {
        return Err(Error::Crossover(format!(
            "{} regimes tie at exponent {best}; on a regime boundary",
            winners.len()
        )));
    }
    Ok(winners[0].clone())
}

/// Asymptotic decay rate −log E_g / log P as P → ∞ under N = P^q, λ = P^{-l}.
/// Returns the rate and every variance source achieving it (ties allowed).
pub fn asymptotic_rate(inputs: &ScalingInputs, noisy: bool) -> Result<(f64, Vec<VarianceSource>)> {
    inputs.validate()?;
    let a = inputs.alpha;
    let frac = ridge_fraction(inputs.l, a);
    let q = inputs.q_exp;
    let mut terms = vec![
        (2.0 * a * inputs.r.min(1.0) * frac, VarianceSource::BiasAndVarX),
        (2.0 * a * q * inputs.r.min(0.5), VarianceSource::BiasAndVarF),
        ((a - inputs.c) * frac + q * inputs.c, VarianceSource::VarFAndVarXF),
    ];
    if noisy {
        let lq = if inputs.l.is_infinite() { q } else { (inputs.l / a).min(q) };
        terms.push((1.0 - lq.min(1.0), VarianceSource::NoiseVariances));
    }
    let rate = terms.iter().map(|&(t, _)| t).fold(f64::INFINITY, f64::min);
    let sources = terms.iter().filter(|&&(t, _)| tied(t, rate)).map(|&(_, s)| s).collect();
    Ok((rate, sources))
}

/// Sample count where variance-dominated scaling emerges,
/// P_F ~ N^{c/(c + 2 min(α,l) min(r−1/2, 1/2))}. `None` when r ≤ 1/2 (the
/// Var_F branch never separates from the signal branch).
pub fn crossover_pf(n: f64, inputs: &ScalingInputs) -> Result<Option<f64>> {
    inputs.validate()?;
    if !(n > 1.0) {
        return Err(Error::Config("width N must exceed 1".into()));
    }
    if inputs.r <= 0.5 {
        return Ok(None);
    }
    let denom = inputs.c + 2.0 * min_al(inputs.alpha, inputs.l) * (inputs.r - 0.5).min(0.5);
    Ok(Some(n.powf(inputs.c / denom)))
}

/// Sample count beyond which the noise terms dominate the noiseless ones,
/// found by root-finding the log-scale balance equation. `None` when σ_ε = 0
/// or when the noiseless terms decay slower than the noise term (no
/// crossover; the ∞ sentinel).
pub fn crossover_peps(n: f64, inputs: &ScalingInputs) -> Result<Option<f64>> {
    inputs.validate()?;
    if !(n > 1.0) {
        return Err(Error::Config("width N must exceed 1".into()));
    }
    if inputs.sigma_eps2 == 0.0 {
        return Ok(None);
    }
    let a = inputs.alpha;
    let frac = ridge_fraction(inputs.l, a);
    let m = min_al(a, inputs.l);
    let ln_n = n.ln();
    let ln_eps2 = inputs.sigma_eps2.ln();
    // log of the noiseless terms minus log of the noise term, as a function
    // of t = log P.
    let gap = |t: f64| -> f64 {
        let signal = -2.0 * m * inputs.r.min(1.0) * t;
        let varf = if inputs.r > 0.5 {
            -2.0 * m * inputs.r.min(0.5) * t + inputs.c * (frac * t - ln_n)
        } else {
            f64::INFINITY
        };
        let noise = ln_eps2 - (1.0 - frac) * t;
        signal.min(varf) - noise
    };
    if gap(0.0) <= 0.0 {
        return Ok(Some(1.0)); // noise dominates from the start
    }
    let t_max = 300.0;
    let steps = 600;
    let mut prev = 0.0;
    for i in 1..=steps {
        let t = t_max * i as f64 / steps as f64;
        if gap(t) <= 0.0 {
            let root = crate::numerics::bisect(&gap, prev, t, |_| 1e-10)?;
            return Ok(Some(root.exp()));
        }
        prev = t;
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub l: f64,
    pub q: f64,
    pub rate: f64,
    pub sources: Vec<VarianceSource>,
}

/// Asymptotic-rate phase diagram over an (l, q) grid at fixed (α, r, c).
pub fn phase_diagram(
    l_grid: &[f64],
    q_grid: &[f64],
    base: &ScalingInputs,
    noisy: bool,
) -> Result<Vec<PhaseCell>> {
    if l_grid.is_empty() || q_grid.is_empty() {
        return Err(Error::Config("phase diagram requires a nonempty grid".into()));
    }
    let mut cells = Vec::with_capacity(l_grid.len() * q_grid.len());
    for &l in l_grid {
        for &q in q_grid {
            let inputs = ScalingInputs { l, q_exp: q, ..*base };
            let (rate, sources) = asymptotic_rate(&inputs, noisy)?;
            cells.push(PhaseCell { l, q, rate, sources });
        }
    }
    Ok(cells)
}

/// Least-squares power-law fit on (log x, log y) restricted to `window`.
/// Returns (exponent, r²).
pub fn fit_power_law(x: &[f64], y: &[f64], window: Range<usize>) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Config("x and y must have equal length".into()));
    }
    if window.end > x.len() || window.len() < 3 {
        return Err(Error::Config("fit window must lie in range and contain ≥ 3 points".into()));
    }
    let pts: Vec<(f64, f64)> = window
        .map(|i| {
            if x[i] > 0.0 && y[i] > 0.0 {
                Ok((x[i].ln(), y[i].ln()))
            } else {
                Err(Error::Domain("power-law fit requires positive values".into()))
            }
        })
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("fit window has no spread in x".into()));
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok((slope, r2))
}

/// Middle-60% fit window, avoiding edge transients of a log grid.
pub fn default_fit_window(n: usize) -> Range<usize> {
    if n <= 5 {
        return 0..n;
    }
    let skip = n / 5;
    skip..(n - skip)
}

/// Solve the ridgeless κ across a P grid and fit κ ~ P^x and γ ~ P^y;
/// returns the fitted exponents (x, y). The §3.9.1 prediction is x = −α for
/// a normalizable spectrum and x = −1, y = min(1, (1−α)/α) when α ≤ 1 with
/// P ≪ N.
pub fn kappa_scaling_check(spectrum: &Spectrum, n: usize, p_grid: &[usize]) -> Result<(f64, f64)> {
    if p_grid.len() < 3 {
        return Err(Error::Config("need at least 3 grid points".into()));
    }
    let lambda = 1e-12;
    let mut ps = Vec::with_capacity(p_grid.len());
    let mut kappas = Vec::with_capacity(p_grid.len());
    let mut gammas = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let (kappa, gamma) = solve_kappa_lr(spectrum, n, p, lambda)?;
        ps.push(p as f64);
        kappas.push(kappa);
        gammas.push(gamma);
    }
    let (kx, _) = fit_power_law(&ps, &kappas, 0..ps.len())?;
    let (gx, _) = fit_power_law(&ps, &gammas, 0..ps.len())?;
    Ok((kx, gx))
}
