//! Theoretical training/generalization errors, the GCV estimator, and the
//! fine-grained bias-variance decomposition, evaluated from a solved
//! `RenormState`.
//!
//! Every family (plain ridge, deep linear random features, noisy features)
//! goes through one evaluator: the differences are entirely contained in
//! (κ₁, κ₂, γ₁, γ₂, d log κ₂/d log κ₁), which the renormalizer already
//! computed. tf₁′ always comes from the analytic spectrum derivative, never
//! from finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;
use crate::renormalizer::{solve_lrf, ModelSpec, RenormState};
use crate::spectrum::{tf_all, Spectrum};

/// Full error report for one model at one (P, λ).
///
/// `e_g` excludes label noise on the test point; the GCV estimator targets
/// E_out = e_g + σ_ε². The decomposition fields always satisfy
/// bias2 + var_x + var_f + var_xf + var_xeps + var_xfeps = e_g, and
/// var_eps = var_feps = 0 identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub e_g: f64,
    pub e_tr: f64,
    pub gcv: f64,
    pub bias2: f64,
    pub var_x: f64,
    pub var_f: f64,
    pub var_xf: f64,
    pub var_xeps: f64,
    pub var_xfeps: f64,
    pub var_eps: f64,
    pub var_feps: f64,
}

impl RiskReport {
    /// Risk of a size-B bagged/ensembled predictor: the bias is unchanged
    /// and every variance contribution is divided by B.
    pub fn bagged(&self, b: usize) -> RiskReport {
        let b = b.max(1) as f64;
        let mut r = *self;
        r.var_x /= b;
        r.var_f /= b;
        r.var_xf /= b;
        r.var_xeps /= b;
        r.var_xfeps /= b;
        let e_g = r.bias2 + r.var_x + r.var_f + r.var_xf + r.var_xeps + r.var_xfeps;
        // gcv and e_tr track E_out = e_g + σ_ε², so rescale them in step.
        let sigma_eps2 = self.gcv - self.e_g;
        r.gcv = e_g + sigma_eps2;
        r.e_tr = if self.gcv > 0.0 { self.e_tr * r.gcv / self.gcv } else { self.e_tr };
        r.e_g = e_g;
        r
    }
}

/// Shared evaluator behind lr_risk / lrf_risk / nlrf_risk.
fn evaluate(model: &ModelSpec, state: &RenormState) -> Result<RiskReport> {
    let sigma_eps2 = model.label_noise_var;
    if state.one_minus_gamma1 <= 0.0 {
        return Err(Error::Divergent(format!(
            "gamma1 = {} >= 1 at the interpolation threshold",
            state.gamma1
        )));
    }
    if state.gamma2 >= 1.0 {
        return Err(Error::Divergent(format!("gamma2 = {} >= 1", state.gamma2)));
    }
    let tf = tf_all(&model.covariates, &model.teacher, state.kappa2)?;
    let k2 = state.kappa2;
    let r = state.dlog_ratio;

    let bias2 = -k2 * k2 * tf.tf1_prime;
    let var_x = state.gamma2 / (1.0 - state.gamma2) * bias2;
    let var_f = (1.0 - r) * k2 * tf.tf2;
    // Sig0 = Bias² + Var_F = −κ₂²tf₁′·r + κ₂tf₁(1−r) by the exact identity
    // κ tf₂ = κ tf₁ + κ² tf₁′.
    let sig0 = bias2 + var_f;
    let g1_ratio = state.gamma1 / state.one_minus_gamma1;
    let var_xf = (g1_ratio * sig0 - var_x).max(0.0);
    let var_xeps = state.gamma2 / (1.0 - state.gamma2) * sigma_eps2;
    let var_xfeps = (g1_ratio * sigma_eps2 - var_xeps).max(0.0);
    let e_g = sig0 / state.one_minus_gamma1 + g1_ratio * sigma_eps2;

    // E_tr = (λ/κ₁)²·(E_g + σ_ε²), with λ/κ₁ = 1 − (D/P)·df̄₁ evaluated
    // directly so the ridgeless limit avoids 0/0. For an infinite spectrum
    // df̄₁ is the unnormalized mode count, so the ratio is 1/P.
    let ratio = match model.covariates.dim() {
        Some(d) => d as f64 / model.samples as f64,
        None => 1.0 / model.samples as f64,
    };
    let factor0 = 1.0 - ratio * state.dfbar1;
    let e_out = e_g + sigma_eps2;
    let e_tr = factor0 * factor0 * e_out;

    if !e_g.is_finite() {
        return Err(Error::Divergent(format!("non-finite generalization error {e_g}")));
    }
    Ok(RiskReport {
        e_g,
        e_tr,
        gcv: e_out,
        bias2,
        var_x,
        var_f,
        var_xf,
        var_xeps,
        var_xfeps,
        var_eps: 0.0,
        var_feps: 0.0,
    })
}

/// Risk of plain ridge regression (no feature layers). Solves the
/// renormalization internally since κ is a scalar root.
pub fn lr_risk(model: &ModelSpec) -> Result<RiskReport> {
    if !model.layers.is_empty() {
        return Err(Error::Config("lr_risk requires a model with no feature layers".into()));
    }
    let state = solve_lrf(model)?;
    evaluate(model, &state)
}

/// Risk of a (deep) linear random-feature model at an already-solved state.
pub fn lrf_risk(model: &ModelSpec, state: &RenormState) -> Result<RiskReport> {
    if model.layers.is_empty() {
        return Err(Error::Config("lrf_risk requires at least one feature layer".into()));
    }
    if model.feature_noise_var > 0.0 {
        return Err(Error::Config("lrf_risk requires zero feature noise; use nlrf_risk".into()));
    }
    evaluate(model, state)
}

/// Risk of a noisy (Gaussian-equivalent nonlinear) random-feature model.
pub fn nlrf_risk(model: &ModelSpec, state: &RenormState) -> Result<RiskReport> {
    if model.layers.len() != 1 {
        return Err(Error::Config("nlrf_risk requires exactly one feature layer".into()));
    }
    evaluate(model, state)
}

/// GCV factor S² = (κ₁/λ)² with E_out = factor × E_tr. The estimator is
/// undefined at λ = 0. (Takes λ explicitly because the solved state does not
/// retain the ridge.)
pub fn gcv_factor(lambda: f64, state: &RenormState) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("GCV factor is undefined at lambda = {lambda}")));
    }
    Ok((state.kappa1 / lambda).powi(2))
}

/// Effective input-space ridge of an infinite ensemble over feature draws:
/// λ·S_{FFᵀ} = λ·κ₂/κ₁. Diverges (pole) when κ₁ = 0, i.e. in ridgeless
/// bottlenecked/underparameterized regimes.
pub fn ensemble_effective_ridge(lambda: f64, state: &RenormState) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("ridge must be >= 0, got {lambda}")));
    }
    if state.kappa1 == 0.0 {
        return Err(Error::Pole {
            location: 0.0,
            context: "ensemble effective ridge λ·κ₂/κ₁ diverges at κ₁ = 0".into(),
        });
    }
    Ok(lambda * state.kappa2 / state.kappa1)
}

/// Closed-form (κ, γ, σ̃²) for ridge regression on a plateau spectrum near
/// level ℓ: unresolved lower levels act as extra label noise
/// σ̃² = (1/P)·Σ_{k>ℓ} N_k η_k, and the level itself behaves isotropically
/// with effective ridge λ̃ = λ + σ̃².
pub fn multiple_descent_kappa(
    plateaus: &Spectrum,
    level: usize,
    p: usize,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    if p < 1 {
        return Err(Error::Config("need at least one sample".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    let levels = plateaus.levels()?;
    if level >= levels.len() {
        return Err(Error::Config(format!(
            "level index {level} out of range for {} levels",
            levels.len()
        )));
    }
    for pair in levels.windows(2) {
        if pair[0].0 / pair[1].0 < 1e2 {
            return Err(Error::Domain(format!(
                "plateau approximation needs well-separated levels; \
                 ratio {:.3} < 1e2 between {} and {}",
                pair[0].0 / pair[1].0,
                pair[0].0,
                pair[1].0
            )));
        }
    }
    let (eta, mult) = levels[level];
    let pf = p as f64;
    let noise_var: f64 =
        levels[level + 1..].iter().map(|(e, m)| e * *m as f64).sum::<f64>() / pf;
    let lambda_eff = lambda + noise_var;
    let q = mult as f64 / pf;
    // Isotropic closed form at eigenvalue η and effective ridge λ̃:
    // κ(1 − q·η/(η+κ)) = λ̃ ⇒ κ² − (η(q−1)+λ̃)κ − ηλ̃ = 0.
    let b = eta * (q - 1.0) + lambda_eff;
    let kappa = 0.5 * (b + (b * b + 4.0 * eta * lambda_eff).sqrt());
    let gamma = q * eta * eta / ((kappa + eta) * (kappa + eta));
    Ok((kappa, gamma, noise_var))
}

/// Scalar nonlinearity applied entrywise to the random features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    Relu,
    Tanh,
    Erf,
    Square,
    /// Sampled (x, σ(x)) pairs; evaluated by linear interpolation, clamped
    /// to the end values outside the sampled range.
    Table(Vec<(f64, f64)>),
}

impl Nonlinearity {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Erf => erf(x),
            Nonlinearity::Square => x * x,
            Nonlinearity::Table(points) => {
                let n = points.len();
                if x <= points[0].0 {
                    return points[0].1;
                }
                if x >= points[n - 1].0 {
                    return points[n - 1].1;
                }
                let i = points.partition_point(|p| p.0 < x);
                let (x0, y0) = points[i - 1];
                let (x1, y1) = points[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Gaussian-equivalence constants (μ₀, μ₁, μ⋆) of a nonlinearity:
/// μ₀ = E[σ(z)], μ₁ = E[zσ(z)], μ⋆ = E[σ(z)²] − μ₀² − μ₁² for z ~ N(0,1),
/// by 64-node Gauss-Hermite quadrature. The equivalent noisy linear model
/// carries σ_ξ² = μ⋆/μ₁².
pub fn gaussian_equivalence_constants(nonlinearity: &Nonlinearity) -> Result<(f64, f64, f64)> {
    if let Nonlinearity::Table(points) = nonlinearity {
        if points.len() < 2 {
            return Err(Error::Config("sample table needs at least two points".into()));
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Config("sample table must be strictly increasing in x".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Config("sample table entries must be finite".into()));
        }
    }
    let mu0 = numerics::gaussian_expectation(|z| nonlinearity.eval(z));
    let mu1 = numerics::gaussian_expectation(|z| z * nonlinearity.eval(z));
    let second = numerics::gaussian_expectation(|z| nonlinearity.eval(z).powi(2));
    let mu_star = second - mu0 * mu0 - mu1 * mu1;
    if mu1.abs() < 1e-10 {
        return Err(Error::Domain(
            "degenerate Gaussian equivalence: mu1 = E[z σ(z)] vanishes".into(),
        ));
    }
    Ok((mu0, mu1, mu_star))
}
