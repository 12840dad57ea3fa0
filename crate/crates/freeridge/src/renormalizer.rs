//! Solvers for the renormalized ridge parameters (κ, κ₁, κ₂) of linear
//! regression, linear random-feature chains, and noisy (Gaussian-equivalent
//! nonlinear) random features.
//!
//! Everything here reduces to one scalar equation per model. For plain ridge
//! regression it is κ·(1 − (N/P)df₁(κ)) = λ. For feature models it becomes
//! λ = κ₂ / (S_W · S_{FFᵀ}) evaluated at t = −df̄₁(κ₂), where df̄₁ absorbs
//! isotropic feature noise as df₁ + σ_ξ²/κ₂. The left side is strictly
//! increasing on the physical branch, so a bracketed bisection plus one
//! Newton polish nails the root; ridgeless limits are solved directly at the
//! pole conditions instead of extrapolating small λ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;
use crate::spectrum::{Spectrum, TeacherProfile};

/// Distribution of one feature-layer matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// i.i.d. Gaussian entries, variance 1/fan-in.
    GaussianWhite,
    /// Gaussian entries with row covariance drawn from the given spectrum.
    GaussianStructured { spectrum: Spectrum },
    /// Orthogonal projection onto `width` of the input directions.
    OrthogonalProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayer {
    pub width: usize,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl FeatureLayer {
    pub fn white(width: usize) -> Self {
        FeatureLayer { width, kind: LayerKind::GaussianWhite }
    }

    pub fn structured(width: usize, spectrum: Spectrum) -> Self {
        FeatureLayer { width, kind: LayerKind::GaussianStructured { spectrum } }
    }

    pub fn projection(width: usize) -> Self {
        FeatureLayer { width, kind: LayerKind::OrthogonalProjection }
    }
}

/// Full description of a regression problem: covariates, teacher, feature
/// chain (possibly empty), noise levels, ridge and sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub covariates: Spectrum,
    pub teacher: TeacherProfile,
    #[serde(default)]
    pub layers: Vec<FeatureLayer>,
    /// σ_ξ²; only supported with a single GaussianWhite layer.
    #[serde(default)]
    pub feature_noise_var: f64,
    /// σ_ε².
    #[serde(default)]
    pub label_noise_var: f64,
    pub ridge: f64,
    pub samples: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::Config("need at least one sample".into()));
        }
        for (name, v) in [
            ("ridge", self.ridge),
            ("feature_noise_var", self.feature_noise_var),
            ("label_noise_var", self.label_noise_var),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.feature_noise_var > 0.0
            && !(self.layers.len() == 1 && self.layers[0].kind == LayerKind::GaussianWhite)
        {
            return Err(Error::Config(
                "feature noise is only supported with a single GaussianWhite layer".into(),
            ));
        }
        if self.layers.is_empty() {
            return Ok(());
        }
        let d = self.covariates.dim().ok_or_else(|| {
            Error::Config("feature layers require a finite covariate dimension".into())
        })?;
        let mut nontrivial_projections = 0usize;
        for layer in &self.layers {
            if layer.width < 1 {
                return Err(Error::Config("layer width must be >= 1".into()));
            }
            match &layer.kind {
                LayerKind::GaussianWhite => {}
                LayerKind::GaussianStructured { spectrum } => {
                    if !spectrum.is_finite() {
                        return Err(Error::Config(
                            "structured layer weights need a finite spectrum".into(),
                        ));
                    }
                }
                LayerKind::OrthogonalProjection => {
                    if layer.width > d {
                        return Err(Error::Config(format!(
                            "projection width {} exceeds input dimension {d}",
                            layer.width
                        )));
                    }
                    if layer.width < d {
                        nontrivial_projections += 1;
                    }
                }
            }
        }
        if nontrivial_projections > 0 && self.layers.len() > 1 {
            return Err(Error::Config(
                "a non-identity orthogonal projection must be the only feature layer".into(),
            ));
        }
        Ok(())
    }

    /// Finite covariate dimension, required whenever feature layers exist.
    fn input_dim(&self) -> Result<usize> {
        self.covariates
            .dim()
            .ok_or_else(|| Error::Config("finite covariate dimension required".into()))
    }

    fn min_width(&self) -> usize {
        self.layers.iter().map(|l| l.width).min().unwrap_or(usize::MAX)
    }
}

/// Ridgeless behavior class (also attached, informationally, to finite-λ
/// states using the same rank comparisons).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Underparameterized,
    Bottlenecked(usize),
    Overparameterized,
}

/// Solved renormalization state for one model at one (P, λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormState {
    /// λ·S_W: the data-fluctuation renormalized ridge.
    pub kappa1: f64,
    /// κ₁·S_{FFᵀ}: the fully renormalized ridge seen by the covariates.
    pub kappa2: f64,
    pub kappa_per_layer: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_per_layer: Vec<f64>,
    /// df¹_Σ(κ₂).
    pub df1: f64,
    /// df²_Σ(κ₂).
    pub df2: f64,
    /// df̄₁ = df₁ + σ_ξ²/κ₂ (equals df₁ without feature noise).
    pub dfbar1: f64,
    /// d log κ₂ / d log κ₁.
    pub dlog_ratio: f64,
    pub regime: Regime,
    /// 1 − γ₁ evaluated without cancellation; risk formulas divide by this.
    pub one_minus_gamma1: f64,
}

/// Solve κ·(1 − (N/P)·df₁(κ)) = λ for plain ridge regression and return
/// (κ, γ). For an infinite spectrum the product N·df₁ is the unnormalized
/// mode-count sum, so `n` is ignored.
pub fn solve_kappa_lr(covariates: &Spectrum, n: usize, p: usize, lambda: f64) -> Result<(f64, f64)> {
    if p < 1 {
        return Err(Error::Config("need at least one sample".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("ridge must be finite and >= 0, got {lambda}")));
    }
    let finite = covariates.is_finite();
    if finite && n < 1 {
        return Err(Error::Config("need at least one feature".into()));
    }
    // N·df1 and N·df2 under both conventions.
    let scale = if finite { n as f64 } else { 1.0 };
    let pf = p as f64;
    if lambda == 0.0 {
        if finite {
            return match n.cmp(&p) {
                std::cmp::Ordering::Less => Ok((0.0, n as f64 / pf)),
                std::cmp::Ordering::Equal => Err(Error::Singular(
                    "ridgeless regression at N = P (interpolation threshold)".into(),
                )),
                std::cmp::Ordering::Greater => {
                    let kappa = covariates.kappa_at_df1(pf / n as f64)?;
                    let gamma = scale * covariates.df2(kappa)? / pf;
                    Ok((kappa, gamma))
                }
            };
        }
        // Infinite spectrum: the mode count always exceeds P eventually.
        let kappa = covariates.kappa_at_df1(pf)?;
        return Ok((kappa, covariates.df2(kappa)? / pf));
    }
    let f = |k: f64| match covariates.df1(k) {
        Ok(d1) => k * (1.0 - scale * d1 / pf) - lambda,
        Err(_) => f64::NAN,
    };
    let mut lo = lambda.min(1.0);
    for _ in 0..2100 {
        if f(lo) < 0.0 {
            break;
        }
        lo /= 16.0;
    }
    let mut hi = lambda.max(covariates.eta_max()).max(1.0);
    for _ in 0..2100 {
        if f(hi) > 0.0 {
            break;
        }
        hi *= 16.0;
    }
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(Error::NoSolution("could not bracket the ridge self-consistency".into()));
    }
    let root = numerics::bisect(f, lo, hi, |x| 1e-14 * (1.0 + x))?;
    let df = |k: f64| 1.0 - scale * covariates.df2(k).unwrap_or(f64::NAN) / pf;
    let kappa = numerics::newton_polish(f, df, root, lo, hi);
    let gamma = scale * covariates.df2(kappa)? / pf;
    Ok((kappa, gamma))
}

/// Per-layer contributions to S_{FFᵀ} and its logarithmic derivative,
/// evaluated at t = −φ̄.
struct LayerEval {
    kappa_l: f64,
    gamma_l: f64,
    /// This layer's factor of 1/S_{FFᵀ}(−φ̄).
    inv_s: f64,
    /// This layer's term of d log S_{FFᵀ} / d log φ̄.
    dlog_s: f64,
}

fn eval_layer(layer: &FeatureLayer, d: usize, p: usize, phibar: f64) -> Result<LayerEval> {
    let (df, pf, nf) = (d as f64, p as f64, layer.width as f64);
    let q = nf / df;
    match &layer.kind {
        LayerKind::GaussianWhite => {
            let kappa_l = (q / phibar - 1.0).max(0.0);
            Ok(LayerEval {
                kappa_l,
                gamma_l: (nf / pf) * (phibar / q).powi(2),
                inv_s: q - phibar,
                dlog_s: phibar / (q - phibar),
            })
        }
        LayerKind::GaussianStructured { spectrum } => {
            let t_l = -phibar / q;
            let kappa_l = if t_l <= -1.0 {
                0.0
            } else {
                -crate::free_transforms::zeta_inverse(spectrum, t_l)?
            };
            let df1_l = phibar / q;
            let df2_l = spectrum.df2(kappa_l)?;
            Ok(LayerEval {
                kappa_l,
                gamma_l: (nf / pf) * df2_l,
                inv_s: phibar * kappa_l,
                dlog_s: df2_l / (df1_l - df2_l),
            })
        }
        LayerKind::OrthogonalProjection => {
            // Zero-padded-spectrum convention: N ones and D−N zeros gives
            // S(t) = (1+t)/(t+N/D), the square-projection transform.
            let kappa_l = (q / phibar - 1.0).max(0.0);
            let gamma_l = (nf / pf) * (phibar / q).powi(2);
            if layer.width == d {
                // Exact identity: contributes S-factor 1 and no dlog term.
                Ok(LayerEval { kappa_l, gamma_l, inv_s: 1.0, dlog_s: 0.0 })
            } else {
                Ok(LayerEval {
                    kappa_l,
                    gamma_l,
                    inv_s: (q - phibar) / (1.0 - phibar),
                    dlog_s: phibar / (q - phibar) - phibar / (1.0 - phibar),
                })
            }
        }
    }
}

/// Smallest κ with df̄₁(κ) = target (df̄₁ is strictly decreasing).
fn kappa_at_dfbar(covariates: &Spectrum, sigma_xi2: f64, target: f64) -> Result<f64> {
    if sigma_xi2 == 0.0 {
        if target >= 1.0 {
            return Ok(0.0);
        }
        return covariates.kappa_at_df1(target);
    }
    let f = |k: f64| match covariates.df1(k) {
        Ok(d1) => d1 + sigma_xi2 / k - target,
        Err(_) => f64::NAN,
    };
    let mut lo = 1.0;
    for _ in 0..2100 {
        if f(lo) > 0.0 {
            break;
        }
        lo /= 16.0;
    }
    let mut hi = 1.0;
    for _ in 0..2100 {
        if f(hi) < 0.0 {
            break;
        }
        hi *= 16.0;
    }
    let root = numerics::bisect(f, lo, hi, |x| 1e-14 * (1.0 + x))?;
    let df = |k: f64| {
        let d1 = covariates.df1(k).unwrap_or(f64::NAN);
        let d2 = covariates.df2(k).unwrap_or(f64::NAN);
        -((d1 - d2) / k + sigma_xi2 / (k * k))
    };
    Ok(numerics::newton_polish(f, df, root, lo, hi))
}

/// Assemble the full state once κ₂ is known. `kappa1` and `dlog_ratio` may be
/// pinned by a ridgeless regime (κ₁ = 0 forces d log κ₂/d log κ₁ = 0).
fn state_at(
    model: &ModelSpec,
    kappa2: f64,
    kappa1_pin: Option<f64>,
    dlog_pin: Option<f64>,
    regime: Regime,
) -> Result<RenormState> {
    let d = model.input_dim()?;
    let (df, pf) = (d as f64, model.samples as f64);
    let df1 = model.covariates.df1(kappa2)?;
    let df2 = model.covariates.df2(kappa2)?;
    let dfbar1 = if model.feature_noise_var > 0.0 {
        df1 + model.feature_noise_var / kappa2
    } else {
        df1
    };
    let mut kappa_per_layer = Vec::with_capacity(model.layers.len());
    let mut gamma_per_layer = Vec::with_capacity(model.layers.len());
    let mut inv_s = 1.0;
    let mut dlog_s = 0.0;
    for layer in &model.layers {
        let ev = eval_layer(layer, d, model.samples, dfbar1)?;
        kappa_per_layer.push(ev.kappa_l);
        gamma_per_layer.push(ev.gamma_l);
        inv_s *= ev.inv_s;
        dlog_s += ev.dlog_s;
    }
    let kappa1 = kappa1_pin.unwrap_or_else(|| {
        // κ₂·Π S⁻¹ and λ/(1 − (D/P)df̄₁) agree at the solved state, but near
        // a bottleneck pole the product cancels catastrophically (Π S⁻¹ → 0)
        // while the ridge form stays well conditioned, and vice versa near
        // the interpolation threshold. A relative error δ in κ₂ is amplified
        // by 1/dlog_ratio in the product and by (D/P)(df̄₁ − df₂)/(1 − (D/P)df̄₁)
        // in the ridge form; pick whichever is smaller.
        let product = kappa2 * inv_s;
        let denom = 1.0 - (df / pf) * dfbar1;
        if model.ridge > 0.0 && denom > 0.0 {
            let amp_ridge = (df / pf) * (dfbar1 - df2) / denom;
            let amp_product = (dfbar1 + dlog_s * (dfbar1 - df2)) / dfbar1;
            if amp_ridge < amp_product {
                model.ridge / denom
            } else {
                product
            }
        } else {
            product
        }
    });
    // d log κ₁/d log κ₂ = 1 + (dlog S/dlog φ̄)·(φ̄ − df₂)/φ̄; dlog_ratio is
    // its reciprocal (eq. for the train-test gap chain rule).
    let dlog_ratio =
        dlog_pin.unwrap_or_else(|| dfbar1 / (dfbar1 + dlog_s * (dfbar1 - df2)));
    let one_minus_gamma1 =
        (1.0 - (df / pf) * dfbar1) + (df / pf) * (dfbar1 - df2) * dlog_ratio;
    let gamma1 = (df / pf) * (dfbar1 - dlog_ratio * (dfbar1 - df2));
    let gamma2 = (df / pf) * df2;
    Ok(RenormState {
        kappa1,
        kappa2,
        kappa_per_layer,
        gamma1,
        gamma2,
        gamma_per_layer,
        df1,
        df2,
        dfbar1,
        dlog_ratio,
        regime,
        one_minus_gamma1,
    })
}

/// Informational regime label for a solved finite-λ state.
fn classify(model: &ModelSpec, d: usize) -> Regime {
    let p = model.samples;
    if model.feature_noise_var > 0.0 {
        let n = model.layers[0].width;
        return if n <= p { Regime::Underparameterized } else { Regime::Overparameterized };
    }
    let min_w = model.min_width();
    if d <= p && d <= min_w {
        Regime::Underparameterized
    } else if min_w < d && min_w <= p {
        let idx = model.layers.iter().position(|l| l.width == min_w).unwrap();
        Regime::Bottlenecked(idx)
    } else {
        Regime::Overparameterized
    }
}

/// Classify the λ = 0 behavior; exact cross-category ties are genuine
/// double-descent points and come back as `Error::Singular`.
pub fn ridgeless_regime(model: &ModelSpec) -> Result<Regime> {
    model.validate()?;
    if model.ridge != 0.0 {
        return Err(Error::Config("ridgeless_regime requires lambda = 0".into()));
    }
    let d = model.input_dim()?;
    let p = model.samples;
    if model.feature_noise_var > 0.0 {
        let n = model.layers[0].width;
        return match n.cmp(&p) {
            std::cmp::Ordering::Less => Ok(Regime::Underparameterized),
            std::cmp::Ordering::Equal => Err(Error::Singular(
                "ridgeless feature-noise model at N = P".into(),
            )),
            std::cmp::Ordering::Greater => Ok(Regime::Overparameterized),
        };
    }
    let min_w = model.min_width();
    if d < p && d <= min_w {
        Ok(Regime::Underparameterized)
    } else if min_w < d && min_w < p {
        let idx = model.layers.iter().position(|l| l.width == min_w).unwrap();
        Ok(Regime::Bottlenecked(idx))
    } else if p < d && p < min_w {
        Ok(Regime::Overparameterized)
    } else {
        Err(Error::Singular(format!(
            "ridgeless tie among D = {d}, P = {p}, min width = {min_w}"
        )))
    }
}

fn solve_state(model: &ModelSpec) -> Result<RenormState> {
    model.validate()?;
    let p = model.samples;
    let lambda = model.ridge;

    if model.layers.is_empty() {
        // Plain ridge regression: κ₁ = κ₂ = κ, S_{FFᵀ} = 1.
        let finite = model.covariates.is_finite();
        let n = model.covariates.dim().unwrap_or(0);
        let (kappa, gamma) = solve_kappa_lr(&model.covariates, n, p, lambda)?;
        let df1 = model.covariates.df1(kappa)?;
        let df2 = model.covariates.df2(kappa)?;
        let regime = if finite && n <= p {
            Regime::Underparameterized
        } else {
            Regime::Overparameterized
        };
        return Ok(RenormState {
            kappa1: kappa,
            kappa2: kappa,
            kappa_per_layer: Vec::new(),
            gamma1: gamma,
            gamma2: gamma,
            gamma_per_layer: Vec::new(),
            df1,
            df2,
            dfbar1: df1,
            dlog_ratio: 1.0,
            regime,
            one_minus_gamma1: 1.0 - gamma,
        });
    }

    let d = model.input_dim()?;
    let (df, pf) = (d as f64, p as f64);
    let sigma_xi2 = model.feature_noise_var;
    let cov = &model.covariates;

    if lambda == 0.0 {
        let regime = ridgeless_regime(model)?;
        return match regime {
            Regime::Underparameterized if sigma_xi2 == 0.0 => {
                state_at(model, 0.0, Some(0.0), Some(1.0), regime)
            }
            Regime::Underparameterized => {
                // Feature-noise model, N < P: κ₁ = 0 but κ₂ > 0 solves
                // df̄₁(κ₂) = N/D.
                let n = model.layers[0].width as f64;
                let kappa2 = kappa_at_dfbar(cov, sigma_xi2, n / df)?;
                state_at(model, kappa2, Some(0.0), Some(0.0), regime)
            }
            Regime::Bottlenecked(_) => {
                let kappa2 = kappa_at_dfbar(cov, sigma_xi2, model.min_width() as f64 / df)?;
                state_at(model, kappa2, Some(0.0), Some(0.0), regime)
            }
            Regime::Overparameterized => {
                let kappa2 = kappa_at_dfbar(cov, sigma_xi2, pf / df)?;
                state_at(model, kappa2, None, None, regime)
            }
        };
    }

    // Finite ridge: the physical branch needs φ̄ below every S-transform
    // pole, i.e. φ̄ < c* = min(P/D, min_ℓ N_ℓ/D).
    let c_star = (pf / df).min(model.min_width() as f64 / df);
    let kappa_lo = kappa_at_dfbar(cov, sigma_xi2, c_star)?;
    let residual = |k: f64| -> f64 {
        if k == 0.0 {
            return -lambda;
        }
        let phibar = match cov.df1(k) {
            Ok(d1) => d1 + if sigma_xi2 > 0.0 { sigma_xi2 / k } else { 0.0 },
            Err(_) => return f64::NAN,
        };
        let mut g = k * (1.0 - (df / pf) * phibar);
        for layer in &model.layers {
            match eval_layer(layer, d, p, phibar) {
                Ok(ev) => g *= ev.inv_s,
                Err(_) => return f64::NAN,
            }
        }
        g - lambda
    };
    let mut hi = kappa_lo.max(1.0).max(lambda);
    for _ in 0..2100 {
        if residual(hi) > 0.0 {
            break;
        }
        hi *= 4.0;
    }
    if !(residual(hi) > 0.0) {
        return Err(Error::NoSolution("could not bracket the renormalized ridge".into()));
    }
    let root = numerics::bisect(&residual, kappa_lo, hi, |x| 1e-14 * (1.0 + x))?;
    // Newton polish with the analytic log-derivative of the residual.
    let deriv = |k: f64| -> f64 {
        let d1 = cov.df1(k).unwrap_or(f64::NAN);
        let d2 = cov.df2(k).unwrap_or(f64::NAN);
        let phibar = d1 + if sigma_xi2 > 0.0 { sigma_xi2 / k } else { 0.0 };
        let mut dlog_s = 0.0;
        for layer in &model.layers {
            match eval_layer(layer, d, p, phibar) {
                Ok(ev) => dlog_s += ev.dlog_s,
                Err(_) => return f64::NAN,
            }
        }
        let sw_term = (df / pf) * (phibar - d2) / (1.0 - (df / pf) * phibar);
        ((residual(k) + lambda) / k) * (1.0 + sw_term + dlog_s * (phibar - d2) / phibar)
    };
    let kappa2 = numerics::newton_polish(&residual, deriv, root, kappa_lo, hi);
    state_at(model, kappa2, None, None, classify(model, d))
}

/// Solve the renormalization state of a (deep) linear random-feature model.
pub fn solve_lrf(model: &ModelSpec) -> Result<RenormState> {
    if model.feature_noise_var > 0.0 {
        return Err(Error::Config(
            "solve_lrf requires zero feature noise; use solve_nlrf".into(),
        ));
    }
    solve_state(model)
}

/// Solve the renormalization state of a noisy random-feature model
/// (Gaussian-equivalent nonlinear features, §-wise a single white layer
/// plus isotropic additive noise on the features).
pub fn solve_nlrf(model: &ModelSpec) -> Result<RenormState> {
    if !(model.layers.len() == 1 && model.layers[0].kind == LayerKind::GaussianWhite) {
        return Err(Error::Config(
            "solve_nlrf requires exactly one GaussianWhite layer".into(),
        ));
    }
    solve_state(model)
}
