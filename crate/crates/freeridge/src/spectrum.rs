//! Covariance spectra and teacher profiles, plus the degrees-of-freedom
//! (df) and teacher-weighted (tf) functionals everything else is built on.
//!
//! For a covariance with eigenvalues η_k and ridge-scale κ:
//!   df1(κ) = (1/D)·Σ η_k/(η_k+κ)          df2(κ) = (1/D)·Σ η_k²/(η_k+κ)²
//!   tf1(κ) = Σ η_k w̄_k²/(η_k+κ)           tf2(κ) = Σ η_k² w̄_k²/(η_k+κ)²
//!   tf1′(κ) = −Σ η_k w̄_k²/(η_k+κ)²
//!
//! Infinite power-law spectra evaluate df-functionals as the unnormalized
//! mode-count integral ∫₁^∞ η(k)/(η(k)+κ) dk (the 1/D normalization is
//! meaningless at D = ∞; downstream formulas always consume D·df1 anyway),
//! so df1 may exceed 1 at small κ in that case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    Isotropic {
        dim: usize,
    },
    Discrete {
        eigenvalues: Vec<f64>,
        multiplicities: Vec<usize>,
    },
    /// η_k = scale·k^{-alpha}, k = 1..dim (or k unbounded when dim is None).
    PowerLaw {
        alpha: f64,
        dim: Option<usize>,
        scale: f64,
    },
    /// Discrete spectrum whose levels are addressable by index, for the
    /// multiple-descent approximation.
    Plateaus {
        levels: Vec<f64>,
        multiplicities: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeacherProfile {
    /// w̄_k aligned with the spectrum's descending eigen-order (length D).
    Explicit { coefficients: Vec<f64> },
    /// η_k w̄_k² = k^{-(1+2αr)}; only valid on a PowerLaw spectrum.
    SourcePowerLaw { r: f64 },
    /// Teacher averaged over the sphere: tf-functionals reduce to
    /// norm·df-functionals exactly.
    IsotropicAverage { norm: f64 },
}

fn sort_levels(values: Vec<f64>, mults: Vec<usize>) -> Result<(Vec<f64>, Vec<usize>)> {
    if values.is_empty() || values.len() != mults.len() {
        return Err(Error::Config(
            "eigenvalue and multiplicity lists must be non-empty and equal length".into(),
        ));
    }
    if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("eigenvalues must be strictly positive".into()));
    }
    if mults.iter().any(|&m| m == 0) {
        return Err(Error::Config("multiplicities must be >= 1".into()));
    }
    let mut pairs: Vec<(f64, usize)> = values.into_iter().zip(mults).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs.into_iter().unzip())
}

impl Spectrum {
    pub fn isotropic(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(Spectrum::Isotropic { dim })
    }

    pub fn discrete(eigenvalues: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        let (eigenvalues, multiplicities) = sort_levels(eigenvalues, multiplicities)?;
        Ok(Spectrum::Discrete { eigenvalues, multiplicities })
    }

    pub fn power_law(alpha: f64, dim: Option<usize>, scale: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config("power-law exponent must be positive".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::Config("power-law scale must be positive".into()));
        }
        if dim == Some(0) {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(Spectrum::PowerLaw { alpha, dim, scale })
    }

    pub fn plateaus(levels: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        let (levels, multiplicities) = sort_levels(levels, multiplicities)?;
        Ok(Spectrum::Plateaus { levels, multiplicities })
    }

    /// Total dimension; None for an infinite power law.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Spectrum::Isotropic { dim } => Some(*dim),
            Spectrum::Discrete { multiplicities, .. }
            | Spectrum::Plateaus { multiplicities, .. } => Some(multiplicities.iter().sum()),
            Spectrum::PowerLaw { dim, .. } => *dim,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dim().is_some()
    }

    pub fn eta_max(&self) -> f64 {
        match self {
            Spectrum::Isotropic { .. } => 1.0,
            Spectrum::Discrete { eigenvalues, .. } => eigenvalues[0],
            Spectrum::Plateaus { levels, .. } => levels[0],
            Spectrum::PowerLaw { scale, .. } => *scale,
        }
    }

    /// Distinct (eigenvalue, multiplicity) levels, descending. Finite only.
    pub fn levels(&self) -> Result<Vec<(f64, usize)>> {
        match self {
            Spectrum::Isotropic { dim } => Ok(vec![(1.0, *dim)]),
            Spectrum::Discrete { eigenvalues, multiplicities }
            | Spectrum::Plateaus { levels: eigenvalues, multiplicities } => Ok(eigenvalues
                .iter()
                .copied()
                .zip(multiplicities.iter().copied())
                .collect()),
            Spectrum::PowerLaw { alpha, dim: Some(d), scale } => Ok((1..=*d)
                .map(|k| (scale * (k as f64).powf(-alpha), 1))
                .collect()),
            Spectrum::PowerLaw { dim: None, .. } => Err(Error::Domain(
                "infinite power-law spectrum has no finite eigenvalue list".into(),
            )),
        }
    }

    /// All eigenvalues expanded by multiplicity, descending. Finite only.
    pub fn eigenvalues_desc(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (eta, m) in self.levels()? {
            out.extend(std::iter::repeat(eta).take(m));
        }
        Ok(out)
    }

    pub fn mean_eigenvalue(&self) -> Result<f64> {
        let levels = self.levels()?;
        let d: usize = levels.iter().map(|l| l.1).sum();
        Ok(levels.iter().map(|(e, m)| e * *m as f64).sum::<f64>() / d as f64)
    }

    fn check_kappa(&self, kappa: f64) -> Result<()> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        if kappa == 0.0 && !self.is_finite() {
            return Err(Error::Domain(
                "df-functionals diverge at kappa = 0 on an infinite spectrum".into(),
            ));
        }
        if let Spectrum::PowerLaw { alpha, dim: None, .. } = self {
            if *alpha <= 1.0 {
                return Err(Error::Domain(
                    "infinite power-law df-functionals require alpha > 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn df1(&self, kappa: f64) -> Result<f64> {
        self.check_kappa(kappa)?;
        match self {
            Spectrum::PowerLaw { alpha, dim: None, scale } => {
                Ok(power_law_df_integral(*alpha, kappa / scale, 1))
            }
            _ => {
                if kappa == 0.0 {
                    return Ok(1.0); // all eigenvalues strictly positive
                }
                let levels = self.levels()?;
                let d: usize = levels.iter().map(|l| l.1).sum();
                Ok(levels
                    .iter()
                    .map(|(e, m)| *m as f64 * e / (e + kappa))
                    .sum::<f64>()
                    / d as f64)
            }
        }
    }

    pub fn df2(&self, kappa: f64) -> Result<f64> {
        self.check_kappa(kappa)?;
        match self {
            Spectrum::PowerLaw { alpha, dim: None, scale } => {
                Ok(power_law_df_integral(*alpha, kappa / scale, 2))
            }
            _ => {
                if kappa == 0.0 {
                    return Ok(1.0);
                }
                let levels = self.levels()?;
                let d: usize = levels.iter().map(|l| l.1).sum();
                Ok(levels
                    .iter()
                    .map(|(e, m)| *m as f64 * (e / (e + kappa)).powi(2))
                    .sum::<f64>()
                    / d as f64)
            }
        }
    }

    /// Solve df1(κ) = target for κ ≥ 0 (the functional inverse behind the
    /// ζ-transform). Finite spectra require target ∈ (0, 1]; infinite
    /// power laws accept any positive target.
    pub fn kappa_at_df1(&self, target: f64) -> Result<f64> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::NoSolution(format!(
                "df1 inverse needs a positive finite target, got {target}"
            )));
        }
        if self.is_finite() {
            if target > 1.0 {
                return Err(Error::NoSolution(format!(
                    "df1 <= 1 on a finite spectrum; no kappa gives df1 = {target}"
                )));
            }
            if target == 1.0 {
                return Ok(0.0);
            }
        }
        // df1 is strictly decreasing; bracket geometrically then bisect.
        let mut lo = self.eta_max();
        let mut hi = lo;
        for _ in 0..2100 {
            if self.df1(lo)? >= target {
                break;
            }
            lo /= 16.0;
        }
        for _ in 0..2100 {
            if self.df1(hi)? <= target {
                break;
            }
            hi *= 16.0;
        }
        if self.df1(lo)? < target || self.df1(hi)? > target {
            return Err(Error::NoSolution(format!("could not bracket df1 = {target}")));
        }
        let f = |k: f64| self.df1(k).unwrap_or(f64::NAN) - target;
        let root = numerics::bisect(&f, lo, hi, |x| 1e-13 * (1.0 + x))?;
        let df = |k: f64| {
            let d1 = self.df1(k).unwrap_or(f64::NAN);
            let d2 = self.df2(k).unwrap_or(f64::NAN);
            -(d1 - d2) / k
        };
        Ok(numerics::newton_polish(f, df, root, lo, hi))
    }
}

/// ∫₁^∞ dk (η_k/(η_k+κ))^m for η_k = k^{-α} via the substitution
/// u = k·κ^{1/α}, evaluated as quadrature plus a series tail.
fn power_law_df_integral(alpha: f64, kappa_over_scale: f64, m: i32) -> f64 {
    let a = kappa_over_scale.powf(1.0 / alpha);
    let u_switch = a.max(2.0);
    let integrand = |u: f64| (1.0 + u.powf(alpha)).powi(-m);
    let mut j = if a < u_switch {
        numerics::integrate(&integrand, a, u_switch, 1e-12)
    } else {
        0.0
    };
    j += reciprocal_power_tail(u_switch, alpha, m);
    j / a
}

/// ∫_U^∞ du (1+u^α)^{-m} for U^{-α} < 1/2, by binomial expansion in u^{-α}.
fn reciprocal_power_tail(u: f64, alpha: f64, m: i32) -> f64 {
    let mut sum = 0.0;
    let mut coeff = 1.0; // C(m+j-1, j) with alternating sign folded in
    for j in 0..200 {
        let p = (m + j) as f64 * alpha;
        let term = coeff * u.powf(1.0 - p) / (p - 1.0);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
        coeff *= -((m + j) as f64) / (j + 1) as f64;
    }
    sum
}

/// tf1, tf1′ and tf2 in one pass (they share all the per-mode work).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfValues {
    pub tf1: f64,
    pub tf1_prime: f64,
    pub tf2: f64,
}

pub fn tf1(spectrum: &Spectrum, teacher: &TeacherProfile, kappa: f64) -> Result<f64> {
    Ok(tf_all(spectrum, teacher, kappa)?.tf1)
}

pub fn tf1_prime(spectrum: &Spectrum, teacher: &TeacherProfile, kappa: f64) -> Result<f64> {
    Ok(tf_all(spectrum, teacher, kappa)?.tf1_prime)
}

pub fn tf2(spectrum: &Spectrum, teacher: &TeacherProfile, kappa: f64) -> Result<f64> {
    Ok(tf_all(spectrum, teacher, kappa)?.tf2)
}

pub fn tf_all(spectrum: &Spectrum, teacher: &TeacherProfile, kappa: f64) -> Result<TfValues> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
    }
    match teacher {
        TeacherProfile::IsotropicAverage { norm } => {
            if !(*norm > 0.0) {
                return Err(Error::Config("teacher norm must be positive".into()));
            }
            if !spectrum.is_finite() {
                return Err(Error::Config(
                    "isotropic-average teacher requires a finite spectrum".into(),
                ));
            }
            let d1 = spectrum.df1(kappa)?;
            let d2 = spectrum.df2(kappa)?;
            let levels = spectrum.levels()?;
            let d: usize = levels.iter().map(|l| l.1).sum();
            // (1/D)·Σ η/(η+κ)², finite at κ=0 because all η > 0
            let minus_prime = levels
                .iter()
                .map(|(e, m)| *m as f64 * e / ((e + kappa) * (e + kappa)))
                .sum::<f64>()
                / d as f64;
            Ok(TfValues { tf1: norm * d1, tf1_prime: -norm * minus_prime, tf2: norm * d2 })
        }
        TeacherProfile::Explicit { coefficients } => {
            let etas = spectrum.eigenvalues_desc().map_err(|_| {
                Error::Config("explicit teacher requires a finite spectrum".into())
            })?;
            if coefficients.len() != etas.len() {
                return Err(Error::Config(format!(
                    "teacher has {} coefficients but spectrum dimension is {}",
                    coefficients.len(),
                    etas.len()
                )));
            }
            let mut v = TfValues { tf1: 0.0, tf1_prime: 0.0, tf2: 0.0 };
            for (&eta, &w) in etas.iter().zip(coefficients) {
                let num = eta * w * w;
                let den = eta + kappa;
                v.tf1 += num / den;
                v.tf1_prime -= num / (den * den);
                v.tf2 += num * eta / (den * den);
            }
            Ok(v)
        }
        TeacherProfile::SourcePowerLaw { r } => {
            if !(*r > 0.0) {
                return Err(Error::Config("source exponent must be positive".into()));
            }
            let (alpha, dim, scale) = match spectrum {
                Spectrum::PowerLaw { alpha, dim, scale } => (*alpha, *dim, *scale),
                _ => {
                    return Err(Error::Config(
                        "source power-law teacher requires a PowerLaw spectrum".into(),
                    ))
                }
            };
            if dim.is_none() && kappa == 0.0 && *r <= 0.5 {
                return Err(Error::Domain(
                    "tf-functionals at kappa = 0 on an infinite spectrum need r > 1/2".into(),
                ));
            }
            source_power_law_tf(alpha, *r, scale, dim, kappa)
        }
    }
}

/// Realized teacher coefficients w̄_k (descending eigen-order) for
/// deterministic teacher profiles on finite spectra.
pub fn teacher_weights(spectrum: &Spectrum, teacher: &TeacherProfile) -> Result<Vec<f64>> {
    match teacher {
        TeacherProfile::Explicit { coefficients } => {
            let d = spectrum
                .dim()
                .ok_or_else(|| Error::Config("explicit teacher requires a finite spectrum".into()))?;
            if coefficients.len() != d {
                return Err(Error::Config(format!(
                    "teacher has {} coefficients but spectrum dimension is {d}",
                    coefficients.len()
                )));
            }
            Ok(coefficients.clone())
        }
        TeacherProfile::SourcePowerLaw { r } => match spectrum {
            Spectrum::PowerLaw { alpha, dim: Some(d), scale } => Ok((1..=*d)
                .map(|k| {
                    let k = k as f64;
                    // w̄_k² = k^{-(1+2αr)} / η_k
                    (k.powf(-(1.0 + 2.0 * alpha * r)) / (scale * k.powf(-alpha))).sqrt()
                })
                .collect()),
            _ => Err(Error::Config(
                "source power-law teacher weights require a finite PowerLaw spectrum".into(),
            )),
        },
        TeacherProfile::IsotropicAverage { .. } => Err(Error::Config(
            "isotropic-average teacher has no deterministic coefficients; realize it with a seed"
                .into(),
        )),
    }
}

fn source_power_law_tf(
    alpha: f64,
    r: f64,
    scale: f64,
    dim: Option<usize>,
    kappa: f64,
) -> Result<TfValues> {
    let p = 1.0 + 2.0 * alpha * r; // η_k w̄_k² = k^{-p}
    let term = |k: f64| {
        let num = k.powf(-p);
        let eta = scale * k.powf(-alpha);
        let den = eta + kappa;
        (num / den, num / (den * den), num * eta / (den * den))
    };
    let mut v = TfValues { tf1: 0.0, tf1_prime: 0.0, tf2: 0.0 };
    match dim {
        Some(d) => {
            for k in 1..=d {
                let (a, b, c) = term(k as f64);
                v.tf1 += a;
                v.tf1_prime -= b;
                v.tf2 += c;
            }
        }
        None => {
            // Sum explicitly until the ridge dominates every remaining mode,
            // then close with a midpoint-corrected integral tail.
            let k_ridge = if kappa > 0.0 { (kappa / scale).powf(-1.0 / alpha) } else { 0.0 };
            if 20.0 * k_ridge > 2e7 {
                return Err(Error::Domain(
                    "kappa too small for infinite-spectrum tf evaluation; truncate the spectrum"
                        .into(),
                ));
            }
            let cut = ((20.0 * k_ridge).ceil() as usize).clamp(10_000, 20_000_000);
            for k in 1..=cut {
                let (a, b, c) = term(k as f64);
                v.tf1 += a;
                v.tf1_prime -= b;
                v.tf2 += c;
            }
            let a0 = cut as f64 + 0.5;
            v.tf1 += tail_sum(a0, p, alpha, scale, kappa, 1, 0.0);
            // −tf1′ diverges at κ=0 unless r > 1 (its tail decays as k^{2α−p})
            v.tf1_prime -= tail_sum(a0, p, alpha, scale, kappa, 2, 0.0);
            v.tf2 += tail_sum(a0, p + alpha, alpha, scale, kappa, 2, scale);
        }
    }
    Ok(v)
}

/// Σ_{k > cut} k^{-p}·c_extra·(η_k+κ)^{-m} tail via ∫_{cut+1/2}^∞ plus the
/// midpoint Euler-Maclaurin correction f′(a)/24. `scale_extra` multiplies
/// an extra η_k factor already folded into p.
fn tail_sum(a: f64, p: f64, alpha: f64, scale: f64, kappa: f64, m: i32, scale_extra: f64) -> f64 {
    let extra = if scale_extra > 0.0 { scale_extra } else { 1.0 };
    let f = |k: f64| extra * k.powf(-p) * (scale * k.powf(-alpha) + kappa).powi(-m);
    if kappa == 0.0 {
        // pure power law: f = extra·k^{-p}/(scale·k^{-α})^m
        let q = p - m as f64 * alpha;
        if q <= 1.0 {
            return f64::INFINITY;
        }
        let c = extra / scale.powi(m);
        let integral = c * a.powf(1.0 - q) / (q - 1.0);
        let fprime = -q * c * a.powf(-q - 1.0);
        return integral + fprime / 24.0;
    }
    // κ dominates the tail by construction of the cut; binomial expansion
    // in η/κ with term-wise power-law integrals.
    let x0 = scale * a.powf(-alpha) / kappa;
    debug_assert!(x0 < 0.5);
    let mut integral = 0.0;
    let mut coeff = extra / kappa.powi(m);
    for j in 0..200 {
        let q = p + j as f64 * alpha;
        let term = coeff * a.powf(1.0 - q) / (q - 1.0);
        integral += term;
        if term.abs() < 1e-17 * integral.abs().max(1e-300) {
            break;
        }
        coeff *= -((m + j) as f64) / (j + 1) as f64 * scale / kappa;
    }
    let h = 1e-4 * a;
    let fprime = (f(a + h) - f(a - h)) / (2.0 * h);
    integral + fprime / 24.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_level() -> Spectrum {
        Spectrum::discrete(vec![2.0, 0.5], vec![1, 1]).unwrap()
    }

    #[test]
    fn df1_isotropic() {
        let s = Spectrum::isotropic(100).unwrap();
        assert_relative_eq!(s.df1(1.0).unwrap(), 0.5);
        assert_relative_eq!(s.df1(0.0).unwrap(), 1.0);
        assert_relative_eq!(s.df2(1.0).unwrap(), 0.25);
    }

    #[test]
    fn df_two_level_oracle() {
        // (2/3 + 1/3)/2 and ((2/3)² + (1/3)²)/2
        let s = two_level();
        assert_relative_eq!(s.df1(1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(s.df2(1.0).unwrap(), 5.0 / 18.0, max_relative = 1e-15);
    }

    #[test]
    fn spectra_sorted_descending() {
        let s = Spectrum::discrete(vec![0.5, 2.0, 1.0], vec![1, 2, 1]).unwrap();
        let e = s.eigenvalues_desc().unwrap();
        assert_eq!(e, vec![2.0, 2.0, 1.0, 0.5]);
    }

    #[test]
    fn tf_two_level_oracle() {
        let s = two_level();
        let t = TeacherProfile::Explicit { coefficients: vec![1.0, 1.0] };
        let v = tf_all(&s, &t, 1.0).unwrap();
        assert_relative_eq!(v.tf1, 1.0, max_relative = 1e-15);
        // 2/9 + 0.5/2.25 = 4/9
        assert_relative_eq!(-v.tf1_prime, 4.0 / 9.0, max_relative = 1e-15);
        // tf2 = Σ η²w̄²/(η+κ)² = 4/9 + 0.25/2.25 = 4/9 + 1/9
        assert_relative_eq!(v.tf2, 5.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn isotropic_average_reduces_to_df() {
        let s = Spectrum::power_law(1.5, Some(200), 1.0).unwrap();
        let t = TeacherProfile::IsotropicAverage { norm: 3.0 };
        for &k in &[0.0, 0.01, 1.0, 50.0] {
            let v = tf_all(&s, &t, k).unwrap();
            assert_relative_eq!(v.tf1, 3.0 * s.df1(k).unwrap(), max_relative = 1e-14);
            assert_relative_eq!(v.tf2, 3.0 * s.df2(k).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn tf2_equals_tf1_at_zero_ridge() {
        let s = Spectrum::power_law(2.0, Some(50), 1.0).unwrap();
        let t = TeacherProfile::SourcePowerLaw { r: 0.75 };
        let v = tf_all(&s, &t, 0.0).unwrap();
        assert_relative_eq!(v.tf1, v.tf2, max_relative = 1e-14);
    }

    #[test]
    fn infinite_power_law_df_matches_direct_quadrature() {
        let alpha = 1.7;
        let inf = Spectrum::power_law(alpha, None, 1.0).unwrap();
        for &kap in &[0.03f64, 0.5, 4.0] {
            // integrate over k directly (no substitution) + analytic tail
            let big = 1e7;
            let direct = numerics::integrate(
                &|k: f64| 1.0 / (1.0 + kap * k.powf(alpha)),
                1.0,
                big,
                1e-11,
            ) + big.powf(1.0 - alpha) / (kap * (alpha - 1.0));
            assert_relative_eq!(inf.df1(kap).unwrap(), direct, max_relative = 1e-5);
            assert!(inf.df2(kap).unwrap() <= inf.df1(kap).unwrap());
        }
    }

    #[test]
    fn infinite_power_law_df_closed_form_alpha2() {
        // α=2: ∫₁^∞ dk/(1+κk²) = (π/2 − atan(√κ))/√κ
        let s = Spectrum::power_law(2.0, None, 1.0).unwrap();
        for &k in &[1e-4f64, 0.1, 1.0, 25.0] {
            let exact = (std::f64::consts::FRAC_PI_2 - k.sqrt().atan()) / k.sqrt();
            assert_relative_eq!(s.df1(k).unwrap(), exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn infinite_source_tf_matches_truncated_sum() {
        let inf = Spectrum::power_law(1.5, None, 1.0).unwrap();
        let t = TeacherProfile::SourcePowerLaw { r: 0.8 };
        let v = tf_all(&inf, &t, 0.01).unwrap();
        // brute-force partial sum, far past the ridge scale
        let p = 1.0 + 2.0 * 1.5 * 0.8;
        let mut tf1_sum = 0.0;
        for k in 1..8_000_000u64 {
            let k = k as f64;
            tf1_sum += k.powf(-p) / (k.powf(-1.5) + 0.01);
        }
        assert_relative_eq!(v.tf1, tf1_sum, max_relative = 1e-7);
        assert!(v.tf1_prime < 0.0 && v.tf2 > 0.0);
    }

    #[test]
    fn source_tf_at_zero_ridge_is_teacher_norm() {
        // tf1(0) = Σ w̄² = Σ k^{α−1−2αr}, convergent for r > 1/2
        let inf = Spectrum::power_law(2.0, None, 1.0).unwrap();
        let t = TeacherProfile::SourcePowerLaw { r: 1.0 };
        let v = tf_all(&inf, &t, 0.0).unwrap();
        let mut sum = 0.0;
        for k in 1..2_000_000u64 {
            sum += (k as f64).powf(2.0 - 1.0 - 4.0);
        }
        assert_relative_eq!(v.tf1, sum, max_relative = 1e-9);
        assert!(tf_all(&inf, &TeacherProfile::SourcePowerLaw { r: 0.4 }, 0.0).is_err());
    }

    #[test]
    fn kappa_at_df1_inverts() {
        let s = Spectrum::power_law(1.3, Some(500), 1.0).unwrap();
        for &target in &[0.9, 0.5, 0.05] {
            let k = s.kappa_at_df1(target).unwrap();
            assert_relative_eq!(s.df1(k).unwrap(), target, max_relative = 1e-11);
        }
        let inf = Spectrum::power_law(1.5, None, 1.0).unwrap();
        let k = inf.kappa_at_df1(37.0).unwrap();
        assert_relative_eq!(inf.df1(k).unwrap(), 37.0, max_relative = 1e-10);
    }

    #[test]
    fn domain_errors() {
        let inf = Spectrum::power_law(0.8, None, 1.0).unwrap();
        assert!(inf.df1(1.0).is_err()); // non-normalizable
        let s = two_level();
        assert!(s.df1(-1.0).is_err());
        assert!(Spectrum::discrete(vec![1.0, -2.0], vec![1, 1]).is_err());
        assert!(Spectrum::discrete(vec![1.0], vec![0]).is_err());
        let bad_teacher = TeacherProfile::Explicit { coefficients: vec![1.0] };
        assert!(tf_all(&s, &bad_teacher, 1.0).is_err());
        assert!(tf_all(&s, &TeacherProfile::SourcePowerLaw { r: 1.0 }, 1.0).is_err());
    }
}
