//! Property-based checks of the analytic invariants: df-functional bounds
//! and identities, S-transform algebra, solver state invariants, and risk
//! decomposition closure on randomized model specifications.

use freeridge::free_transforms::{spectrum_s, EnsembleTransform};
use freeridge::renormalizer::solve_lrf;
use freeridge::risk::{lr_risk, lrf_risk};
use freeridge::scaling::{asymptotic_rate, fit_power_law, ScalingInputs};
use freeridge::spectrum::{tf_all, Spectrum, TeacherProfile};
use freeridge::{FeatureLayer, ModelSpec};
use proptest::prelude::*;

fn spectrum_strategy() -> impl Strategy<Value = Spectrum> {
    (
        proptest::collection::vec((0.01f64..10.0, 1usize..40), 1..4),
        any::<bool>(),
    )
        .prop_map(|(levels, _)| {
            // Distinct, descending eigenvalues.
            let mut eigs: Vec<f64> = levels.iter().map(|&(e, _)| e).collect();
            eigs.sort_by(|a, b| b.total_cmp(a));
            eigs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let mults: Vec<usize> = levels.iter().take(eigs.len()).map(|&(_, m)| m).collect();
            Spectrum::discrete(eigs, mults).unwrap()
        })
}

fn kappa_strategy() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn df_functionals_are_bounded_and_ordered(spec in spectrum_strategy(), kappa in kappa_strategy()) {
        let df1 = spec.df1(kappa).unwrap();
        let df2 = spec.df2(kappa).unwrap();
        prop_assert!(df2 >= 0.0);
        prop_assert!(df1 >= df2);
        prop_assert!(df1 <= 1.0);
        // df₂ ≤ df₁ / (1 + κ/η_max).
        prop_assert!(df2 <= df1 / (1.0 + kappa / spec.eta_max()) + 1e-14);
        // df₁ strictly decreasing in κ.
        prop_assert!(spec.df1(kappa * 1.5).unwrap() < df1);
    }

    #[test]
    fn kappa_df1_derivative_is_df2(spec in spectrum_strategy(), kappa in kappa_strategy()) {
        let h = kappa * 1e-6;
        let up = (kappa + h) * spec.df1(kappa + h).unwrap();
        let dn = (kappa - h) * spec.df1(kappa - h).unwrap();
        let fd = (up - dn) / (2.0 * h);
        let df2 = spec.df2(kappa).unwrap();
        prop_assert!((fd - df2).abs() <= 1e-6 * df2.max(1e-12), "fd {fd} vs df2 {df2}");
    }

    #[test]
    fn isotropic_teacher_tf_equals_df(
        spec in spectrum_strategy(),
        kappa in kappa_strategy(),
        norm in 0.1f64..5.0,
    ) {
        let teacher = TeacherProfile::IsotropicAverage { norm };
        let tf = tf_all(&spec, &teacher, kappa).unwrap();
        let d = spec.dim().unwrap() as f64;
        prop_assert!((tf.tf1 - norm * spec.df1(kappa).unwrap()).abs() < 1e-12 * norm);
        prop_assert!((tf.tf2 - norm * spec.df2(kappa).unwrap()).abs() < 1e-12 * norm);
        // tf1′ = −(norm/D)·Σ η/(η+κ)², tied to the exact identity
        // κ·tf₂ = κ·tf₁ + κ²·tf₁′.
        let lhs = kappa * tf.tf2;
        let rhs = kappa * tf.tf1 + kappa * kappa * tf.tf1_prime;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-12));
        let _ = d;
    }

    #[test]
    fn s_transform_multiplicativity_and_scaling(
        spec in spectrum_strategy(),
        q in 0.1f64..3.0,
        t in -0.45f64..-0.05,
        a in 0.2f64..5.0,
    ) {
        // S_{Σ^{1/2} W Σ^{1/2}}(t) = S_W(t) · S_Σ(t).
        let structured = EnsembleTransform::StructuredWishart { population: spec.clone(), q };
        let white = EnsembleTransform::WhiteWishart { q };
        let lhs = structured.s_transform(t).unwrap();
        let rhs = white.s_transform(t).unwrap() * spectrum_s(&spec, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());

        // S_{aΣ}(t) = a⁻¹ S_Σ(t).
        let (eigs, mults): (Vec<f64>, Vec<usize>) =
            spec.levels().unwrap().into_iter().unzip();
        let scaled = Spectrum::discrete(eigs.iter().map(|e| a * e).collect(), mults).unwrap();
        let s_scaled = spectrum_s(&scaled, t).unwrap();
        let s_plain = spectrum_s(&spec, t).unwrap();
        prop_assert!((s_scaled - s_plain / a).abs() <= 1e-10 * (s_plain / a).abs());
    }

    #[test]
    fn solver_state_invariants(
        spec in spectrum_strategy(),
        // Non-expansive chain: expansive white layers (width > D) have
        // S_{FFᵀ} < 1 and legitimately give κ₁ > κ₂ (the 1/fan_in scaling
        // shrinks the effective input-space ridge by D/N).
        width_frac in 0.2f64..=1.0,
        p_frac in 0.1f64..2.5,
        lambda_exp in -8.0f64..1.0,
        eps2 in 0.0f64..2.0,
    ) {
        let d = spec.dim().unwrap();
        let width = ((d as f64 * width_frac) as usize).clamp(1, d);
        let p = ((d as f64 * p_frac) as usize).max(2);
        let lambda = 10f64.powf(lambda_exp);
        let model = ModelSpec {
            covariates: spec,
            teacher: TeacherProfile::IsotropicAverage { norm: 1.0 },
            layers: vec![FeatureLayer::white(width)],
            feature_noise_var: 0.0,
            label_noise_var: eps2,
            ridge: lambda,
            samples: p,
        };
        let state = solve_lrf(&model).unwrap();
        // κ₂ ≥ κ₁ ≥ λ and the log-derivative is a proper fraction.
        prop_assert!(state.kappa1 >= lambda * (1.0 - 1e-9));
        prop_assert!(state.kappa2 >= state.kappa1 * (1.0 - 1e-9));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&state.dlog_ratio));
        // Solved-state identity λ/κ₁ = 1 − (D/P) df̄₁.
        let ratio = d as f64 / p as f64;
        let lhs = lambda / state.kappa1;
        let rhs = 1.0 - ratio * state.dfbar1;
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn risk_decomposition_closes(
        spec in spectrum_strategy(),
        width_frac in 0.3f64..3.0,
        p_frac in 0.1f64..2.5,
        lambda_exp in -6.0f64..1.0,
        eps2 in 0.0f64..2.0,
    ) {
        let d = spec.dim().unwrap();
        let width = ((d as f64 * width_frac) as usize).max(2);
        let p = ((d as f64 * p_frac) as usize).max(2);
        let model = ModelSpec {
            covariates: spec,
            teacher: TeacherProfile::IsotropicAverage { norm: 1.0 },
            layers: vec![FeatureLayer::white(width)],
            feature_noise_var: 0.0,
            label_noise_var: eps2,
            ridge: 10f64.powf(lambda_exp),
            samples: p,
        };
        let state = solve_lrf(&model).unwrap();
        let r = lrf_risk(&model, &state).unwrap();
        let sum = r.bias2 + r.var_x + r.var_f + r.var_xf + r.var_xeps + r.var_xfeps;
        prop_assert!((sum - r.e_g).abs() <= 1e-10 * r.e_g.max(1e-12), "{sum} vs {}", r.e_g);
        prop_assert!((r.gcv - (r.e_g + eps2)).abs() <= 1e-10 * r.gcv.max(1e-12));
        prop_assert!(r.e_tr <= r.gcv * (1.0 + 1e-12)); // S ≥ 1 ⇒ E_out ≥ E_tr
        for v in [r.bias2, r.var_x, r.var_f, r.var_xf, r.var_xeps, r.var_xfeps] {
            prop_assert!(v >= -1e-12);
        }
    }

    #[test]
    fn plain_ridge_has_no_feature_variance(
        spec in spectrum_strategy(),
        p_frac in 0.1f64..2.5,
        lambda_exp in -6.0f64..1.0,
        eps2 in 0.0f64..2.0,
    ) {
        let d = spec.dim().unwrap();
        let p = ((d as f64 * p_frac) as usize).max(2);
        let model = ModelSpec {
            covariates: spec,
            teacher: TeacherProfile::IsotropicAverage { norm: 1.0 },
            layers: vec![],
            feature_noise_var: 0.0,
            label_noise_var: eps2,
            ridge: 10f64.powf(lambda_exp),
            samples: p,
        };
        let r = lr_risk(&model).unwrap();
        prop_assert_eq!(r.var_f, 0.0);
        prop_assert_eq!(r.var_xf, 0.0);
        prop_assert_eq!(r.var_xfeps, 0.0);
        prop_assert_eq!(r.var_feps, 0.0);
    }

    #[test]
    fn asymptotic_rate_is_the_min_of_its_terms(
        alpha in 1.1f64..3.0,
        r in 0.1f64..2.0,
        l in 0.05f64..4.0,
        q in 0.1f64..3.0,
        c in 0.0f64..1.0,
    ) {
        let ins = ScalingInputs { alpha, r, l, q_exp: q, c, sigma_eps2: 0.0 };
        let (rate, sources) = asymptotic_rate(&ins, false).unwrap();
        prop_assert!(!sources.is_empty());
        let frac = (l / alpha).min(1.0);
        let t1 = 2.0 * alpha * r.min(1.0) * frac;
        let t2 = 2.0 * alpha * q * r.min(0.5);
        let t3 = (alpha - c) * frac + q * c;
        prop_assert!(rate <= t1 + 1e-12);
        prop_assert!(rate <= t2 + 1e-12);
        prop_assert!(rate <= t3 + 1e-12);
        prop_assert!(rate >= t1.min(t2).min(t3) - 1e-12);
        // The noisy rate can only be smaller.
        let noisy = ScalingInputs { sigma_eps2: 0.5, ..ins };
        let (nrate, _) = asymptotic_rate(&noisy, true).unwrap();
        prop_assert!(nrate <= rate + 1e-12);
    }

    #[test]
    fn fit_recovers_synthetic_exponents(
        expo in -3.0f64..3.0,
        scale in 0.1f64..10.0,
    ) {
        let x: Vec<f64> = (1..=12).map(|i| 1.5f64.powi(i)).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(expo)).collect();
        let (fitted, r2) = fit_power_law(&x, &y, 0..x.len()).unwrap();
        prop_assert!((fitted - expo).abs() < 1e-9);
        prop_assert!(r2 > 1.0 - 1e-9);
    }
}
