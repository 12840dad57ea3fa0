//! Shared fixtures for the criterion benchmarks.

use freeridge::{FeatureLayer, ModelSpec, Spectrum, TeacherProfile};

/// A structured random-features model that is representative of the solver's
/// typical workload: power-law covariates, one white layer, moderate ridge.
pub fn lrf_model(dim: usize, samples: usize) -> ModelSpec {
    ModelSpec {
        covariates: Spectrum::power_law(1.5, Some(dim), 1.0).unwrap(),
        teacher: TeacherProfile::SourcePowerLaw { r: 0.75 },
        layers: vec![FeatureLayer::white(dim / 2)],
        feature_noise_var: 0.0,
        label_noise_var: 0.25,
        ridge: 1e-3,
        samples,
    }
}
