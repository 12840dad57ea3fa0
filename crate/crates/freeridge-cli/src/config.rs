//! TOML experiment configuration: a strict (unknown-keys-rejected) mirror of
//! the library types plus sweep/output settings, with conversion into the
//! core structs.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use freeridge::free_transforms::{EnsembleTransform, ProjectionInner};
use freeridge::scaling::ScalingInputs;
use freeridge::{FeatureLayer, ModelSpec, Spectrum, TeacherProfile};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseConfig>,
    /// Relative tolerance for `compare` pass/fail gates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub covariates: SpectrumConfig,
    pub teacher: TeacherConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerConfig>,
    #[serde(default)]
    pub feature_noise_var: f64,
    #[serde(default)]
    pub label_noise_var: f64,
    pub ridge: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Isotropic { dim: usize },
    Discrete { eigenvalues: Vec<f64>, multiplicities: Vec<usize> },
    PowerLaw { alpha: f64, dim: Option<usize>, #[serde(default = "one")] scale: f64 },
    Plateaus { levels: Vec<f64>, multiplicities: Vec<usize> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherConfig {
    IsotropicAverage { norm: f64 },
    Explicit { coefficients: Vec<f64> },
    SourcePowerLaw { r: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerConfig {
    White { width: usize },
    Structured { width: usize, spectrum: SpectrumConfig },
    Projection { width: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Samples,
    Ridge,
    /// Width of the first feature layer.
    Width,
    FeatureNoiseVar,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Samples => "samples",
            SweepAxis::Ridge => "ridge",
            SweepAxis::Width => "width",
            SweepAxis::FeatureNoiseVar => "feature_noise_var",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_data_seeds: usize,
    pub n_feature_seeds: usize,
    #[serde(default = "one_usize")]
    pub n_test: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub ensemble: EnsembleConfig,
    pub grid: GridConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.max > self.min) {
            bail!("grid needs points >= 2 and max > min");
        }
        let n = self.points;
        Ok((0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleConfig {
    WhiteWishart { q: f64 },
    WishartGram { q: f64 },
    SquareProjection { q: f64 },
    ShiftedWishart { q: f64, j: f64 },
    Wigner { sigma2: f64 },
    DeepWhiteGram { widths: Vec<usize>, d: usize },
    StructuredWishart { population: SpectrumConfig, q: f64 },
    CorrelatedSamples { k: SpectrumConfig, q: f64 },
    FullyStructured { sigma: SpectrumConfig, k: SpectrumConfig, q: f64 },
    RectangularProjectionOf { inner: SpectrumConfig, q: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub alpha: f64,
    pub r: f64,
    /// Ridge-decay exponent; omit for the ridgeless (l = ∞) sentinel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "one")]
    pub q_exp: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub sigma_eps2: f64,
    /// Reference width for the P_F / P_ε crossover locations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_reference: Option<f64>,
}

impl ScalingConfig {
    pub fn inputs(&self) -> ScalingInputs {
        ScalingInputs {
            alpha: self.alpha,
            r: self.r,
            l: self.l.unwrap_or(f64::INFINITY),
            q_exp: self.q_exp,
            c: self.c,
            sigma_eps2: self.sigma_eps2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub alpha: f64,
    pub r: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub sigma_eps2: f64,
    pub l_grid: GridConfig,
    pub q_grid: GridConfig,
}

impl SpectrumConfig {
    pub fn build(&self) -> Result<Spectrum> {
        let spec = match self {
            SpectrumConfig::Isotropic { dim } => Spectrum::isotropic(*dim),
            SpectrumConfig::Discrete { eigenvalues, multiplicities } => {
                Spectrum::discrete(eigenvalues.clone(), multiplicities.clone())
            }
            SpectrumConfig::PowerLaw { alpha, dim, scale } => {
                Spectrum::power_law(*alpha, *dim, *scale)
            }
            SpectrumConfig::Plateaus { levels, multiplicities } => {
                Spectrum::plateaus(levels.clone(), multiplicities.clone())
            }
        };
        spec.map_err(|e| anyhow::anyhow!("invalid spectrum: {e}"))
    }
}

impl TeacherConfig {
    pub fn build(&self) -> TeacherProfile {
        match self {
            TeacherConfig::IsotropicAverage { norm } => {
                TeacherProfile::IsotropicAverage { norm: *norm }
            }
            TeacherConfig::Explicit { coefficients } => {
                TeacherProfile::Explicit { coefficients: coefficients.clone() }
            }
            TeacherConfig::SourcePowerLaw { r } => TeacherProfile::SourcePowerLaw { r: *r },
        }
    }
}

impl LayerConfig {
    pub fn build(&self) -> Result<FeatureLayer> {
        Ok(match self {
            LayerConfig::White { width } => FeatureLayer::white(*width),
            LayerConfig::Structured { width, spectrum } => {
                FeatureLayer::structured(*width, spectrum.build()?)
            }
            LayerConfig::Projection { width } => FeatureLayer::projection(*width),
        })
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let model = ModelSpec {
            covariates: self.covariates.build()?,
            teacher: self.teacher.build(),
            layers: self.layers.iter().map(LayerConfig::build).collect::<Result<_>>()?,
            feature_noise_var: self.feature_noise_var,
            label_noise_var: self.label_noise_var,
            ridge: self.ridge,
            samples: self.samples,
        };
        model.validate().map_err(|e| anyhow::anyhow!("invalid model: {e}"))?;
        Ok(model)
    }
}

impl EnsembleConfig {
    pub fn build(&self) -> Result<EnsembleTransform> {
        Ok(match self {
            EnsembleConfig::WhiteWishart { q } => EnsembleTransform::WhiteWishart { q: *q },
            EnsembleConfig::WishartGram { q } => EnsembleTransform::WishartGram { q: *q },
            EnsembleConfig::SquareProjection { q } => {
                EnsembleTransform::SquareProjection { q: *q }
            }
            EnsembleConfig::ShiftedWishart { q, j } => {
                EnsembleTransform::ShiftedWishart { q: *q, j: *j }
            }
            EnsembleConfig::Wigner { sigma2 } => EnsembleTransform::Wigner { sigma2: *sigma2 },
            EnsembleConfig::DeepWhiteGram { widths, d } => {
                EnsembleTransform::DeepWhiteGram { widths: widths.clone(), d: *d }
            }
            EnsembleConfig::StructuredWishart { population, q } => {
                EnsembleTransform::StructuredWishart { population: population.build()?, q: *q }
            }
            EnsembleConfig::CorrelatedSamples { k, q } => {
                EnsembleTransform::CorrelatedSamples { k: k.build()?, q: *q }
            }
            EnsembleConfig::FullyStructured { sigma, k, q } => EnsembleTransform::FullyStructured {
                sigma: sigma.build()?,
                k: k.build()?,
                q: *q,
            },
            EnsembleConfig::RectangularProjectionOf { inner, q } => {
                EnsembleTransform::RectangularProjectionOf {
                    inner: Box::new(ProjectionInner::Spectrum(inner.build()?)),
                    q: *q,
                }
            }
        })
    }
}

/// Apply a sweep value to a copy of the model.
pub fn apply_sweep(model: &ModelSpec, axis: SweepAxis, value: f64) -> Result<ModelSpec> {
    let mut m = model.clone();
    match axis {
        SweepAxis::Samples => {
            if value < 1.0 || value.fract() != 0.0 {
                bail!("samples sweep values must be positive integers, got {value}");
            }
            m.samples = value as usize;
        }
        SweepAxis::Ridge => m.ridge = value,
        SweepAxis::Width => {
            let layer = m
                .layers
                .first_mut()
                .context("width sweep requires at least one feature layer")?;
            if value < 1.0 || value.fract() != 0.0 {
                bail!("width sweep values must be positive integers, got {value}");
            }
            layer.width = value as usize;
        }
        SweepAxis::FeatureNoiseVar => m.feature_noise_var = value,
    }
    Ok(m)
}

pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .with_context(|| format!("config schema violation in {}", path.display()))?;
    Ok(config)
}
