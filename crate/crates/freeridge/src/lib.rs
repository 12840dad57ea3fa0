//! Deterministic-equivalent ("renormalized") ridge regression risk.
//!
//! The crate computes exact asymptotic generalization and training errors for
//! linear ridge regression, (deep) linear random-feature models, and nonlinear
//! random features under Gaussian equivalence, using S-transform identities
//! from free probability. A Monte Carlo module cross-checks every theoretical
//! quantity at finite size, and a scaling module classifies power-law regimes.

pub mod error;
pub mod free_transforms;
pub mod montecarlo;
pub mod renormalizer;
pub mod risk;
pub mod scaling;
pub mod spectrum;

mod numerics;

pub use error::{Error, Result};
pub use free_transforms::EnsembleTransform;
pub use montecarlo::{Estimate, FitOutcome, McPlan, McResult};
pub use renormalizer::{FeatureLayer, LayerKind, ModelSpec, Regime, RenormState};
pub use risk::{Nonlinearity, RiskReport};
pub use scaling::{PhaseCell, RegimeAxis, RegimeLabel, RegimeName, ScalingInputs, VarianceSource};
pub use spectrum::{Spectrum, TeacherProfile};
