//! Hermite-expansion bivariate dependence models for FX cross-rate smiles.

pub mod calibration;
pub mod copula_build;
pub mod copulas;
pub mod crossfx;
pub mod correction;
pub mod error;
pub mod expansion;
pub mod normal;
pub mod optimize;
pub mod polybasis;
pub mod quadrature;
pub mod smile;

pub use calibration::{CalibrationResult, CopulaParams, FitFamily, HermiteParams};
pub use copulas::{ClassicalCopula, Family};
pub use correction::{ConvexConstraint, DykstraOptions, DykstraReport};
pub use crossfx::{CopulaModel, CrossPricer, CrossSetup, PricingOptions};
pub use error::{Error, Result};
pub use expansion::ExpansionModel;
pub use polybasis::{Mixing, MixingKind, RotationFactors};
pub use quadrature::{CartesianGrid, GridDensity, ValueKind};
pub use smile::{Pillar, SmileCurve, SmilePillars};
