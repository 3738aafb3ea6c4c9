//! Limit likelihood-ratio processes of the two singular families.

pub mod fbm;
pub mod functionals;
pub mod trajectory;

pub use fbm::{fbm_covariance, sample_fbm, FbmMethod, FbmPath, FbmSynthesizer};
pub use functionals::{functional_suite, Functionals};
pub use trajectory::{
    cusp_limit, jump_limit, jump_twosided, CuspDrift, JumpCrnSample, LimitKind, LimitTrajectory,
};

use crate::models::{IntensityModel, ModelClass};

/// Which limit experiment, with its single parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitClass {
    Cusp { hurst: f64 },
    Jump { rho: f64 },
}

impl LimitClass {
    pub fn of_model(model: &IntensityModel) -> Self {
        match model {
            IntensityModel::Cusp(m) => LimitClass::Cusp { hurst: m.hurst() },
            IntensityModel::Jump(m) => LimitClass::Jump { rho: m.rho() },
        }
    }

    pub fn model_class(&self) -> ModelClass {
        match self {
            LimitClass::Cusp { .. } => ModelClass::Cusp,
            LimitClass::Jump { .. } => ModelClass::Jump,
        }
    }

    /// `H` or `ρ`.
    pub fn parameter(&self) -> f64 {
        match *self {
            LimitClass::Cusp { hurst } => hurst,
            LimitClass::Jump { rho } => rho,
        }
    }

    pub fn from_parts(class: ModelClass, parameter: f64) -> Self {
        match class {
            ModelClass::Cusp => LimitClass::Cusp { hurst: parameter },
            ModelClass::Jump => LimitClass::Jump { rho: parameter },
        }
    }
}

impl std::fmt::Display for LimitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitClass::Cusp { hurst } => write!(f, "cusp(H={hurst})"),
            LimitClass::Jump { rho } => write!(f, "jump(rho={rho})"),
        }
    }
}
