//! TOML run configuration.
//!
//! ```toml
//! family = "cusp"          # cusp | jump_cos2 | jump_custom
//! theta1 = 1.5             # optional; defaults are the worked examples
//! b = 2.0
//! tau = 2.0
//! a = -1.0                 # cusp only
//! kappa = 0.4
//! baseline = 2.0           # constant h(t)
//! # jump_custom: piecewise-linear knots (s, λ) either side of t_star
//! # t_star = 0.0
//! # left = [[-4.0, 3.0], [0.0, 3.0]]
//! # right = [[0.0, 1.0], [1.0, 2.0]]
//!
//! [run]
//! seed = 7
//! eps = [0.05]
//! m = 100000
//! replicates = 10000
//! n = 100
//! du = 0.005
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{Baseline, CuspModel, IntensityModel, JumpModel, JumpShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cusp,
    JumpCos2,
    JumpCustom,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cusp" => Ok(Family::Cusp),
            "jump_cos2" | "jump" => Ok(Family::JumpCos2),
            "jump_custom" => Ok(Family::JumpCustom),
            other => Err(Error::Parse(format!(
                "unknown model family {other:?} (expected cusp, jump_cos2 or jump_custom)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub eps: Option<Vec<f64>>,
    pub m: Option<usize>,
    pub replicates: Option<usize>,
    pub n: Option<usize>,
    pub du: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub family: Family,
    pub theta1: Option<f64>,
    pub b: Option<f64>,
    pub tau: Option<f64>,
    pub a: Option<f64>,
    pub kappa: Option<f64>,
    pub baseline: Option<f64>,
    pub t_star: Option<f64>,
    pub left: Option<Vec<[f64; 2]>>,
    pub right: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub run: RunConfig,
}

impl Config {
    pub fn for_family(family: Family) -> Self {
        Config {
            family,
            theta1: None,
            b: None,
            tau: None,
            a: None,
            kappa: None,
            baseline: None,
            t_star: None,
            left: None,
            right: None,
            run: RunConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn model(&self) -> Result<IntensityModel> {
        let knots = |v: &Option<Vec<[f64; 2]>>, name: &str| -> Result<Vec<(f64, f64)>> {
            let v = v
                .as_ref()
                .ok_or_else(|| Error::InvalidModel(format!("jump_custom needs `{name}` knots")))?;
            if v.is_empty() {
                return Err(Error::InvalidModel(format!("`{name}` has no knots")));
            }
            if v.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidModel(format!("`{name}` knots must be strictly increasing in s")));
            }
            Ok(v.iter().map(|k| (k[0], k[1])).collect())
        };
        match self.family {
            Family::Cusp => {
                let ex = CuspModel::example();
                let model = CuspModel::new(
                    self.a.unwrap_or(ex.a()),
                    self.kappa.unwrap_or(ex.kappa()),
                    Baseline::Constant(self.baseline.unwrap_or(2.0)),
                    self.theta1.unwrap_or(1.5),
                    self.b.unwrap_or(2.0),
                    self.tau.unwrap_or(2.0),
                )?;
                Ok(model.into())
            }
            Family::JumpCos2 => Ok(JumpModel::cos2(
                self.theta1.unwrap_or(3.0),
                self.b.unwrap_or(4.0),
                self.tau.unwrap_or(4.0),
            )?
            .into()),
            Family::JumpCustom => {
                let shape = JumpShape::Tabulated {
                    t_star: self.t_star.unwrap_or(0.0),
                    left: knots(&self.left, "left")?,
                    right: knots(&self.right, "right")?,
                };
                Ok(JumpModel::new(
                    shape,
                    self.theta1.unwrap_or(3.0),
                    self.b.unwrap_or(4.0),
                    self.tau.unwrap_or(4.0),
                )?
                .into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_examples() {
        let cusp = Config::parse("family = \"cusp\"").unwrap().model().unwrap();
        assert_eq!(cusp.hash(), IntensityModel::from(CuspModel::example()).hash());
        let jump = Config::parse("family = \"jump_cos2\"").unwrap().model().unwrap();
        assert_eq!(jump.hash(), IntensityModel::from(JumpModel::example()).hash());
    }

    #[test]
    fn custom_jump_and_run_section() {
        let text = r#"
            family = "jump_custom"
            t_star = 0.0
            left = [[-4.0, 3.0], [0.0, 3.0]]
            right = [[0.0, 1.0], [1.0, 2.0]]
            [run]
            seed = 11
            eps = [0.05, 0.1]
        "#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.run.seed, Some(11));
        let m = c.model().unwrap();
        assert_eq!(m.rho(), Some(3.0));
        assert_eq!(m.intensity(3.0, 3.5).unwrap(), 1.5);
    }

    #[test]
    fn unknown_keys_and_bad_models_are_errors() {
        assert!(Config::parse("family = \"cusp\"\nkapa = 0.3").is_err());
        assert!(Config::parse("family = \"bump\"").is_err());
        let bad = Config::parse("family = \"cusp\"\nkappa = 0.7").unwrap();
        assert!(bad.model().is_err());
        assert!(Config::parse("family = \"jump_custom\"").unwrap().model().is_err());
    }
}
