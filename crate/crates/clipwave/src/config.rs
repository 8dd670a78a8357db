//! Experiment configuration files.
//!
//! ```json
//! {
//!   "regression": { "B": 1.0, "J0": 2, "J": 8, "T": 4096, "G": 2.0 },
//!   "noise": { "kind": "gaussian", "sigma": 0.5 },
//!   "target": {
//!     "kind": "step", "edges": [0.3333333333333333, 0.7], "levels": [0.0, 1.0, -0.5],
//!     "d": 1, "s": 1.0, "p": 1.0, "q": "inf", "B": 1.0
//!   },
//!   "bound_constant": 200.0
//! }
//! ```

use std::fmt;
use std::path::Path;

use clipwave_core::batch::{Nominal, NoiseModel, TargetFunction, TargetKind};
use clipwave_core::regression::RegressionConfig;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{HarnessError, Result};

/// A Besov exponent that may be infinite. Written as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Exponent(x)),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(Exponent(f64::INFINITY)),
                other => other
                    .parse::<f64>()
                    .map(Exponent)
                    .map_err(|_| serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetShape {
    Constant { value: f64 },
    Step { edges: Vec<f64>, levels: Vec<f64> },
    Sawtooth { teeth: u32, amplitude: f64 },
    DyadicRandom { seed: u64, depth: u32 },
}

/// Target function and its nominal smoothness `(s, p, q, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    #[serde(flatten)]
    pub shape: TargetShape,
    #[serde(default = "one")]
    pub d: u32,
    pub s: f64,
    pub p: Exponent,
    pub q: Exponent,
    #[serde(rename = "B")]
    pub b: f64,
}

fn one() -> u32 {
    1
}

impl TargetConfig {
    pub fn nominal(&self) -> Nominal {
        Nominal {
            s: self.s,
            p: self.p.0,
            q: self.q.0,
            b: self.b,
        }
    }

    pub fn build(&self) -> Result<TargetFunction> {
        let kind = match &self.shape {
            TargetShape::Constant { value } => TargetKind::Constant(*value),
            TargetShape::Step { edges, levels } => TargetKind::Step {
                edges: edges.clone(),
                levels: levels.clone(),
            },
            TargetShape::Sawtooth { teeth, amplitude } => TargetKind::Sawtooth {
                teeth: *teeth,
                amplitude: *amplitude,
            },
            TargetShape::DyadicRandom { seed, depth } => TargetKind::DyadicRandom {
                seed: *seed,
                depth: *depth,
            },
        };
        Ok(TargetFunction::new(kind, self.d, self.nominal())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub regression: RegressionConfig,
    pub noise: NoiseModel,
    pub target: TargetConfig,
    /// Ceiling for average regret over the rate main term, checked per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_constant: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.regression.validate()?;
        NoiseModel::new(self.noise.kind, self.noise.sigma)?;
        if self.target.d != self.regression.d {
            return Err(HarnessError::Config(format!(
                "target dimension {} differs from regression dimension {}",
                self.target.d, self.regression.d
            )));
        }
        if let Some(c) = self.bound_constant {
            if !(c > 0.0) {
                return Err(HarnessError::Config("bound_constant must be positive".into()));
            }
        }
        self.target.build()?;
        Ok(())
    }

    /// Stable digest of the canonicalized configuration.
    pub fn digest(&self) -> Result<String> {
        crate::digest::digest(self)
    }

    /// Copy with horizon `T`.
    pub fn with_horizon(&self, horizon: u64) -> Self {
        let mut c = self.clone();
        c.regression.horizon = horizon;
        c
    }

    /// Copy with noise level `σ`.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        let mut c = self.clone();
        c.noise.sigma = sigma;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "regression": { "B": 1.0, "J0": 1, "J": 3, "T": 64, "G": 2.0 },
        "noise": { "kind": "gaussian", "sigma": 0.5 },
        "target": { "kind": "step", "edges": [0.5], "levels": [0.0, 1.0],
                    "s": 1.0, "p": 1, "q": "inf", "B": 1.0 }
    }"#;

    #[test]
    fn parses_example() {
        let c = ExperimentConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(c.regression.horizon, 64);
        assert_eq!(c.regression.depth, Some(3));
        assert!(c.target.q.0.is_infinite());
        assert_eq!(c.target.d, 1);
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::from_json(EXAMPLE).unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = EXAMPLE.replace("\"s\": 1.0", "\"d\": 2, \"s\": 1.0");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(HarnessError::Config(_))));
    }

    #[test]
    fn rejects_bad_exponent() {
        let text = EXAMPLE.replace("\"inf\"", "\"lots\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
