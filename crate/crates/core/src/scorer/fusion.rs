use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the distance score and the feature norm are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// `d * fn^gamma`
    #[default]
    Product,
    /// `d + gamma * fn`
    Linear,
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Product => "product",
            Fusion::Linear => "linear",
        })
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "product" => Ok(Fusion::Product),
            "linear" => Ok(Fusion::Linear),
            _ => Err(Error::invalid(format!("unknown fusion mode {s:?} (expected product or linear)"))),
        }
    }
}

/// Combines a distance score with the feature norm.
pub fn fuse(distance: f64, fnorm: f64, gamma: f64, mode: Fusion) -> Result<f64> {
    match mode {
        Fusion::Product => {
            if gamma == 0.0 {
                Ok(distance)
            } else if fnorm == 0.0 && gamma < 0.0 {
                Err(Error::SingularNorm { gamma })
            } else {
                Ok(distance * fnorm.powf(gamma))
            }
        }
        Fusion::Linear => Ok(distance + gamma * fnorm),
    }
}
