//! Alternative distance measures against the safe bank: in-box ratio,
//! principal-subspace residual and mixture log-likelihood. Their raw scores
//! are standardized over the bank members and shifted strictly negative so
//! that product fusion with the feature norm keeps the KNN sign structure.

mod gmm;
mod otb;
mod residual;

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gmm::{GmmModel, MAX_ITERATIONS as GMM_MAX_ITERATIONS, VARIANCE_FLOOR as GMM_VARIANCE_FLOOR};
pub use otb::OtbBox;
pub use residual::{PrincipalSpectrum, ResidualModel};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::bank::SafeBank;
use crate::scorer::knn::kth_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    #[default]
    Knn,
    Otb,
    Residual,
    Gmm,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [VariantKind::Knn, VariantKind::Otb, VariantKind::Residual, VariantKind::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Knn => "knn",
            VariantKind::Otb => "otb",
            VariantKind::Residual => "residual",
            VariantKind::Gmm => "gmm",
        }
    }

    /// Name of the kind-specific tuning parameter.
    pub fn param_name(self) -> &'static str {
        match self {
            VariantKind::Knn => "k",
            VariantKind::Otb => "p",
            VariantKind::Residual => "r",
            VariantKind::Gmm => "components",
        }
    }

    /// Default tuning values for the kind-specific parameter.
    pub fn default_params(self) -> Vec<f64> {
        match self {
            VariantKind::Knn => vec![1.0, 10.0, 25.0, 50.0, 100.0, 200.0],
            VariantKind::Otb => vec![1.0, 0.99, 0.975, 0.95, 0.9, 0.8],
            VariantKind::Residual => vec![0.99, 0.975, 0.95, 0.925, 0.9, 0.8],
            VariantKind::Gmm => vec![1.0, 4.0, 8.0, 16.0, 32.0, 64.0],
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?} (expected knn, otb, residual or gmm)")))
    }
}

/// A variant kind together with its parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariantSpec {
    Knn { k: usize },
    Otb { p: f64 },
    Residual { r: f64 },
    Gmm { components: usize },
}

impl VariantSpec {
    pub fn kind(&self) -> VariantKind {
        match self {
            VariantSpec::Knn { .. } => VariantKind::Knn,
            VariantSpec::Otb { .. } => VariantKind::Otb,
            VariantSpec::Residual { .. } => VariantKind::Residual,
            VariantSpec::Gmm { .. } => VariantKind::Gmm,
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            VariantSpec::Knn { k } => k as f64,
            VariantSpec::Otb { p } => p,
            VariantSpec::Residual { r } => r,
            VariantSpec::Gmm { components } => components as f64,
        }
    }

    /// Builds a spec from a kind and a numeric parameter, validating its range.
    pub fn new(kind: VariantKind, param: f64) -> Result<Self> {
        let count = |what: &str| {
            if param >= 1.0 && param.fract() == 0.0 && param.is_finite() {
                Ok(param as usize)
            } else {
                Err(Error::invalid(format!("{what} must be a positive integer, got {param}")))
            }
        };
        let unit = |what: &str| {
            if param > 0.0 && param <= 1.0 {
                Ok(param)
            } else {
                Err(Error::invalid(format!("{what} must lie in (0, 1], got {param}")))
            }
        };
        Ok(match kind {
            VariantKind::Knn => VariantSpec::Knn { k: count("k")? },
            VariantKind::Otb => VariantSpec::Otb { p: unit("box quantile p")? },
            VariantKind::Residual => VariantSpec::Residual { r: unit("variance ratio r")? },
            VariantKind::Gmm => VariantSpec::Gmm {
                components: count("component count")?,
            },
        })
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}={})", self.kind(), self.kind().param_name(), self.param())
    }
}

/// Affine map `(s - mean) / std + shift` fitted on bank-member scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
    pub shift: f64,
}

impl Standardization {
    /// Zero mean, unit variance, then shifted so the largest input maps to -1.
    pub fn fit(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("standardization needs at least one score"));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite variant score {bad} on a bank member")));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let max = scores.iter().map(|s| (s - mean) / std).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            mean,
            std,
            shift: -(max + 1.0),
        })
    }

    pub fn apply(&self, s: f64) -> f64 {
        (s - self.mean) / self.std + self.shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariantFit {
    Knn { k: usize },
    Otb(OtbBox),
    Residual(ResidualModel),
    Gmm(GmmModel),
}

impl VariantFit {
    /// Raw higher-is-safer score of a unit vector. Not defined for KNN, which
    /// needs the bank itself.
    fn raw_score(&self, unit: &[f64]) -> f64 {
        match self {
            VariantFit::Knn { .. } => unreachable!("knn scores are computed against the bank"),
            VariantFit::Otb(b) => b.score(unit),
            VariantFit::Residual(r) => r.score(unit),
            VariantFit::Gmm(g) => g.score(unit),
        }
    }
}

/// Fitted distance measure plus, for non-KNN kinds, its standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantModel {
    pub spec: VariantSpec,
    pub fit: VariantFit,
    pub standardization: Option<Standardization>,
}

/// Bank unit vectors in double precision with lazily built statistics shared
/// by all fits against the same bank.
pub struct BankStatistics {
    rows: Vec<Vec<f64>>,
    sorted: OnceCell<Vec<Vec<f64>>>,
    spectrum: OnceCell<PrincipalSpectrum>,
}

impl BankStatistics {
    pub fn new<T: Scalar>(bank: &SafeBank<T>) -> Self {
        let rows = bank
            .unit_vectors()
            .iter_rows()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect();
        Self {
            rows,
            sorted: OnceCell::new(),
            spectrum: OnceCell::new(),
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn sorted_columns(&self) -> &[Vec<f64>] {
        self.sorted.get_or_init(|| otb::sorted_columns(&self.rows))
    }

    fn spectrum(&self) -> Result<&PrincipalSpectrum> {
        if self.spectrum.get().is_none() {
            let s = PrincipalSpectrum::fit(&self.rows)?;
            let _ = self.spectrum.set(s);
        }
        Ok(self.spectrum.get().expect("spectrum initialized"))
    }

    /// Fits `spec`; `seed` drives mixture initialization only.
    pub fn fit(&self, spec: VariantSpec, seed: u64) -> Result<VariantModel> {
        let m = self.rows.len();
        let fit = match spec {
            VariantSpec::Knn { k } => {
                if k == 0 || k > m {
                    return Err(Error::Infeasible(format!("k = {k} exceeds bank size {m}")));
                }
                return Ok(VariantModel {
                    spec,
                    fit: VariantFit::Knn { k },
                    standardization: None,
                });
            }
            VariantSpec::Otb { p } => VariantFit::Otb(OtbBox::from_sorted_columns(self.sorted_columns(), p)?),
            VariantSpec::Residual { r } => VariantFit::Residual(self.spectrum()?.model(r)?),
            VariantSpec::Gmm { components } => VariantFit::Gmm(GmmModel::fit(&self.rows, components, seed)?),
        };
        let raw: Vec<f64> = self.rows.iter().map(|r| fit.raw_score(r)).collect();
        let standardization = Some(Standardization::fit(&raw)?);
        Ok(VariantModel {
            spec,
            fit,
            standardization,
        })
    }
}

pub fn fit_variant<T: Scalar>(bank: &SafeBank<T>, spec: VariantSpec, seed: u64) -> Result<VariantModel> {
    BankStatistics::new(bank).fit(spec, seed)
}

impl VariantModel {
    /// Raw (unstandardized) score of a unit vector; KNN returns `-r_k`.
    pub fn raw_score<T: Scalar>(&self, unit: &[T], bank: &SafeBank<T>, scratch: &mut Vec<T>) -> Result<f64> {
        match self.fit {
            VariantFit::Knn { k } => Ok(0.0 - kth_distance(unit, bank, k, scratch)?.as_f64()),
            ref other => {
                let u: Vec<f64> = unit.iter().map(|v| v.as_f64()).collect();
                Ok(other.raw_score(&u))
            }
        }
    }

    /// Distance score entering fusion: raw KNN score, or the standardized
    /// variant score.
    pub fn distance_score<T: Scalar>(&self, unit: &[T], bank: &SafeBank<T>, scratch: &mut Vec<T>) -> Result<f64> {
        let raw = self.raw_score(unit, bank, scratch)?;
        Ok(match &self.standardization {
            Some(s) => s.apply(raw),
            None => raw,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::tensorstore::DepthRatio;
    use std::collections::BTreeMap;

    fn bank(rows: Vec<Vec<f64>>) -> SafeBank<f64> {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.into_iter().map(|v| v / n).collect()
            })
            .collect();
        let n = rows.len();
        SafeBank::from_parts(
            DepthRatio::LAST,
            0.0,
            Matrix::from_rows(&rows).unwrap(),
            vec![1.0; n],
            (0..n).map(|i| format!("s{i}")).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn sample_bank() -> SafeBank<f64> {
        bank((0..12).map(|i| vec![1.0 + i as f64 * 0.1, (i % 4) as f64 * 0.3, 0.5, -(i as f64) * 0.05]).collect())
    }

    #[test]
    fn standardized_members_are_strictly_negative() {
        let b = sample_bank();
        for spec in [
            VariantSpec::Otb { p: 0.9 },
            VariantSpec::Residual { r: 0.95 },
            VariantSpec::Gmm { components: 2 },
        ] {
            let model = fit_variant(&b, spec, 3).unwrap();
            let mut scratch = Vec::new();
            let scores: Vec<f64> = b
                .unit_vectors()
                .iter_rows()
                .map(|r| model.distance_score(r, &b, &mut scratch).unwrap())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((max + 1.0).abs() < 1e-9, "{spec}: {max}");
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64).sqrt();
            assert!(std == 0.0 || (std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn otb_full_box_scores_members_one() {
        let b = sample_bank();
        let model = fit_variant(&b, VariantSpec::Otb { p: 1.0 }, 0).unwrap();
        let mut scratch = Vec::new();
        for r in b.unit_vectors().iter_rows() {
            assert_eq!(model.raw_score(r, &b, &mut scratch).unwrap(), 1.0);
        }
        // Constant raw scores standardize with unit std.
        assert_eq!(model.standardization.unwrap().std, 1.0);
    }

    #[test]
    fn knn_model_matches_knn_score() {
        let b = sample_bank();
        let model = fit_variant(&b, VariantSpec::Knn { k: 3 }, 0).unwrap();
        let z = [0.2, 0.4, -0.1, 0.9];
        let (u, _) = crate::scorer::pooling::unit_normalize(&z).unwrap();
        let mut scratch = Vec::new();
        let got = model.distance_score(&u, &b, &mut scratch).unwrap();
        assert_eq!(got, crate::scorer::knn::knn_score(&z, &b, 3).unwrap());
        assert!(fit_variant(&b, VariantSpec::Knn { k: 13 }, 0).unwrap_err().is_infeasible());
        assert!(fit_variant(&b, VariantSpec::Gmm { components: 13 }, 0).unwrap_err().is_infeasible());
    }

    #[test]
    fn spec_parsing_and_serde() {
        assert_eq!(VariantSpec::new(VariantKind::Gmm, 4.0).unwrap(), VariantSpec::Gmm { components: 4 });
        assert!(VariantSpec::new(VariantKind::Knn, 2.5).is_err());
        assert!(VariantSpec::new(VariantKind::Otb, 0.0).is_err());
        assert_eq!("Residual".parse::<VariantKind>().unwrap(), VariantKind::Residual);
        let s = serde_json::to_string(&VariantSpec::Otb { p: 0.95 }).unwrap();
        assert_eq!(s, r#"{"kind":"otb","p":0.95}"#);
        let model = fit_variant(&sample_bank(), VariantSpec::Residual { r: 0.9 }, 0).unwrap();
        let back: VariantModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
