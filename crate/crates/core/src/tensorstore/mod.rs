//! On-disk data model: FTB v1 tensor containers, quality tables, dataset
//! manifests, and deterministic calibration/validation splits.

mod ftb;
mod manifest;
mod quality_table;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use ftb::{decode_tensor, encode_tensor, read_dump, read_tensor, write_dump, write_tensor, Tensor, FTB_MAGIC};
pub use manifest::{load_manifest, Dataset, DatasetManifest, MANIFEST_VERSION};
pub use quality_table::{MetricColumn, Orientation, QualityTable};
pub(crate) use quality_table::{csv_error, format_value};
pub use split::{split, split_dataset, SplitAssignment};

/// Relative depth of a captured generator layer: 0 is the first block, 1 the
/// penultimate block. Only the quarter steps are valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepthRatio(u8);

impl DepthRatio {
    pub const ALL: [DepthRatio; 5] = [
        DepthRatio(0),
        DepthRatio(25),
        DepthRatio(50),
        DepthRatio(75),
        DepthRatio(100),
    ];
    pub const FIRST: DepthRatio = DepthRatio(0);
    pub const LAST: DepthRatio = DepthRatio(100);

    pub fn new(value: f64) -> Result<Self> {
        let pct = value * 100.0;
        let rounded = pct.round();
        if !value.is_finite() || (pct - rounded).abs() > 1e-6 {
            return Err(Error::invalid(format!("depth ratio {value} is not one of 0, 0.25, 0.5, 0.75, 1")));
        }
        let r = DepthRatio(rounded as u8);
        if rounded < 0.0 || !Self::ALL.contains(&r) {
            return Err(Error::invalid(format!("depth ratio {value} is not one of 0, 0.25, 0.5, 0.75, 1")));
        }
        Ok(r)
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    /// Two-decimal tag used in manifests and file names, e.g. `"0.25"`.
    pub fn tag(self) -> String {
        format!("{:.2}", self.value())
    }
}

impl fmt::Display for DepthRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for DepthRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("depth ratio {s:?} is not a number")))?;
        DepthRatio::new(v)
    }
}

impl Serialize for DepthRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for DepthRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => DepthRatio::new(v),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Pooled generator features of one layer: one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub layer: DepthRatio,
    pub sample_ids: Vec<String>,
    pub data: Matrix<f32>,
}

impl FeatureDump {
    pub fn new(layer: DepthRatio, sample_ids: Vec<String>, data: Matrix<f32>) -> Result<Self> {
        if sample_ids.is_empty() {
            return Err(Error::invalid("empty dump"));
        }
        if data.rows() != sample_ids.len() {
            return Err(Error::Shape(format!(
                "layer {layer}: {} feature rows for {} sample ids",
                data.rows(),
                sample_ids.len()
            )));
        }
        if data.cols() == 0 {
            return Err(Error::Shape(format!("layer {layer}: zero channels")));
        }
        if !data.all_finite() {
            return Err(Error::invalid(format!("layer {layer}: non-finite feature value")));
        }
        let mut seen = std::collections::HashSet::with_capacity(sample_ids.len());
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Alignment(format!("duplicate sample id {id:?}")));
            }
        }
        Ok(Self {
            layer,
            sample_ids,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.data.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureDump {
        FeatureDump {
            layer: self.layer,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            data: self.data.select_rows(indices),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_ratio_parses_grid_values_only() {
        assert_eq!(DepthRatio::new(0.25).unwrap().tag(), "0.25");
        assert_eq!("1".parse::<DepthRatio>().unwrap(), DepthRatio::LAST);
        assert_eq!("0.00".parse::<DepthRatio>().unwrap(), DepthRatio::FIRST);
        assert!(DepthRatio::new(0.3).is_err());
        assert!(DepthRatio::new(1.25).is_err());
        assert!(DepthRatio::new(-0.25).is_err());
    }

    #[test]
    fn dump_rejects_duplicates_and_empty() {
        let m = Matrix::new(2, 1, vec![1.0f32, 2.0]).unwrap();
        let err = FeatureDump::new(DepthRatio::LAST, vec!["a".into(), "a".into()], m).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        let empty = Matrix::new(0, 1, vec![]).unwrap();
        let err = FeatureDump::new(DepthRatio::LAST, vec![], empty).unwrap_err();
        assert!(err.to_string().contains("empty dump"));
    }
}
