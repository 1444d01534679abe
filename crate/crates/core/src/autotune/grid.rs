use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{Fusion, VariantKind, VariantSpec};
use crate::tensorstore::DepthRatio;

pub const DEFAULT_METRICS: [&str; 3] = ["psnr", "ms_ssim", "one_minus_lpips"];

/// `-10, -9.5, ..., 10`.
pub fn default_gammas() -> Vec<f64> {
    (-20..=20).map(|i| i as f64 * 0.5).collect()
}

fn default_layers() -> Vec<DepthRatio> {
    DepthRatio::ALL.to_vec()
}

fn default_q() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75]
}

fn default_metrics() -> Vec<String> {
    DEFAULT_METRICS.iter().map(|s| s.to_string()).collect()
}

/// Search space of the self-tuner. Cells are enumerated in the order
/// layer, q, variant parameter, gamma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(default = "default_layers")]
    pub layers: Vec<DepthRatio>,
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default)]
    pub variant: VariantKind,
    /// Variant parameter values (k for KNN); the kind's defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default = "default_gammas")]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub fusion: Fusion,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            q: default_q(),
            variant: VariantKind::Knn,
            params: None,
            gamma: default_gammas(),
            fusion: Fusion::Product,
            metrics: default_metrics(),
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub layer: DepthRatio,
    pub q: f64,
    pub variant: VariantSpec,
    pub gamma: f64,
}

impl Grid {
    pub fn for_variant(variant: VariantKind) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.params.clone().unwrap_or_else(|| self.variant.default_params())
    }

    pub fn specs(&self) -> Result<Vec<VariantSpec>> {
        self.params().into_iter().map(|p| VariantSpec::new(self.variant, p)).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.len() * self.q.len() * self.params().len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::invalid("grid is empty"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("grid needs at least one metric"));
        }
        if let Some(q) = self.q.iter().find(|q| !(0.0..1.0).contains(*q)) {
            return Err(Error::invalid(format!("grid q = {q} must lie in [0, 1)")));
        }
        if let Some(g) = self.gamma.iter().find(|g| !g.is_finite()) {
            return Err(Error::invalid(format!("grid gamma = {g} must be finite")));
        }
        self.specs()?;
        Ok(())
    }

    /// All cells in enumeration order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let specs = self.specs()?;
        let mut out = Vec::with_capacity(self.len());
        for &layer in &self.layers {
            for &q in &self.q {
                for &variant in &specs {
                    for &gamma in &self.gamma {
                        out.push(Cell {
                            index: out.len(),
                            layer,
                            q,
                            variant,
                            gamma,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: Grid = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        grid.validate()?;
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let g = Grid::default();
        assert_eq!(g.gamma.len(), 41);
        assert_eq!(g.gamma[0], -10.0);
        assert_eq!(g.gamma[20], 0.0);
        assert_eq!(g.len(), 4920);
        let cells = g.cells().unwrap();
        assert_eq!(cells.len(), 4920);
        assert_eq!(cells[1].gamma, -9.5);
        assert_eq!(cells[41].variant, VariantSpec::Knn { k: 10 });
        assert_eq!(cells[41 * 6].q, 0.25);
        assert_eq!(cells[41 * 6 * 4].layer, DepthRatio::new(0.25).unwrap());
    }

    #[test]
    fn override_fills_defaults() {
        let g: Grid = serde_json::from_str(r#"{"layers": [1.0], "q": [0.0], "params": [1], "gamma": [0.0]}"#).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.metrics.len(), 3);
        let v: Grid = serde_json::from_str(r#"{"variant": "otb"}"#).unwrap();
        assert_eq!(v.params()[0], 1.0);
        assert!(serde_json::from_str::<Grid>(r#"{"layers": [0.3]}"#).is_err());
        let bad = Grid {
            q: vec![1.0],
            ..Grid::default()
        };
        assert!(bad.validate().is_err());
    }
}
