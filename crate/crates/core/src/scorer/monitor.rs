use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::scorer::bank::{build_safe_bank_from_dataset, SafeBank};
use crate::scorer::fusion::{fuse, Fusion};
use crate::scorer::knn::kth_distances_batch;
use crate::scorer::pooling::unit_normalize;
use crate::scorer::variants::{BankStatistics, VariantFit, VariantModel, VariantSpec};
use crate::tensorstore::{read_tensor, write_tensor, Dataset, DepthRatio, Tensor};

pub const MONITOR_FORMAT: &str = "halluscope-monitor";
pub const MONITOR_VERSION: u32 = 1;

/// Tuned parameter bundle of a monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub layer: DepthRatio,
    pub q: f64,
    pub variant: VariantSpec,
    pub gamma: f64,
    pub fusion: Fusion,
    /// Metrics used for truncation and tuning.
    pub metrics: Vec<String>,
}

impl MonitorConfig {
    pub fn knn(layer: DepthRatio, q: f64, k: usize, gamma: f64, metrics: Vec<String>) -> Self {
        Self {
            layer,
            q,
            variant: VariantSpec::Knn { k },
            gamma,
            fusion: Fusion::Product,
            metrics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.q) {
            return Err(Error::invalid(format!("q = {} must lie in [0, 1)", self.q)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma = {} must be finite", self.gamma)));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("monitor needs at least one metric"));
        }
        VariantSpec::new(self.variant.kind(), self.variant.param()).map(|_| ())
    }
}

/// A fitted monitor: configuration, safe bank and variant model.
#[derive(Debug, Clone)]
pub struct Monitor<T> {
    pub config: MonitorConfig,
    pub bank: SafeBank<T>,
    pub model: VariantModel,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct BankRecord {
    file: String,
    rows: usize,
    channels: usize,
    source_ids: Vec<String>,
    norms: Vec<f64>,
    thresholds: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct MonitorDocument {
    format: String,
    version: u32,
    scalar: String,
    seed: u64,
    config: MonitorConfig,
    model: VariantModel,
    bank: BankRecord,
}

/// Scalar type (`"f32"` or `"f64"`) a saved monitor was fitted with.
pub fn stored_scalar(path: impl AsRef<Path>) -> Result<String> {
    #[derive(Deserialize)]
    struct Head {
        scalar: String,
    }
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let head: Head = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(head.scalar)
}

fn scalar_name<T: Scalar>() -> &'static str {
    if T::BYTES == 4 {
        "f32"
    } else {
        "f64"
    }
}

impl<T: Scalar> Monitor<T> {
    /// Fits bank and variant on `dataset` rows `indices` (all when `None`).
    pub fn fit(dataset: &Dataset, indices: Option<&[usize]>, config: MonitorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bank = build_safe_bank_from_dataset(dataset, indices, config.layer, &config.metrics, config.q)?;
        Self::from_bank(config, bank, seed)
    }

    pub fn from_bank(config: MonitorConfig, bank: SafeBank<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        if bank.layer() != config.layer {
            return Err(Error::invalid(format!(
                "bank captured at layer {} but config uses {}",
                bank.layer(),
                config.layer
            )));
        }
        let model = BankStatistics::new(&bank).fit(config.variant, seed)?;
        Ok(Self {
            config,
            bank,
            model,
            seed,
        })
    }

    /// Confidence of one raw pooled feature; higher is safer.
    pub fn score_feature(&self, z: &[T], scratch: &mut Vec<T>) -> Result<f64> {
        if z.len() != self.bank.dim() {
            return Err(Error::Shape(format!(
                "feature has {} channels, bank {}",
                z.len(),
                self.bank.dim()
            )));
        }
        let (unit, norm) = unit_normalize(z)?;
        let d = self.model.distance_score(&unit, &self.bank, scratch)?;
        fuse(d, norm.as_f64(), self.config.gamma, self.config.fusion)
    }

    /// Scores every row, preserving order. Errors name the offending sample.
    pub fn score_batch(&self, features: &Matrix<T>, ids: &[String]) -> Result<Vec<f64>> {
        if ids.len() != features.rows() {
            return Err(Error::Alignment(format!("{} ids for {} feature rows", ids.len(), features.rows())));
        }
        let VariantFit::Knn { k } = self.model.fit else {
            let results: Vec<Result<f64>> = (0..features.rows())
                .into_par_iter()
                .map_init(Vec::new, |scratch, i| {
                    self.score_feature(features.row(i), scratch).map_err(|e| e.for_sample(&ids[i]))
                })
                .collect();
            return results.into_iter().collect();
        };
        if features.cols() != self.bank.dim() {
            return Err(Error::Shape(format!(
                "features have {} channels, bank {}",
                features.cols(),
                self.bank.dim()
            )));
        }
        let mut unit = Vec::with_capacity(features.rows());
        let mut norms = Vec::with_capacity(features.rows());
        for (row, id) in features.iter_rows().zip(ids) {
            let (u, n) = unit_normalize(row).map_err(|e| e.for_sample(id))?;
            unit.push(u);
            norms.push(n.as_f64());
        }
        let refs: Vec<&[T]> = unit.iter().map(Vec::as_slice).collect();
        let kth = kth_distances_batch(&refs, &self.bank, k)?;
        kth.iter()
            .zip(&norms)
            .zip(ids)
            .map(|((r, n), id)| {
                fuse(0.0 - r.as_f64(), *n, self.config.gamma, self.config.fusion).map_err(|e| e.for_sample(id))
            })
            .collect()
    }

    /// Scores all samples of a dataset at the configured layer.
    pub fn score_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let dump = dataset.layer(self.config.layer)?;
        self.score_batch(&dump.data.cast(), &dump.sample_ids)
    }

    /// Writes `path` (JSON) and the bank matrix next to it as FTB.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("monitor");
        let file = format!("{stem}_bank.ftb");
        let bank_path = path.with_file_name(&file);
        let unit = self.bank.unit_vectors();
        write_tensor(&Tensor::new(vec![unit.rows(), unit.cols()], unit.as_slice().to_vec())?, &bank_path)?;
        let doc = MonitorDocument {
            format: MONITOR_FORMAT.into(),
            version: MONITOR_VERSION,
            scalar: scalar_name::<T>().into(),
            seed: self.seed,
            config: self.config.clone(),
            model: self.model.clone(),
            bank: BankRecord {
                file,
                rows: unit.rows(),
                channels: unit.cols(),
                source_ids: self.bank.source_ids().to_vec(),
                norms: self.bank.norms().iter().map(|v| v.as_f64()).collect(),
                thresholds: self.bank.thresholds().clone(),
            },
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: MonitorDocument = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        if doc.format != MONITOR_FORMAT || doc.version != MONITOR_VERSION {
            return Err(Error::invalid(format!(
                "{}: not a version {MONITOR_VERSION} monitor document",
                path.display()
            )));
        }
        if doc.scalar != scalar_name::<T>() {
            return Err(Error::invalid(format!(
                "{}: monitor stores {} values, requested {}",
                path.display(),
                doc.scalar,
                scalar_name::<T>()
            )));
        }
        doc.config.validate()?;
        if doc.model.spec != doc.config.variant {
            return Err(Error::invalid(format!("{}: model does not match config variant", path.display())));
        }
        let bank_path: PathBuf = path.parent().unwrap_or(Path::new("")).join(&doc.bank.file);
        let unit = read_tensor::<T>(&bank_path)?.into_matrix()?;
        if unit.rows() != doc.bank.rows || unit.cols() != doc.bank.channels {
            return Err(Error::Shape(format!(
                "{}: bank file is {}x{}, document says {}x{}",
                bank_path.display(),
                unit.rows(),
                unit.cols(),
                doc.bank.rows,
                doc.bank.channels
            )));
        }
        let bank = SafeBank::from_parts(
            doc.config.layer,
            doc.config.q,
            unit,
            doc.bank.norms.iter().map(|&v| T::lit(v)).collect(),
            doc.bank.source_ids,
            doc.bank.thresholds,
        )?;
        Ok(Self {
            config: doc.config,
            bank,
            model: doc.model,
            seed: doc.seed,
        })
    }
}
