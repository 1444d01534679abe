use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{cmp_f, Scalar};
use crate::scorer::knn::{pack_blocks, LANES};
use crate::scorer::pooling::unit_normalize;
use crate::tensorstore::{Dataset, DepthRatio, QualityTable};

/// Unit-normalized features of the calibration samples that pass every
/// metric's truncation threshold. Immutable once built.
#[derive(Debug, Clone)]
pub struct SafeBank<T> {
    layer: DepthRatio,
    q: f64,
    unit: Matrix<T>,
    norms: Vec<T>,
    source_ids: Vec<String>,
    thresholds: BTreeMap<String, f64>,
    /// Rows repacked as `[block][channel][lane]` for the distance kernel.
    blocks: Vec<T>,
}

impl<T: Scalar> SafeBank<T> {
    pub fn from_parts(
        layer: DepthRatio,
        q: f64,
        unit: Matrix<T>,
        norms: Vec<T>,
        source_ids: Vec<String>,
        thresholds: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if unit.rows() == 0 {
            return Err(Error::EmptyBank { q });
        }
        if unit.cols() == 0 {
            return Err(Error::Shape("bank has zero channels".into()));
        }
        if norms.len() != unit.rows() || source_ids.len() != unit.rows() {
            return Err(Error::Shape(format!(
                "bank with {} rows has {} norms and {} ids",
                unit.rows(),
                norms.len(),
                source_ids.len()
            )));
        }
        let tol = 1e-6f64.max(8.0 * T::epsilon().as_f64() * (unit.cols() as f64).sqrt());
        for (i, row) in unit.iter_rows().enumerate() {
            let n: f64 = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            if (n - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "bank row {} ({}) has norm {n}, expected 1",
                    i, source_ids[i]
                )));
            }
        }
        let blocks = pack_blocks(&unit);
        Ok(Self {
            layer,
            q,
            unit,
            norms,
            source_ids,
            thresholds,
            blocks,
        })
    }

    pub fn layer(&self) -> DepthRatio {
        self.layer
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.unit.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.unit.cols()
    }

    pub fn unit_vectors(&self) -> &Matrix<T> {
        &self.unit
    }

    /// Raw (pre-normalization) feature norms of the bank members.
    pub fn norms(&self) -> &[T] {
        &self.norms
    }

    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }

    pub fn thresholds(&self) -> &BTreeMap<String, f64> {
        &self.thresholds
    }

    pub(crate) fn blocks(&self) -> &[T] {
        &self.blocks
    }

    pub(crate) fn block_count(&self) -> usize {
        self.len().div_ceil(LANES)
    }
}

/// Number of samples kept per metric: `ceil((1 - q) * n)`, at least one.
pub fn keep_count(n: usize, q: f64) -> usize {
    // guards against (1 - q) * n landing a hair above an integer
    let kept = ((1.0 - q) * n as f64 - 1e-9).ceil();
    (kept.max(1.0) as usize).min(n)
}

/// Row indices (ascending) surviving truncation at intensity `q`, and the
/// per-metric thresholds. Per metric the top `ceil((1 - q) n)` samples are
/// kept, ties broken by ascending sample id; the bank is the intersection.
pub fn truncation_survivors(
    quality: &QualityTable,
    metrics: &[String],
    q: f64,
) -> Result<(Vec<usize>, BTreeMap<String, f64>)> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::invalid(format!("truncation intensity {q} must lie in [0, 1)")));
    }
    if metrics.is_empty() {
        return Err(Error::invalid("truncation needs at least one metric"));
    }
    let n = quality.len();
    if n == 0 {
        return Err(Error::EmptyBank { q });
    }
    let keep = keep_count(n, q);
    let ids = quality.sample_ids();
    let mut survives = vec![true; n];
    let mut thresholds = BTreeMap::new();
    for name in metrics {
        let values = quality.require_metric(name)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| cmp_f(&values[b], &values[a]).then_with(|| ids[a].cmp(&ids[b])));
        let mut kept = vec![false; n];
        for &i in &order[..keep] {
            kept[i] = true;
        }
        for (s, k) in survives.iter_mut().zip(&kept) {
            *s &= *k;
        }
        thresholds.insert(name.clone(), values[order[keep - 1]]);
    }
    let idx: Vec<usize> = (0..n).filter(|&i| survives[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptyBank { q });
    }
    Ok((idx, thresholds))
}

/// Builds the safe bank from calibration features aligned row-for-row with
/// `quality`.
pub fn build_safe_bank<T: Scalar>(
    layer: DepthRatio,
    features: &Matrix<T>,
    quality: &QualityTable,
    metrics: &[String],
    q: f64,
) -> Result<SafeBank<T>> {
    if features.rows() != quality.len() {
        return Err(Error::Alignment(format!(
            "{} feature rows vs {} quality rows",
            features.rows(),
            quality.len()
        )));
    }
    let (idx, thresholds) = truncation_survivors(quality, metrics, q)?;
    let ids = quality.sample_ids();
    let mut unit = Vec::with_capacity(idx.len() * features.cols());
    let mut norms = Vec::with_capacity(idx.len());
    for &i in &idx {
        let (u, n) = unit_normalize(features.row(i)).map_err(|e| e.for_sample(&ids[i]))?;
        unit.extend_from_slice(&u);
        norms.push(n);
    }
    let unit = Matrix::new(idx.len(), features.cols(), unit)?;
    SafeBank::from_parts(
        layer,
        q,
        unit,
        norms,
        idx.iter().map(|&i| ids[i].clone()).collect(),
        thresholds,
    )
}

/// Bank over the rows `indices` of a dataset (all rows when `None`).
pub fn build_safe_bank_from_dataset<T: Scalar>(
    dataset: &Dataset,
    indices: Option<&[usize]>,
    layer: DepthRatio,
    metrics: &[String],
    q: f64,
) -> Result<SafeBank<T>> {
    let dump = dataset.layer(layer)?;
    let quality = dataset.quality()?;
    match indices {
        Some(idx) => build_safe_bank(layer, &dump.data.select_rows(idx).cast(), &quality.subset(idx), metrics, q),
        None => build_safe_bank(layer, &dump.data.cast(), quality, metrics, q),
    }
}
