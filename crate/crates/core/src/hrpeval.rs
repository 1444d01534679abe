//! Rejection-sweep evaluation of confidence scores.
//!
//! Samples are rejected in order of increasing confidence (ties by input
//! index). The area under the kept-mean-quality curve is normalized so that a
//! random monitor scores 0 and the quality oracle scores 1.

use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::cmp_f;
use crate::tensorstore::{csv_error, format_value, QualityTable};

/// Kept-sample mean quality after rejecting the `i` lowest-confidence samples,
/// for `i = 0..n`. Point `i` sits at rejected fraction `i / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionCurve {
    pub kept_mean: Vec<f64>,
}

impl RejectionCurve {
    pub fn len(&self) -> usize {
        self.kept_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_mean.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.kept_mean.len() as f64;
        self.kept_mean.iter().enumerate().map(move |(i, m)| (i as f64 / n, *m))
    }

    /// Left-Riemann area over `p` in `[0, 1)`.
    pub fn auc(&self) -> f64 {
        self.kept_mean.iter().sum::<f64>() / self.kept_mean.len() as f64
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("p,kept_mean\n");
        for (p, m) in self.points() {
            out.push_str(&format!("{p},{}\n", format_value(m)));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_inputs(confidence: &[f64], quality: &[f64]) -> Result<()> {
    if confidence.len() != quality.len() {
        return Err(Error::Alignment(format!(
            "{} confidences for {} quality values",
            confidence.len(),
            quality.len()
        )));
    }
    if confidence.len() < 2 {
        return Err(Error::invalid("rejection sweep needs at least two samples"));
    }
    if let Some(i) = confidence.iter().position(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("confidence {} at index {i} is not finite", confidence[i])));
    }
    if let Some(i) = quality.iter().position(|q| q.is_nan()) {
        return Err(Error::invalid(format!("quality at index {i} is NaN")));
    }
    Ok(())
}

fn curve_unchecked(confidence: &[f64], quality: &[f64]) -> RejectionCurve {
    let n = confidence.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among tied confidences
    order.sort_by(|&a, &b| cmp_f(&confidence[a], &confidence[b]));
    let mut kept_mean = vec![0.0; n];
    let mut suffix = 0.0;
    for i in (0..n).rev() {
        suffix += quality[order[i]];
        kept_mean[i] = suffix / (n - i) as f64;
    }
    RejectionCurve { kept_mean }
}

pub fn rejection_curve(confidence: &[f64], quality: &[f64]) -> Result<RejectionCurve> {
    check_inputs(confidence, quality)?;
    Ok(curve_unchecked(confidence, quality))
}

pub fn auc(curve: &RejectionCurve) -> f64 {
    curve.auc()
}

/// Evaluation of one metric. `hrp` is `None` when the quality is degenerate
/// (oracle and random areas coincide).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricHrp {
    pub metric: String,
    pub auc_f: f64,
    pub auc_random: f64,
    pub auc_oracle: f64,
    pub hrp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrpReport {
    pub monitor: String,
    pub n: usize,
    pub metrics: Vec<MetricHrp>,
    /// Mean over metrics with defined HRP; `None` if there are none.
    pub mean_hrp: Option<f64>,
}

impl HrpReport {
    pub fn metric(&self, name: &str) -> Option<&MetricHrp> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Per-metric quality with its random and oracle areas, precomputed so that
/// many confidence vectors can be evaluated against the same samples.
#[derive(Debug, Clone)]
pub struct HrpContext {
    metrics: Vec<(String, Vec<f64>, f64, f64)>,
    n: usize,
}

impl HrpContext {
    pub fn new(quality: &QualityTable, metrics: &[String]) -> Result<Self> {
        let n = quality.len();
        if n < 2 {
            return Err(Error::invalid("HRP needs at least two samples"));
        }
        if metrics.is_empty() {
            return Err(Error::invalid("HRP needs at least one metric"));
        }
        let mut out = Vec::with_capacity(metrics.len());
        for name in metrics {
            let q = quality.require_metric(name)?.to_vec();
            check_inputs(&vec![0.0; n], &q)?;
            let random = q.iter().sum::<f64>() / n as f64;
            let oracle = curve_unchecked(&q, &q).auc();
            out.push((name.clone(), q, random, oracle));
        }
        Ok(Self { metrics: out, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn normalize(auc_f: f64, random: f64, oracle: f64) -> Option<f64> {
        let denom = oracle - random;
        let scale = oracle.abs().max(random.abs()).max(1.0);
        if !denom.is_finite() || !auc_f.is_finite() || denom.abs() <= 1e-12 * scale {
            None
        } else {
            Some((auc_f - random) / denom)
        }
    }

    pub fn metric_results(&self, confidence: &[f64]) -> Result<Vec<MetricHrp>> {
        if confidence.len() != self.n {
            return Err(Error::Alignment(format!(
                "{} confidences for {} evaluation samples",
                confidence.len(),
                self.n
            )));
        }
        check_inputs(confidence, &self.metrics[0].1)?;
        Ok(self
            .metrics
            .iter()
            .map(|(name, q, random, oracle)| {
                let auc_f = curve_unchecked(confidence, q).auc();
                MetricHrp {
                    metric: name.clone(),
                    auc_f,
                    auc_random: *random,
                    auc_oracle: *oracle,
                    hrp: Self::normalize(auc_f, *random, *oracle),
                }
            })
            .collect())
    }

    /// Mean HRP over metrics with defined HRP.
    pub fn mean_hrp(&self, confidence: &[f64]) -> Result<Option<f64>> {
        Ok(mean_defined(&self.metric_results(confidence)?))
    }

    pub fn report(&self, confidence: &[f64], monitor: &str) -> Result<HrpReport> {
        let metrics = self.metric_results(confidence)?;
        for m in metrics.iter().filter(|m| m.hrp.is_none()) {
            warn!("HRP undefined for metric {} (degenerate quality); excluded from the mean", m.metric);
        }
        Ok(HrpReport {
            monitor: monitor.to_string(),
            n: self.n,
            mean_hrp: mean_defined(&metrics),
            metrics,
        })
    }
}

fn mean_defined(metrics: &[MetricHrp]) -> Option<f64> {
    let defined: Vec<f64> = metrics.iter().filter_map(|m| m.hrp).collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// HRP report for `confidence` aligned row-for-row with `quality`.
pub fn hrp(confidence: &[f64], quality: &QualityTable, metrics: &[String], monitor: &str) -> Result<HrpReport> {
    HrpContext::new(quality, metrics)?.report(confidence, monitor)
}

/// Reads a `sample_id,<score>` CSV. The score column may have any name.
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<f64>)> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(&label, e))?;
    let header = reader.headers().map_err(|e| csv_error(&label, e))?.clone();
    if header.len() != 2 || header.get(0).map(str::trim) != Some("sample_id") {
        return Err(Error::Parse {
            path: label,
            line: 1,
            message: "expected header sample_id,<score>".into(),
        });
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&label, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let value = record[1].trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let Some(value) = value else {
            return Err(Error::Parse {
                path: label,
                line,
                message: format!("cannot parse score {:?}", &record[1]),
            });
        };
        ids.push(record[0].trim().to_string());
        values.push(value);
    }
    Ok((ids, values))
}

pub fn write_scores_csv(path: impl AsRef<Path>, ids: &[String], confidence: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("sample_id,confidence\n");
    for (id, c) in ids.iter().zip(confidence) {
        out.push_str(&format!("{id},{c}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Evaluates an external score file against a quality table, matching rows
/// by sample id.
pub fn eval_external_scores(
    scores: impl AsRef<Path>,
    quality: &QualityTable,
    metrics: &[String],
    monitor: &str,
) -> Result<HrpReport> {
    let (ids, values) = read_scores_csv(scores)?;
    let aligned = quality.aligned_to(&ids)?;
    hrp(&values, &aligned, metrics, monitor)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

    fn table(cols: &[(&str, &[f64])]) -> QualityTable {
        let n = cols[0].1.len();
        let mut t = QualityTable::new((0..n).map(|i| format!("s{i}")).collect()).unwrap();
        for (name, v) in cols {
            t.add_metric(name, v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn tied_confidence_keeps_index_order() {
        let c = rejection_curve(&[0.0; 4], &Q).unwrap();
        let want = [0.25, 0.3, 0.35, 0.4];
        for (a, b) in c.kept_mean.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_point_curve() {
        let c = rejection_curve(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(c.points().collect::<Vec<_>>(), vec![(0.0, 0.5), (0.5, 1.0)]);
    }

    #[test]
    fn hand_sweep_areas() {
        let oracle = rejection_curve(&Q, &Q).unwrap().auc();
        let anti = rejection_curve(&[4.0, 3.0, 2.0, 1.0], &Q).unwrap().auc();
        assert!((oracle - 0.325).abs() < 1e-15);
        assert!((anti - 0.175).abs() < 1e-15);
        assert!((rejection_curve(&[3.0, 1.0, 2.0], &[0.7; 3]).unwrap().auc() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let t = table(&[("ms_ssim", &Q)]);
        let m = vec!["ms_ssim".to_string()];
        assert_eq!(hrp(&Q, &t, &m, "oracle").unwrap().mean_hrp, Some(1.0));
        let r = hrp(&[4.0, 3.0, 2.0, 1.0], &t, &m, "anti").unwrap();
        assert!((r.mean_hrp.unwrap() + 1.0).abs() < 1e-12);
        assert!((r.metrics[0].auc_random - 0.25).abs() < 1e-15);
    }

    #[test]
    fn increasing_transform_is_invisible() {
        let q = [0.9, 0.1, 0.5, 0.7, 0.3, 0.2];
        let c = [0.3, -1.0, 2.0, 0.1, 0.05, -0.2];
        let t = table(&[("ms_ssim", &q)]);
        let m = vec!["ms_ssim".to_string()];
        let e: Vec<f64> = c.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(hrp(&c, &t, &m, "").unwrap().metrics, hrp(&e, &t, &m, "").unwrap().metrics);
    }

    #[test]
    fn degenerate_quality_is_undefined() {
        let t = table(&[("ms_ssim", &[0.5; 4]), ("one_minus_lpips", &Q)]);
        let m = vec!["ms_ssim".to_string(), "one_minus_lpips".to_string()];
        let r = hrp(&Q, &t, &m, "").unwrap();
        assert_eq!(r.metrics[0].hrp, None);
        assert_eq!(r.mean_hrp, Some(1.0));
    }

    #[test]
    fn conflicting_metrics_cap_mean_below_one() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        let b = [0.5, 0.1, 0.4, 0.2, 0.3];
        let t = table(&[("ms_ssim", &a), ("one_minus_lpips", &b)]);
        let m = vec!["ms_ssim".to_string(), "one_minus_lpips".to_string()];
        for c in [&a, &b] {
            assert!(hrp(c, &t, &m, "").unwrap().mean_hrp.unwrap() < 1.0);
        }
    }

    #[test]
    fn length_mismatch_and_parse_errors() {
        assert!(matches!(rejection_curve(&[1.0], &[1.0, 2.0]), Err(Error::Alignment(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "sample_id,score\na,1\nb,x\n").unwrap();
        match read_scores_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn external_scores_align_by_id() {
        let t = table(&[("ms_ssim", &Q)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "sample_id,alocc\ns3,0.4\ns1,0.2\ns0,0.1\ns2,0.3\n").unwrap();
        let r = eval_external_scores(&p, &t, &["ms_ssim".to_string()], "ext").unwrap();
        assert_eq!(r.mean_hrp, Some(1.0));
    }
}
