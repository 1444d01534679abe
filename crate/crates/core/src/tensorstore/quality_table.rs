use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of a raw metric column before ingestion. After ingestion every
/// stored column is higher-is-better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Higher,
    Lower,
}

/// Similarity metrics bounded above by 1.
const BOUNDED_METRICS: &[&str] = &["ms_ssim", "ssim", "one_minus_lpips"];
const HIGHER_METRICS: &[&str] = &["psnr", "ms_ssim", "ssim", "one_minus_lpips"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Per-sample quality scores, one column per metric, higher = better.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QualityTable {
    sample_ids: Vec<String>,
    index: HashMap<String, usize>,
    columns: Vec<MetricColumn>,
}

impl QualityTable {
    pub fn new(sample_ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(sample_ids.len());
        for (i, id) in sample_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Alignment(format!("duplicate sample id {id:?} in quality table")));
            }
        }
        Ok(Self {
            sample_ids,
            index,
            columns: Vec::new(),
        })
    }

    /// Adds an already-oriented (higher-is-better) column.
    pub fn add_metric(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.sample_ids.len() {
            return Err(Error::Shape(format!(
                "metric {name}: {} values for {} samples",
                values.len(),
                self.sample_ids.len()
            )));
        }
        if self.metric(name).is_some() {
            return Err(Error::invalid(format!("metric {name} registered twice")));
        }
        let bounded = BOUNDED_METRICS.contains(&name);
        for (id, &v) in self.sample_ids.iter().zip(&values) {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("metric {name}, sample {id}: value {v}")));
            }
            if bounded && v > 1.0 {
                return Err(Error::invalid(format!(
                    "metric {name}, sample {id}: similarity value {v} exceeds 1"
                )));
            }
        }
        self.columns.push(MetricColumn {
            name: name.to_string(),
            values,
        });
        Ok(())
    }

    /// Adds a raw column, applying orientation. `lpips` becomes
    /// `one_minus_lpips`; other lower-is-better metrics are negated and
    /// stored as `neg_<name>`.
    pub fn add_raw_metric(&mut self, name: &str, values: Vec<f64>, orientation: Option<Orientation>) -> Result<()> {
        let orientation = match (orientation, name) {
            (Some(o), _) => o,
            (None, "lpips") => Orientation::Lower,
            (None, n) if HIGHER_METRICS.contains(&n) => Orientation::Higher,
            (None, n) => {
                return Err(Error::invalid(format!(
                    "unknown orientation for metric {n:?}; declare it in the manifest's metric_orientation"
                )))
            }
        };
        match (orientation, name) {
            (Orientation::Higher, _) => self.add_metric(name, values),
            (Orientation::Lower, "lpips") => self.add_metric("one_minus_lpips", values.into_iter().map(|v| 1.0 - v).collect()),
            (Orientation::Lower, n) => self.add_metric(&format!("neg_{n}"), values.into_iter().map(|v| -v).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn columns(&self) -> &[MetricColumn] {
        &self.columns
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn require_metric(&self, name: &str) -> Result<&[f64]> {
        self.metric(name)
            .ok_or_else(|| Error::invalid(format!("quality table has no metric {name:?}")))
    }

    pub fn subset(&self, indices: &[usize]) -> QualityTable {
        let ids: Vec<String> = indices.iter().map(|&i| self.sample_ids[i].clone()).collect();
        let mut out = QualityTable::new(ids).expect("subset of unique ids");
        out.columns = self
            .columns
            .iter()
            .map(|c| MetricColumn {
                name: c.name.clone(),
                values: indices.iter().map(|&i| c.values[i]).collect(),
            })
            .collect();
        out
    }

    /// Reorders rows to match `ids` exactly.
    pub fn aligned_to(&self, ids: &[String]) -> Result<QualityTable> {
        let mut order = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self
                .position(id)
                .ok_or_else(|| Error::Alignment(format!("quality table is missing sample {id:?}")))?;
            order.push(i);
        }
        if ids.len() != self.len() {
            let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
            let extra = self
                .sample_ids
                .iter()
                .find(|id| !wanted.contains(id.as_str()))
                .cloned()
                .unwrap_or_default();
            return Err(Error::Alignment(format!("quality table has unexpected sample {extra:?}")));
        }
        Ok(self.subset(&order))
    }

    pub fn read_csv(path: impl AsRef<Path>, orientation: &BTreeMap<String, Orientation>) -> Result<Self> {
        let path = path.as_ref();
        let label = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(&label, e))?;
        let header = reader.headers().map_err(|e| csv_error(&label, e))?.clone();
        if header.get(0).map(str::trim) != Some("sample_id") {
            return Err(Error::Parse {
                path: label,
                line: 1,
                message: "first column must be sample_id".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        if names.is_empty() {
            return Err(Error::Parse {
                path: label,
                line: 1,
                message: "no metric columns".into(),
            });
        }
        let mut ids = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&label, e))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() + 1 {
                return Err(Error::Parse {
                    path: label,
                    line,
                    message: format!("expected {} fields, found {}", names.len() + 1, record.len()),
                });
            }
            ids.push(record[0].trim().to_string());
            for (j, field) in record.iter().skip(1).enumerate() {
                let v = parse_value(field).ok_or_else(|| Error::Parse {
                    path: label.clone(),
                    line,
                    message: format!("column {}: cannot parse {field:?}", names[j]),
                })?;
                cols[j].push(v);
            }
        }
        let mut table = QualityTable::new(ids)?;
        for (name, values) in names.iter().zip(cols) {
            table.add_raw_metric(name, values, orientation.get(name).copied())?;
        }
        Ok(table)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("sample_id");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (i, id) in self.sample_ids.iter().enumerate() {
            out.push_str(id);
            for c in &self.columns {
                out.push(',');
                out.push_str(&format_value(c.values[i]));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Shortest round-trip decimal; `+inf` is written as `inf`.
pub(crate) fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub(crate) fn parse_value(field: &str) -> Option<f64> {
    let f = field.trim();
    match f {
        "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
        _ => f.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

pub(crate) fn csv_error(label: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: label.to_string(),
        line,
        message: e.to_string(),
    }
}
