use std::fs;
use std::path::Path;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autotune::grid::Grid;
use crate::error::{Error, Result};
use crate::hrpeval::HrpContext;
use crate::scalar::Scalar;
use crate::scorer::{
    build_safe_bank, fuse, nearest_distances_batch, unit_normalize, BankStatistics, Fusion, Monitor, MonitorConfig,
    VariantSpec,
};
use crate::tensorstore::{csv_error, split_dataset, Dataset, DepthRatio, SplitAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            val_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Evaluated grid cell. `mean_hrp` is `None` when HRP is undefined on every
/// metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    pub layer: DepthRatio,
    pub q: f64,
    pub param: f64,
    pub gamma: f64,
    pub mean_hrp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub index: usize,
    pub layer: DepthRatio,
    pub q: f64,
    pub param: f64,
    pub gamma: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: MonitorConfig,
    pub best_index: usize,
    pub best_mean_hrp: f64,
    pub seed: u64,
    pub grid: Grid,
    pub split: SplitAssignment,
    pub trace: Vec<TraceRow>,
    pub skipped: Vec<SkippedCell>,
}

/// Unit vectors and norms of the validation samples at one layer.
struct Prepared<T> {
    unit: Vec<Vec<T>>,
    norms: Vec<f64>,
}

fn prepare<T: Scalar>(dataset: &Dataset, layer: DepthRatio) -> Result<Prepared<T>> {
    let dump = dataset.layer(layer)?;
    let data = dump.data.cast::<T>();
    let mut unit = Vec::with_capacity(data.rows());
    let mut norms = Vec::with_capacity(data.rows());
    for (row, id) in data.iter_rows().zip(&dump.sample_ids) {
        let (u, n) = unit_normalize(row).map_err(|e| e.for_sample(id))?;
        unit.push(u);
        norms.push(n.as_f64());
    }
    Ok(Prepared { unit, norms })
}

type CellOutcome = std::result::Result<Option<f64>, String>;

struct GroupJob<'a, T> {
    layer: DepthRatio,
    q: f64,
    calib: &'a Dataset,
    val: &'a Prepared<T>,
}

fn gamma_sweep(distance: &[f64], norms: &[f64], gammas: &[f64], fusion: Fusion, ctx: &HrpContext) -> Result<Vec<CellOutcome>> {
    let mut out = Vec::with_capacity(gammas.len());
    let mut conf = vec![0.0; distance.len()];
    for &gamma in gammas {
        let mut failed = None;
        for ((c, d), n) in conf.iter_mut().zip(distance).zip(norms) {
            match fuse(*d, *n, gamma, fusion) {
                Ok(v) => *c = v,
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        out.push(match failed {
            Some(reason) => Err(reason),
            None => Ok(ctx.mean_hrp(&conf)?),
        });
    }
    Ok(out)
}

fn eval_group<T: Scalar>(
    job: &GroupJob<'_, T>,
    grid: &Grid,
    specs: &[VariantSpec],
    ctx: &HrpContext,
    seed: u64,
) -> Result<Vec<CellOutcome>> {
    let n_cells = specs.len() * grid.gamma.len();
    let dump = job.calib.layer(job.layer)?;
    let bank = match build_safe_bank::<T>(job.layer, &dump.data.cast(), job.calib.quality()?, &grid.metrics, job.q) {
        Ok(b) => b,
        Err(e @ Error::EmptyBank { .. }) => return Ok(vec![Err(e.to_string()); n_cells]),
        Err(e) => return Err(e),
    };
    let m = bank.len();
    debug!("layer {} q {}: bank of {m}", job.layer, job.q);
    let mut out = Vec::with_capacity(n_cells);
    let skip_all = |reason: String, out: &mut Vec<CellOutcome>| {
        out.extend(std::iter::repeat_n(Err(reason), grid.gamma.len()));
    };

    let knn_ks: Vec<usize> = specs
        .iter()
        .filter_map(|s| match s {
            VariantSpec::Knn { k } if *k <= m => Some(*k),
            _ => None,
        })
        .collect();
    let nearest: Vec<Vec<T>> = match knn_ks.iter().max() {
        Some(&kmax) => nearest_distances_batch(&job.val.unit, &bank, kmax)?,
        None => Vec::new(),
    };
    let stats = BankStatistics::new(&bank);

    for spec in specs {
        let distance: Vec<f64> = match *spec {
            VariantSpec::Knn { k } if k > m => {
                skip_all(format!("k = {k} exceeds bank size {m}"), &mut out);
                continue;
            }
            VariantSpec::Knn { k } => nearest.iter().map(|d| 0.0 - d[k - 1].as_f64()).collect(),
            _ => {
                let model = match stats.fit(*spec, seed) {
                    Ok(model) => model,
                    Err(e) if e.is_infeasible() => {
                        skip_all(e.to_string(), &mut out);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let mut scratch = Vec::new();
                job.val
                    .unit
                    .iter()
                    .map(|u| model.distance_score(u, &bank, &mut scratch))
                    .collect::<Result<_>>()?
            }
        };
        out.extend(gamma_sweep(&distance, &job.val.norms, &grid.gamma, grid.fusion, ctx)?);
    }
    Ok(out)
}

/// Evaluates every grid cell with banks fitted on `calib` and HRP measured
/// on `val`. Returns trace rows and skipped cells in grid order.
pub fn evaluate_grid<T: Scalar>(
    calib: &Dataset,
    val: &Dataset,
    grid: &Grid,
    seed: u64,
) -> Result<(Vec<TraceRow>, Vec<SkippedCell>)> {
    grid.validate()?;
    let ctx = HrpContext::new(val.quality()?, &grid.metrics)?;
    let specs = grid.specs()?;
    for name in &grid.metrics {
        calib.quality()?.require_metric(name)?;
    }
    let prepared: Vec<Prepared<T>> = grid.layers.iter().map(|&l| prepare(val, l)).collect::<Result<_>>()?;
    let jobs: Vec<GroupJob<'_, T>> = grid
        .layers
        .iter()
        .zip(&prepared)
        .flat_map(|(&layer, val)| grid.q.iter().map(move |&q| GroupJob { layer, q, calib, val }))
        .collect();
    let outcomes: Vec<Result<Vec<CellOutcome>>> =
        jobs.par_iter().map(|job| eval_group(job, grid, &specs, &ctx, seed)).collect();

    let cells = grid.cells()?;
    let mut results = Vec::with_capacity(cells.len());
    for group in outcomes {
        results.extend(group?);
    }
    if results.len() != cells.len() {
        return Err(Error::Invariant(format!(
            "grid evaluation produced {} results for {} cells",
            results.len(),
            cells.len()
        )));
    }
    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    for (cell, outcome) in cells.iter().zip(results) {
        match outcome {
            Ok(mean_hrp) => trace.push(TraceRow {
                index: cell.index,
                layer: cell.layer,
                q: cell.q,
                param: cell.variant.param(),
                gamma: cell.gamma,
                mean_hrp,
            }),
            Err(reason) => skipped.push(SkippedCell {
                index: cell.index,
                layer: cell.layer,
                q: cell.q,
                param: cell.variant.param(),
                gamma: cell.gamma,
                reason,
            }),
        }
    }
    Ok((trace, skipped))
}

/// First trace row with the largest defined mean HRP.
fn argmax(trace: &[TraceRow]) -> Option<&TraceRow> {
    let mut best: Option<&TraceRow> = None;
    for row in trace {
        if let Some(v) = row.mean_hrp {
            if best.is_none_or(|b| v > b.mean_hrp.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(row);
            }
        }
    }
    best
}

/// Splits `dataset`, evaluates the grid and returns the best configuration.
pub fn self_tune<T: Scalar>(dataset: &Dataset, grid: &Grid, options: &TuneOptions) -> Result<TuneResult> {
    grid.validate()?;
    let split = split_dataset(dataset, options.val_fraction, options.seed)?;
    let calib = dataset.subset(&split.calib_indices);
    let val = dataset.subset(&split.val_indices);
    info!(
        "tuning {} cells on {} calibration / {} validation samples",
        grid.len(),
        calib.len(),
        val.len()
    );
    let (trace, skipped) = evaluate_grid::<T>(&calib, &val, grid, options.seed)?;
    let best = argmax(&trace).ok_or_else(|| {
        Error::Infeasible(format!(
            "no feasible grid cell with defined HRP ({} skipped of {})",
            skipped.len(),
            grid.len()
        ))
    })?;
    let variant = VariantSpec::new(grid.variant, best.param)?;
    let config = MonitorConfig {
        layer: best.layer,
        q: best.q,
        variant,
        gamma: best.gamma,
        fusion: grid.fusion,
        metrics: grid.metrics.clone(),
    };
    info!(
        "best cell {}: layer {} q {} {} gamma {} mean HRP {}",
        best.index,
        config.layer,
        config.q,
        config.variant,
        config.gamma,
        best.mean_hrp.unwrap_or(f64::NAN)
    );
    Ok(TuneResult {
        best: config,
        best_index: best.index,
        best_mean_hrp: best.mean_hrp.unwrap_or(f64::NAN),
        seed: options.seed,
        grid: grid.clone(),
        split,
        trace,
        skipped,
    })
}

/// Uncached evaluation of a single configuration: fit on `calib`, score and
/// evaluate on `val`.
pub fn evaluate_config<T: Scalar>(calib: &Dataset, val: &Dataset, config: &MonitorConfig, seed: u64) -> Result<Option<f64>> {
    let monitor = Monitor::<T>::fit(calib, None, config.clone(), seed)?;
    let confidence = monitor.score_dataset(val)?;
    HrpContext::new(val.quality()?, &config.metrics)?.mean_hrp(&confidence)
}

impl TuneResult {
    /// Fits the monitor for the best configuration on the calibration side
    /// of the tuning split. `dataset` must be the tuned dataset.
    pub fn fit_monitor<T: Scalar>(&self, dataset: &Dataset) -> Result<Monitor<T>> {
        let indices: Vec<usize> = if self.split.calib_indices.is_empty() {
            let pos: std::collections::HashMap<&str, usize> =
                dataset.sample_ids().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            self.split
                .calib_ids
                .iter()
                .map(|id| {
                    pos.get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Alignment(format!("tuning sample {id:?} missing from dataset")))
                })
                .collect::<Result<_>>()?
        } else {
            self.split.calib_indices.clone()
        };
        Monitor::fit(dataset, Some(&indices), self.best.clone(), self.seed)
    }

    /// Writes the trace as `index,layer,q,param,gamma,mean_hrp,status`.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let label = path.display().to_string();
        let mut rows: Vec<(usize, [String; 7])> = Vec::with_capacity(self.trace.len() + self.skipped.len());
        for r in &self.trace {
            rows.push((
                r.index,
                [
                    r.index.to_string(),
                    r.layer.tag(),
                    r.q.to_string(),
                    r.param.to_string(),
                    r.gamma.to_string(),
                    r.mean_hrp.map_or(String::new(), |v| v.to_string()),
                    if r.mean_hrp.is_some() { "ok".into() } else { "undefined".into() },
                ],
            ));
        }
        for s in &self.skipped {
            rows.push((
                s.index,
                [
                    s.index.to_string(),
                    s.layer.tag(),
                    s.q.to_string(),
                    s.param.to_string(),
                    s.gamma.to_string(),
                    String::new(),
                    format!("skipped: {}", s.reason),
                ],
            ));
        }
        rows.sort_by_key(|r| r.0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let param = self.grid.variant.param_name();
        w.write_record(["index", "layer", "q", param, "gamma", "mean_hrp", "status"])
            .map_err(|e| csv_error(&label, e))?;
        for (_, r) in rows {
            w.write_record(&r).map_err(|e| csv_error(&label, e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Writes a JSON summary referencing the trace CSV `trace_file`, which is
    /// written next to it.
    pub fn write_summary(&self, path: impl AsRef<Path>, trace_file: &str) -> Result<()> {
        let path = path.as_ref();
        self.write_trace_csv(path.with_file_name(trace_file))?;
        let summary = TuneSummary {
            best: &self.best,
            best_index: self.best_index,
            best_mean_hrp: self.best_mean_hrp,
            seed: self.seed,
            grid: &self.grid,
            split: &self.split,
            trace_file,
            evaluated: self.trace.len(),
            skipped: self.skipped.len(),
        };
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    best: &'a MonitorConfig,
    best_index: usize,
    best_mean_hrp: f64,
    seed: u64,
    grid: &'a Grid,
    split: &'a SplitAssignment,
    trace_file: &'a str,
    evaluated: usize,
    skipped: usize,
}
