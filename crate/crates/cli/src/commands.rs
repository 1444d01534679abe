use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use halluscope::autotune::{self, parameter_histogram, sensitivity_sweep, Grid, TuneOptions};
use halluscope::hrpeval::{self, rejection_curve, HrpReport};
use halluscope::perturb::{corrupt, gen_synthetic, Corruption, CorruptionKind, CorruptionSpec, SyntheticSpec};
use halluscope::quality::{images_from_tensor, images_to_tensor, kendall_tau, quality_batch, top_k_overlap};
use halluscope::scorer::{stored_scalar, Monitor};
use halluscope::tensorstore::{load_manifest, read_tensor, write_tensor, DatasetManifest, QualityTable};
use halluscope::{Error, Result, Scalar};

use crate::{
    CalibrateArgs, Command, CorrelateArgs, CorruptArgs, EvalArgs, MetricsArgs, Precision, ScoreArgs,
    SensitivityArgs, SynthArgs, TuneArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Calibrate(a) => calibrate(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Correlate(a) => correlate(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn build_grid(args: &TuneArgs) -> Result<Grid> {
    let mut grid = match &args.grid {
        Some(path) => Grid::read_json(path)?,
        None => Grid::default(),
    };
    if let Some(variant) = args.variant {
        if variant != grid.variant {
            grid.variant = variant;
            grid.params = None;
        }
    }
    if let Some(fusion) = args.fusion {
        grid.fusion = fusion;
    }
    if let Some(metrics) = &args.metrics {
        grid.metrics = metrics.clone();
    }
    grid.validate()?;
    Ok(grid)
}

fn tune_options(args: &TuneArgs) -> Result<TuneOptions> {
    if !(args.val_frac > 0.0 && args.val_frac < 1.0) {
        return Err(Error::InvalidInput(format!("--val-frac {} must lie in (0, 1)", args.val_frac)));
    }
    Ok(TuneOptions {
        val_fraction: args.val_frac,
        seed: args.seed,
    })
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let grid = build_grid(&args.tune)?;
    let options = tune_options(&args.tune)?;
    let dataset = load_manifest(&args.manifest)?;
    create_dir(&args.out)?;
    match args.tune.precision {
        Precision::F32 => calibrate_with::<f32>(&dataset, &grid, &options, &args.out),
        Precision::F64 => calibrate_with::<f64>(&dataset, &grid, &options, &args.out),
    }
}

fn calibrate_with<T: Scalar>(
    dataset: &halluscope::Dataset,
    grid: &Grid,
    options: &TuneOptions,
    out: &Path,
) -> Result<()> {
    let tuned = autotune::self_tune::<T>(dataset, grid, options)?;
    let monitor = tuned.fit_monitor::<T>(dataset)?;
    monitor.save(out.join("monitor.json"))?;
    tuned.write_summary(out.join("tune.json"), "trace.csv")?;
    let best = &tuned.best;
    println!(
        "best mean HRP {} at layer {} q {} {} gamma {} ({} cells, {} skipped, bank {})",
        percent(Some(tuned.best_mean_hrp)),
        best.layer,
        best.q,
        best.variant,
        best.gamma,
        tuned.trace.len() + tuned.skipped.len(),
        tuned.skipped.len(),
        monitor.bank.len()
    );
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let dataset = load_manifest(&args.manifest)?;
    let confidence = match stored_scalar(&args.monitor)?.as_str() {
        "f32" => Monitor::<f32>::load(&args.monitor)?.score_dataset(&dataset)?,
        "f64" => Monitor::<f64>::load(&args.monitor)?.score_dataset(&dataset)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: unknown scalar type {other:?}",
                args.monitor.display()
            )))
        }
    };
    hrpeval::write_scores_csv(&args.out, dataset.sample_ids(), &confidence)?;
    info!("scored {} samples", confidence.len());
    Ok(())
}

/// Quality table named by `--quality` or by the manifest's quality file.
fn read_quality(quality: Option<&Path>, manifest: Option<&Path>) -> Result<QualityTable> {
    match (quality, manifest) {
        (Some(q), _) => QualityTable::read_csv(q, &BTreeMap::new()),
        (None, Some(m)) => {
            let doc = DatasetManifest::read(m)?;
            let file = doc
                .quality_file
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("{} names no quality file", m.display())))?;
            let root = m.parent().unwrap_or_else(|| Path::new("."));
            QualityTable::read_csv(root.join(file), &doc.metric_orientation)?.aligned_to(&doc.sample_ids)
        }
        (None, None) => Err(Error::InvalidInput("either --quality or --manifest is required".into())),
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let table = read_quality(args.quality.as_deref(), args.manifest.as_deref())?;
    let metrics = args.metrics.clone().unwrap_or_else(|| table.metric_names());
    let (ids, confidence) = hrpeval::read_scores_csv(&args.scores)?;
    let aligned = table.aligned_to(&ids)?;
    let name = args
        .scores
        .file_stem()
        .map_or_else(|| "scores".to_string(), |s| s.to_string_lossy().into_owned());
    let report = hrpeval::hrp(&confidence, &aligned, &metrics, &name)?;
    report.write_json(&args.out)?;
    if let Some(dir) = &args.curves {
        create_dir(dir)?;
        for metric in &metrics {
            let curve = rejection_curve(&confidence, aligned.require_metric(metric)?)?;
            curve.write_csv(dir.join(format!("curve_{metric}.csv")))?;
        }
    }
    for m in &report.metrics {
        println!("{:<20} HRP {}", m.metric, percent(m.hrp));
    }
    println!("{:<20} HRP {}", "mean", percent(report.mean_hrp));
    Ok(())
}

#[derive(Serialize)]
struct SensitivityDocument<'a> {
    seed: u64,
    val_fraction: f64,
    repeats: usize,
    factors: &'a [usize],
    n_calib: usize,
    n_test: usize,
    grid: &'a Grid,
    rows: &'a [autotune::SensitivityRow],
}

fn sensitivity(args: SensitivityArgs) -> Result<()> {
    let grid = build_grid(&args.tune)?;
    let options = tune_options(&args.tune)?;
    let calib = load_manifest(&args.calib)?;
    let test = load_manifest(&args.test)?;
    create_dir(&args.out)?;
    let rows = match args.tune.precision {
        Precision::F32 => sensitivity_sweep::<f32>(&calib, &test, &grid, &args.factors, args.repeats, &options)?,
        Precision::F64 => sensitivity_sweep::<f64>(&calib, &test, &grid, &args.factors, args.repeats, &options)?,
    };
    write_json(
        &args.out.join("sensitivity.json"),
        &SensitivityDocument {
            seed: options.seed,
            val_fraction: options.val_fraction,
            repeats: args.repeats,
            factors: &args.factors,
            n_calib: calib.len(),
            n_test: test.len(),
            grid: &grid,
            rows: &rows,
        },
    )?;
    let mut csv = String::from("factor,n_subsample,mean_hrp,std_hrp,completed,mean_bank_size,status\n");
    for row in &rows {
        let banks: Vec<usize> = row.runs.iter().filter_map(|r| r.bank_size).collect();
        let mean_bank = (!banks.is_empty()).then(|| banks.iter().sum::<usize>() as f64 / banks.len() as f64);
        let status = row.infeasible.as_ref().map_or_else(|| "ok".to_string(), |r| format!("infeasible: {r}"));
        csv.push_str(&format!(
            "{},{},{},{},{},{},\"{}\"\n",
            row.factor,
            row.n_subsample,
            opt(row.mean_hrp),
            opt(row.std_hrp),
            row.runs.iter().filter(|r| r.test_mean_hrp.is_some()).count(),
            opt(mean_bank),
            status.replace('"', "\"\"")
        ));
        let configs: Vec<_> = row.runs.iter().filter_map(|r| r.config.clone()).collect();
        if !configs.is_empty() {
            let hist = parameter_histogram(&configs)?;
            write_json(&args.out.join(format!("histogram_f{}.json", row.factor)), &hist)?;
        }
        match row.mean_hrp {
            Some(_) => println!(
                "factor {:>3} (n = {:>6}): mean HRP {} ± {:.2}",
                row.factor,
                row.n_subsample,
                percent(row.mean_hrp),
                100.0 * row.std_hrp.unwrap_or(0.0)
            ),
            None => println!("factor {:>3} (n = {:>6}): infeasible", row.factor, row.n_subsample),
        }
    }
    write_text(&args.out.join("sensitivity.csv"), &csv)
}

#[derive(Serialize)]
struct CorrelationDocument {
    /// `samples` (quality CSV) or `monitors` (HRP reports).
    over: &'static str,
    items: Vec<String>,
    metrics: Vec<String>,
    top: usize,
    tau: Vec<Vec<Option<f64>>>,
    p_value: Vec<Vec<Option<f64>>>,
    top_overlap: Vec<Vec<Option<f64>>>,
    /// Number of items scored on both metrics of each pair.
    n: Vec<Vec<usize>>,
}

/// Per-metric score vectors over `items`, `None` where a value is missing.
fn correlation_matrices(
    over: &'static str,
    items: Vec<String>,
    metrics: Vec<String>,
    columns: &[Vec<Option<f64>>],
    top: usize,
) -> Result<CorrelationDocument> {
    if top == 0 {
        return Err(Error::InvalidInput("--top must be at least 1".into()));
    }
    let m = metrics.len();
    let mut doc = CorrelationDocument {
        over,
        items,
        metrics,
        top,
        tau: vec![vec![None; m]; m],
        p_value: vec![vec![None; m]; m],
        top_overlap: vec![vec![None; m]; m],
        n: vec![vec![0; m]; m],
    };
    for a in 0..m {
        for b in 0..m {
            let (x, y): (Vec<f64>, Vec<f64>) = columns[a]
                .iter()
                .zip(&columns[b])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            doc.n[a][b] = x.len();
            match kendall_tau(&x, &y) {
                Ok(t) => {
                    doc.tau[a][b] = Some(t.tau);
                    doc.p_value[a][b] = Some(t.p_value);
                }
                Err(e) => warn!("tau({}, {}) undefined: {e}", doc.metrics[a], doc.metrics[b]),
            }
            if top <= x.len() {
                doc.top_overlap[a][b] = Some(top_k_overlap(&x, &y, top)?);
            }
        }
    }
    Ok(doc)
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let doc = if let Some(path) = &args.quality {
        let table = QualityTable::read_csv(path, &BTreeMap::new())?;
        let metrics = table.metric_names();
        let columns: Vec<Vec<Option<f64>>> = table
            .columns()
            .iter()
            .map(|c| c.values.iter().map(|v| Some(*v)).collect())
            .collect();
        correlation_matrices("samples", table.sample_ids().to_vec(), metrics, &columns, args.top)?
    } else {
        let reports: Vec<HrpReport> = args.reports.iter().map(HrpReport::read_json).collect::<Result<_>>()?;
        let mut metrics: Vec<String> = Vec::new();
        for r in &reports {
            for m in &r.metrics {
                if !metrics.contains(&m.metric) {
                    metrics.push(m.metric.clone());
                }
            }
        }
        let columns: Vec<Vec<Option<f64>>> = metrics
            .iter()
            .map(|name| reports.iter().map(|r| r.metric(name).and_then(|m| m.hrp)).collect())
            .collect();
        let items = reports.iter().map(|r| r.monitor.clone()).collect();
        correlation_matrices("monitors", items, metrics, &columns, args.top)?
    };
    write_json(&args.out, &doc)?;
    for (a, name) in doc.metrics.iter().enumerate() {
        let row: Vec<String> = doc.tau[a]
            .iter()
            .map(|t| t.map_or_else(|| "   -  ".to_string(), |t| format!("{t:+.3}")))
            .collect();
        println!("{name:<20} {}", row.join(" "));
    }
    Ok(())
}

fn corruption_from_args(args: &CorruptArgs) -> Corruption {
    let mut c = args.kind.default_corruption();
    match &mut c {
        Corruption::GaussianNoise { sigma } | Corruption::GaussianBlur { sigma } => {
            *sigma = args.sigma.unwrap_or(*sigma);
        }
        Corruption::ContrastJitter { low, high } => {
            *low = args.low.unwrap_or(*low);
            *high = args.high.unwrap_or(*high);
        }
        Corruption::PixelDropout { rate } => *rate = args.rate.unwrap_or(*rate),
        Corruption::SaturationBoxes { count, size } => {
            *count = args.count.unwrap_or(*count);
            *size = args.size.unwrap_or(*size);
        }
        Corruption::ChannelMisregistration { offset } => *offset = args.offset.unwrap_or(*offset),
    }
    c
}

#[derive(Serialize)]
struct CorruptionRecord<'a> {
    input: String,
    peak: f32,
    images: usize,
    #[serde(flatten)]
    spec: &'a CorruptionSpec,
}

/// Sidecar JSON path `<out>.json` recording the corruption and seed.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    out.with_file_name(name)
}

fn corrupt_cmd(args: CorruptArgs) -> Result<()> {
    let spec = CorruptionSpec {
        corruption: corruption_from_args(&args),
        seed: args.seed,
    };
    spec.corruption.validate()?;
    if !(args.peak.is_finite() && args.peak > 0.0) {
        return Err(Error::InvalidInput(format!("--peak {} must be positive", args.peak)));
    }
    let tensor = read_tensor::<f32>(&args.input)?;
    let images = images_from_tensor(&tensor, args.peak)?;
    let out = corrupt(&images, &spec)?;
    let mut result = images_to_tensor(&out)?;
    result.shape = tensor.shape.clone();
    write_tensor(&result, &args.out)?;
    write_json(
        &sidecar(&args.out),
        &CorruptionRecord {
            input: args.input.display().to_string(),
            peak: args.peak,
            images: out.len(),
            spec: &spec,
        },
    )?;
    if args.kind == CorruptionKind::ChannelMisregistration && tensor.shape.len() == 4 && tensor.shape[1] < 2 {
        warn!("single-channel images are unchanged by channel misregistration");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_calib: args.n_calib,
        n_test: args.n_test,
        channels: args.channels,
        n_centers: args.centers,
        noise: args.noise,
        steepness: args.steepness,
        spread: args.spread,
        fn_signal: args.fn_signal,
        seed: args.seed,
    };
    let fixture = gen_synthetic(&spec)?;
    let (calib, test) = fixture.write(&args.out)?;
    write_json(&args.out.join("synthetic.json"), &spec)?;
    println!("{}", calib.display());
    println!("{}", test.display());
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    if !(args.peak.is_finite() && args.peak > 0.0) {
        return Err(Error::InvalidInput(format!("--peak {} must be positive", args.peak)));
    }
    let outputs = images_from_tensor(&read_tensor::<f32>(&args.output)?, args.peak)?;
    let targets = images_from_tensor(&read_tensor::<f32>(&args.target)?, args.peak)?;
    let ids = match &args.manifest {
        Some(m) => DatasetManifest::read(m)?.sample_ids,
        None => (0..outputs.len()).map(|i| format!("s{i:05}")).collect(),
    };
    let table = quality_batch(&ids, &outputs, &targets)?;
    table.write_csv(&args.out)
}
