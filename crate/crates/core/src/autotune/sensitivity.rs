use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autotune::grid::Grid;
use crate::autotune::search::{self_tune, TuneOptions, TuneResult};
use crate::error::{Error, Result};
use crate::hrpeval::HrpContext;
use crate::scalar::Scalar;
use crate::scorer::MonitorConfig;
use crate::tensorstore::Dataset;

/// Row indices of a seeded `n / factor` subsample (ascending); the identity
/// for factor 1.
pub fn subsample_indices(n: usize, factor: usize, seed: u64) -> Result<Vec<usize>> {
    if factor == 0 {
        return Err(Error::invalid("downsampling factor must be at least 1"));
    }
    if factor == 1 {
        return Ok((0..n).collect());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = order[..n / factor].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRun {
    pub repeat: usize,
    pub seed: u64,
    pub config: Option<MonitorConfig>,
    pub bank_size: Option<usize>,
    pub test_mean_hrp: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub factor: usize,
    pub n_subsample: usize,
    /// Mean and population standard deviation over runs with defined HRP.
    pub mean_hrp: Option<f64>,
    pub std_hrp: Option<f64>,
    pub infeasible: Option<String>,
    pub runs: Vec<SensitivityRun>,
}

/// Tunes on `calib` and evaluates mean HRP on `test`; returns the tuning
/// result, the bank size and the test HRP.
pub fn tune_and_evaluate<T: Scalar>(
    calib: &Dataset,
    test: &Dataset,
    grid: &Grid,
    options: &TuneOptions,
) -> Result<(TuneResult, usize, Option<f64>)> {
    let tuned = self_tune::<T>(calib, grid, options)?;
    let monitor = tuned.fit_monitor::<T>(calib)?;
    let confidence = monitor.score_dataset(test)?;
    let hrp = HrpContext::new(test.quality()?, &grid.metrics)?.mean_hrp(&confidence)?;
    Ok((tuned, monitor.bank.len(), hrp))
}

/// Re-tunes on seeded subsamples of `calib` for every factor and repeat
/// (repeat `r` uses seed `options.seed + r`) and evaluates on `test`.
pub fn sensitivity_sweep<T: Scalar>(
    calib: &Dataset,
    test: &Dataset,
    grid: &Grid,
    factors: &[usize],
    repeats: usize,
    options: &TuneOptions,
) -> Result<Vec<SensitivityRow>> {
    if factors.is_empty() || repeats == 0 {
        return Err(Error::invalid("sensitivity sweep needs at least one factor and one repeat"));
    }
    grid.validate()?;
    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        if factor == 0 {
            return Err(Error::invalid("downsampling factor must be at least 1"));
        }
        let n_subsample = calib.len() / factor;
        let mut runs = Vec::with_capacity(repeats);
        for repeat in 0..repeats {
            let seed = options.seed.wrapping_add(repeat as u64);
            let run_options = TuneOptions { seed, ..*options };
            let outcome = subsample_indices(calib.len(), factor, seed).and_then(|idx| {
                if idx.len() < 2 {
                    return Err(Error::Infeasible(format!(
                        "factor {factor} leaves {} of {} samples",
                        idx.len(),
                        calib.len()
                    )));
                }
                tune_and_evaluate::<T>(&calib.subset(&idx), test, grid, &run_options)
            });
            runs.push(match outcome {
                Ok((tuned, bank_size, hrp)) => SensitivityRun {
                    repeat,
                    seed,
                    config: Some(tuned.best),
                    bank_size: Some(bank_size),
                    test_mean_hrp: hrp,
                    error: None,
                },
                Err(e) if e.is_invariant() => return Err(e),
                Err(e) => SensitivityRun {
                    repeat,
                    seed,
                    config: None,
                    bank_size: None,
                    test_mean_hrp: None,
                    error: Some(e.to_string()),
                },
            });
        }
        let values: Vec<f64> = runs.iter().filter_map(|r| r.test_mean_hrp).collect();
        let (mean_hrp, std_hrp, infeasible) = if values.is_empty() {
            let reason = runs
                .iter()
                .find_map(|r| r.error.clone())
                .unwrap_or_else(|| "HRP undefined on every run".into());
            (None, None, Some(reason))
        } else {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()), None)
        };
        rows.push(SensitivityRow {
            factor,
            n_subsample,
            mean_hrp,
            std_hrp,
            infeasible,
            runs,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub value: f64,
    pub count: usize,
}

/// Counts of converged parameter values over several tuning runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterHistogram {
    pub runs: usize,
    pub layer: Vec<Bin>,
    pub q: Vec<Bin>,
    pub param: Vec<Bin>,
    pub gamma: Vec<Bin>,
}

fn bins(values: impl Iterator<Item = f64>) -> Vec<Bin> {
    let mut out: Vec<Bin> = Vec::new();
    for v in values {
        match out.iter_mut().find(|b| b.value == v) {
            Some(b) => b.count += 1,
            None => out.push(Bin { value: v, count: 1 }),
        }
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

pub fn parameter_histogram(configs: &[MonitorConfig]) -> Result<ParameterHistogram> {
    if configs.is_empty() {
        return Err(Error::invalid("histogram needs at least one tuning result"));
    }
    Ok(ParameterHistogram {
        runs: configs.len(),
        layer: bins(configs.iter().map(|c| c.layer.value())),
        q: bins(configs.iter().map(|c| c.q)),
        param: bins(configs.iter().map(|c| c.variant.param())),
        gamma: bins(configs.iter().map(|c| c.gamma)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::DepthRatio;

    #[test]
    fn subsample_is_seeded_subset() {
        assert_eq!(subsample_indices(5, 1, 9).unwrap(), vec![0, 1, 2, 3, 4]);
        let a = subsample_indices(100, 4, 3).unwrap();
        assert_eq!(a.len(), 25);
        assert_eq!(a, subsample_indices(100, 4, 3).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, subsample_indices(100, 4, 4).unwrap());
        assert!(subsample_indices(10, 0, 0).is_err());
    }

    #[test]
    fn histogram_counts() {
        let m = vec!["ms_ssim".to_string()];
        let a = MonitorConfig::knn(DepthRatio::LAST, 0.25, 10, 0.5, m.clone());
        let b = MonitorConfig::knn(DepthRatio::LAST, 0.25, 50, 0.5, m);
        let h = parameter_histogram(std::slice::from_ref(&a)).unwrap();
        assert_eq!(h.param, vec![Bin { value: 10.0, count: 1 }]);
        let h = parameter_histogram(&[a.clone(), b, a]).unwrap();
        assert_eq!(h.param.len(), 2);
        assert_eq!(h.param[0], Bin { value: 10.0, count: 2 });
        assert_eq!(h.q, vec![Bin { value: 0.25, count: 3 }]);
        assert!(parameter_histogram(&[]).is_err());
    }
}
