use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensorstore::{Dataset, DatasetManifest, DepthRatio, FeatureDump, QualityTable, MANIFEST_VERSION};

/// Parameters of the planted fixture.
///
/// Every sample sits at a random offset from one of `n_centers` random unit
/// directions. Its quality is `exp(-steepness * d * exp(noise * e_m))` per
/// metric, where `d` is the distance of the unit feature to the nearest
/// center and `e_m` is standard normal noise drawn per metric. Layer 1.0
/// carries the feature, layer 0.0 is independent noise and intermediate
/// layers blend the two with signal weight `ratio^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_calib: usize,
    pub n_test: usize,
    pub channels: usize,
    pub n_centers: usize,
    /// Metric-specific noise scale (0 makes every metric an exact function of `d`).
    pub noise: f64,
    /// Quality link steepness.
    pub steepness: f64,
    /// Scale of the offsets from the centers.
    pub spread: f64,
    /// When set, a second degradation factor lowers quality and raises the
    /// feature norm.
    pub fn_signal: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_calib: 2000,
            n_test: 500,
            channels: 64,
            n_centers: 8,
            noise: 0.0,
            steepness: 2.0,
            spread: 0.5,
            fn_signal: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_centers == 0 || self.channels < 2 {
            return Err(Error::invalid("synthetic fixture needs at least one center and two channels"));
        }
        for (name, n) in [("n_calib", self.n_calib), ("n_test", self.n_test)] {
            if n < 2 * self.n_centers {
                return Err(Error::invalid(format!(
                    "{name} = {n} must be at least twice n_centers = {}",
                    self.n_centers
                )));
            }
        }
        for (name, v) in [("noise", self.noise), ("steepness", self.steepness), ("spread", self.spread)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.steepness == 0.0 || self.spread == 0.0 {
            return Err(Error::invalid("steepness and spread must be positive"));
        }
        Ok(())
    }
}

/// Calibration and test datasets plus the planted per-sample distances.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub spec: SyntheticSpec,
    pub calib: Dataset,
    pub test: Dataset,
    pub calib_distance: Vec<f64>,
    pub test_distance: Vec<f64>,
}

impl SyntheticFixture {
    /// Writes `calib/` and `test/` trees under `dir`. Returns both manifest paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        Ok((self.calib.write_tree(dir.join("calib"))?, self.test.write_tree(dir.join("test"))?))
    }
}

pub const LAYER_NORM_SCALE: f64 = 10.0;

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Sample {
    layers: [Vec<f32>; 5],
    distance: f64,
    quality: [f64; 3],
}

fn draw_sample(spec: &SyntheticSpec, centers: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Sample {
    let dim = spec.channels;
    let center = &centers[rng.random_range(0..centers.len())];
    let t = spec.spread * f64::abs(StandardNormal.sample(rng));
    let mut u = gaussian_unit(rng, dim);
    let along: f64 = u.iter().zip(center).map(|(a, b)| a * b).sum();
    u.iter_mut().zip(center).for_each(|(a, b)| *a -= along * b);
    normalize(&mut u);
    let mut x: Vec<f64> = center.iter().zip(&u).map(|(c, v)| c + t * v).collect();
    normalize(&mut x);
    let distance = centers.iter().map(|c| dist(&x, c)).fold(f64::INFINITY, f64::min);

    let (extra, norm) = if spec.fn_signal {
        let h: f64 = rng.random();
        (h, LAYER_NORM_SCALE * (1.0 + h))
    } else {
        let e: f64 = StandardNormal.sample(rng);
        (0.0, LAYER_NORM_SCALE * (0.2 * e).exp())
    };
    let mut quality = [0.0; 3];
    for q in quality.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *q = (-spec.steepness * (distance + extra) * (spec.noise * e).exp()).exp();
    }

    let layers = std::array::from_fn(|j| {
        let w = (j as f64 / 4.0).powi(2);
        let noise = gaussian_unit(rng, dim);
        let mut v: Vec<f64> = x.iter().zip(&noise).map(|(s, n)| w * s + (1.0 - w) * n).collect();
        normalize(&mut v);
        let layer_norm = if j == 0 {
            let e: f64 = StandardNormal.sample(rng);
            LAYER_NORM_SCALE * (0.2 * e).exp()
        } else {
            norm
        };
        v.iter().map(|a| (a * layer_norm) as f32).collect()
    });
    Sample {
        layers,
        distance,
        quality,
    }
}

fn assemble(spec: &SyntheticSpec, prefix: &str, samples: Vec<Sample>) -> Result<(Dataset, Vec<f64>)> {
    let n = samples.len();
    let ids: Vec<String> = (0..n).map(|i| format!("{prefix}{i:05}")).collect();
    let mut layers = BTreeMap::new();
    for (j, ratio) in DepthRatio::ALL.into_iter().enumerate() {
        let data: Vec<f32> = samples.iter().flat_map(|s| s.layers[j].iter().copied()).collect();
        let dump = FeatureDump::new(ratio, ids.clone(), Matrix::new(n, spec.channels, data)?)?;
        layers.insert(ratio, dump);
    }
    let mut quality = QualityTable::new(ids.clone())?;
    quality.add_metric("psnr", samples.iter().map(|s| 40.0 * s.quality[0]).collect())?;
    quality.add_metric("ms_ssim", samples.iter().map(|s| s.quality[1]).collect())?;
    quality.add_metric("one_minus_lpips", samples.iter().map(|s| s.quality[2]).collect())?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        dataset_id: format!("synthetic-{prefix}-{}", spec.seed),
        layer_files: BTreeMap::new(),
        quality_file: None,
        sample_ids: ids,
        seed: Some(spec.seed),
        strata: None,
        metric_orientation: BTreeMap::new(),
    };
    let distance = samples.iter().map(|s| s.distance).collect();
    Ok((Dataset::new(manifest, layers, Some(quality))?, distance))
}

/// Generates the planted fixture; identical specs give identical data.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticFixture> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.n_centers).map(|_| gaussian_unit(&mut rng, spec.channels)).collect();
    let calib: Vec<Sample> = (0..spec.n_calib).map(|_| draw_sample(spec, &centers, &mut rng)).collect();
    let test: Vec<Sample> = (0..spec.n_test).map(|_| draw_sample(spec, &centers, &mut rng)).collect();
    let (calib, calib_distance) = assemble(spec, "c", calib)?;
    let (test, test_distance) = assemble(spec, "t", test)?;
    Ok(SyntheticFixture {
        spec: spec.clone(),
        calib,
        test,
        calib_distance,
        test_distance,
    })
}
