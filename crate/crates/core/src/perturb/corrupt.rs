use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quality::ImageTensor;
use crate::scalar::Scalar;

/// A corruption kind with its magnitude parameters. Magnitudes are in units
/// of the image peak where they refer to intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Corruption {
    /// Additive `N(0, (sigma * peak)^2)` per pixel.
    GaussianNoise { sigma: f64 },
    /// Per-channel contrast factor drawn from `[low, high]` around the channel mean.
    ContrastJitter { low: f64, high: f64 },
    /// Separable Gaussian blur, radius `ceil(3 sigma)`, edge-clamped.
    GaussianBlur { sigma: f64 },
    /// Each pixel location is zeroed in every channel with probability `rate`.
    PixelDropout { rate: f64 },
    /// `count` square boxes of side `size` set to the peak value.
    SaturationBoxes { count: usize, size: usize },
    /// Channels after the first are translated by up to `offset` pixels.
    ChannelMisregistration { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ContrastJitter,
    GaussianBlur,
    PixelDropout,
    SaturationBoxes,
    ChannelMisregistration,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 6] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ContrastJitter,
        CorruptionKind::GaussianBlur,
        CorruptionKind::PixelDropout,
        CorruptionKind::SaturationBoxes,
        CorruptionKind::ChannelMisregistration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ContrastJitter => "contrast_jitter",
            CorruptionKind::GaussianBlur => "gaussian_blur",
            CorruptionKind::PixelDropout => "pixel_dropout",
            CorruptionKind::SaturationBoxes => "saturation_boxes",
            CorruptionKind::ChannelMisregistration => "channel_misregistration",
        }
    }

    /// Test-default magnitudes.
    pub fn default_corruption(self) -> Corruption {
        match self {
            CorruptionKind::GaussianNoise => Corruption::GaussianNoise { sigma: 0.05 },
            CorruptionKind::ContrastJitter => Corruption::ContrastJitter { low: 0.7, high: 1.3 },
            CorruptionKind::GaussianBlur => Corruption::GaussianBlur { sigma: 1.5 },
            CorruptionKind::PixelDropout => Corruption::PixelDropout { rate: 0.1 },
            CorruptionKind::SaturationBoxes => Corruption::SaturationBoxes { count: 4, size: 16 },
            CorruptionKind::ChannelMisregistration => Corruption::ChannelMisregistration { offset: 3 },
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown corruption {s:?}")))
    }
}

impl Corruption {
    pub fn kind(&self) -> CorruptionKind {
        match self {
            Corruption::GaussianNoise { .. } => CorruptionKind::GaussianNoise,
            Corruption::ContrastJitter { .. } => CorruptionKind::ContrastJitter,
            Corruption::GaussianBlur { .. } => CorruptionKind::GaussianBlur,
            Corruption::PixelDropout { .. } => CorruptionKind::PixelDropout,
            Corruption::SaturationBoxes { .. } => CorruptionKind::SaturationBoxes,
            Corruption::ChannelMisregistration { .. } => CorruptionKind::ChannelMisregistration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        match *self {
            Corruption::GaussianNoise { sigma } | Corruption::GaussianBlur { sigma } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return bad(format!("sigma {sigma} must be finite and non-negative"));
                }
            }
            Corruption::ContrastJitter { low, high } => {
                if !(low.is_finite() && high.is_finite() && low > 0.0 && low <= high) {
                    return bad(format!("contrast range [{low}, {high}] must satisfy 0 < low <= high"));
                }
            }
            Corruption::PixelDropout { rate } => {
                if !(0.0..=1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} must lie in [0, 1]"));
                }
            }
            Corruption::SaturationBoxes { .. } | Corruption::ChannelMisregistration { .. } => {}
        }
        Ok(())
    }

    /// Whether the parameters make the corruption a no-op.
    pub fn is_identity(&self) -> bool {
        match *self {
            Corruption::GaussianNoise { sigma } | Corruption::GaussianBlur { sigma } => sigma == 0.0,
            Corruption::ContrastJitter { low, high } => low == 1.0 && high == 1.0,
            Corruption::PixelDropout { rate } => rate == 0.0,
            Corruption::SaturationBoxes { count, size } => count == 0 || size == 0,
            Corruption::ChannelMisregistration { offset } => offset == 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub corruption: Corruption,
    pub seed: u64,
}

fn clamp<T: Scalar>(v: T, peak: T) -> T {
    if v < T::zero() {
        T::zero()
    } else if v > peak {
        peak
    } else {
        v
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn blur_plane<T: Scalar>(plane: &mut [T], h: usize, w: usize, kernel: &[f64]) {
    let r = (kernel.len() / 2) as isize;
    let at = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let src: Vec<f64> = plane.iter().map(|v| v.as_f64()).collect();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * src[y * w + at(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp[at(y as isize + j as isize - r, h) * w + x])
                .sum();
            plane[y * w + x] = T::lit(v);
        }
    }
}

/// Applies the corruption to one image with its own RNG stream.
pub fn corrupt_image<T: Scalar>(image: &ImageTensor<T>, corruption: &Corruption, seed: u64) -> Result<ImageTensor<T>> {
    corruption.validate()?;
    if corruption.is_identity() {
        return Ok(image.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let peak = image.peak();
    match *corruption {
        Corruption::GaussianNoise { sigma } => {
            let normal = Normal::new(0.0, sigma * peak.as_f64()).map_err(|e| Error::invalid(e.to_string()))?;
            for v in out.data_mut() {
                *v = T::lit(v.as_f64() + normal.sample(&mut rng));
            }
        }
        Corruption::ContrastJitter { low, high } => {
            for ch in 0..c {
                let f = if low == high { low } else { rng.random_range(low..=high) };
                let plane = out.plane_mut(ch);
                let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / plane.len() as f64;
                for v in plane {
                    *v = T::lit(mean + f * (v.as_f64() - mean));
                }
            }
        }
        Corruption::GaussianBlur { sigma } => {
            let kernel = gaussian_kernel(sigma);
            for ch in 0..c {
                blur_plane(out.plane_mut(ch), h, w, &kernel);
            }
        }
        Corruption::PixelDropout { rate } => {
            let mask: Vec<bool> = (0..h * w).map(|_| rng.random::<f64>() < rate).collect();
            for ch in 0..c {
                for (v, drop) in out.plane_mut(ch).iter_mut().zip(&mask) {
                    if *drop {
                        *v = T::zero();
                    }
                }
            }
        }
        Corruption::SaturationBoxes { count, size } => {
            for _ in 0..count {
                let y0 = rng.random_range(0..h);
                let x0 = rng.random_range(0..w);
                for ch in 0..c {
                    let plane = out.plane_mut(ch);
                    for y in y0..(y0 + size).min(h) {
                        for x in x0..(x0 + size).min(w) {
                            plane[y * w + x] = peak;
                        }
                    }
                }
            }
        }
        Corruption::ChannelMisregistration { offset } => {
            let o = offset as i64;
            for ch in 1..c {
                let (dy, dx) = loop {
                    let d = (rng.random_range(-o..=o), rng.random_range(-o..=o));
                    if d != (0, 0) {
                        break d;
                    }
                };
                let (dy, dx) = (dy as isize, dx as isize);
                let src = image.plane(ch);
                let plane = out.plane_mut(ch);
                for y in 0..h {
                    let sy = (y as isize - dy).clamp(0, h as isize - 1) as usize;
                    for x in 0..w {
                        let sx = (x as isize - dx).clamp(0, w as isize - 1) as usize;
                        plane[y * w + x] = src[sy * w + sx];
                    }
                }
            }
        }
    }
    for v in out.data_mut() {
        *v = clamp(*v, peak);
    }
    Ok(out)
}

/// Corrupts a batch; sample `i` uses seed `spec.seed ^ i`.
pub fn corrupt<T: Scalar>(images: &[ImageTensor<T>], spec: &CorruptionSpec) -> Result<Vec<ImageTensor<T>>> {
    spec.corruption.validate()?;
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| corrupt_image(img, &spec.corruption, spec.seed ^ i as u64))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
