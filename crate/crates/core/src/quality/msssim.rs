//! Multi-scale structural similarity.
//!
//! Gaussian window 11 (sigma 1.5), valid (unpadded) filtering, K1 = 0.01,
//! K2 = 0.03, 2x2 average-pool downsampling with odd trailing rows/columns
//! dropped. Contrast-structure terms of the finer scales and the SSIM of the
//! coarsest scale are clamped at zero before weighting. Computed per channel,
//! then averaged.

use crate::error::{Error, Result};
use crate::quality::ImageTensor;
use crate::scalar::Scalar;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const WIN: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> [f64; WIN] {
    let mut g = [0.0; WIN];
    let half = (WIN / 2) as f64;
    for (i, w) in g.iter_mut().enumerate() {
        let x = i as f64 - half;
        *w = (-(x * x) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|w| *w /= s);
    g
}

/// Number of scales usable for an `h x w` image (at most five): scale `j`
/// needs both sides at least `11 * 2^(j-1)`.
pub fn ms_ssim_scales(height: usize, width: usize) -> usize {
    let side = height.min(width);
    (1..=MS_SSIM_WEIGHTS.len())
        .take_while(|&j| side >= WIN << (j - 1))
        .last()
        .unwrap_or(0)
}

struct Plane {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Plane {
    /// Separable valid-mode Gaussian filter.
    fn filter(&self, win: &[f64; WIN]) -> Plane {
        let ow = self.w - WIN + 1;
        let oh = self.h - WIN + 1;
        let mut horiz = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let row = &self.px[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                let mut acc = 0.0;
                for (k, &g) in win.iter().enumerate() {
                    acc += g * row[x + k];
                }
                horiz[y * ow + x] = acc;
            }
        }
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for (k, &g) in win.iter().enumerate() {
                let src = &horiz[(y + k) * ow..(y + k + 1) * ow];
                let dst = &mut out[y * ow..(y + 1) * ow];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += g * s;
                }
            }
        }
        Plane { h: oh, w: ow, px: out }
    }

    fn downsample(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut px = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                px.push((self.px[i] + self.px[i + 1] + self.px[i + self.w] + self.px[i + self.w + 1]) / 4.0);
            }
        }
        Plane { h, w, px }
    }

    fn product(&self, other: &Plane) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            px: self.px.iter().zip(&other.px).map(|(a, b)| a * b).collect(),
        }
    }
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_and_cs(x: &Plane, y: &Plane, win: &[f64; WIN], c1: f64, c2: f64) -> (f64, f64) {
    let mu1 = x.filter(win);
    let mu2 = y.filter(win);
    let xx = x.product(x).filter(win);
    let yy = y.product(y).filter(win);
    let xy = x.product(y).filter(win);
    let n = mu1.px.len() as f64;
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    for i in 0..mu1.px.len() {
        let (m1, m2) = (mu1.px[i], mu2.px[i]);
        let m1_sq = m1 * m1;
        let m2_sq = m2 * m2;
        let m12 = m1 * m2;
        let s1 = xx.px[i] - m1_sq;
        let s2 = yy.px[i] - m2_sq;
        let s12 = xy.px[i] - m12;
        let cs = (2.0 * s12 + c2) / (s1 + s2 + c2);
        let lum = (2.0 * m12 + c1) / (m1_sq + m2_sq + c1);
        cs_sum += cs;
        ssim_sum += lum * cs;
    }
    (ssim_sum / n, cs_sum / n)
}

/// MS-SSIM between two images of identical geometry. Images smaller than
/// 176 px on the short side use fewer scales with the remaining weights
/// renormalized to sum to one.
pub fn ms_ssim<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    a.same_geometry(b)?;
    let (h, w) = (a.height(), a.width());
    let scales = ms_ssim_scales(h, w);
    if scales == 0 {
        return Err(Error::Shape(format!("{h}x{w} image is smaller than the {WIN}px window")));
    }
    let weights: Vec<f64> = if scales == MS_SSIM_WEIGHTS.len() {
        MS_SSIM_WEIGHTS.to_vec()
    } else {
        let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
        MS_SSIM_WEIGHTS[..scales].iter().map(|w| w / total).collect()
    };
    let peak = a.peak().as_f64();
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let win = gaussian_window();

    let mut total = 0.0;
    for c in 0..a.channels() {
        let mut x = Plane {
            h,
            w,
            px: a.plane(c).iter().map(|v| v.as_f64()).collect(),
        };
        let mut y = Plane {
            h,
            w,
            px: b.plane(c).iter().map(|v| v.as_f64()).collect(),
        };
        let mut value = 1.0;
        for (j, &wt) in weights.iter().enumerate() {
            let (ssim, cs) = ssim_and_cs(&x, &y, &win, c1, c2);
            if j + 1 == scales {
                value *= ssim.max(0.0).powf(wt);
            } else {
                value *= cs.max(0.0).powf(wt);
                x = x.downsample();
                y = y.downsample();
            }
        }
        total += value;
    }
    Ok(total / a.channels() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_count_follows_window_size() {
        assert_eq!(ms_ssim_scales(256, 256), 5);
        assert_eq!(ms_ssim_scales(176, 300), 5);
        assert_eq!(ms_ssim_scales(175, 300), 4);
        assert_eq!(ms_ssim_scales(11, 11), 1);
        assert_eq!(ms_ssim_scales(10, 64), 0);
    }

    #[test]
    fn identity_is_exactly_one() {
        let data: Vec<f32> = (0..3 * 180 * 190).map(|i| ((i * 37 % 101) as f32) / 100.0).collect();
        let a = ImageTensor::new(3, 180, 190, data, 1.0).unwrap();
        assert_eq!(ms_ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn constant_images_reduce_to_luminance_power() {
        let a = ImageTensor::filled(1, 176, 176, 0.5f64, 1.0).unwrap();
        let b = ImageTensor::filled(1, 176, 176, 0.25f64, 1.0).unwrap();
        let c1 = 1e-4;
        let lum: f64 = (2.0 * 0.125 + c1) / (0.3125 + c1);
        let expected = lum.powf(0.1333);
        let got = ms_ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((got - 0.9707).abs() < 1e-3);
    }

    #[test]
    fn inverted_checkerboard_is_dissimilar() {
        let (h, w) = (192, 192);
        let a: Vec<f64> = (0..h * w).map(|i| ((i / w + i % w) % 2) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let a = ImageTensor::new(1, h, w, a, 1.0).unwrap();
        let b = ImageTensor::new(1, h, w, b, 1.0).unwrap();
        assert!(ms_ssim(&a, &b).unwrap() < 0.1);
    }

    #[test]
    fn small_images_fall_back_and_tiny_ones_fail() {
        let a = ImageTensor::new(1, 30, 30, (0..900).map(|i| (i % 7) as f64 / 7.0).collect(), 1.0).unwrap();
        let b = ImageTensor::new(1, 30, 30, (0..900).map(|i| (i % 5) as f64 / 5.0).collect(), 1.0).unwrap();
        let v = ms_ssim(&a, &b).unwrap();
        assert!(v < 1.0 && v >= 0.0);
        let t = ImageTensor::filled(1, 8, 8, 0.0f64, 1.0).unwrap();
        assert!(ms_ssim(&t, &t).is_err());
    }
}
