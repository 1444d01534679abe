use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Spatially pooled feature vector with its cached l2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature<T> {
    pub z: Vec<T>,
    pub norm: T,
}

impl<T: Scalar> PooledFeature<T> {
    pub fn new(z: Vec<T>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        let norm = feature_norm(&z);
        Ok(Self { z, norm })
    }
}

/// Global average pooling of a `C x H x W` activation map (row-major).
pub fn pool<T: Scalar>(map: &[T], channels: usize, height: usize, width: usize) -> Result<PooledFeature<T>> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::Shape(format!("feature map {channels}x{height}x{width} has an empty axis")));
    }
    if map.len() != channels * height * width {
        return Err(Error::Shape(format!(
            "feature map {channels}x{height}x{width} needs {} values, got {}",
            channels * height * width,
            map.len()
        )));
    }
    if map.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in feature map"));
    }
    let hw = height * width;
    let z = map
        .chunks_exact(hw)
        .map(|plane| {
            let s: f64 = plane.iter().map(|v| v.as_f64()).sum();
            T::lit(s / hw as f64)
        })
        .collect();
    PooledFeature::new(z)
}

pub fn feature_norm<T: Scalar>(z: &[T]) -> T {
    let mut s = T::zero();
    for &v in z {
        s += v * v;
    }
    s.sqrt()
}

/// `z / ||z||`; zero vectors have no direction and are rejected.
pub fn unit_normalize<T: Scalar>(z: &[T]) -> Result<(Vec<T>, T)> {
    let norm = feature_norm(z);
    if norm == T::zero() {
        return Err(Error::ZeroNorm);
    }
    if !norm.is_finite() {
        return Err(Error::invalid("non-finite feature norm"));
    }
    Ok((z.iter().map(|&v| v / norm).collect(), norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_map_pools_to_constant() {
        let p = pool(&vec![0.75f32; 4 * 3 * 2], 4, 3, 2).unwrap();
        assert_eq!(p.z, vec![0.75; 4]);
    }

    #[test]
    fn single_channel_mean() {
        assert_eq!(pool(&[1.0f64, 2.0, 3.0, 4.0], 1, 2, 2).unwrap().z, vec![2.5]);
    }

    #[test]
    fn matches_two_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (c, h, w) = (3, 5, 7);
        let map: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = pool(&map, c, h, w).unwrap();
        for ch in 0..c {
            let mut s = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    s += map[ch * h * w + y * w + x] as f64;
                }
            }
            assert_eq!(got.z[ch], (s / (h * w) as f64) as f32);
        }
        let n = got.z.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((got.norm as f64 - n).abs() <= 1e-6 * n);
    }

    #[test]
    fn nan_and_bad_shapes_rejected() {
        assert!(pool(&[f32::NAN], 1, 1, 1).is_err());
        assert!(pool(&[1.0f32; 5], 1, 2, 2).is_err());
        assert!(pool::<f32>(&[], 0, 1, 1).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(feature_norm(&[0.0f64; 4]), 0.0);
        assert_eq!(feature_norm(&[0.0f64, 1.0, 0.0]), 1.0);
        assert_eq!(feature_norm(&[3.0f32, 4.0]), 5.0);
        assert!(matches!(unit_normalize(&[0.0f32, 0.0]), Err(Error::ZeroNorm)));
    }
}
