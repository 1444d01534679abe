use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// C x H x W image with a known dynamic range `[0, peak]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
    peak: T,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>, peak: T) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!("image {channels}x{height}x{width} has an empty axis")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "image {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if !(peak.is_finite() && peak > T::zero()) {
            return Err(Error::invalid(format!("peak {peak} must be positive")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pixel value"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
            peak,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T, peak: T) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width], peak)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn peak(&self) -> T {
        self.peak
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let hw = self.height * self.width;
        &mut self.data[c * hw..(c + 1) * hw]
    }

    pub(crate) fn same_geometry(&self, other: &Self) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        if self.peak != other.peak {
            return Err(Error::invalid(format!("peak {} vs {}", self.peak, other.peak)));
        }
        Ok(())
    }
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical images.
pub fn psnr<T: Scalar>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<f64> {
    a.same_geometry(b)?;
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    let mse = sse / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = a.peak.as_f64();
    Ok(10.0 * (peak * peak / mse).log10())
}
