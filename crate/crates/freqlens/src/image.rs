//! The `Image` domain type: a real-valued C×H×W array.
//!
//! Pixels of natural images live in [0,1]. Derived images (occluded
//! spectra, gradients reshaped to image layout) may leave that range;
//! operations that require [0,1] say so explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued image with `channels` planes of `height`×`width` pixels,
/// stored row-major, channel by channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Build an image from raw parts. Fails on length mismatch, zero
    /// dimensions, or non-finite entries.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be nonzero, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape_mismatch(
                format!("{} values", channels * height * width),
                format!("{}", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image construction"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// All-zero image.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Constant-valued image.
    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
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

    /// (channels, height, width)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn num_pixels(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    /// One channel plane as a slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    /// Clamp every pixel into [0,1].
    pub fn clamped_unit(&self) -> Image {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// True if every pixel is inside [lo−tol, hi+tol].
    pub fn within_range(&self, lo: f64, hi: f64, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= lo - tol && v <= hi + tol)
    }

    /// ℓ∞ distance to another image of the same dims.
    pub fn linf_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// ℓ2 distance to another image of the same dims.
    pub fn l2_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// ℓ1 distance to another image of the same dims.
    pub fn l1_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Image::new(1, 2, 2, vec![0.0; 4]).is_ok());
        assert!(Image::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(0, 2, 2, vec![]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn indexing_is_row_major_per_channel() {
        let mut img = Image::zeros(2, 2, 3);
        img.set(1, 1, 2, 7.0);
        // (c*H + y)*W + x = (1*2 + 1)*3 + 2 = 11
        assert_eq!(img.data()[11], 7.0);
        assert_eq!(img.get(1, 1, 2), 7.0);
    }

    #[test]
    fn distances() {
        let a = Image::constant(1, 2, 2, 0.5);
        let b = Image::constant(1, 2, 2, 0.75);
        assert!((a.linf_distance(&b) - 0.25).abs() < 1e-15);
        assert!((a.l1_distance(&b) - 1.0).abs() < 1e-15);
        assert!((a.l2_distance(&b) - 0.5).abs() < 1e-15);
    }
}
