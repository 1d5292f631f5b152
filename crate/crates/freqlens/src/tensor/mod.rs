//! Dense f64 tensors and a minimal reverse-mode differentiation tape.
//!
//! Just enough machinery for a small CNN: forward primitives register
//! their adjoints on a [`Tape`], and [`Tape::backward`] replays them in
//! reverse to produce gradients with respect to any recorded tensor.
//! Everything is double precision and single-threaded per tape; distinct
//! tapes are independent.

mod tape;

pub use tape::{Tape, VarId};

use crate::error::{Error, Result};
use crate::image::Image;

/// A dense row-major f64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::shape_mismatch(
                format!("{numel} values for shape {shape:?}"),
                format!("{}", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::NonScalarLoss(self.data.len()));
        }
        Ok(self.data[0])
    }

    pub fn from_image(img: &Image) -> Self {
        let (c, h, w) = img.dims();
        Self {
            shape: vec![c, h, w],
            data: img.data().to_vec(),
        }
    }

    /// Reinterpret a [C,H,W] tensor as an image (no range check).
    pub fn to_image(&self) -> Result<Image> {
        if self.shape.len() != 3 {
            return Err(Error::shape_mismatch(
                "[C,H,W]".to_string(),
                format!("{:?}", self.shape),
            ));
        }
        Image::new(self.shape[0], self.shape[1], self.shape[2], self.data.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn image_round_trip() {
        let img = Image::new(2, 3, 4, (0..24).map(|i| i as f64 / 24.0).collect()).unwrap();
        let t = Tensor::from_image(&img);
        assert_eq!(t.shape(), &[2, 3, 4]);
        assert_eq!(t.to_image().unwrap(), img);
    }
}
