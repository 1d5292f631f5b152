//! freqlens: frequency-domain analysis of CNN adversarial robustness.
//!
//! The crate groups a small stack of tools around one question: where in
//! the frequency spectrum do adversarial perturbations live, and how does
//! robust training change that? The pieces:
//!
//! - [`spectral`]: DCT/DFT transforms, frequency levels, the L1 bound.
//! - [`tensor`]: a minimal reverse-mode autodiff engine.
//!
//! All pixel data is `f64` in `[0, 1]`, stored channel-major.

pub mod attacks;
pub mod attribution;
pub mod datasets;
pub mod error;
pub mod export;
pub mod image;
pub mod metrics;
pub mod model;
pub mod robustgen;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use image::Image;
