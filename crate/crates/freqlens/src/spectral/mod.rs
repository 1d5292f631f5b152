//! Discrete transforms and frequency-domain bookkeeping.
//!
//! Two conventions coexist on purpose:
//!
//! * the 1D DFT is **unnormalized** (`X_0` equals the plain signal sum),
//!   which is what the ℓ1 lower-bound check relies on;
//! * the 2D DCT-II is **orthonormal** in both directions, so Parseval
//!   holds and coefficient magnitudes are comparable across image sizes.
//!
//! Transforms are direct matrix applications. Sizes here are small
//! (≤ 64 per axis); an FFT would buy nothing but complexity.

mod bound;
mod dct;
mod dft;
mod levels;

pub use bound::{l1_lower_bound_check, BoundCheck};
pub use num_complex::Complex64;
pub use dct::{dct2_forward, dct2_inverse, Spectrum2D};
pub use dft::{dft_forward, dft_inverse, fourier_basis_sum, Spectrum1D, TransformKind};
pub use levels::{frequency_levels, FrequencyLevel};
