//! 1D discrete Fourier transform by direct summation.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Which transform produced a spectrum, fixing its normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Forward sum with no scaling; the inverse carries the 1/d factor.
    DftUnnormalized,
    /// Orthonormal DCT-II (both directions scaled).
    Dct2Orthonormal,
}

/// Complex spectrum of a 1D signal, tagged with its convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum1D {
    pub coefficients: Vec<Complex64>,
    pub kind: TransformKind,
}

impl Spectrum1D {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// The DC coefficient X_0.
    pub fn dc(&self) -> Complex64 {
        self.coefficients[0]
    }
}

/// Unnormalized forward DFT: X_k = Σ_i x_i e^{-j 2πki/d}.
pub fn dft_forward(signal: &[f64]) -> Result<Spectrum1D> {
    if signal.is_empty() {
        return Err(Error::EmptyInput("dft_forward"));
    }
    if !signal.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("dft_forward input"));
    }
    let d = signal.len();
    let mut coefficients = Vec::with_capacity(d);
    for k in 0..d {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &x) in signal.iter().enumerate() {
            let angle = -TAU * (k as f64) * (i as f64) / (d as f64);
            acc += x * Complex64::new(angle.cos(), angle.sin());
        }
        coefficients.push(acc);
    }
    Ok(Spectrum1D {
        coefficients,
        kind: TransformKind::DftUnnormalized,
    })
}

/// Inverse DFT: x_i = (1/d) Σ_k X_k e^{+j 2πki/d}.
///
/// Returns the real parts; for a spectrum satisfying conjugate symmetry
/// the imaginary residue is at floating-point noise level.
pub fn dft_inverse(spectrum: &Spectrum1D) -> Result<Vec<f64>> {
    if spectrum.is_empty() {
        return Err(Error::EmptyInput("dft_inverse"));
    }
    if spectrum.kind != TransformKind::DftUnnormalized {
        return Err(Error::InvalidArgument(
            "dft_inverse expects an unnormalized DFT spectrum".into(),
        ));
    }
    let d = spectrum.len();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, coeff) in spectrum.coefficients.iter().enumerate() {
            let angle = TAU * (k as f64) * (i as f64) / (d as f64);
            acc += coeff * Complex64::new(angle.cos(), angle.sin());
        }
        out.push(acc.re / d as f64);
    }
    Ok(out)
}

/// Direct evaluation of Σ_{i=0}^{d-1} e^{j 2πki/d}.
///
/// The closed form says this is d when k ≡ 0 (mod d) and 0 otherwise;
/// summing it term by term is the independent check of that claim.
pub fn fourier_basis_sum(d: usize, k: i64) -> Result<Complex64> {
    if d == 0 {
        return Err(Error::EmptyInput("fourier_basis_sum"));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        let angle = TAU * (k as f64) * (i as f64) / (d as f64);
        acc += Complex64::new(angle.cos(), angle.sin());
    }
    Ok(acc)
}
