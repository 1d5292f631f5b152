//! ℓ1 lower-bound check: ‖x−x′‖₁ ≥ |X₀ − X′₀|.
//!
//! X₀ is the DC term of the unnormalized DFT of the flattened image,
//! which is just the pixel sum — the bound as stated depends on that
//! convention. The statement is proved for 1D signals; images are
//! flattened (all channels concatenated) before checking.

use crate::error::{Error, Result};
use crate::image::Image;

/// Outcome of one lower-bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// ‖x−x′‖₁ over flattened pixels.
    pub lhs: f64,
    /// |X₀ − X′₀| = |Σx − Σx′|.
    pub rhs: f64,
    /// lhs ≥ rhs − 1e-9.
    pub holds: bool,
}

const MARGIN: f64 = 1e-9;

/// Evaluate the ℓ1 lower bound for a pair of same-shaped images.
pub fn l1_lower_bound_check(x: &Image, x_prime: &Image) -> Result<BoundCheck> {
    if !x.same_dims(x_prime) {
        return Err(Error::shape_mismatch(
            format!("{:?}", x.dims()),
            format!("{:?}", x_prime.dims()),
        ));
    }
    let lhs = x.l1_distance(x_prime);
    let sum_x: f64 = x.data().iter().sum();
    let sum_xp: f64 = x_prime.data().iter().sum();
    let rhs = (sum_x - sum_xp).abs();
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - MARGIN,
    })
}
