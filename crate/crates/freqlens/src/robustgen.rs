//! Robust-counterpart generation: find an image x_r whose
//! representation-layer activation matches that of a source image x
//! under a given network, by gradient descent on ‖g(x_r) − g(x)‖₂, and
//! compare counterpart-vs-original differences in the frequency domain.

use crate::attacks::derive_seed;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::RctMap;
use crate::model::Network;
use crate::spectral::dct2_forward;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Step halving stops once the step size falls below this floor.
const MIN_STEP: f64 = 1e-12;

/// Which kind of network the counterparts come from. Purely
/// descriptive: it labels runs and exported artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Standard,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustGenConfig {
    pub source: NetKind,
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Stop once the objective ‖g(x_r) − g(x)‖₂ drops to this value.
    pub tolerance: f64,
}

impl RobustGenConfig {
    pub fn new(source: NetKind, seed: u64) -> Self {
        RobustGenConfig {
            source,
            iterations: 500,
            step_size: 0.5,
            seed,
            tolerance: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument(
                "counterpart search needs at least one iteration".to_string(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "counterpart step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "convergence tolerance must be finite and nonnegative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Squared representation distance ‖g(x_r) − g(x)‖₂² and its gradient
/// with respect to x_r's pixels.
fn objective_and_gradient(
    net: &Network,
    candidate: &Image,
    target: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (mut tape, input, fwd) = net.graph(candidate)?;
    let target_id = tape.leaf(Tensor::new(vec![target.len()], target.to_vec())?);
    let diff = tape.sub(fwd.representation, target_id)?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.sum(sq)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss, &[input])?;
    Ok((value, grads[0].data().to_vec()))
}

fn squared_objective(net: &Network, candidate: &Image, target: &[f64]) -> Result<f64> {
    let rep = net.representation(candidate)?;
    Ok(rep
        .iter()
        .zip(target)
        .map(|(r, t)| (r - t) * (r - t))
        .sum())
}

/// Gradient descent on ‖g(x_r) − g(x)‖₂ starting from `init`, clamping
/// to [0,1] each step and halving the step whenever it would increase
/// the objective. Returns the final iterate and the final objective
/// (the norm, not its square); the accepted trajectory is
/// non-increasing, so the result is never worse than the start.
pub fn generate_counterpart(
    net: &Network,
    x: &Image,
    init: &Image,
    cfg: &RobustGenConfig,
) -> Result<(Image, f64)> {
    cfg.validate()?;
    if !x.same_dims(init) {
        return Err(Error::shape_mismatch(
            format!("{:?}", x.dims()),
            format!("init of dims {:?}", init.dims()),
        ));
    }
    let target = net.representation(x)?;

    let mut current = init.clone();
    let mut current_obj = squared_objective(net, &current, &target)?;
    let mut step = cfg.step_size;
    for _ in 0..cfg.iterations {
        if current_obj.sqrt() <= cfg.tolerance || step < MIN_STEP {
            break;
        }
        let (_, grad) = objective_and_gradient(net, &current, &target)?;
        let mut candidate = current.clone();
        for (p, g) in candidate.data_mut().iter_mut().zip(&grad) {
            *p = (*p - step * g).clamp(0.0, 1.0);
        }
        let candidate_obj = squared_objective(net, &candidate, &target)?;
        if candidate_obj <= current_obj {
            current = candidate;
            current_obj = candidate_obj;
        } else {
            step /= 2.0;
        }
    }
    Ok((current, current_obj.sqrt()))
}

/// Seeded uniform draw of an initialization image from the dataset.
pub fn random_init(dataset: &LabeledDataset, seed: u64) -> Result<&Image> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("counterpart init pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dataset.image(rng.random_range(0..dataset.len())))
}

/// A counterpart for every image in the dataset, in order, each run
/// with its own derived seed (so results do not depend on thread
/// scheduling) and initialized from a random image of the same dataset.
pub fn generate_counterparts(
    net: &Network,
    dataset: &LabeledDataset,
    cfg: &RobustGenConfig,
) -> Result<Vec<(Image, f64)>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("counterpart source dataset"));
    }
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let init = random_init(dataset, derive_seed(cfg.seed, i))?;
            generate_counterpart(net, dataset.image(i), init, cfg)
        })
        .collect()
}

/// Mean elementwise |DCT(x_r) − DCT(x)| across pairs. Unlike the RCT
/// map there is no denominator, so near-zero coefficients in generated
/// images cannot blow up the entries.
pub fn counterpart_spectrum_diff(originals: &[Image], counterparts: &[Image]) -> Result<RctMap> {
    if originals.is_empty() {
        return Err(Error::EmptyInput("counterpart pairs"));
    }
    if originals.len() != counterparts.len() {
        return Err(Error::InvalidArgument(format!(
            "counterpart pairs: got {} originals but {} counterparts",
            originals.len(),
            counterparts.len()
        )));
    }
    let dims = originals[0].dims();
    for img in originals.iter().chain(counterparts) {
        if img.dims() != dims {
            return Err(Error::shape_mismatch(
                format!("uniform image dims {dims:?}"),
                format!("{:?}", img.dims()),
            ));
        }
    }

    let (channels, height, width) = dims;
    let mut sums = vec![0.0; channels * height * width];
    for (x, xr) in originals.iter().zip(counterparts) {
        let sx = dct2_forward(x)?;
        let sxr = dct2_forward(xr)?;
        for (acc, (a, b)) in sums.iter_mut().zip(sxr.data().iter().zip(sx.data())) {
            *acc += (a - b).abs();
        }
    }
    let n = originals.len() as f64;
    for s in &mut sums {
        *s /= n;
    }
    Ok(RctMap::from_parts(
        channels,
        height,
        width,
        sums,
        originals.len(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synthesize, ShapeKind, SyntheticSpec};
    use crate::spectral::{dct2_inverse, Spectrum2D};
    use std::sync::OnceLock;

    fn fixture() -> &'static (Network, LabeledDataset) {
        static FIXTURE: OnceLock<(Network, LabeledDataset)> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let spec =
                SyntheticSpec::new(vec![ShapeKind::Disk, ShapeKind::Stripes], 8, 6, 0.02, 21)
                    .unwrap();
            (Network::new(1, 8, 8, 2, 13).unwrap(), synthesize(&spec))
        })
    }

    fn config() -> RobustGenConfig {
        RobustGenConfig {
            iterations: 120,
            ..RobustGenConfig::new(NetKind::Standard, 17)
        }
    }

    #[test]
    fn starting_at_the_source_returns_it_unchanged() {
        let (net, ds) = fixture();
        let x = ds.image(0);
        let (out, objective) = generate_counterpart(net, x, x, &config()).unwrap();
        assert_eq!(out.data(), x.data());
        assert!(objective <= 1e-9, "{objective}");
    }

    #[test]
    fn the_objective_never_ends_above_its_start() {
        let (net, ds) = fixture();
        let x = ds.image(0);
        let init = ds.image(ds.len() - 1);
        let start = {
            let gx = net.representation(x).unwrap();
            let gi = net.representation(init).unwrap();
            gx.iter()
                .zip(&gi)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let cfg = RobustGenConfig::new(NetKind::Standard, 17);
        let (out, objective) = generate_counterpart(net, x, init, &cfg).unwrap();
        assert!(objective <= start, "{objective} vs {start}");
        assert!(objective < 0.5 * start, "no real progress: {objective} vs {start}");
        assert!(out.within_range(0.0, 1.0, 0.0));
    }

    #[test]
    fn a_linearized_net_contracts_pixel_distance() {
        // Delta kernels make every layer linear on nonnegative inputs
        // (ReLU passes through), so descent on the representation gap
        // must also shrink the pixel-space gap: the frozen null-space
        // component stays put while the row-space component decays.
        let (_, ds) = fixture();
        let mut net = Network::new(1, 8, 8, 2, 1).unwrap();
        {
            let [c1k, c1b, c2k, c2b, _, _] = net.params_mut();
            for v in c1k.data_mut().iter_mut() {
                *v = 0.0;
            }
            for o in 0..8 {
                // kernel center of output o, input channel 0
                c1k.data_mut()[o * 9 + 4] = 1.0;
            }
            for v in c1b.data_mut().iter_mut() {
                *v = 0.0;
            }
            for v in c2k.data_mut().iter_mut() {
                *v = 0.0;
            }
            for o in 0..16 {
                // pick input channel 0's center
                c2k.data_mut()[o * 8 * 9 + 4] = 1.0;
            }
            for v in c2b.data_mut().iter_mut() {
                *v = 0.0;
            }
        }
        let x = ds.image(0);
        let init = ds.image(ds.len() - 1);
        let before = init.l2_distance(x);
        let cfg = RobustGenConfig {
            iterations: 400,
            step_size: 0.02,
            ..RobustGenConfig::new(NetKind::Standard, 3)
        };
        let (out, objective) = generate_counterpart(&net, x, init, &cfg).unwrap();
        let after = out.l2_distance(x);
        assert!(after < before, "{after} vs {before}");
        let start_obj = {
            let gx = net.representation(x).unwrap();
            let gi = net.representation(init).unwrap();
            gx.iter()
                .zip(&gi)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        assert!(objective < 0.05 * start_obj, "{objective} vs {start_obj}");
    }

    #[test]
    fn batch_generation_is_deterministic() {
        let (net, ds) = fixture();
        let cfg = RobustGenConfig {
            iterations: 30,
            ..config()
        };
        let a = generate_counterparts(net, ds, &cfg).unwrap();
        let b = generate_counterparts(net, ds, &cfg).unwrap();
        assert_eq!(a.len(), ds.len());
        for ((img_a, obj_a), (img_b, obj_b)) in a.iter().zip(&b) {
            assert_eq!(img_a.data(), img_b.data());
            assert_eq!(obj_a, obj_b);
        }
    }

    #[test]
    fn random_init_is_seeded_and_in_bounds() {
        let (_, ds) = fixture();
        let a = random_init(ds, 5).unwrap();
        let b = random_init(ds, 5).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let (net, ds) = fixture();
        let x = ds.image(0);
        let mut cfg = config();
        cfg.iterations = 0;
        assert!(generate_counterpart(net, x, x, &cfg).is_err());
        let mut cfg = config();
        cfg.step_size = 0.0;
        assert!(generate_counterpart(net, x, x, &cfg).is_err());
        let mut cfg = config();
        cfg.tolerance = -1.0;
        assert!(generate_counterpart(net, x, x, &cfg).is_err());
    }

    #[test]
    fn identical_pairs_leave_a_zero_diff_map() {
        let (_, ds) = fixture();
        let imgs: Vec<Image> = ds.images()[..3].to_vec();
        let map = counterpart_spectrum_diff(&imgs, &imgs).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        assert_eq!(map.samples(), 3);
    }

    #[test]
    fn single_coefficient_differences_localize() {
        let base = Spectrum2D::new(1, 4, 4, vec![1.0; 16]).unwrap();
        let x = dct2_inverse(&base).unwrap();
        let mut bumped = base.clone();
        bumped.set(0, 1, 2, 1.75);
        let xr = dct2_inverse(&bumped).unwrap();
        let map = counterpart_spectrum_diff(&[x], &[xr]).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let expected = if (u, v) == (1, 2) { 0.75 } else { 0.0 };
                assert!(
                    (map.get(0, u, v) - expected).abs() < 1e-10,
                    "({u},{v}): {}",
                    map.get(0, u, v)
                );
            }
        }
    }

    #[test]
    fn empty_or_mismatched_diff_batches_error() {
        let (_, ds) = fixture();
        let imgs: Vec<Image> = ds.images()[..2].to_vec();
        assert!(counterpart_spectrum_diff(&[], &[]).is_err());
        assert!(counterpart_spectrum_diff(&imgs, &imgs[..1]).is_err());
    }
}
