//! Frequency-domain perturbation metrics: relative-change-in-transform
//! (RCT) maps and kernel maximum mean discrepancy (MMD / AMMD) over DCT
//! coefficient distributions.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::spectral::{dct2_forward, Spectrum2D};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Coefficients of the original image with magnitude below this
/// threshold are excluded from that pair's RCT contribution — the
/// relative change is undefined at a (near-)zero denominator — and the
/// per-entry divisor shrinks accordingly.
pub const RCT_DENOMINATOR_THRESHOLD: f64 = 1e-8;

/// Bandwidth estimation caps the pooled sample at this many points
/// (a canonical value-ordered stride subsample) so the pairwise-distance
/// median stays tractable on full-size spectra.
const MEDIAN_HEURISTIC_CAP: usize = 2048;

/// Mean elementwise relative change of DCT coefficients across a batch
/// of (original, perturbed) image pairs.
#[derive(Debug, Clone)]
pub struct RctMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
    samples: usize,
}

impl RctMap {
    pub(crate) fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        values: Vec<f64>,
        samples: usize,
    ) -> Self {
        debug_assert_eq!(values.len(), channels * height * width);
        RctMap {
            channels,
            height,
            width,
            values,
            samples,
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

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Number of image pairs the map was averaged over.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Per-channel maps, laid out like the spectra they were built from:
    /// index (c·H + u)·W + v.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, channel: usize, u: usize, v: usize) -> f64 {
        self.values[(channel * self.height + u) * self.width + v]
    }

    /// Number of frequency levels (anti-diagonals u+v) in the map.
    pub fn num_levels(&self) -> usize {
        self.height + self.width - 1
    }

    /// Mean entry over every channel and coefficient whose frequency
    /// level u+v lies in `lo..=hi`; `hi` may exceed the last level.
    pub fn band_mean(&self, lo: usize, hi: usize) -> Result<f64> {
        if lo > hi || lo >= self.num_levels() {
            return Err(Error::LevelOutOfRange {
                level: lo,
                max: self.num_levels() - 1,
            });
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for u in 0..self.height {
            for v in 0..self.width {
                if (lo..=hi).contains(&(u + v)) {
                    for c in 0..self.channels {
                        sum += self.get(c, u, v);
                        count += 1;
                    }
                }
            }
        }
        Ok(sum / count as f64)
    }

    /// Fraction of the map's total mass (entries are nonnegative) that
    /// falls on levels `lo..=hi`; 0 when the map is all zero.
    pub fn band_mass(&self, lo: usize, hi: usize) -> Result<f64> {
        if lo > hi || lo >= self.num_levels() {
            return Err(Error::LevelOutOfRange {
                level: lo,
                max: self.num_levels() - 1,
            });
        }
        let mut band = 0.0;
        let mut total = 0.0;
        for u in 0..self.height {
            for v in 0..self.width {
                for c in 0..self.channels {
                    let entry = self.get(c, u, v);
                    total += entry;
                    if (lo..=hi).contains(&(u + v)) {
                        band += entry;
                    }
                }
            }
        }
        Ok(if total == 0.0 { 0.0 } else { band / total })
    }

    /// Mean entry per frequency level, channels pooled.
    pub fn level_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_levels()];
        let mut counts = vec![0usize; self.num_levels()];
        for u in 0..self.height {
            for v in 0..self.width {
                for c in 0..self.channels {
                    sums[u + v] += self.get(c, u, v);
                    counts[u + v] += 1;
                }
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect()
    }
}

/// Averaged elementwise |(DCT(x′) − DCT(x)) / DCT(x)| over the given
/// pairs. Entries where the original coefficient is below
/// [`RCT_DENOMINATOR_THRESHOLD`] in magnitude skip that pair, and the
/// entry's divisor counts only contributing pairs (an entry no pair
/// contributed to is reported as 0).
pub fn rct(originals: &[Image], perturbed: &[Image]) -> Result<RctMap> {
    check_pairs(originals, perturbed, "rct pairs")?;
    let (channels, height, width) = originals[0].dims();
    let n = channels * height * width;

    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (x, xp) in originals.iter().zip(perturbed) {
        let sx = dct2_forward(x)?;
        let sxp = dct2_forward(xp)?;
        for i in 0..n {
            let denom = sx.data()[i];
            if denom.abs() >= RCT_DENOMINATOR_THRESHOLD {
                sums[i] += ((sxp.data()[i] - denom) / denom).abs();
                counts[i] += 1;
            }
        }
    }

    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(RctMap {
        channels,
        height,
        width,
        values,
        samples: originals.len(),
    })
}

/// Kernel bandwidth for the Gaussian MMD kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Fixed σ > 0.
    Explicit(f64),
    /// σ = median pairwise distance within the pooled sample A ∪ B
    /// (falls back to 1 when that median is zero or undefined).
    MedianHeuristic,
}

/// How an image spectrum becomes an MMD sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSpace {
    /// Every scalar DCT coefficient is one sample in ℝ (channels pooled).
    PooledScalars,
    /// Each spatial frequency (u, v) is one sample in ℝ^C across channels.
    PerFrequencyVectors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
    pub sample_space: SampleSpace,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            bandwidth: Bandwidth::MedianHeuristic,
            sample_space: SampleSpace::PooledScalars,
        }
    }
}

/// Turn a spectrum into an MMD sample set under the given rule.
pub fn spectrum_samples(spectrum: &Spectrum2D, space: SampleSpace) -> Vec<Vec<f64>> {
    let (channels, height, width) = spectrum.dims();
    match space {
        SampleSpace::PooledScalars => spectrum.data().iter().map(|&v| vec![v]).collect(),
        SampleSpace::PerFrequencyVectors => {
            let mut samples = Vec::with_capacity(height * width);
            for u in 0..height {
                for v in 0..width {
                    samples.push((0..channels).map(|c| spectrum.get(c, u, v)).collect());
                }
            }
            samples
        }
    }
}

/// Biased (V-statistic) empirical MMD between two sample sets under the
/// unit-peak Gaussian kernel k(u, v) = exp(−‖u−v‖² / 2σ²):
/// sqrt(max(0, mean k(a,a′) + mean k(b,b′) − 2·mean k(a,b))).
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>], cfg: &MmdConfig) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyInput("mmd sample set A"));
    }
    if b.is_empty() {
        return Err(Error::EmptyInput("mmd sample set B"));
    }
    let dim = a[0].len();
    if dim == 0 {
        return Err(Error::EmptyInput("mmd sample dimension"));
    }
    for point in a.iter().chain(b) {
        if point.len() != dim {
            return Err(Error::shape_mismatch(
                format!("samples of dimension {dim}"),
                format!("a sample of dimension {}", point.len()),
            ));
        }
    }

    let sigma = resolve_bandwidth(&cfg.bandwidth, a, b)?;
    let kaa = mean_kernel(a, a, sigma);
    let kbb = mean_kernel(b, b, sigma);
    let kab = mean_kernel(a, b, sigma);
    Ok((kaa + kbb - 2.0 * kab).max(0.0).sqrt())
}

fn resolve_bandwidth(bandwidth: &Bandwidth, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    match *bandwidth {
        Bandwidth::Explicit(sigma) => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "kernel bandwidth must be positive and finite, got {sigma}"
                )));
            }
            Ok(sigma)
        }
        Bandwidth::MedianHeuristic => Ok(median_pairwise_distance(a, b)),
    }
}

/// Median pairwise Euclidean distance within A ∪ B. The pooled points
/// are value-sorted and stride-subsampled to at most
/// [`MEDIAN_HEURISTIC_CAP`]; sorting makes the estimate independent of
/// argument order, so mmd stays symmetric. Returns 1 when the median is
/// zero or fewer than two points exist.
fn median_pairwise_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    pooled.sort_unstable_by(|x, y| {
        x.iter()
            .zip(y.iter())
            .map(|(xi, yi)| xi.total_cmp(yi))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let stride = pooled.len().div_ceil(MEDIAN_HEURISTIC_CAP);
    let points: Vec<&Vec<f64>> = pooled.into_iter().step_by(stride.max(1)).collect();
    if points.len() < 2 {
        return 1.0;
    }

    let mut distances = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            distances.push(squared_distance(points[i], points[j]).sqrt());
        }
    }
    let count = distances.len();
    let (low, median, _) = distances.select_nth_unstable_by(count / 2, f64::total_cmp);
    let median = if count % 2 == 0 {
        let below = low.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + *median) / 2.0
    } else {
        *median
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(ui, vi)| (ui - vi) * (ui - vi)).sum()
}

fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let denom = 2.0 * sigma * sigma;
    let mut sum = 0.0;
    for x in a {
        for y in b {
            sum += (-squared_distance(x, y) / denom).exp();
        }
    }
    sum / (a.len() * b.len()) as f64
}

/// Average of per-pair MMD between the DCT coefficient distributions of
/// each original and its perturbed partner.
pub fn ammd(originals: &[Image], perturbed: &[Image], cfg: &MmdConfig) -> Result<f64> {
    check_pairs(originals, perturbed, "ammd pairs")?;
    let per_pair: Vec<f64> = originals
        .par_iter()
        .zip(perturbed)
        .map(|(x, xp)| {
            let sa = spectrum_samples(&dct2_forward(x)?, cfg.sample_space);
            let sb = spectrum_samples(&dct2_forward(xp)?, cfg.sample_space);
            mmd(&sa, &sb, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}

fn check_pairs(originals: &[Image], perturbed: &[Image], what: &'static str) -> Result<()> {
    if originals.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if originals.len() != perturbed.len() {
        return Err(Error::InvalidArgument(format!(
            "{what}: got {} originals but {} perturbed images",
            originals.len(),
            perturbed.len()
        )));
    }
    let dims = originals[0].dims();
    for img in originals.iter().chain(perturbed) {
        if img.dims() != dims {
            return Err(Error::shape_mismatch(
                format!("uniform image dims {dims:?}"),
                format!("{:?}", img.dims()),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dct2_inverse;

    fn image_with_flat_spectrum(value: f64) -> Image {
        let spectrum = Spectrum2D::new(1, 4, 4, vec![value; 16]).unwrap();
        dct2_inverse(&spectrum).unwrap()
    }

    fn explicit(sigma: f64) -> MmdConfig {
        MmdConfig {
            bandwidth: Bandwidth::Explicit(sigma),
            sample_space: SampleSpace::PooledScalars,
        }
    }

    #[test]
    fn mmd_of_identical_sets_is_exactly_zero() {
        let a = vec![vec![0.3, -1.2], vec![2.0, 0.5], vec![-0.7, 0.0]];
        for cfg in [explicit(0.8), MmdConfig::default()] {
            assert_eq!(mmd(&a, &a, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn mmd_is_symmetric() {
        let a = vec![vec![0.0], vec![1.5], vec![-0.2]];
        let b = vec![vec![2.0], vec![0.1]];
        for cfg in [explicit(1.0), MmdConfig::default()] {
            let ab = mmd(&a, &b, &cfg).unwrap();
            let ba = mmd(&b, &a, &cfg).unwrap();
            assert!((ab - ba).abs() < 1e-12, "{ab} vs {ba}");
        }
    }

    #[test]
    fn two_point_value_matches_the_closed_form() {
        let m = mmd(&[vec![0.0]], &[vec![1.0]], &explicit(1.0)).unwrap();
        // Closed form: mean k(a,a') = mean k(b,b') = 1 for singletons,
        // mean k(a,b) = exp(-1/2), so MMD = sqrt(2 - 2 exp(-1/2)).
        let oracle = (2.0 - 2.0 * (-0.5f64).exp()).sqrt();
        assert!((m - oracle).abs() < 1e-6, "{m} vs {oracle}");
        assert!((m - 0.8871).abs() < 1e-4);
    }

    #[test]
    fn widely_separated_points_approach_sqrt_two() {
        let m = mmd(&[vec![0.0]], &[vec![1e9]], &explicit(1.0)).unwrap();
        assert!((m - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mmd_stays_in_range_for_assorted_sets() {
        let sets = [
            vec![vec![0.0], vec![0.0]],
            vec![vec![5.0]],
            vec![vec![-3.0], vec![4.0], vec![0.25]],
        ];
        for a in &sets {
            for b in &sets {
                for cfg in [explicit(0.5), explicit(10.0), MmdConfig::default()] {
                    let m = mmd(a, b, &cfg).unwrap();
                    assert!((0.0..=2.0f64.sqrt() + 1e-12).contains(&m), "{m}");
                }
            }
        }
    }

    #[test]
    fn degenerate_median_falls_back_cleanly() {
        let a = vec![vec![0.0], vec![0.0]];
        assert_eq!(mmd(&a, &a, &MmdConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_and_bad_bandwidths_error() {
        let a = vec![vec![1.0]];
        assert!(mmd(&[], &a, &MmdConfig::default()).is_err());
        assert!(mmd(&a, &[], &MmdConfig::default()).is_err());
        assert!(mmd(&a, &a, &explicit(0.0)).is_err());
        assert!(mmd(&a, &a, &explicit(-1.0)).is_err());
        assert!(mmd(&a, &[vec![1.0, 2.0]], &MmdConfig::default()).is_err());
    }

    #[test]
    fn rct_of_identical_pairs_is_all_zero() {
        let x = image_with_flat_spectrum(1.0);
        let map = rct(&[x.clone(), x.clone()], &[x.clone(), x]).unwrap();
        assert_eq!(map.samples(), 2);
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_every_coefficient_gives_a_map_of_ones() {
        let x = image_with_flat_spectrum(1.0);
        let x2 = image_with_flat_spectrum(2.0);
        let map = rct(&[x], &[x2]).unwrap();
        for &v in map.values() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn rct_depends_on_which_image_is_the_original() {
        let x = image_with_flat_spectrum(1.0);
        let y = image_with_flat_spectrum(3.0);
        let forward = rct(&[x.clone()], &[y.clone()]).unwrap();
        let reverse = rct(&[y], &[x]).unwrap();
        // |3-1|/1 = 2 one way, |1-3|/3 = 2/3 the other.
        assert!((forward.get(0, 0, 0) - 2.0).abs() < 1e-9);
        assert!((reverse.get(0, 0, 0) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_coefficient_change_is_localized() {
        let x = image_with_flat_spectrum(1.0);
        let mut bumped = Spectrum2D::new(1, 4, 4, vec![1.0; 16]).unwrap();
        bumped.set(0, 2, 1, 1.5);
        let y = dct2_inverse(&bumped).unwrap();
        let map = rct(&[x], &[y]).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let expected = if (u, v) == (2, 1) { 0.5 } else { 0.0 };
                assert!(
                    (map.get(0, u, v) - expected).abs() < 1e-10,
                    "({u},{v}): {}",
                    map.get(0, u, v)
                );
            }
        }
    }

    #[test]
    fn near_zero_denominators_shrink_the_divisor() {
        // Pair 1's original has a dead coefficient at (0,0): that pair is
        // excluded there, so the entry averages over pair 2 alone.
        let mut dead = Spectrum2D::new(1, 4, 4, vec![1.0; 16]).unwrap();
        dead.set(0, 0, 0, 0.0);
        let x1 = dct2_inverse(&dead).unwrap();
        let mut dead_shifted = Spectrum2D::new(1, 4, 4, vec![2.0; 16]).unwrap();
        dead_shifted.set(0, 0, 0, 5.0);
        let y1 = dct2_inverse(&dead_shifted).unwrap();

        let x2 = image_with_flat_spectrum(1.0);
        let y2 = image_with_flat_spectrum(2.0);

        let map = rct(&[x1, x2], &[y1, y2]).unwrap();
        assert!((map.get(0, 0, 0) - 1.0).abs() < 1e-9, "{}", map.get(0, 0, 0));
        assert!((map.get(0, 1, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rct_rejects_bad_batches() {
        let x = image_with_flat_spectrum(1.0);
        let small = Image::zeros(1, 2, 2);
        assert!(rct(&[], &[]).is_err());
        assert!(rct(&[x.clone()], &[]).is_err());
        assert!(rct(&[x.clone()], &[small]).is_err());
    }

    #[test]
    fn band_mean_splits_levels_inclusively() {
        let x = image_with_flat_spectrum(1.0);
        let mut bumped = Spectrum2D::new(1, 4, 4, vec![1.0; 16]).unwrap();
        bumped.set(0, 3, 3, 2.0); // level 6, the highest
        let y = dct2_inverse(&bumped).unwrap();
        let map = rct(&[x], &[y]).unwrap();
        assert_eq!(map.num_levels(), 7);
        let low = map.band_mean(0, 1).unwrap();
        let high = map.band_mean(6, 6).unwrap();
        assert!(low.abs() < 1e-10);
        assert!((high - 1.0).abs() < 1e-9);
        assert!(map.band_mean(7, 8).is_err());
        assert!(map.band_mean(3, 2).is_err());
    }

    #[test]
    fn level_means_average_within_each_antidiagonal() {
        let x = image_with_flat_spectrum(1.0);
        let mut bumped = Spectrum2D::new(1, 4, 4, vec![1.0; 16]).unwrap();
        bumped.set(0, 0, 1, 2.0); // level 1 has members (0,1) and (1,0)
        let y = dct2_inverse(&bumped).unwrap();
        let means = rct(&[x], &[y]).unwrap().level_means();
        assert!((means[1] - 0.5).abs() < 1e-9, "{}", means[1]);
        assert!(means[0].abs() < 1e-10);
    }

    #[test]
    fn ammd_of_unperturbed_pairs_is_zero() {
        let x = image_with_flat_spectrum(1.0);
        let value = ammd(&[x.clone()], &[x], &MmdConfig::default()).unwrap();
        assert_eq!(value, 0.0);
    }

    #[test]
    fn ammd_is_the_mean_of_per_pair_mmds() {
        let cfg = explicit(0.7);
        let pairs = [
            (image_with_flat_spectrum(1.0), image_with_flat_spectrum(1.4)),
            (image_with_flat_spectrum(0.5), image_with_flat_spectrum(0.9)),
        ];
        let originals: Vec<Image> = pairs.iter().map(|(x, _)| x.clone()).collect();
        let perturbed: Vec<Image> = pairs.iter().map(|(_, y)| y.clone()).collect();
        let combined = ammd(&originals, &perturbed, &cfg).unwrap();
        let mut manual = 0.0;
        for (x, y) in &pairs {
            let sa = spectrum_samples(&dct2_forward(x).unwrap(), cfg.sample_space);
            let sb = spectrum_samples(&dct2_forward(y).unwrap(), cfg.sample_space);
            manual += mmd(&sa, &sb, &cfg).unwrap();
        }
        assert!((combined - manual / 2.0).abs() < 1e-12);
    }

    #[test]
    fn ammd_is_symmetric_per_pair() {
        let x = image_with_flat_spectrum(1.0);
        let y = image_with_flat_spectrum(1.7);
        for cfg in [explicit(1.0), MmdConfig::default()] {
            let fwd = ammd(&[x.clone()], &[y.clone()], &cfg).unwrap();
            let rev = ammd(&[y.clone()], &[x.clone()], &cfg).unwrap();
            assert!((fwd - rev).abs() < 1e-12);
        }
    }

    #[test]
    fn per_frequency_vectors_group_channels() {
        let spectrum = Spectrum2D::new(2, 2, 2, (0..8).map(f64::from).collect()).unwrap();
        let samples = spectrum_samples(&spectrum, SampleSpace::PerFrequencyVectors);
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0], vec![0.0, 4.0]);
        assert_eq!(samples[3], vec![3.0, 7.0]);
        let pooled = spectrum_samples(&spectrum, SampleSpace::PooledScalars);
        assert_eq!(pooled.len(), 8);
    }
}
