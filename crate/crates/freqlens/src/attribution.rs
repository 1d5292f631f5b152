//! Occluded Frequency attribution: score each frequency level by how
//! much a class logit drops when that level is replaced with a baseline
//! in the DCT spectrum.

use crate::attacks::derive_seed;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Network;
use crate::spectral::{dct2_forward, dct2_inverse, frequency_levels, Spectrum2D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Random-baseline scores average the occluded logit over this many
/// independent draws.
pub const RANDOM_BASELINE_DRAWS: usize = 8;

/// What replaces a frequency level's coefficients during occlusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Set the level's coefficients to zero.
    Zero,
    /// Redraw the level's coefficients from a seeded Gaussian whose
    /// standard deviation is the level's own empirical (population)
    /// std, pooled over channels.
    Random { seed: u64 },
}

/// Whose attribution a profile describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    SingleImage,
    ClassAverage { samples: usize },
}

/// Per-frequency-level occlusion scores for one class of interest,
/// ascending in level ℓ = u+v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionProfile {
    scores: Vec<f64>,
    class: usize,
    baseline: Baseline,
    subject: Subject,
}

impl AttributionProfile {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn baseline(&self) -> Baseline {
        self.baseline
    }

    pub fn subject(&self) -> Subject {
        self.subject
    }

    pub fn num_levels(&self) -> usize {
        self.scores.len()
    }

    /// Fraction of total |score| mass on levels ℓ < cutoff. Zero when
    /// the profile has no mass at all.
    pub fn band_share(&self, cutoff: usize) -> f64 {
        let total: f64 = self.scores.iter().map(|s| s.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let band: f64 = self.scores.iter().take(cutoff).map(|s| s.abs()).sum();
        band / total
    }

    /// Share of |score| mass in the low band, ℓ < (H+W−1)/3.
    pub fn low_band_share(&self) -> f64 {
        self.band_share(low_band_cutoff(self.num_levels()))
    }
}

/// Number of levels in the low band: those with 3ℓ < num_levels,
/// i.e. ℓ < (H+W−1)/3.
pub fn low_band_cutoff(num_levels: usize) -> usize {
    num_levels.div_ceil(3)
}

/// How far an image's pixels stray outside [0,1]; 0 when none do.
/// Occluded images are deliberately left unclamped (clamping would
/// reintroduce other frequencies), so callers record this instead.
pub fn unit_range_deviation(img: &Image) -> f64 {
    img.data()
        .iter()
        .map(|&p| (-p).max(p - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// A spectrum with one frequency level replaced by a baseline;
/// everything off the level is untouched.
#[derive(Debug, Clone)]
pub struct OcclusionMask {
    level: usize,
    spectrum: Spectrum2D,
}

impl OcclusionMask {
    pub fn new(source: &Spectrum2D, level: usize, baseline: Baseline) -> Result<Self> {
        let (channels, height, width) = source.dims();
        let levels = frequency_levels(height, width)?;
        let members = &levels
            .get(level)
            .ok_or(Error::LevelOutOfRange {
                level,
                max: height + width - 2,
            })?
            .members;

        let mut spectrum = source.clone();
        match baseline {
            Baseline::Zero => {
                for &(u, v) in members {
                    for c in 0..channels {
                        spectrum.set(c, u, v, 0.0);
                    }
                }
            }
            Baseline::Random { seed } => {
                let std = level_std(source, members);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, std).map_err(|e| {
                    Error::InvalidArgument(format!("baseline distribution: {e}"))
                })?;
                for &(u, v) in members {
                    for c in 0..channels {
                        spectrum.set(c, u, v, normal.sample(&mut rng));
                    }
                }
            }
        }
        Ok(OcclusionMask { level, spectrum })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn spectrum(&self) -> &Spectrum2D {
        &self.spectrum
    }

    pub fn into_spectrum(self) -> Spectrum2D {
        self.spectrum
    }
}

/// Population standard deviation of the coefficients on one level,
/// pooled over channels.
fn level_std(spectrum: &Spectrum2D, members: &[(usize, usize)]) -> f64 {
    let channels = spectrum.channels();
    let n = (members.len() * channels) as f64;
    let mut mean = 0.0;
    for &(u, v) in members {
        for c in 0..channels {
            mean += spectrum.get(c, u, v);
        }
    }
    mean /= n;
    let mut var = 0.0;
    for &(u, v) in members {
        for c in 0..channels {
            let d = spectrum.get(c, u, v) - mean;
            var += d * d;
        }
    }
    (var / n).sqrt()
}

/// Replace one frequency level of the image with the baseline and
/// transform back. The result is intentionally NOT clamped to [0,1].
pub fn occlude_level(img: &Image, level: usize, baseline: Baseline) -> Result<Image> {
    let spectrum = dct2_forward(img)?;
    let mask = OcclusionMask::new(&spectrum, level, baseline)?;
    dct2_inverse(mask.spectrum())
}

/// Occlusion score of one level for class `class`:
/// logit_class(x) − logit_class(occluded x); positive means the level
/// supports the class. Random baselines average the occluded logit
/// over [`RANDOM_BASELINE_DRAWS`] seeded draws.
pub fn of_score(
    net: &Network,
    img: &Image,
    class: usize,
    level: usize,
    baseline: Baseline,
) -> Result<f64> {
    if class >= net.num_classes() {
        return Err(Error::InvalidClass {
            class,
            num_classes: net.num_classes(),
        });
    }
    let original = net.forward_logits(img)?[class];
    let occluded = match baseline {
        Baseline::Zero => net.forward_logits(&occlude_level(img, level, baseline)?)?[class],
        Baseline::Random { seed } => {
            let mut total = 0.0;
            for draw in 0..RANDOM_BASELINE_DRAWS {
                let b = Baseline::Random {
                    seed: derive_seed(seed, draw),
                };
                total += net.forward_logits(&occlude_level(img, level, b)?)?[class];
            }
            total / RANDOM_BASELINE_DRAWS as f64
        }
    };
    Ok(original - occluded)
}

/// Occlusion scores for every frequency level of the image, ascending.
pub fn attribution_profile(
    net: &Network,
    img: &Image,
    class: usize,
    baseline: Baseline,
) -> Result<AttributionProfile> {
    let (_, height, width) = img.dims();
    let scores = (0..height + width - 1)
        .map(|level| of_score(net, img, class, level, baseline))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AttributionProfile {
        scores,
        class,
        baseline,
        subject: Subject::SingleImage,
    })
}

/// Mean attribution profile per class, scoring each image against its
/// own (true) label. Errors when any class has no images.
pub fn class_average_profiles(
    net: &Network,
    dataset: &LabeledDataset,
    baseline: Baseline,
) -> Result<Vec<AttributionProfile>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("attribution dataset"));
    }
    if dataset.num_classes() != net.num_classes() {
        return Err(Error::shape_mismatch(
            format!("{} classes", net.num_classes()),
            format!("dataset with {} classes", dataset.num_classes()),
        ));
    }

    (0..dataset.num_classes())
        .map(|class| {
            let members: Vec<&Image> = dataset
                .iter()
                .filter(|(_, label)| *label == class)
                .map(|(img, _)| img)
                .collect();
            if members.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "class {class} ({}) has no images to average over",
                    dataset.class_names()[class]
                )));
            }
            let profiles: Vec<Vec<f64>> = members
                .par_iter()
                .map(|img| Ok(attribution_profile(net, img, class, baseline)?.scores))
                .collect::<Result<_>>()?;
            let levels = profiles[0].len();
            let mut scores = vec![0.0; levels];
            for profile in &profiles {
                for (acc, s) in scores.iter_mut().zip(profile) {
                    *acc += s;
                }
            }
            for s in &mut scores {
                *s /= profiles.len() as f64;
            }
            Ok(AttributionProfile {
                scores,
                class,
                baseline,
                subject: Subject::ClassAverage {
                    samples: profiles.len(),
                },
            })
        })
        .collect()
}
