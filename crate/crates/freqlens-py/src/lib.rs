//! Python bindings for the freqlens toolkit: images, datasets, the
//! small CNN, spectral transforms, attacks, and the frequency-domain
//! diagnostics (RCT, AMMD, occlusion attribution, counterparts).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use freqlens::attacks::{attack_batch, AttackConfig, Norm, SimbaBasis};
use freqlens::attribution::{class_average_profiles, Baseline};
use freqlens::datasets::{load_batch, save_batch, synthesize, LabeledDataset, ShapeKind, SyntheticSpec};
use freqlens::image::Image;
use freqlens::metrics::{ammd, mmd, rct, Bandwidth, MmdConfig, RctMap, SampleSpace};
use freqlens::model::{AdversarialTraining, Network, TrainConfig};
use freqlens::robustgen::{
    counterpart_spectrum_diff, generate_counterparts, NetKind, RobustGenConfig,
};
use freqlens::spectral::{
    dct2_forward, dct2_inverse, dft_forward, dft_inverse, fourier_basis_sum,
    l1_lower_bound_check, Spectrum1D, Spectrum2D, TransformKind,
};

fn py_err(e: freqlens::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_norm(name: &str) -> PyResult<Norm> {
    match name {
        "linf" => Ok(Norm::LInf),
        "l2" => Ok(Norm::L2),
        other => Err(PyValueError::new_err(format!(
            "unknown norm {other:?}; expected \"linf\" or \"l2\""
        ))),
    }
}

fn parse_shape(name: &str) -> PyResult<ShapeKind> {
    match name {
        "disk" => Ok(ShapeKind::Disk),
        "square" => Ok(ShapeKind::Square),
        "cross" => Ok(ShapeKind::Cross),
        "stripes" => Ok(ShapeKind::Stripes),
        other => Err(PyValueError::new_err(format!(
            "unknown shape {other:?}; expected disk, square, cross, or stripes"
        ))),
    }
}

/// A C×H×W image with f64 pixels stored in row-major channel planes.
#[pyclass(name = "Image")]
#[derive(Clone)]
struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyImage {
            inner: Image::new(channels, height, width, data).map_err(py_err)?,
        })
    }

    /// (channels, height, width)
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    /// A copy with every pixel clamped to [0, 1].
    fn clamped_unit(&self) -> PyImage {
        PyImage { inner: self.inner.clamped_unit() }
    }

    fn linf_distance(&self, other: &PyImage) -> f64 {
        self.inner.linf_distance(&other.inner)
    }

    fn l2_distance(&self, other: &PyImage) -> f64 {
        self.inner.l2_distance(&other.inner)
    }

    fn l1_distance(&self, other: &PyImage) -> f64 {
        self.inner.l1_distance(&other.inner)
    }

    fn __repr__(&self) -> String {
        let (c, h, w) = self.inner.dims();
        format!("Image({c}x{h}x{w})")
    }
}

/// Labeled image batch with class names; the unit every pipeline
/// stage consumes and produces.
#[pyclass(name = "Dataset")]
#[derive(Clone)]
struct PyDataset {
    inner: LabeledDataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(images: Vec<PyImage>, labels: Vec<usize>, class_names: Vec<String>) -> PyResult<Self> {
        let images = images.into_iter().map(|i| i.inner).collect();
        Ok(PyDataset {
            inner: LabeledDataset::new(images, labels, class_names).map_err(py_err)?,
        })
    }

    /// Generate the synthetic shape dataset: one geometric shape per
    /// class at a random position and scale, plus Gaussian pixel noise.
    #[staticmethod]
    #[pyo3(signature = (shapes, size=16, samples_per_class=500, noise_std=0.05, seed=7))]
    fn synthetic(
        shapes: Vec<String>,
        size: usize,
        samples_per_class: usize,
        noise_std: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let kinds = shapes
            .iter()
            .map(|s| parse_shape(s))
            .collect::<PyResult<Vec<ShapeKind>>>()?;
        let spec =
            SyntheticSpec::new(kinds, size, samples_per_class, noise_std, seed).map_err(py_err)?;
        Ok(PyDataset { inner: synthesize(&spec) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDataset { inner: load_batch(path.as_ref()).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_batch(&self.inner, path.as_ref()).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    fn image(&self, index: usize) -> PyResult<PyImage> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "image index {index} out of range for dataset of {}",
                self.inner.len()
            )));
        }
        Ok(PyImage { inner: self.inner.image(index).clone() })
    }

    fn images(&self) -> Vec<PyImage> {
        self.inner.images().iter().cloned().map(|inner| PyImage { inner }).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} images, {} classes)",
            self.inner.len(),
            self.inner.num_classes()
        )
    }
}

/// The two-conv CNN classifier (Conv–ReLU–Conv–ReLU–AvgPool–Dense).
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    fn new(channels: usize, height: usize, width: usize, classes: usize, seed: u64) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: Network::new(channels, height, width, classes, seed).map_err(py_err)?,
        })
    }

    /// SGD training; pass `adv_norm` ("linf" or "l2") to switch to
    /// adversarial training on PGD examples with the given budget.
    /// Returns per-epoch (mean_loss, train_accuracy) pairs.
    #[pyo3(signature = (
        dataset,
        epochs=10,
        batch_size=16,
        learning_rate=0.1,
        seed=7,
        adv_norm=None,
        adv_eps=0.25,
        adv_steps=7,
        adv_step_size=None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        dataset: &PyDataset,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
        adv_norm: Option<&str>,
        adv_eps: f64,
        adv_steps: usize,
        adv_step_size: Option<f64>,
    ) -> PyResult<Vec<(f64, f64)>> {
        let adversarial = match adv_norm {
            Some(name) => Some(AdversarialTraining {
                norm: parse_norm(name)?,
                epsilon: adv_eps,
                steps: adv_steps,
                step_size: adv_step_size
                    .unwrap_or(2.5 * adv_eps / adv_steps.max(1) as f64),
            }),
            None => None,
        };
        let cfg = TrainConfig { epochs, batch_size, learning_rate, seed, adversarial };
        let stats = self.inner.train(&dataset.inner, &cfg).map_err(py_err)?;
        Ok(stats.into_iter().map(|s| (s.mean_loss, s.train_accuracy)).collect())
    }

    fn predict(&self, image: &PyImage) -> PyResult<usize> {
        self.inner.predict(&image.inner).map_err(py_err)
    }

    fn softmax_probabilities(&self, image: &PyImage) -> PyResult<Vec<f64>> {
        self.inner.softmax_probabilities(&image.inner).map_err(py_err)
    }

    fn evaluate(&self, dataset: &PyDataset) -> PyResult<f64> {
        self.inner.evaluate(&dataset.inner).map_err(py_err)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyNetwork { inner: Network::load(path.as_ref()).map_err(py_err)? })
    }
}

/// Relative-change map over the DCT grid, averaged across image pairs.
#[pyclass(name = "RctMap")]
struct PyRctMap {
    inner: RctMap,
}

#[pymethods]
impl PyRctMap {
    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn get(&self, channel: usize, u: usize, v: usize) -> f64 {
        self.inner.get(channel, u, v)
    }

    #[getter]
    fn num_levels(&self) -> usize {
        self.inner.num_levels()
    }

    /// Mean entry over frequency levels lo..=hi (u + v = level).
    fn band_mean(&self, lo: usize, hi: usize) -> PyResult<f64> {
        self.inner.band_mean(lo, hi).map_err(py_err)
    }

    /// Fraction of the map's total magnitude in levels lo..=hi.
    fn band_mass(&self, lo: usize, hi: usize) -> PyResult<f64> {
        self.inner.band_mass(lo, hi).map_err(py_err)
    }
}

// ── transforms ─────────────────────────────────────────────────────

/// Orthonormal 2D DCT-II coefficients, flattened channel-major.
#[pyfunction]
fn dct2(image: &PyImage) -> PyResult<Vec<f64>> {
    Ok(dct2_forward(&image.inner).map_err(py_err)?.data().to_vec())
}

/// Inverse of `dct2`: rebuild the image from flattened coefficients.
#[pyfunction]
fn dct2_inverse_image(
    channels: usize,
    height: usize,
    width: usize,
    coefficients: Vec<f64>,
) -> PyResult<PyImage> {
    let spectrum = Spectrum2D::new(channels, height, width, coefficients).map_err(py_err)?;
    Ok(PyImage { inner: dct2_inverse(&spectrum).map_err(py_err)? })
}

/// Unnormalized 1D DFT as (re, im) pairs; X[0] is the plain signal sum.
#[pyfunction]
fn dft(signal: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let spectrum = dft_forward(&signal).map_err(py_err)?;
    Ok(spectrum.coefficients.iter().map(|z| (z.re, z.im)).collect())
}

#[pyfunction]
fn dft_inverse_signal(spectrum: Vec<(f64, f64)>) -> PyResult<Vec<f64>> {
    let spectrum = Spectrum1D {
        coefficients: spectrum
            .into_iter()
            .map(|(re, im)| freqlens::spectral::Complex64::new(re, im))
            .collect(),
        kind: TransformKind::DftUnnormalized,
    };
    dft_inverse(&spectrum).map_err(py_err)
}

/// Sum of the length-d Fourier basis vector at frequency k, as (re, im):
/// d at k ≡ 0 (mod d) and 0 everywhere else.
#[pyfunction]
fn basis_sum(d: usize, k: i64) -> PyResult<(f64, f64)> {
    let z = fourier_basis_sum(d, k).map_err(py_err)?;
    Ok((z.re, z.im))
}

/// The ℓ1/DC-gap inequality ‖x − x′‖₁ ≥ |X₀ − X′₀| as
/// (lhs, rhs, holds).
#[pyfunction]
fn l1_lower_bound(x: &PyImage, x_prime: &PyImage) -> PyResult<(f64, f64, bool)> {
    let check = l1_lower_bound_check(&x.inner, &x_prime.inner).map_err(py_err)?;
    Ok((check.lhs, check.rhs, check.holds))
}

// ── attacks and diagnostics ────────────────────────────────────────

/// Run one attack over the whole dataset. Returns a dict with the
/// before/after accuracies, success rate, mean ℓ2 distortion, and the
/// adversarial images.
#[pyfunction]
#[pyo3(signature = (
    net,
    dataset,
    kind,
    norm="linf",
    eps=0.15,
    steps=None,
    step_size=None,
    basis="pixel",
    seed=0,
    cw_c=1.0,
    cw_kappa=0.0,
))]
#[allow(clippy::too_many_arguments)]
fn attack<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    dataset: &PyDataset,
    kind: &str,
    norm: &str,
    eps: f64,
    steps: Option<usize>,
    step_size: Option<f64>,
    basis: &str,
    seed: u64,
    cw_c: f64,
    cw_kappa: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (c, h, w) = dataset.inner.images()[0].dims();
    let mut cfg = match kind {
        "fgsm" => AttackConfig::fgsm(eps),
        "pgd" => {
            let steps = steps.unwrap_or(20);
            let step = step_size.unwrap_or(2.5 * eps / steps as f64);
            AttackConfig::pgd(parse_norm(norm)?, eps, steps, step)
        }
        "cw" => {
            let mut cfg = AttackConfig::cw();
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.step_size = step_size.unwrap_or(cfg.step_size);
            cfg.cw_c = cw_c;
            cfg.cw_kappa = cw_kappa;
            cfg
        }
        "simba" => {
            let basis = match basis {
                "pixel" => SimbaBasis::Pixel,
                "dct" => SimbaBasis::Dct,
                other => {
                    return Err(PyValueError::new_err(format!(
                        "unknown basis {other:?}; expected \"pixel\" or \"dct\""
                    )))
                }
            };
            AttackConfig::simba(basis, eps, step_size.unwrap_or(0.2), steps.unwrap_or(c * h * w), seed)
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown attack kind {other:?}; expected fgsm, pgd, cw, or simba"
            )))
        }
    };
    cfg.seed = seed;

    let report = attack_batch(&net.inner, &dataset.inner, &cfg).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("accuracy_before", report.accuracy_before)?;
    out.set_item("accuracy_after", report.accuracy_after)?;
    out.set_item("success_rate", report.success_rate())?;
    out.set_item("mean_l2", report.mean_l2())?;
    let images: Vec<PyImage> = report
        .images
        .iter()
        .cloned()
        .map(|inner| PyImage { inner })
        .collect();
    out.set_item("images", images)?;
    Ok(out)
}

/// Relative-change transform: mean |ΔDCT| / (|DCT(x)| + δ) per
/// coefficient across pairs.
#[pyfunction]
fn rct_map(originals: Vec<PyImage>, perturbed: Vec<PyImage>) -> PyResult<PyRctMap> {
    let a: Vec<Image> = originals.into_iter().map(|i| i.inner).collect();
    let b: Vec<Image> = perturbed.into_iter().map(|i| i.inner).collect();
    Ok(PyRctMap { inner: rct(&a, &b).map_err(py_err)? })
}

/// Adversarial MMD between original and perturbed spectra, averaged
/// over pairs. `sigma=None` selects the median-heuristic bandwidth.
#[pyfunction]
#[pyo3(signature = (originals, perturbed, sigma=None, per_frequency=false))]
fn ammd_distance(
    originals: Vec<PyImage>,
    perturbed: Vec<PyImage>,
    sigma: Option<f64>,
    per_frequency: bool,
) -> PyResult<f64> {
    let a: Vec<Image> = originals.into_iter().map(|i| i.inner).collect();
    let b: Vec<Image> = perturbed.into_iter().map(|i| i.inner).collect();
    let cfg = MmdConfig {
        bandwidth: match sigma {
            Some(s) => Bandwidth::Explicit(s),
            None => Bandwidth::MedianHeuristic,
        },
        sample_space: if per_frequency {
            SampleSpace::PerFrequencyVectors
        } else {
            SampleSpace::PooledScalars
        },
    };
    ammd(&a, &b, &cfg).map_err(py_err)
}

/// Plain MMD between two point clouds with a Gaussian kernel.
#[pyfunction]
#[pyo3(signature = (a, b, sigma=None))]
fn mmd_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, sigma: Option<f64>) -> PyResult<f64> {
    let cfg = MmdConfig {
        bandwidth: match sigma {
            Some(s) => Bandwidth::Explicit(s),
            None => Bandwidth::MedianHeuristic,
        },
        sample_space: SampleSpace::PooledScalars,
    };
    mmd(&a, &b, &cfg).map_err(py_err)
}

/// Mean occluded-frequency attribution profile per class. Returns
/// (class, scores-per-level, low_band_share) tuples.
#[pyfunction]
#[pyo3(signature = (net, dataset, baseline="zero", seed=0))]
fn attribution_profiles(
    net: &PyNetwork,
    dataset: &PyDataset,
    baseline: &str,
    seed: u64,
) -> PyResult<Vec<(usize, Vec<f64>, f64)>> {
    let baseline = match baseline {
        "zero" => Baseline::Zero,
        "random" => Baseline::Random { seed },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown baseline {other:?}; expected \"zero\" or \"random\""
            )))
        }
    };
    let profiles = class_average_profiles(&net.inner, &dataset.inner, baseline).map_err(py_err)?;
    Ok(profiles
        .into_iter()
        .map(|p| (p.class(), p.scores().to_vec(), p.low_band_share()))
        .collect())
}

/// Representation-matching counterparts for every dataset image.
/// Returns (counterpart images, final objective values).
#[pyfunction]
#[pyo3(signature = (net, dataset, robust_source=false, iterations=500, step_size=0.5, seed=0, tolerance=1e-6))]
#[allow(clippy::too_many_arguments)]
fn robust_counterparts(
    net: &PyNetwork,
    dataset: &PyDataset,
    robust_source: bool,
    iterations: usize,
    step_size: f64,
    seed: u64,
    tolerance: f64,
) -> PyResult<(Vec<PyImage>, Vec<f64>)> {
    let cfg = RobustGenConfig {
        source: if robust_source { NetKind::Robust } else { NetKind::Standard },
        iterations,
        step_size,
        seed,
        tolerance,
    };
    let pairs = generate_counterparts(&net.inner, &dataset.inner, &cfg).map_err(py_err)?;
    let (images, objectives): (Vec<Image>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((
        images.into_iter().map(|inner| PyImage { inner }).collect(),
        objectives,
    ))
}

/// Mean |DCT(counterpart) − DCT(original)| map across pairs.
#[pyfunction]
fn counterpart_diff(originals: Vec<PyImage>, counterparts: Vec<PyImage>) -> PyResult<PyRctMap> {
    let a: Vec<Image> = originals.into_iter().map(|i| i.inner).collect();
    let b: Vec<Image> = counterparts.into_iter().map(|i| i.inner).collect();
    Ok(PyRctMap { inner: counterpart_spectrum_diff(&a, &b).map_err(py_err)? })
}

#[pymodule]
fn freqlens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyRctMap>()?;
    m.add_function(wrap_pyfunction!(dct2, m)?)?;
    m.add_function(wrap_pyfunction!(dct2_inverse_image, m)?)?;
    m.add_function(wrap_pyfunction!(dft, m)?)?;
    m.add_function(wrap_pyfunction!(dft_inverse_signal, m)?)?;
    m.add_function(wrap_pyfunction!(basis_sum, m)?)?;
    m.add_function(wrap_pyfunction!(l1_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(rct_map, m)?)?;
    m.add_function(wrap_pyfunction!(ammd_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mmd_distance, m)?)?;
    m.add_function(wrap_pyfunction!(attribution_profiles, m)?)?;
    m.add_function(wrap_pyfunction!(robust_counterparts, m)?)?;
    m.add_function(wrap_pyfunction!(counterpart_diff, m)?)?;
    Ok(())
}
