//! The desk-scale convolutional classifier and its training loops.
//!
//! Architecture: Conv(C→8, 3×3) – ReLU – Conv(8→16, 3×3) – ReLU –
//! AvgPool(2×2) – Dense(K), stride 1, valid padding throughout. The
//! flattened post-pool activation is the designated representation
//! layer g(·) used for counterpart generation.
//!
//! Training is plain seeded SGD, optionally Madry-style: each sample
//! is replaced by its PGD adversarial example before the gradient
//! step. Training is single-threaded so identical seeds give
//! bit-identical parameter trajectories.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackConfig, Norm};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::{Tape, Tensor, VarId};

const CONV1_OUT: usize = 8;
const CONV2_OUT: usize = 16;
const KERNEL: usize = 3;
const MODEL_MAGIC: &[u8; 4] = b"FQNM";
const MODEL_VERSION: u32 = 1;

/// Small CNN classifier. Immutable after training; safe to share
/// across threads for inference.
#[derive(Debug, Clone)]
pub struct Network {
    in_channels: usize,
    height: usize,
    width: usize,
    num_classes: usize,
    conv1_kernel: Tensor,
    conv1_bias: Tensor,
    conv2_kernel: Tensor,
    conv2_bias: Tensor,
    dense_weight: Tensor,
    dense_bias: Tensor,
}

/// Inner-maximization settings for Madry-style adversarial training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarialTraining {
    pub norm: Norm,
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
}

/// SGD settings. `adversarial: None` is standard training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub adversarial: Option<AdversarialTraining>,
}

impl Default for TrainConfig {
    /// The shipped desk-scale config (synthetic dataset defaults).
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.1,
            seed: 7,
            adversarial: None,
        }
    }
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Ids of a forward pass recorded on a caller-owned tape.
pub(crate) struct TapedForward {
    pub params: Vec<VarId>,
    pub representation: VarId,
    pub logits: VarId,
}

impl Network {
    /// Seeded Glorot-uniform kernel init, zero biases.
    pub fn new(
        in_channels: usize,
        height: usize,
        width: usize,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::InvalidArgument("zero input channels".to_string()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        // two valid 3×3 convs shrink each side by 4; pooling then needs
        // an even remainder of at least 2
        if height < 6 || width < 6 || (height - 4) % 2 != 0 || (width - 4) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input {height}×{width} unsupported: sides must be even and at least 6"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |shape: Vec<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..shape.iter().product::<usize>())
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Tensor::new(shape, data).expect("init values are finite")
        };

        let k_area = KERNEL * KERNEL;
        let conv1_kernel = glorot(
            vec![CONV1_OUT, in_channels, KERNEL, KERNEL],
            in_channels * k_area,
            CONV1_OUT * k_area,
        );
        let conv2_kernel = glorot(
            vec![CONV2_OUT, CONV1_OUT, KERNEL, KERNEL],
            CONV1_OUT * k_area,
            CONV2_OUT * k_area,
        );
        let repr_dim = CONV2_OUT * ((height - 4) / 2) * ((width - 4) / 2);
        let dense_weight = glorot(vec![num_classes, repr_dim], repr_dim, num_classes);

        Ok(Self {
            in_channels,
            height,
            width,
            num_classes,
            conv1_kernel,
            conv1_bias: Tensor::zeros(vec![CONV1_OUT]),
            conv2_kernel,
            conv2_bias: Tensor::zeros(vec![CONV2_OUT]),
            dense_weight,
            dense_bias: Tensor::zeros(vec![num_classes]),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Length of the representation vector g(·).
    pub fn representation_dim(&self) -> usize {
        CONV2_OUT * ((self.height - 4) / 2) * ((self.width - 4) / 2)
    }

    fn params(&self) -> [&Tensor; 6] {
        [
            &self.conv1_kernel,
            &self.conv1_bias,
            &self.conv2_kernel,
            &self.conv2_bias,
            &self.dense_weight,
            &self.dense_bias,
        ]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.conv1_kernel,
            &mut self.conv1_bias,
            &mut self.conv2_kernel,
            &mut self.conv2_bias,
            &mut self.dense_weight,
            &mut self.dense_bias,
        ]
    }

    /// All parameters flattened in serialization order.
    pub fn params_flat(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn zero_first_layer(&mut self) {
        for v in self.conv1_kernel.data_mut() {
            *v = 0.0;
        }
        for v in self.conv1_bias.data_mut() {
            *v = 0.0;
        }
    }

    /// Record the network forward pass on a caller-owned tape, from an
    /// already-recorded [C,H,W] input. Used directly by attacks that
    /// differentiate through their own input parameterization.
    pub(crate) fn record_forward(&self, tape: &mut Tape, input: VarId) -> Result<TapedForward> {
        let params: Vec<VarId> = self
            .params()
            .iter()
            .map(|t| tape.leaf((*t).clone()))
            .collect();
        let c1 = tape.conv2d(input, params[0], params[1])?;
        let r1 = tape.relu(c1)?;
        let c2 = tape.conv2d(r1, params[2], params[3])?;
        let r2 = tape.relu(c2)?;
        let pooled = tape.avg_pool2d(r2)?;
        let representation = tape.reshape(pooled, vec![self.representation_dim()])?;
        let logits = tape.dense(representation, params[4], params[5])?;
        Ok(TapedForward {
            params,
            representation,
            logits,
        })
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        let expected = (self.in_channels, self.height, self.width);
        if img.dims() != expected {
            return Err(Error::shape_mismatch(
                format!("{expected:?}"),
                format!("{:?}", img.dims()),
            ));
        }
        Ok(())
    }

    pub(crate) fn graph(&self, img: &Image) -> Result<(Tape, VarId, TapedForward)> {
        self.check_input(img)?;
        let mut tape = Tape::new();
        let input = tape.leaf(Tensor::from_image(img));
        let fwd = self.record_forward(&mut tape, input)?;
        Ok((tape, input, fwd))
    }

    /// Raw class scores f_c(x).
    pub fn forward_logits(&self, img: &Image) -> Result<Vec<f64>> {
        let (tape, _, fwd) = self.graph(img)?;
        Ok(tape.value(fwd.logits).data().to_vec())
    }

    /// argmax over logits (lowest index wins ties).
    pub fn predict(&self, img: &Image) -> Result<usize> {
        let logits = self.forward_logits(img)?;
        Ok(argmax(&logits))
    }

    /// Softmax distribution over classes.
    pub fn softmax_probabilities(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward_logits(img)?))
    }

    /// Representation-layer activation g(x): the flattened post-pool
    /// feature map.
    pub fn representation(&self, img: &Image) -> Result<Vec<f64>> {
        let (tape, _, fwd) = self.graph(img)?;
        Ok(tape.value(fwd.representation).data().to_vec())
    }

    /// Cross-entropy loss of one labeled image.
    pub fn loss(&self, img: &Image, label: usize) -> Result<f64> {
        let (mut tape, _, fwd) = self.graph(img)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, label)?;
        tape.value(loss).item()
    }

    /// ∂ logit_c / ∂ input, as an image-shaped gradient.
    pub fn logit_input_gradient(&self, img: &Image, class: usize) -> Result<Image> {
        if class >= self.num_classes {
            return Err(Error::InvalidClass {
                class,
                num_classes: self.num_classes,
            });
        }
        let (mut tape, input, fwd) = self.graph(img)?;
        let score = tape.select(fwd.logits, class)?;
        let grads = tape.backward(score, &[input])?;
        grads[0].to_image()
    }

    /// ∂ loss(x, label) / ∂ input, as an image-shaped gradient.
    pub fn loss_input_gradient(&self, img: &Image, label: usize) -> Result<Image> {
        let (mut tape, input, fwd) = self.graph(img)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, label)?;
        let grads = tape.backward(loss, &[input])?;
        grads[0].to_image()
    }

    /// Loss and parameter gradients for one sample.
    fn sample_gradients(&self, img: &Image, label: usize) -> Result<(f64, Vec<Tensor>)> {
        let (mut tape, _, fwd) = self.graph(img)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, label)?;
        let grads = tape.backward(loss, &fwd.params)?;
        Ok((tape.value(loss).item()?, grads))
    }

    /// Fraction of samples whose argmax prediction matches the label.
    pub fn evaluate(&self, dataset: &LabeledDataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("evaluation dataset"));
        }
        let correct = (0..dataset.len())
            .into_par_iter()
            .map(|i| {
                self.predict(dataset.image(i))
                    .map(|p| usize::from(p == dataset.label(i)))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(correct as f64 / dataset.len() as f64)
    }

    /// Seeded SGD over shuffled batches; with `cfg.adversarial` set,
    /// every sample is replaced by its PGD adversarial example (current
    /// parameters) before the gradient step.
    pub fn train(&mut self, dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("training dataset"));
        }
        for (img, label) in dataset.iter() {
            self.check_input(img)?;
            if label >= self.num_classes {
                return Err(Error::InvalidClass {
                    class: label,
                    num_classes: self.num_classes,
                });
            }
        }
        if cfg.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size 0".to_string()));
        }
        if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and positive",
                cfg.learning_rate
            )));
        }
        let inner_attack = match &cfg.adversarial {
            Some(adv) => {
                if !(adv.epsilon >= 0.0 && adv.epsilon.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "adversarial epsilon {} must be finite and nonnegative",
                        adv.epsilon
                    )));
                }
                Some(AttackConfig::pgd(adv.norm, adv.epsilon, adv.steps, adv.step_size))
            }
            None => None,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut stats = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);

            let mut loss_sum = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let mut grad_acc: Option<Vec<Tensor>> = None;
                for &i in batch {
                    let label = dataset.label(i);
                    let img = match &inner_attack {
                        Some(attack_cfg) => {
                            attacks::pgd(&*self, dataset.image(i), label, attack_cfg)?
                        }
                        None => dataset.image(i).clone(),
                    };
                    let (loss, grads) = self.sample_gradients(&img, label)?;
                    if !loss.is_finite() {
                        return Err(Error::Diverged(format!(
                            "non-finite loss at epoch {epoch}, sample {i}"
                        )));
                    }
                    loss_sum += loss;
                    grad_acc = Some(match grad_acc {
                        None => grads,
                        Some(mut acc) => {
                            for (a, g) in acc.iter_mut().zip(&grads) {
                                for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                    *av += gv;
                                }
                            }
                            acc
                        }
                    });
                }

                let step = cfg.learning_rate / batch.len() as f64;
                let grads = grad_acc.expect("batch is nonempty");
                for (param, grad) in self.params_mut().into_iter().zip(&grads) {
                    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                        *p -= step * g;
                    }
                }
                if self.params().iter().any(|t| !t.data().iter().all(|v| v.is_finite())) {
                    return Err(Error::Diverged(format!(
                        "non-finite parameters after update at epoch {epoch}"
                    )));
                }
            }

            stats.push(EpochStats {
                epoch,
                mean_loss: loss_sum / dataset.len() as f64,
                train_accuracy: self.evaluate(dataset)?,
            });
        }
        Ok(stats)
    }

    /// Write the versioned binary model file (magic, architecture,
    /// little-endian float64 parameter blocks). Round trips bit-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        for dim in [self.in_channels, self.height, self.width, self.num_classes] {
            let v = u32::try_from(dim)
                .map_err(|_| Error::format(path.display().to_string(), "dimension overflow"))?;
            out.write_all(&v.to_le_bytes())?;
        }
        for param in self.params() {
            for v in param.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let fail = |reason: &str| Error::format(path.display().to_string(), reason);
        let mut reader = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(|_| fail("unexpected end of file"))?;
        if &magic != MODEL_MAGIC {
            return Err(fail("bad magic (expected FQNM)"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|_| fail("unexpected end of file"))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut reader)?;
        if version != MODEL_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let in_channels = read_u32(&mut reader)? as usize;
        let height = read_u32(&mut reader)? as usize;
        let width = read_u32(&mut reader)? as usize;
        let num_classes = read_u32(&mut reader)? as usize;

        let mut net = Network::new(in_channels, height, width, num_classes, 0)?;
        for param in net.params_mut() {
            let mut bytes = vec![0u8; param.numel() * 8];
            reader
                .read_exact(&mut bytes)
                .map_err(|_| fail("unexpected end of file"))?;
            for (slot, chunk) in param.data_mut().iter_mut().zip(bytes.chunks_exact(8)) {
                *slot = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(fail("trailing data after parameters"));
        }
        if !net.params_flat().iter().all(|v| v.is_finite()) {
            return Err(fail("non-finite parameter"));
        }
        Ok(net)
    }
}

/// Index of the largest entry (lowest index on ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synthesize, ShapeKind, SyntheticSpec};

    fn tiny_dataset(samples_per_class: usize, seed: u64) -> LabeledDataset {
        let spec = SyntheticSpec::new(
            vec![ShapeKind::Disk, ShapeKind::Stripes],
            8,
            samples_per_class,
            0.02,
            seed,
        )
        .unwrap();
        synthesize(&spec)
    }

    #[test]
    fn fresh_net_gives_finite_near_uniform_logits() {
        let net = Network::new(1, 8, 8, 4, 1).unwrap();
        let img = Image::constant(1, 8, 8, 0.5);
        let probs = net.softmax_probabilities(&img).unwrap();
        assert_eq!(probs.len(), 4);
        for p in probs {
            assert!((p - 0.25).abs() < 0.2, "softmax {p} far from uniform");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Network::new(1, 8, 8, 3, 2).unwrap();
        let ds = tiny_dataset(1, 9);
        let a = net.forward_logits(ds.image(0)).unwrap();
        let b = net.forward_logits(ds.image(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zeroed_first_layer_kills_input_gradient() {
        let mut net = Network::new(1, 8, 8, 2, 3).unwrap();
        net.zero_first_layer();
        let ds = tiny_dataset(1, 4);
        let grad = net.logit_input_gradient(ds.image(0), 0).unwrap();
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = Network::new(1, 8, 8, 2, 5).unwrap();
        let ds = tiny_dataset(1, 6);
        let img = ds.image(0);
        let grad = net.loss_input_gradient(img, ds.label(0)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let i = rng.random_range(0..img.data().len());
            let h = 1e-4;
            let mut plus = img.clone();
            let mut minus = img.clone();
            plus.data_mut()[i] += h;
            minus.data_mut()[i] -= h;
            let numeric = (net.loss(&plus, ds.label(0)).unwrap()
                - net.loss(&minus, ds.label(0)).unwrap())
                / (2.0 * h);
            let analytic = grad.data()[i];
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "pixel {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn stepping_against_the_loss_gradient_decreases_loss() {
        let net = Network::new(1, 8, 8, 2, 5).unwrap();
        let ds = tiny_dataset(1, 6);
        let img = ds.image(0);
        let label = ds.label(0);
        let grad = net.loss_input_gradient(img, label).unwrap();
        let mut stepped = img.clone();
        for (p, g) in stepped.data_mut().iter_mut().zip(grad.data()) {
            *p -= 1e-3 * g;
        }
        assert!(net.loss(&stepped, label).unwrap() < net.loss(img, label).unwrap());
    }

    #[test]
    fn zero_epochs_leaves_parameters_unchanged() {
        let mut net = Network::new(1, 8, 8, 2, 7).unwrap();
        let before = net.params_flat();
        let ds = tiny_dataset(4, 1);
        let stats = net
            .train(&ds, &TrainConfig { epochs: 0, ..TrainConfig::default() })
            .unwrap();
        assert!(stats.is_empty());
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn training_is_seed_reproducible() {
        let ds = tiny_dataset(10, 2);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 11,
            adversarial: None,
        };
        let mut a = Network::new(1, 8, 8, 2, 7).unwrap();
        let mut b = Network::new(1, 8, 8, 2, 7).unwrap();
        a.train(&ds, &cfg).unwrap();
        b.train(&ds, &cfg).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn zero_budget_adversarial_training_equals_standard() {
        let ds = tiny_dataset(6, 3);
        let base = TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 0.05,
            seed: 13,
            adversarial: None,
        };
        let adv = TrainConfig {
            adversarial: Some(AdversarialTraining {
                norm: Norm::LInf,
                epsilon: 0.0,
                steps: 3,
                step_size: 0.1,
            }),
            ..base.clone()
        };
        let mut standard = Network::new(1, 8, 8, 2, 7).unwrap();
        let mut robust = Network::new(1, 8, 8, 2, 7).unwrap();
        standard.train(&ds, &base).unwrap();
        robust.train(&ds, &adv).unwrap();
        assert_eq!(standard.params_flat(), robust.params_flat());
    }

    #[test]
    fn untrained_net_scores_chance_on_shuffled_labels() {
        let spec =
            SyntheticSpec::new(ShapeKind::ALL.to_vec(), 8, 100, 0.05, 21).unwrap();
        let ds = synthesize(&spec);
        let mut labels = ds.labels().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        labels.shuffle(&mut rng);
        let shuffled = LabeledDataset::new(
            ds.images().to_vec(),
            labels,
            ds.class_names().to_vec(),
        )
        .unwrap();
        let net = Network::new(1, 8, 8, 4, 17).unwrap();
        let acc = net.evaluate(&shuffled).unwrap();
        assert!((acc - 0.25).abs() < 0.1, "accuracy {acc} not near chance");
    }

    #[test]
    fn evaluating_one_agreeing_image_gives_full_accuracy() {
        let net = Network::new(1, 8, 8, 2, 19).unwrap();
        let ds = tiny_dataset(1, 8);
        let predicted = net.predict(ds.image(0)).unwrap();
        let single = LabeledDataset::new(
            vec![ds.image(0).clone()],
            vec![predicted],
            ds.class_names().to_vec(),
        )
        .unwrap();
        assert_eq!(net.evaluate(&single).unwrap(), 1.0);
    }

    #[test]
    fn small_synthetic_task_is_learnable() {
        let ds = tiny_dataset(50, 23);
        let mut net = Network::new(1, 8, 8, 2, 7).unwrap();
        let stats = net
            .train(
                &ds,
                &TrainConfig {
                    epochs: 5,
                    batch_size: 8,
                    learning_rate: 0.1,
                    seed: 7,
                    adversarial: None,
                },
            )
            .unwrap();
        let final_acc = stats.last().unwrap().train_accuracy;
        assert!(final_acc > 0.9, "train accuracy {final_acc} too low");
    }

    #[test]
    fn default_dataset_is_learnable_with_default_config() {
        // The shipped defaults — 4 shape classes x 500 images at 16x16
        // and the stock training schedule — must fit the training set
        // to better than 90%.
        let ds = crate::datasets::synthesize(&crate::datasets::SyntheticSpec::default());
        let (c, h, w) = ds.images()[0].dims();
        let mut net = Network::new(c, h, w, ds.num_classes(), 7).unwrap();
        net.train(&ds, &TrainConfig::default()).unwrap();
        let accuracy = net.evaluate(&ds).unwrap();
        assert!(accuracy > 0.9, "default-config train accuracy {accuracy} too low");
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let mut net = Network::new(1, 8, 8, 2, 29).unwrap();
        let ds = tiny_dataset(5, 31);
        net.train(
            &ds,
            &TrainConfig { epochs: 1, batch_size: 4, learning_rate: 0.05, seed: 3, adversarial: None },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.fqnm");
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(net.params_flat(), loaded.params_flat());
        assert_eq!(
            net.forward_logits(ds.image(0)).unwrap(),
            loaded.forward_logits(ds.image(0)).unwrap()
        );
    }

    #[test]
    fn loading_bad_magic_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fqnm");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(Network::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn invalid_class_index_is_rejected() {
        let net = Network::new(1, 8, 8, 2, 1).unwrap();
        let img = Image::constant(1, 8, 8, 0.5);
        assert!(matches!(
            net.logit_input_gradient(&img, 2),
            Err(Error::InvalidClass { .. })
        ));
    }
}
