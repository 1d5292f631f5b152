//! Adversarial attacks: FGSM, PGD, Carlini-Wagner, and SimBA.
//!
//! FGSM and PGD ascend the loss gradient under an ℓ∞ or ℓ2 budget.
//! CW minimizes distortion plus a logit-margin hinge in tanh space and
//! is unbudgeted (it reports the ℓ2 it achieves). SimBA is black-box:
//! it probes one basis direction at a time using only forward
//! evaluations, which the [`BlackBoxModel`] trait enforces.
//!
//! All attacks return images with pixels in [0, 1]; the budgeted ones
//! keep the declared-norm distortion within ε + 1e-9.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{argmax, softmax, Network};
use crate::spectral::{dct2_inverse, Spectrum2D};
use crate::tensor::{Tape, Tensor};

/// Perturbation norm for budgets and projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    LInf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Cw,
    Simba,
}

/// Basis SimBA draws its probe directions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimbaBasis {
    Pixel,
    Dct,
}

/// Settings for one attack run. Unused fields for a given kind keep
/// their constructor defaults (CW ignores the budget, FGSM the step
/// count, and so on).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub norm: Norm,
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub cw_c: f64,
    pub cw_kappa: f64,
    pub simba_basis: SimbaBasis,
    pub seed: u64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            kind: AttackKind::Fgsm,
            norm: Norm::LInf,
            epsilon,
            steps: 1,
            step_size: epsilon,
            ..Self::base()
        }
    }

    pub fn pgd(norm: Norm, epsilon: f64, steps: usize, step_size: f64) -> Self {
        Self {
            kind: AttackKind::Pgd,
            norm,
            epsilon,
            steps,
            step_size,
            ..Self::base()
        }
    }

    /// CW with the shipped defaults: c=1, κ=0, 200 iterations of step
    /// 0.01. The epsilon field is unused (CW minimizes distortion
    /// instead of projecting onto a ball).
    pub fn cw() -> Self {
        Self {
            kind: AttackKind::Cw,
            norm: Norm::L2,
            steps: 200,
            step_size: 0.01,
            ..Self::base()
        }
    }

    pub fn simba(
        basis: SimbaBasis,
        epsilon: f64,
        step_size: f64,
        steps: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind: AttackKind::Simba,
            norm: Norm::LInf,
            epsilon,
            steps,
            step_size,
            simba_basis: basis,
            seed,
            ..Self::base()
        }
    }

    fn base() -> Self {
        Self {
            kind: AttackKind::Fgsm,
            norm: Norm::LInf,
            epsilon: 0.0,
            steps: 1,
            step_size: 0.0,
            cw_c: 1.0,
            cw_kappa: 0.0,
            simba_basis: SimbaBasis::Pixel,
            seed: 0,
        }
    }
}

/// Per-image attack result: misclassification flag and distortions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub success: bool,
    pub linf: f64,
    pub l2: f64,
    pub l1: f64,
}

/// Batch attack result: the adversarial images plus accuracy and
/// distortion bookkeeping. [`AttackReport::summary_json`] gives the
/// serializable view (without pixel data).
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub config: AttackConfig,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub outcomes: Vec<AttackOutcome>,
    pub images: Vec<Image>,
}

impl AttackReport {
    pub fn success_rate(&self) -> f64 {
        let hits = self.outcomes.iter().filter(|o| o.success).count();
        hits as f64 / self.outcomes.len().max(1) as f64
    }

    pub fn mean_l2(&self) -> f64 {
        let sum: f64 = self.outcomes.iter().map(|o| o.l2).sum();
        sum / self.outcomes.len().max(1) as f64
    }

    /// JSON summary: config, accuracies, and per-image outcomes.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "success_rate": self.success_rate(),
            "mean_l2": self.mean_l2(),
            "outcomes": self.outcomes,
        })
    }

    /// Adversarial images re-labeled with the source labels, ready for
    /// batch-format export.
    pub fn as_dataset(&self, source: &LabeledDataset) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.images.clone(),
            source.labels().to_vec(),
            source.class_names().to_vec(),
        )
    }
}

/// Model interface available to black-box attacks: forward scores
/// only, no gradients. SimBA is written against this trait so it
/// cannot consult anything else.
pub trait BlackBoxModel: Sync {
    fn class_logits(&self, img: &Image) -> Result<Vec<f64>>;
}

impl BlackBoxModel for Network {
    fn class_logits(&self, img: &Image) -> Result<Vec<f64>> {
        self.forward_logits(img)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_unit(img: &mut Image) {
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Project `x` onto the ε-ball around `origin` in the given norm.
fn project_ball(x: &mut Image, origin: &Image, norm: Norm, epsilon: f64) {
    match norm {
        Norm::LInf => {
            for (xi, oi) in x.data_mut().iter_mut().zip(origin.data()) {
                *xi = xi.clamp(oi - epsilon, oi + epsilon);
            }
        }
        Norm::L2 => {
            let dist = x.l2_distance(origin);
            if dist > epsilon {
                let scale = epsilon / dist;
                for (xi, oi) in x.data_mut().iter_mut().zip(origin.data()) {
                    *xi = oi + (*xi - oi) * scale;
                }
            }
        }
    }
}

fn check_positive(value: f64, what: &str) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be finite and positive, got {value}"
        )));
    }
    Ok(())
}

/// One-step sign ascent: x′ = clamp₀¹(x + ε·sign(∇ₓ loss)).
/// sign(0) = 0, so a vanishing gradient leaves the image unchanged.
pub fn fgsm(net: &Network, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    check_positive(cfg.epsilon, "fgsm epsilon")?;
    let grad = net.loss_input_gradient(img, label)?;
    let mut out = img.clone();
    for (xi, gi) in out.data_mut().iter_mut().zip(grad.data()) {
        *xi += cfg.epsilon * sign(*gi);
    }
    clamp_unit(&mut out);
    Ok(out)
}

/// Iterative gradient ascent with per-step projection onto the ε-ball
/// and the unit pixel box. Starts at the input itself, so ε=0 returns
/// it unchanged and one full-size ℓ∞ step reproduces FGSM.
pub fn pgd(net: &Network, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("pgd needs at least one step".to_string()));
    }
    check_positive(cfg.step_size, "pgd step size")?;
    if !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pgd epsilon must be finite and nonnegative, got {}",
            cfg.epsilon
        )));
    }
    if cfg.epsilon == 0.0 {
        return Ok(img.clone());
    }

    let mut x = img.clone();
    for _ in 0..cfg.steps {
        let grad = net.loss_input_gradient(&x, label)?;
        match cfg.norm {
            Norm::LInf => {
                for (xi, gi) in x.data_mut().iter_mut().zip(grad.data()) {
                    *xi += cfg.step_size * sign(*gi);
                }
            }
            Norm::L2 => {
                let norm: f64 = grad.data().iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let scale = cfg.step_size / norm;
                    for (xi, gi) in x.data_mut().iter_mut().zip(grad.data()) {
                        *xi += scale * gi;
                    }
                }
            }
        }
        project_ball(&mut x, img, cfg.norm, cfg.epsilon);
        clamp_unit(&mut x);
    }
    Ok(x)
}

// Pixels are clipped this far inside [0,1] before the atanh change of
// variables, which is undefined at the endpoints.
const CW_ATANH_CLIP: f64 = 1e-6;

/// Carlini-Wagner ℓ2 attack in tanh space: minimize
/// ‖x′−x‖₂² + c·max(logit_true − max_other, −κ) over w with
/// x′ = (tanh(w)+1)/2, plain gradient descent, fixed c. Returns the
/// lowest-distortion successful iterate, else the final iterate.
pub fn cw(net: &Network, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    check_positive(cfg.cw_c, "cw tradeoff constant")?;
    check_positive(cfg.step_size, "cw step size")?;
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("cw needs at least one iteration".to_string()));
    }
    if !(cfg.cw_kappa >= 0.0 && cfg.cw_kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cw kappa must be finite and nonnegative, got {}",
            cfg.cw_kappa
        )));
    }
    if label >= net.num_classes() {
        return Err(Error::InvalidClass {
            class: label,
            num_classes: net.num_classes(),
        });
    }

    // An input the net already misclassifies is a zero-distortion
    // success; the optimizer could only do worse.
    if net.predict(img)? != label {
        return Ok(img.clone());
    }

    let (c, h, w_dim) = img.dims();
    let mut w: Vec<f64> = img
        .data()
        .iter()
        .map(|&p| {
            let clipped = p.clamp(CW_ATANH_CLIP, 1.0 - CW_ATANH_CLIP);
            (2.0 * clipped - 1.0).atanh()
        })
        .collect();

    let mut best: Option<(f64, Image)> = None;
    let mut last = img.clone();
    for iter in 0..=cfg.steps {
        let mut tape = Tape::new();
        let w_id = tape.leaf(Tensor::new(vec![c, h, w_dim], w.clone())?);
        let t = tape.tanh(w_id)?;
        let ones = tape.leaf(Tensor::new(vec![c, h, w_dim], vec![1.0; c * h * w_dim])?);
        let shifted = tape.add(t, ones)?;
        let x_adv = tape.scale(shifted, 0.5)?;

        let orig = tape.leaf(Tensor::from_image(img));
        let diff = tape.sub(x_adv, orig)?;
        let sq = tape.mul(diff, diff)?;
        let dist = tape.sum(sq)?;

        let fwd = net.record_forward(&mut tape, x_adv)?;
        let logits = tape.value(fwd.logits).data().to_vec();
        let runner_up = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("at least two classes");

        let true_logit = tape.select(fwd.logits, label)?;
        let other_logit = tape.select(fwd.logits, runner_up)?;
        let margin = tape.sub(true_logit, other_logit)?;
        let hinge = tape.clamp(margin, -cfg.cw_kappa, f64::INFINITY)?;
        let penalty = tape.scale(hinge, cfg.cw_c)?;
        let objective = tape.add(dist, penalty)?;

        let candidate = tape.value(x_adv).to_image()?;
        if argmax(&logits) != label {
            let l2 = candidate.l2_distance(img);
            if best.as_ref().is_none_or(|(b, _)| l2 < *b) {
                best = Some((l2, candidate.clone()));
            }
        }
        last = candidate;

        if iter < cfg.steps {
            let grads = tape.backward(objective, &[w_id])?;
            for (wi, gi) in w.iter_mut().zip(grads[0].data()) {
                *wi -= cfg.step_size * gi;
            }
        }
    }

    Ok(best.map(|(_, img)| img).unwrap_or(last))
}

/// SimBA: seeded random walk over basis directions, keeping a probe
/// step only when it strictly lowers the true label's softmax
/// probability. Stops on misclassification or direction exhaustion.
/// Black-box: sees the model only through [`BlackBoxModel`].
pub fn simba<M: BlackBoxModel + ?Sized>(
    net: &M,
    img: &Image,
    label: usize,
    cfg: &AttackConfig,
) -> Result<Image> {
    check_positive(cfg.epsilon, "simba budget")?;
    check_positive(cfg.step_size, "simba step size")?;

    let logits = net.class_logits(img)?;
    if label >= logits.len() {
        return Err(Error::InvalidClass {
            class: label,
            num_classes: logits.len(),
        });
    }
    if argmax(&logits) != label {
        return Ok(img.clone());
    }
    let mut p_true = softmax(&logits)[label];
    let mut x = img.clone();

    let (channels, height, width) = img.dims();
    let total = channels * height * width;
    let mut directions: Vec<usize> = (0..total).collect();
    directions.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    for &dir in directions.iter().take(cfg.steps) {
        for sign in [1.0, -1.0] {
            let candidate = step_along_basis(&x, img, dir, sign * cfg.step_size, cfg)?;
            let probs = softmax(&net.class_logits(&candidate)?);
            if probs[label] < p_true {
                p_true = probs[label];
                x = candidate;
                if argmax(&probs) != label {
                    return Ok(x);
                }
                break;
            }
        }
    }
    Ok(x)
}

/// Move `amount` along basis direction `dir` from `x`, then clamp to
/// the ℓ∞ budget box around `origin` and to [0,1].
fn step_along_basis(
    x: &Image,
    origin: &Image,
    dir: usize,
    amount: f64,
    cfg: &AttackConfig,
) -> Result<Image> {
    let (channels, height, width) = x.dims();
    let mut out = x.clone();
    match cfg.simba_basis {
        SimbaBasis::Pixel => {
            out.data_mut()[dir] += amount;
        }
        SimbaBasis::Dct => {
            // unit spike in the spectrum of one channel; its inverse
            // transform is an orthonormal cosine basis image
            let mut spectrum =
                Spectrum2D::new(channels, height, width, vec![0.0; channels * height * width])?;
            spectrum.data_mut()[dir] = 1.0;
            let basis = dct2_inverse(&spectrum)?;
            for (o, b) in out.data_mut().iter_mut().zip(basis.data()) {
                *o += amount * b;
            }
        }
    }
    for (oi, ri) in out.data_mut().iter_mut().zip(origin.data()) {
        *oi = oi.clamp(ri - cfg.epsilon, ri + cfg.epsilon).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Dispatch one image to the attack named in the config.
pub fn run_attack(net: &Network, img: &Image, label: usize, cfg: &AttackConfig) -> Result<Image> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(net, img, label, cfg),
        AttackKind::Pgd => pgd(net, img, label, cfg),
        AttackKind::Cw => cw(net, img, label, cfg),
        AttackKind::Simba => simba(net, img, label, cfg),
    }
}

pub(crate) fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Attack every image in the dataset (in parallel; per-image seeds are
/// derived from the config seed and image index, so results do not
/// depend on scheduling) and assemble the report.
pub fn attack_batch(
    net: &Network,
    dataset: &LabeledDataset,
    cfg: &AttackConfig,
) -> Result<AttackReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("attack dataset"));
    }
    let accuracy_before = net.evaluate(dataset)?;

    let images: Vec<Image> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let per_image = AttackConfig {
                seed: derive_seed(cfg.seed, i),
                ..cfg.clone()
            };
            run_attack(net, dataset.image(i), dataset.label(i), &per_image)
        })
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(images.len());
    let mut correct_after = 0usize;
    for (i, adv) in images.iter().enumerate() {
        let predicted = net.predict(adv)?;
        let success = predicted != dataset.label(i);
        if !success {
            correct_after += 1;
        }
        let source = dataset.image(i);
        outcomes.push(AttackOutcome {
            success,
            linf: adv.linf_distance(source),
            l2: adv.l2_distance(source),
            l1: adv.l1_distance(source),
        });
    }

    Ok(AttackReport {
        config: cfg.clone(),
        accuracy_before,
        accuracy_after: correct_after as f64 / images.len() as f64,
        outcomes,
        images,
    })
}
