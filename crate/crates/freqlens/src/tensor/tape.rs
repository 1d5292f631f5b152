//! The differentiation tape: primitive ops and the reverse sweep.

use crate::error::{Error, Result};

use super::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Recorded primitive, holding the operand ids the adjoint needs.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    Clamp(VarId, f64, f64),
    Relu(VarId),
    Tanh(VarId),
    Sum(VarId),
    Select(VarId, usize),
    Reshape(VarId),
    Conv2d {
        input: VarId,
        kernel: VarId,
        bias: VarId,
    },
    AvgPool2d(VarId),
    Dense {
        input: VarId,
        weight: VarId,
        bias: VarId,
    },
    SoftmaxCrossEntropy {
        logits: VarId,
        label: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive ops.
///
/// Node indices are already topologically sorted (an op can only refer
/// to earlier nodes), so the backward pass is a single reverse sweep
/// that visits each node exactly once.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Record an input tensor (image, parameter, or constant).
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        VarId(self.nodes.len() - 1)
    }

    /// Forward value of a recorded tensor.
    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, name: &'static str) -> Result<VarId> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            value: Tensor::new(shape, data)?,
            op,
        });
        Ok(VarId(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: VarId, b: VarId, name: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape_mismatch(
                format!("{name}: {:?}", self.value(a).shape()),
                format!("{:?}", self.value(b).shape()),
            ));
        }
        Ok(())
    }

    // ── elementwise ────────────────────────────────────────────────

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), self.value(a).shape().to_vec(), data, "add")
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), self.value(a).shape().to_vec(), data, "sub")
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), self.value(a).shape().to_vec(), data, "mul")
    }

    pub fn scale(&mut self, a: VarId, factor: f64) -> Result<VarId> {
        let data = self.value(a).data().iter().map(|x| x * factor).collect();
        self.push(Op::Scale(a, factor), self.value(a).shape().to_vec(), data, "scale")
    }

    pub fn clamp(&mut self, a: VarId, lo: f64, hi: f64) -> Result<VarId> {
        let data = self.value(a).data().iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(Op::Clamp(a, lo, hi), self.value(a).shape().to_vec(), data, "clamp")
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId> {
        let data = self.value(a).data().iter().map(|x| x.max(0.0)).collect();
        self.push(Op::Relu(a), self.value(a).shape().to_vec(), data, "relu")
    }

    pub fn tanh(&mut self, a: VarId) -> Result<VarId> {
        let data = self.value(a).data().iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), self.value(a).shape().to_vec(), data, "tanh")
    }

    // ── reductions and indexing ────────────────────────────────────

    /// Scalar sum of all entries.
    pub fn sum(&mut self, a: VarId) -> Result<VarId> {
        let total = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), vec![1], vec![total], "sum")
    }

    /// Scalar pick of a single flat index.
    pub fn select(&mut self, a: VarId, index: usize) -> Result<VarId> {
        let n = self.value(a).numel();
        if index >= n {
            return Err(Error::InvalidArgument(format!(
                "select index {index} out of range for {n} elements"
            )));
        }
        let v = self.value(a).data()[index];
        self.push(Op::Select(a, index), vec![1], vec![v], "select")
    }

    pub fn reshape(&mut self, a: VarId, shape: Vec<usize>) -> Result<VarId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(Error::shape_mismatch(
                format!("reshape to {shape:?} ({numel} values)"),
                format!("{}", self.value(a).numel()),
            ));
        }
        let data = self.value(a).data().to_vec();
        self.push(Op::Reshape(a), shape, data, "reshape")
    }

    // ── network layers ─────────────────────────────────────────────

    /// 2D convolution, stride 1, valid padding.
    ///
    /// input [C,H,W], kernel [O,C,KH,KW], bias [O] → [O, H−KH+1, W−KW+1].
    pub fn conv2d(&mut self, input: VarId, kernel: VarId, bias: VarId) -> Result<VarId> {
        let in_shape = self.value(input).shape().to_vec();
        let k_shape = self.value(kernel).shape().to_vec();
        let b_shape = self.value(bias).shape().to_vec();
        if in_shape.len() != 3 || k_shape.len() != 4 || b_shape.len() != 1 {
            return Err(Error::shape_mismatch(
                "conv2d input [C,H,W], kernel [O,C,KH,KW], bias [O]".to_string(),
                format!("{in_shape:?}, {k_shape:?}, {b_shape:?}"),
            ));
        }
        let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        let (o, kc, kh, kw) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
        if kc != c || b_shape[0] != o || kh > h || kw > w {
            return Err(Error::shape_mismatch(
                format!("kernel matching input [{c},{h},{w}]"),
                format!("{k_shape:?}, bias {b_shape:?}"),
            ));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for p in 0..kh {
                            for q in 0..kw {
                                acc += x[(ic * h + i + p) * w + j + q]
                                    * k[((oc * c + ic) * kh + p) * kw + q];
                            }
                        }
                    }
                    out[(oc * oh + i) * ow + j] = acc;
                }
            }
        }
        self.push(
            Op::Conv2d { input, kernel, bias },
            vec![o, oh, ow],
            out,
            "conv2d",
        )
    }

    /// 2×2 average pooling with stride 2; spatial dims must be even.
    pub fn avg_pool2d(&mut self, input: VarId) -> Result<VarId> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
            return Err(Error::shape_mismatch(
                "avg_pool2d input [C,H,W] with even H,W".to_string(),
                format!("{shape:?}"),
            ));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let (oh, ow) = (h / 2, w / 2);
        let x = self.value(input).data();
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let base = (ch * h + 2 * i) * w + 2 * j;
                    out[(ch * oh + i) * ow + j] =
                        0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
                }
            }
        }
        self.push(Op::AvgPool2d(input), vec![c, oh, ow], out, "avg_pool2d")
    }

    /// Fully connected layer: weight [K,D] · input [D] + bias [K].
    pub fn dense(&mut self, input: VarId, weight: VarId, bias: VarId) -> Result<VarId> {
        let in_shape = self.value(input).shape().to_vec();
        let w_shape = self.value(weight).shape().to_vec();
        let b_shape = self.value(bias).shape().to_vec();
        if in_shape.len() != 1 || w_shape.len() != 2 || b_shape.len() != 1 {
            return Err(Error::shape_mismatch(
                "dense input [D], weight [K,D], bias [K]".to_string(),
                format!("{in_shape:?}, {w_shape:?}, {b_shape:?}"),
            ));
        }
        let (k, d) = (w_shape[0], w_shape[1]);
        if in_shape[0] != d || b_shape[0] != k {
            return Err(Error::shape_mismatch(
                format!("weight [K,{}], bias [K]", in_shape[0]),
                format!("{w_shape:?}, {b_shape:?}"),
            ));
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; k];
        for row in 0..k {
            let mut acc = b[row];
            for col in 0..d {
                acc += w[row * d + col] * x[col];
            }
            out[row] = acc;
        }
        self.push(Op::Dense { input, weight, bias }, vec![k], out, "dense")
    }

    /// Numerically stable softmax cross-entropy against an integer label.
    pub fn softmax_cross_entropy(&mut self, logits: VarId, label: usize) -> Result<VarId> {
        let z = self.value(logits);
        if z.shape().len() != 1 {
            return Err(Error::shape_mismatch(
                "logits [K]".to_string(),
                format!("{:?}", z.shape()),
            ));
        }
        let k = z.numel();
        if label >= k {
            return Err(Error::InvalidClass {
                class: label,
                num_classes: k,
            });
        }
        let max = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum_exp = max
            + z.data()
                .iter()
                .map(|v| (v - max).exp())
                .sum::<f64>()
                .ln();
        let loss = log_sum_exp - z.data()[label];
        self.push(
            Op::SoftmaxCrossEntropy { logits, label },
            vec![1],
            vec![loss],
            "softmax_cross_entropy",
        )
    }

    // ── reverse sweep ──────────────────────────────────────────────

    /// Gradients of a scalar loss with respect to each requested tensor.
    ///
    /// Errors if the loss is not scalar or a requested tensor has no
    /// path to the loss.
    pub fn backward(&self, loss: VarId, wrt: &[VarId]) -> Result<Vec<Tensor>> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.numel()));
        }
        let mut adjoints: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let grad = match adjoints[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_adjoint(idx, &grad, &mut adjoints);
            adjoints[idx] = Some(grad);
        }

        wrt.iter()
            .map(|id| {
                let data = adjoints[id.0].clone().ok_or(Error::DetachedTensor)?;
                Tensor::new(self.value(*id).shape().to_vec(), data)
                    .map_err(|_| Error::NonFinite("gradient"))
            })
            .collect()
    }

    fn apply_adjoint(&self, idx: usize, grad: &[f64], adjoints: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(adjoints, a, grad);
                accumulate(adjoints, b, grad);
            }
            Op::Sub(a, b) => {
                accumulate(adjoints, a, grad);
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                accumulate(adjoints, b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = grad.iter()
                    .zip(self.value(b).data())
                    .map(|(g, y)| g * y)
                    .collect();
                let db: Vec<f64> = grad.iter()
                    .zip(self.value(a).data())
                    .map(|(g, x)| g * x)
                    .collect();
                accumulate(adjoints, a, &da);
                accumulate(adjoints, b, &db);
            }
            Op::Scale(a, factor) => {
                let da: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                accumulate(adjoints, a, &da);
            }
            Op::Clamp(a, lo, hi) => {
                let da: Vec<f64> = grad.iter()
                    .zip(self.value(a).data())
                    .map(|(g, x)| if *x >= lo && *x <= hi { *g } else { 0.0 })
                    .collect();
                accumulate(adjoints, a, &da);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = grad.iter()
                    .zip(self.value(a).data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(adjoints, a, &da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = grad.iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                accumulate(adjoints, a, &da);
            }
            Op::Sum(a) => {
                let g = grad[0];
                let da = vec![g; self.value(a).numel()];
                accumulate(adjoints, a, &da);
            }
            Op::Select(a, index) => {
                let mut da = vec![0.0; self.value(a).numel()];
                da[index] = grad[0];
                accumulate(adjoints, a, &da);
            }
            Op::Reshape(a) => {
                accumulate(adjoints, a, grad);
            }
            Op::Conv2d { input, kernel, bias } => {
                let in_shape = self.value(input).shape();
                let k_shape = self.value(kernel).shape();
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (o, kh, kw) = (k_shape[0], k_shape[2], k_shape[3]);
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let x = self.value(input).data();
                let k = self.value(kernel).data();
                let g = grad;

                let mut dx = vec![0.0; c * h * w];
                let mut dk = vec![0.0; o * c * kh * kw];
                let mut db = vec![0.0; o];
                for oc in 0..o {
                    for i in 0..oh {
                        for j in 0..ow {
                            let go = g[(oc * oh + i) * ow + j];
                            db[oc] += go;
                            for ic in 0..c {
                                for p in 0..kh {
                                    for q in 0..kw {
                                        let xi = (ic * h + i + p) * w + j + q;
                                        let ki = ((oc * c + ic) * kh + p) * kw + q;
                                        dx[xi] += go * k[ki];
                                        dk[ki] += go * x[xi];
                                    }
                                }
                            }
                        }
                    }
                }
                accumulate(adjoints, input, &dx);
                accumulate(adjoints, kernel, &dk);
                accumulate(adjoints, bias, &db);
            }
            Op::AvgPool2d(input) => {
                let in_shape = self.value(input).shape();
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (oh, ow) = (h / 2, w / 2);
                let g = grad;
                let mut dx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            let share = 0.25 * g[(ch * oh + i) * ow + j];
                            let base = (ch * h + 2 * i) * w + 2 * j;
                            dx[base] += share;
                            dx[base + 1] += share;
                            dx[base + w] += share;
                            dx[base + w + 1] += share;
                        }
                    }
                }
                accumulate(adjoints, input, &dx);
            }
            Op::Dense { input, weight, bias } => {
                let w_shape = self.value(weight).shape();
                let (k, d) = (w_shape[0], w_shape[1]);
                let x = self.value(input).data();
                let w = self.value(weight).data();
                let g = grad;
                let mut dx = vec![0.0; d];
                let mut dw = vec![0.0; k * d];
                for row in 0..k {
                    let go = g[row];
                    for col in 0..d {
                        dx[col] += go * w[row * d + col];
                        dw[row * d + col] = go * x[col];
                    }
                }
                accumulate(adjoints, input, &dx);
                accumulate(adjoints, weight, &dw);
                accumulate(adjoints, bias, g);
            }
            Op::SoftmaxCrossEntropy { logits, label } => {
                let z = self.value(logits).data();
                let g = grad[0];
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = z.iter().map(|v| (v - max).exp()).sum();
                let dz: Vec<f64> = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let p = (v - max).exp() / denom;
                        g * (p - if i == label { 1.0 } else { 0.0 })
                    })
                    .collect();
                accumulate(adjoints, logits, &dz);
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f(*x, *y))
        .collect()
}

fn accumulate(adjoints: &mut [Option<Vec<f64>>], id: VarId, grad: &[f64]) {
    match &mut adjoints[id.0] {
        Some(existing) => {
            for (e, g) in existing.iter_mut().zip(grad) {
                *e += g;
            }
        }
        slot @ None => *slot = Some(grad.to_vec()),
    }
}
