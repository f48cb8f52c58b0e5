//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation in execution order. [`Tape::backward`]
//! walks the record in reverse and accumulates gradients. A tape is built per
//! forward pass and dropped afterwards.

use crate::error::{QacnnError, Result};
use crate::ops::{self, Activation};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Param,
    Constant,
    Conv { input: Var, kernels: Var, bias: Var },
    Act { input: Var, kind: Activation },
    MaxChannels { input: Var, arg: Vec<usize> },
    MaxLength { input: Var, arg: Vec<usize> },
    MulRows { input: Var, weights: Var },
    Scale { input: Var, factors: Vec<T> },
    Mul { a: Var, b: Var },
    Add { inputs: Vec<Var> },
    StackColumns { inputs: Vec<Var> },
    Concat { inputs: Vec<Var> },
    Affine { weights: Var, input: Var, bias: Var },
    Softmax { input: Var },
    Nll { probs: Var, label: usize },
    Sum { input: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Smoothing constant inside the negative log-likelihood.
pub const NLL_EPS: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf; receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Param, true)
    }

    /// Non-trainable leaf; no gradient is propagated into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn conv(&mut self, input: Var, kernels: Var, bias: Var) -> Result<Var> {
        let value = ops::conv_channels_last(self.value(input), self.value(kernels), self.value(bias))?;
        let rg = self.needs(&[input, kernels, bias]);
        Ok(self.push(value, Op::Conv { input, kernels, bias }, rg))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let value = ops::activation(self.value(input), kind);
        let rg = self.needs(&[input]);
        self.push(value, Op::Act { input, kind }, rg)
    }

    pub fn max_over_channels(&mut self, input: Var) -> Result<Var> {
        let (value, arg) = ops::max_over_channels_indexed(self.value(input))?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::MaxChannels { input, arg }, rg))
    }

    pub fn max_over_length(&mut self, input: Var) -> Result<Var> {
        let (value, arg) = ops::max_over_length_indexed(self.value(input))?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::MaxLength { input, arg }, rg))
    }

    /// `out[t][x] = input[t][x] · weights[x]` for `input: [rows × L]`, `weights: [L]`.
    pub fn mul_rows(&mut self, input: Var, weights: Var) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weights);
        if x.rank() != 2 || w.shape() != [x.shape()[1]] {
            return Err(QacnnError::shape(
                "mul_rows",
                format!("cannot broadcast {:?} along rows of {:?}", w.shape(), x.shape()),
            ));
        }
        let cols = x.shape()[1];
        let data = x
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(w.data()).map(|(&a, &b)| a * b))
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(&[input, weights]);
        Ok(self.push(value, Op::MulRows { input, weights }, rg))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn scale(&mut self, input: Var, factors: Vec<T>) -> Result<Var> {
        let x = self.value(input);
        if factors.len() != x.len() {
            return Err(QacnnError::shape(
                "scale",
                format!("{} factors for shape {:?}", factors.len(), x.shape()),
            ));
        }
        let data = x.data().iter().zip(&factors).map(|(&a, &b)| a * b).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::Scale { input, factors }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(QacnnError::shape("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| QacnnError::shape("add", "no inputs"))?;
        let shape = self.value(*first).shape().to_vec();
        let mut acc = vec![T::zero(); self.value(*first).len()];
        for &v in inputs {
            let t = self.value(v);
            if t.shape() != shape.as_slice() {
                return Err(QacnnError::shape("add", format!("{:?} vs {:?}", shape, t.shape())));
            }
            acc.iter_mut().zip(t.data()).for_each(|(a, &b)| *a = *a + b);
        }
        let value = Tensor::new(shape, acc)?;
        let rg = self.needs(inputs);
        Ok(self.push(value, Op::Add { inputs: inputs.to_vec() }, rg))
    }

    /// Places equal-length vectors side by side as the columns of a matrix.
    pub fn stack_columns(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| QacnnError::shape("stack_columns", "no inputs"))?;
        let rows = self.value(*first).len();
        let cols = inputs.len();
        let mut data = vec![T::zero(); rows * cols];
        for (n, &v) in inputs.iter().enumerate() {
            let t = self.value(v);
            if t.shape() != [rows] {
                return Err(QacnnError::shape(
                    "stack_columns",
                    format!("column {n} has shape {:?}, expected [{rows}]", t.shape()),
                ));
            }
            for (r, &x) in t.data().iter().enumerate() {
                data[r * cols + n] = x;
            }
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        let rg = self.needs(inputs);
        Ok(self.push(value, Op::StackColumns { inputs: inputs.to_vec() }, rg))
    }

    /// Concatenates 1-D tensors (scalars count as length one).
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &v in inputs {
            let t = self.value(v);
            if t.rank() > 1 {
                return Err(QacnnError::shape("concat", format!("rank of {:?} exceeds 1", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        if data.is_empty() {
            return Err(QacnnError::shape("concat", "no inputs"));
        }
        let value = Tensor::vector(data);
        let rg = self.needs(inputs);
        Ok(self.push(value, Op::Concat { inputs: inputs.to_vec() }, rg))
    }

    /// `out = weights · input + bias`. A rank-1 `weights` acts as a single output row.
    pub fn affine(&mut self, weights: Var, input: Var, bias: Var) -> Result<Var> {
        let (w, x, b) = (self.value(weights), self.value(input), self.value(bias));
        let (rows, cols) = match w.shape() {
            [c] => (1, *c),
            [r, c] => (*r, *c),
            s => return Err(QacnnError::shape("affine", format!("weights {s:?} must be rank 1 or 2"))),
        };
        if x.shape() != [cols] || b.len() != rows {
            return Err(QacnnError::shape(
                "affine",
                format!(
                    "weights {:?}, input {:?}, bias {:?} are incompatible",
                    w.shape(),
                    x.shape(),
                    b.shape()
                ),
            ));
        }
        let data = w
            .data()
            .chunks(cols)
            .zip(b.data())
            .map(|(row, &bias)| bias + row.iter().zip(x.data()).map(|(&p, &q)| p * q).sum::<T>())
            .collect();
        let value = Tensor::vector(data);
        let rg = self.needs(&[weights, input, bias]);
        Ok(self.push(value, Op::Affine { weights, input, bias }, rg))
    }

    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let value = ops::softmax(self.value(input))?;
        let rg = self.needs(&[input]);
        Ok(self.push(value, Op::Softmax { input }, rg))
    }

    /// `−ln(probs[label] + 1e−12)` as a scalar.
    pub fn nll(&mut self, probs: Var, label: usize) -> Result<Var> {
        let p = self.value(probs);
        if p.rank() != 1 || label >= p.len() {
            return Err(QacnnError::InvalidArgument(format!(
                "label {label} out of range for probabilities of shape {:?}",
                p.shape()
            )));
        }
        let loss = -(p.data()[label] + T::of(NLL_EPS)).ln();
        let rg = self.needs(&[probs]);
        Ok(self.push(Tensor::scalar(loss), Op::Nll { probs, label }, rg))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).sum());
        let rg = self.needs(&[input]);
        self.push(value, Op::Sum { input }, rg)
    }

    /// Smallest distance of any recorded ReLU input from zero or any max-pool
    /// winner from its runner-up. Finite differences with a step below this
    /// margin stay on one side of every kink.
    pub fn kink_margin(&self) -> T {
        let mut margin = T::infinity();
        for node in &self.nodes {
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Act { input, kind: Activation::Relu } => {
                    for &v in self.value(*input).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxChannels { input, .. } => {
                    let x = self.value(*input);
                    let (rows, cols) = (x.shape()[0], x.shape()[1]);
                    for c in 0..cols {
                        let column = (0..rows).map(|r| x.data()[r * cols + c]);
                        margin = margin.min(top_two_gap(column));
                    }
                }
                Op::MaxLength { input, .. } => {
                    let x = self.value(*input);
                    for row in x.data().chunks(x.shape()[1]) {
                        margin = margin.min(top_two_gap(row.iter().copied()));
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Propagates d(loss)/d(·) back through every recorded operation.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(QacnnError::InvalidArgument(
                "backward called before any forward operation produced the loss".into(),
            ));
        }
        if !self.value(loss).is_scalar() {
            return Err(QacnnError::InvalidArgument(format!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::Conv { input, kernels, bias } => {
                let x = self.value(*input);
                let k = self.value(*kernels);
                let (channels, length) = (x.shape()[0], x.shape()[1]);
                let (count, width) = (k.shape()[0], k.shape()[2]);
                let out_len = length - width + 1;
                if wants(*bias) {
                    let db = slot(grads, *bias, count);
                    for t in 0..count {
                        db[t] = db[t] + g[t * out_len..(t + 1) * out_len].iter().copied().sum();
                    }
                }
                if wants(*kernels) {
                    let dk = slot(grads, *kernels, k.len());
                    for t in 0..count {
                        let gt = &g[t * out_len..(t + 1) * out_len];
                        for c in 0..channels {
                            let xr = &x.data()[c * length..(c + 1) * length];
                            for u in 0..width {
                                let s: T = gt.iter().zip(&xr[u..u + out_len]).map(|(&a, &b)| a * b).sum();
                                let at = (t * channels + c) * width + u;
                                dk[at] = dk[at] + s;
                            }
                        }
                    }
                }
                if wants(*input) {
                    let dx = slot(grads, *input, x.len());
                    for t in 0..count {
                        let gt = &g[t * out_len..(t + 1) * out_len];
                        for c in 0..channels {
                            let dxr = &mut dx[c * length..(c + 1) * length];
                            for u in 0..width {
                                let w = k.data()[(t * channels + c) * width + u];
                                for (d, &gv) in dxr[u..u + out_len].iter_mut().zip(gt) {
                                    *d = *d + w * gv;
                                }
                            }
                        }
                    }
                }
            }
            Op::Act { input, kind } => {
                let x = self.value(*input);
                let dx = slot(grads, *input, x.len());
                for ((d, &xi), (&yi, &gi)) in dx.iter_mut().zip(x.data()).zip(node.value.data().iter().zip(g)) {
                    *d = *d + gi * kind.derivative(xi, yi);
                }
            }
            Op::MaxChannels { input, arg } => {
                let cols = arg.len();
                let dx = slot(grads, *input, self.value(*input).len());
                for (c, (&r, &gi)) in arg.iter().zip(g).enumerate() {
                    dx[r * cols + c] = dx[r * cols + c] + gi;
                }
            }
            Op::MaxLength { input, arg } => {
                let cols = self.value(*input).shape()[1];
                let dx = slot(grads, *input, self.value(*input).len());
                for (r, (&c, &gi)) in arg.iter().zip(g).enumerate() {
                    dx[r * cols + c] = dx[r * cols + c] + gi;
                }
            }
            Op::MulRows { input, weights } => {
                let x = self.value(*input);
                let w = self.value(*weights);
                let cols = w.len();
                if wants(*input) {
                    let dx = slot(grads, *input, x.len());
                    for (i, d) in dx.iter_mut().enumerate() {
                        *d = *d + g[i] * w.data()[i % cols];
                    }
                }
                if wants(*weights) {
                    let dw = slot(grads, *weights, cols);
                    for (i, &xi) in x.data().iter().enumerate() {
                        dw[i % cols] = dw[i % cols] + g[i] * xi;
                    }
                }
            }
            Op::Scale { input, factors } => {
                let dx = slot(grads, *input, factors.len());
                for ((d, &f), &gi) in dx.iter_mut().zip(factors).zip(g) {
                    *d = *d + gi * f;
                }
            }
            Op::Mul { a, b } => {
                let (x, y) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    let da = slot(grads, *a, x.len());
                    for ((d, &yi), &gi) in da.iter_mut().zip(y.data()).zip(g) {
                        *d = *d + gi * yi;
                    }
                }
                if wants(*b) {
                    let db = slot(grads, *b, y.len());
                    for ((d, &xi), &gi) in db.iter_mut().zip(x.data()).zip(g) {
                        *d = *d + gi * xi;
                    }
                }
            }
            Op::Add { inputs } => {
                for &v in inputs {
                    if wants(v) {
                        let dv = slot(grads, v, g.len());
                        dv.iter_mut().zip(g).for_each(|(d, &gi)| *d = *d + gi);
                    }
                }
            }
            Op::StackColumns { inputs } => {
                let cols = inputs.len();
                for (n, &v) in inputs.iter().enumerate() {
                    if wants(v) {
                        let rows = self.value(v).len();
                        let dv = slot(grads, v, rows);
                        for (r, d) in dv.iter_mut().enumerate() {
                            *d = *d + g[r * cols + n];
                        }
                    }
                }
            }
            Op::Concat { inputs } => {
                let mut offset = 0;
                for &v in inputs {
                    let len = self.value(v).len();
                    if wants(v) {
                        let dv = slot(grads, v, len);
                        dv.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(d, &gi)| *d = *d + gi);
                    }
                    offset += len;
                }
            }
            Op::Affine { weights, input, bias } => {
                let w = self.value(*weights);
                let x = self.value(*input);
                let cols = x.len();
                if wants(*bias) {
                    let db = slot(grads, *bias, g.len());
                    db.iter_mut().zip(g).for_each(|(d, &gi)| *d = *d + gi);
                }
                if wants(*weights) {
                    let dw = slot(grads, *weights, w.len());
                    for (o, &gi) in g.iter().enumerate() {
                        for (d, &xi) in dw[o * cols..(o + 1) * cols].iter_mut().zip(x.data()) {
                            *d = *d + gi * xi;
                        }
                    }
                }
                if wants(*input) {
                    let dx = slot(grads, *input, cols);
                    for (o, &gi) in g.iter().enumerate() {
                        for (d, &wi) in dx.iter_mut().zip(&w.data()[o * cols..(o + 1) * cols]) {
                            *d = *d + gi * wi;
                        }
                    }
                }
            }
            Op::Softmax { input } => {
                let y = node.value.data();
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                let dx = slot(grads, *input, y.len());
                for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(g) {
                    *d = *d + yi * (gi - dot);
                }
            }
            Op::Nll { probs, label } => {
                let p = self.value(*probs).data()[*label];
                let len = self.value(*probs).len();
                let dp = slot(grads, *probs, len);
                dp[*label] = dp[*label] - g[0] / (p + T::of(NLL_EPS));
            }
            Op::Sum { input } => {
                let len = self.value(*input).len();
                let dx = slot(grads, *input, len);
                dx.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
    }
}

fn top_two_gap<T: Real>(values: impl Iterator<Item = T>) -> T {
    let mut first = T::neg_infinity();
    let mut second = T::neg_infinity();
    for v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second == T::neg_infinity() {
        T::infinity()
    } else {
        first - second
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `var`, shaped like its value. Variables with no path to the
    /// loss get exact zeros.
    pub fn wrt(&self, tape: &Tape<T>, var: Var) -> Tensor<T> {
        let shape = tape.value(var).shape().to_vec();
        match self.grads.get(var.0).and_then(Option::as_ref) {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }
}
