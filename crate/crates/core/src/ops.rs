//! Forward kernels shared by the tape and the plain-tensor API.
//!
//! All convolutions here are cross-correlations over the trailing axis with the
//! kernel spanning every input channel: `input` is `[channels × length]`,
//! `kernels` is `[count × channels × width]`, output is `[count × (length − width + 1)]`.

use crate::error::{QacnnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub(crate) fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            // relu'(0) = 0
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn expect_rank<T: Real>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(QacnnError::shape(
            op,
            format!("expected rank {rank}, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

pub(crate) fn check_conv_shapes<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    expect_rank("conv_channels_last", input, 2)?;
    expect_rank("conv_channels_last", kernels, 3)?;
    let (channels, length) = (input.shape()[0], input.shape()[1]);
    let (count, kernel_channels, width) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kernel_channels != channels {
        return Err(QacnnError::shape(
            "conv_channels_last",
            format!(
                "input {:?} has {channels} channels but kernels {:?} expect {kernel_channels}",
                input.shape(),
                kernels.shape()
            ),
        ));
    }
    if bias.shape() != [count] {
        return Err(QacnnError::shape(
            "conv_channels_last",
            format!("bias {:?} does not match kernels {:?}", bias.shape(), kernels.shape()),
        ));
    }
    if length < width {
        return Err(QacnnError::shape(
            "conv_channels_last",
            format!(
                "input length {length} (shape {:?}) is shorter than kernel width {width} (shape {:?})",
                input.shape(),
                kernels.shape()
            ),
        ));
    }
    Ok((channels, length, count, width))
}

/// Full-height, stride-1, unpadded 1-D convolution.
///
/// `out[t][x] = bias[t] + Σ_c Σ_u kernels[t][c][u] · input[c][x + u]`
pub fn conv_channels_last<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (channels, length, count, width) = check_conv_shapes(input, kernels, bias)?;
    let out_len = length - width + 1;
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![T::zero(); count * out_len];
    for t in 0..count {
        let row = &mut out[t * out_len..(t + 1) * out_len];
        row.iter_mut().for_each(|v| *v = bias.data()[t]);
        for c in 0..channels {
            let in_row = &x[c * length..(c + 1) * length];
            let taps = &k[(t * channels + c) * width..(t * channels + c + 1) * width];
            for (u, &w) in taps.iter().enumerate() {
                if w == T::zero() {
                    continue;
                }
                for (o, &v) in row.iter_mut().zip(&in_row[u..u + out_len]) {
                    *o = *o + w * v;
                }
            }
        }
    }
    Tensor::new(vec![count, out_len], out)
}

/// Max across the leading (kernel) axis at each position, with the winning row
/// per position. Ties go to the lowest row.
pub(crate) fn max_over_channels_indexed<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    expect_rank("maxpool_over_channels", input, 2)?;
    let (rows, cols) = (input.shape()[0], input.shape()[1]);
    let d = input.data();
    let mut best = d[..cols].to_vec();
    let mut arg = vec![0usize; cols];
    for r in 1..rows {
        for (x, &v) in d[r * cols..(r + 1) * cols].iter().enumerate() {
            if v > best[x] {
                best[x] = v;
                arg[x] = r;
            }
        }
    }
    Ok((Tensor::new(vec![cols], best)?, arg))
}

/// Max along the trailing (length) axis of each row, with the winning column per
/// row. Ties go to the lowest column.
pub(crate) fn max_over_length_indexed<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    expect_rank("maxpool_over_length", input, 2)?;
    let (rows, cols) = (input.shape()[0], input.shape()[1]);
    let mut best = Vec::with_capacity(rows);
    let mut arg = Vec::with_capacity(rows);
    for row in input.data().chunks(cols) {
        let mut j = 0;
        for (x, &v) in row.iter().enumerate() {
            if v > row[j] {
                j = x;
            }
        }
        best.push(row[j]);
        arg.push(j);
    }
    Ok((Tensor::new(vec![rows], best)?, arg))
}

/// `out[x] = max_t input[t][x]`
pub fn maxpool_over_channels<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    max_over_channels_indexed(input).map(|(t, _)| t)
}

/// `out[t] = max_x input[t][x]`
pub fn maxpool_over_length<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    max_over_length_indexed(input).map(|(t, _)| t)
}

pub fn activation<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|v| kind.apply(v))
}

/// Max-shifted softmax over a 1-D tensor.
pub fn softmax<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    expect_rank("softmax", input, 1)?;
    let max = input.data().iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = input.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::new(input.shape().to_vec(), exps.into_iter().map(|e| e / total).collect())
}
