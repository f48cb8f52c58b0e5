//! The building blocks of both CNN stages and the prediction head.
//!
//! Each block exists twice: a `*_on` function that records onto a [`Tape`] (used
//! by the model) and a plain-tensor wrapper that runs the same code on a
//! throwaway tape.

use crate::error::{QacnnError, Result};
use crate::model::params::{Bank, HeadBanks};
use crate::ops::Activation;
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::training::dropout::Dropout;

/// `maxpool_over_channels(sigmoid(conv(map)))`: one weight in (0, 1) per position.
pub(crate) fn attention_on<T: Real>(tape: &mut Tape<T>, map: Var, bank: &Bank<Var>) -> Result<Var> {
    let pre = tape.conv(map, bank.kernels, bank.bias)?;
    let act = tape.activation(pre, Activation::Sigmoid);
    tape.max_over_channels(act)
}

/// `relu(conv(map))`, with dropout on the activations during training.
pub(crate) fn representation_on<T: Real>(
    tape: &mut Tape<T>,
    map: Var,
    kernels: Var,
    bias: Var,
    dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let pre = tape.conv(map, kernels, bias)?;
    let act = tape.activation(pre, Activation::Relu);
    match dropout {
        Some(d) if d.keep() < 1.0 => {
            let shape = tape.value(act).shape().to_vec();
            let mask = d.mask::<T>(&shape)?;
            tape.scale(act, mask.into_data())
        }
        _ => Ok(act),
    }
}

/// Weights every column of `features` by `attention` (if any), then takes the
/// maximum along each row.
pub(crate) fn attend_and_pool_on<T: Real>(tape: &mut Tape<T>, features: Var, attention: Option<Var>) -> Result<Var> {
    let weighted = match attention {
        Some(a) => tape.mul_rows(features, a)?,
        None => features,
    };
    tape.max_over_length(weighted)
}

/// Scalar score `wᵒ · tanh(Wᵖ r + bᵖ) + bᵒ` as a length-1 vector.
pub(crate) fn score_on<T: Real>(tape: &mut Tape<T>, features: Var, head: &HeadBanks<Var>) -> Result<Var> {
    let hidden = tape.affine(head.hidden_weights, features, head.hidden_bias)?;
    let hidden = tape.activation(hidden, Activation::Tanh);
    tape.affine(head.output_weights, hidden, head.output_bias)
}

fn bank_on<T: Real>(tape: &mut Tape<T>, bank: &Bank<Tensor<T>>) -> Bank<Var> {
    Bank {
        kernels: tape.constant(bank.kernels.clone()),
        bias: tape.constant(bank.bias.clone()),
    }
}

/// Word-level attention for one sentence slice `[J × I]` → `[I − d + 1]`.
pub fn stage1_attention<T: Real>(pq_sentence: &Tensor<T>, bank: &Bank<Tensor<T>>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let map = tape.constant(pq_sentence.clone());
    let b = bank_on(&mut tape, bank);
    let out = attention_on(&mut tape, map, &b)?;
    Ok(tape.value(out).clone())
}

/// Query-based and choice-based sentence features for one sentence.
///
/// The choice-side activations are weighted column-wise by `word_attention`
/// before length pooling. Returns `(query_features, choice_features)`, each `[l]`.
pub fn stage1_representation<T: Real>(
    pq_sentence: &Tensor<T>,
    pc_sentence: &Tensor<T>,
    word_attention: &Tensor<T>,
    query_kernels: &Tensor<T>,
    choice_kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    let pq = tape.constant(pq_sentence.clone());
    let pc = tape.constant(pc_sentence.clone());
    let a = tape.constant(word_attention.clone());
    let kq = tape.constant(query_kernels.clone());
    let kc = tape.constant(choice_kernels.clone());
    let b = tape.constant(bias.clone());
    let q = representation_on(&mut tape, pq, kq, b, None)?;
    let rq = tape.max_over_length(q)?;
    let c = representation_on(&mut tape, pc, kc, b, None)?;
    let rc = attend_and_pool_on(&mut tape, c, Some(a))?;
    Ok((tape.value(rq).clone(), tape.value(rc).clone()))
}

/// Sentence-level attention over query-based sentence features `[l × N]` → `[N − d + 1]`.
pub fn stage2_attention<T: Real>(query_features: &Tensor<T>, bank: &Bank<Tensor<T>>) -> Result<Tensor<T>> {
    stage1_attention(query_features, bank)
}

/// Passage representation for one choice: `max_x(relu(conv(features))[t][x] · attention[x])`.
pub fn stage2_representation<T: Real>(
    choice_features: &Tensor<T>,
    sentence_attention: &Tensor<T>,
    bank: &Bank<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let f = tape.constant(choice_features.clone());
    let a = tape.constant(sentence_attention.clone());
    let b = bank_on(&mut tape, bank);
    let c = representation_on(&mut tape, f, b.kernels, b.bias, None)?;
    let out = attend_and_pool_on(&mut tape, c, Some(a))?;
    Ok(tape.value(out).clone())
}

/// Elementwise sum of the per-width passage representations.
pub fn combine_widths<T: Real>(per_width: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = per_width
        .first()
        .ok_or_else(|| QacnnError::InvalidArgument("no per-width representations to combine".into()))?;
    let mut acc = first.data().to_vec();
    for r in &per_width[1..] {
        if r.shape() != first.shape() {
            return Err(QacnnError::shape(
                "combine_widths",
                format!("{:?} vs {:?}", first.shape(), r.shape()),
            ));
        }
        acc.iter_mut().zip(r.data()).for_each(|(a, &b)| *a = *a + b);
    }
    Tensor::new(first.shape().to_vec(), acc)
}

/// Applies the shared head to each row of `representations` `[M × l]` and
/// normalizes the scores with softmax.
pub fn predict_head<T: Real>(representations: &Tensor<T>, head: &HeadBanks<Tensor<T>>) -> Result<Tensor<T>> {
    if representations.rank() != 2 {
        return Err(QacnnError::shape(
            "predict_head",
            format!("expected [M × l], got {:?}", representations.shape()),
        ));
    }
    let mut tape = Tape::new();
    let h = head.map_ref(|t| tape.constant(t.clone()));
    let mut scores = Vec::new();
    for m in 0..representations.shape()[0] {
        let r = tape.constant(representations.slice_outer(m));
        scores.push(score_on(&mut tape, r, &h)?);
    }
    let s = tape.concat(&scores)?;
    let p = tape.softmax(s)?;
    Ok(tape.value(p).clone())
}

impl<S> HeadBanks<S> {
    pub(crate) fn map_ref<U>(&self, mut f: impl FnMut(&S) -> U) -> HeadBanks<U> {
        HeadBanks {
            hidden_weights: f(&self.hidden_weights),
            hidden_bias: f(&self.hidden_bias),
            output_weights: f(&self.output_weights),
            output_bias: f(&self.output_bias),
        }
    }
}
