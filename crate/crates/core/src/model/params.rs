//! Trainable parameter layout.
//!
//! [`ParamSet`] is generic over what sits in each slot: tensors for stored
//! weights, [`Var`](crate::tape::Var) handles while a forward pass is being
//! recorded, or plain shapes when describing a layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{QacnnError, Result};
use crate::model::Variant;
use crate::real::Real;
use crate::tensor::Tensor;

/// Kernels plus per-kernel bias of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Bank<S> {
    pub kernels: S,
    pub bias: S,
}

/// Every convolution bank of the tower for one kernel width.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthBanks<S> {
    pub width: usize,
    /// Word-level attention over the passage–query map.
    pub word_att: Option<Bank<S>>,
    /// Word-level representation; `kernels` read the passage–choice maps.
    pub word_rep: Bank<S>,
    /// Separate kernels for the passage–query map when the first-stage banks
    /// are untied. When `None`, `word_rep.kernels` is shared.
    pub word_rep_query: Option<S>,
    /// Sentence-level attention over the query-based sentence features.
    pub sent_att: Option<Bank<S>>,
    /// Sentence-level representation.
    pub sent_rep: Option<Bank<S>>,
}

/// Prediction head shared by all choices.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadBanks<S> {
    pub hidden_weights: S,
    pub hidden_bias: S,
    pub output_weights: S,
    pub output_bias: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S> {
    pub towers: Vec<WidthBanks<S>>,
    pub head: HeadBanks<S>,
}

/// Stored model weights.
pub type QacnnParams<T> = ParamSet<Tensor<T>>;

impl<S> WidthBanks<S> {
    /// Kernels applied to the passage–query map in the first representation stage.
    pub fn query_kernels(&self) -> &S {
        self.word_rep_query.as_ref().unwrap_or(&self.word_rep.kernels)
    }
}

impl<S> ParamSet<S> {
    /// Maps every slot, passing its stable name (e.g. `d3.word_att.kernels`).
    pub fn try_map_named<U, E>(&self, mut f: impl FnMut(&str, &S) -> Result<U, E>) -> Result<ParamSet<U>, E> {
        let mut towers = Vec::with_capacity(self.towers.len());
        for t in &self.towers {
            let p = format!("d{}", t.width);
            let mut bank = |name: &str, b: &Bank<S>| -> Result<Bank<U>, E> {
                Ok(Bank {
                    kernels: f(&format!("{p}.{name}.kernels"), &b.kernels)?,
                    bias: f(&format!("{p}.{name}.bias"), &b.bias)?,
                })
            };
            let word_att = t.word_att.as_ref().map(|b| bank("word_att", b)).transpose()?;
            let word_rep = bank("word_rep", &t.word_rep)?;
            let sent_att = t.sent_att.as_ref().map(|b| bank("sent_att", b)).transpose()?;
            let sent_rep = t.sent_rep.as_ref().map(|b| bank("sent_rep", b)).transpose()?;
            let word_rep_query = t
                .word_rep_query
                .as_ref()
                .map(|k| f(&format!("{p}.word_rep.query_kernels"), k))
                .transpose()?;
            towers.push(WidthBanks {
                width: t.width,
                word_att,
                word_rep,
                word_rep_query,
                sent_att,
                sent_rep,
            });
        }
        let h = &self.head;
        let head = HeadBanks {
            hidden_weights: f("head.hidden.weights", &h.hidden_weights)?,
            hidden_bias: f("head.hidden.bias", &h.hidden_bias)?,
            output_weights: f("head.output.weights", &h.output_weights)?,
            output_bias: f("head.output.bias", &h.output_bias)?,
        };
        Ok(ParamSet { towers, head })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&S) -> U) -> ParamSet<U> {
        self.try_map_named::<U, std::convert::Infallible>(|_, s| Ok(f(s)))
            .unwrap_or_else(|e| match e {})
    }

    /// Slots in canonical order with their names.
    pub fn entries(&self) -> Vec<(String, &S)> {
        let mut names = Vec::new();
        self.map_names(|n| names.push(n.to_string()));
        names.into_iter().zip(self.slots()).collect()
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut S)> {
        let mut names = Vec::new();
        self.map_names(|n| names.push(n.to_string()));
        names.into_iter().zip(self.slots_mut()).collect()
    }

    fn map_names(&self, mut f: impl FnMut(&str)) {
        let _ = self.try_map_named::<(), std::convert::Infallible>(|n, _| {
            f(n);
            Ok(())
        });
    }

    /// Slots in canonical order.
    pub fn slots(&self) -> Vec<&S> {
        let mut out = Vec::new();
        for t in &self.towers {
            if let Some(b) = &t.word_att {
                out.extend([&b.kernels, &b.bias]);
            }
            out.extend([&t.word_rep.kernels, &t.word_rep.bias]);
            if let Some(b) = &t.sent_att {
                out.extend([&b.kernels, &b.bias]);
            }
            if let Some(b) = &t.sent_rep {
                out.extend([&b.kernels, &b.bias]);
            }
            if let Some(k) = &t.word_rep_query {
                out.push(k);
            }
        }
        let h = &self.head;
        out.extend([&h.hidden_weights, &h.hidden_bias, &h.output_weights, &h.output_bias]);
        out
    }

    /// Mutable slots in canonical order.
    pub fn slots_mut(&mut self) -> Vec<&mut S> {
        let mut out = Vec::new();
        for t in &mut self.towers {
            if let Some(b) = &mut t.word_att {
                out.extend([&mut b.kernels, &mut b.bias]);
            }
            out.extend([&mut t.word_rep.kernels, &mut t.word_rep.bias]);
            if let Some(b) = &mut t.sent_att {
                out.extend([&mut b.kernels, &mut b.bias]);
            }
            if let Some(b) = &mut t.sent_rep {
                out.extend([&mut b.kernels, &mut b.bias]);
            }
            if let Some(k) = &mut t.word_rep_query {
                out.push(k);
            }
        }
        let h = &mut self.head;
        out.extend([
            &mut h.hidden_weights,
            &mut h.hidden_bias,
            &mut h.output_weights,
            &mut h.output_bias,
        ]);
        out
    }
}

/// Shapes of every bank a `variant` model needs under `config`.
pub fn layout(config: &ModelConfig, variant: Variant) -> ParamSet<Vec<usize>> {
    let l = config.kernels;
    let (j, k) = (config.query_words, config.choice_words);
    let bank = |channels: usize, d: usize| Bank {
        kernels: vec![l, channels, d],
        bias: vec![l],
    };
    let towers = config
        .widths
        .iter()
        .map(|&d| WidthBanks {
            width: d,
            word_att: variant.word_attention().then(|| bank(j, d)),
            word_rep: bank(k, d),
            word_rep_query: (variant.query_path() && !config.ties_stage1_kernels()).then(|| vec![l, j, d]),
            sent_att: variant.sentence_attention().then(|| bank(l, d)),
            sent_rep: variant.two_stage().then(|| bank(l, d)),
        })
        .collect();
    let head_in = if variant.concatenates_query() { 2 * l } else { l };
    ParamSet {
        towers,
        head: HeadBanks {
            hidden_weights: vec![l, head_in],
            hidden_bias: vec![l],
            output_weights: vec![l],
            output_bias: vec![1],
        },
    }
}

/// Fan-in and fan-out used by the uniform initializer.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [count, channels, width] => (channels * width, count * width),
        [rows, cols] => (*cols, *rows),
        [n] => (*n, 1),
        _ => (1, 1),
    }
}

impl<T: Real> QacnnParams<T> {
    /// Kernels uniform in `±√(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(config: &ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(layout(config, variant).try_map_named::<_, QacnnError>(|name, shape| {
            if name.ends_with("bias") {
                return Ok(Tensor::zeros(shape));
            }
            let (fan_in, fan_out) = fans(shape);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let len = shape.iter().product();
            let data = (0..len).map(|_| T::of(rng.random_range(-limit..limit))).collect();
            Tensor::new(shape.clone(), data)
        })?)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.slots().iter().map(|t| t.len()).sum()
    }

    /// Checks that every slot has the shape `layout` prescribes.
    pub fn check_layout(&self, config: &ModelConfig, variant: Variant) -> Result<()> {
        let expected = layout(config, variant);
        let ours = self.entries();
        let theirs = expected.entries();
        if ours.len() != theirs.len() {
            return Err(QacnnError::shape(
                "params",
                format!("{} banks present, {} expected", ours.len(), theirs.len()),
            ));
        }
        for ((name, t), (ename, shape)) in ours.iter().zip(&theirs) {
            if name != ename || t.shape() != shape.as_slice() {
                return Err(QacnnError::shape(
                    "params",
                    format!("bank {name} {:?} does not match expected {ename} {:?}", t.shape(), shape),
                ));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> QacnnParams<U> {
        self.map(Tensor::cast)
    }

    pub fn all_finite(&self) -> bool {
        self.slots().iter().all(|t| t.all_finite())
    }
}
