//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::ModelConfig;
use crate::embeddings::{EmbeddingTable, EncodedExample, TokenId};
use crate::error::{QacnnError, Result};
use crate::model::{Model, QacnnParams, Variant};
use crate::similarity::{build_maps, SimilarityMaps};

/// Largest model (in scalar parameters) a gradient check will accept.
pub const MAX_PARAMS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub variant: Variant,
    pub seed: u64,
    /// Central-difference step.
    pub epsilon: f64,
    /// Largest acceptable relative error per bank.
    pub tolerance: f64,
    /// Resample the instance while any ReLU input or max-pool gap is below this.
    pub min_kink_margin: f64,
    pub max_attempts: usize,
    /// Checking with dropout active is refused.
    pub dropout: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            variant: Variant::Full,
            seed: 0,
            epsilon: 1e-4,
            tolerance: 1e-4,
            min_kink_margin: 1e-3,
            max_attempts: 200,
            dropout: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BankCheck {
    pub name: String,
    pub size: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub tolerance: f64,
    pub kink_margin: f64,
    pub attempts: usize,
    pub banks: Vec<BankCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.banks.iter().all(|b| b.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.banks
            .iter()
            .filter(|b| !b.passed)
            .map(|b| b.name.as_str())
            .collect()
    }
}

/// `|a − n| / max(|a|, |n|, 1e−7)`; the floor keeps near-zero gradients from
/// inflating the ratio with round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Random embedding table with `vocab` Gaussian words and a random question on
/// `config`'s grid. With `allow_pad` false every slot holds a real word.
pub fn random_instance(
    config: &ModelConfig,
    vocab: usize,
    allow_pad: bool,
    rng: &mut impl Rng,
) -> Result<(EmbeddingTable, EncodedExample)> {
    let dim = config.embedding_dim;
    let table = EmbeddingTable::from_entries(
        dim,
        (0..vocab).map(|i| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            (format!("w{i}"), v)
        }),
    )?;
    let word = |rng: &mut dyn rand::RngCore| -> TokenId {
        if allow_pad && rng.random_bool(0.15) {
            crate::embeddings::PAD
        } else {
            2 + rng.random_range(0..vocab as TokenId)
        }
    };
    let row = |len: usize, rng: &mut dyn rand::RngCore| (0..len).map(|_| word(rng)).collect::<Vec<_>>();
    let example = EncodedExample {
        passage: (0..config.passage_sentences)
            .map(|_| row(config.sentence_words, rng))
            .collect(),
        query: row(config.query_words, rng),
        choices: (0..config.choices).map(|_| row(config.choice_words, rng)).collect(),
        label: Some(rng.random_range(0..config.choices)),
    };
    Ok((table, example))
}

/// Model with Glorot kernels and biases drawn from ±0.5, so no unit sits
/// exactly on a ReLU kink.
pub fn random_model(config: &ModelConfig, variant: Variant, rng: &mut impl Rng) -> Result<Model<f64>> {
    let mut model = Model::<f64>::init(config.clone(), variant, rng.random())?;
    for (name, t) in model.params.entries_mut() {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    Ok(model)
}

/// Compares `analytic` against central differences of the loss, bank by bank.
pub fn compare_gradients(
    model: &Model<f64>,
    maps: &SimilarityMaps<f64>,
    label: usize,
    analytic: &QacnnParams<f64>,
    epsilon: f64,
    tolerance: f64,
) -> Result<Vec<BankCheck>> {
    let mut probe = model.clone();
    let mut out = Vec::new();
    let names: Vec<String> = model.params.entries().into_iter().map(|(n, _)| n).collect();
    for (bank, name) in names.iter().enumerate() {
        let grad = analytic.slots()[bank].data().to_vec();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (i, &a) in grad.iter().enumerate() {
            let original = model.params.slots()[bank].data()[i];
            probe.params.slots_mut()[bank].data_mut()[i] = original + epsilon;
            let (plus, _) = probe.loss_with_margin(maps, label)?;
            probe.params.slots_mut()[bank].data_mut()[i] = original - epsilon;
            let (minus, _) = probe.loss_with_margin(maps, label)?;
            probe.params.slots_mut()[bank].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        out.push(BankCheck {
            name: name.clone(),
            size: grad.len(),
            max_relative_error: max_rel,
            max_absolute_error: max_abs,
            passed: max_rel <= tolerance,
        });
    }
    Ok(out)
}

/// A random model and question whose kink margin is at least `min_margin`.
pub struct CheckInstance {
    pub model: Model<f64>,
    pub maps: SimilarityMaps<f64>,
    pub label: usize,
    pub kink_margin: f64,
    pub attempts: usize,
}

pub fn sample_instance(config: &ModelConfig, options: &GradCheckOptions) -> Result<CheckInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<CheckInstance> = None;
    for attempt in 1..=options.max_attempts {
        let (table, example) = random_instance(config, 24, false, &mut rng)?;
        let model = random_model(config, options.variant, &mut rng)?;
        let maps = build_maps(&example, &table)?;
        let label = example.label.expect("random instances are labeled");
        let (_, margin) = model.loss_with_margin(&maps, label)?;
        let candidate = CheckInstance {
            model,
            maps,
            label,
            kink_margin: margin,
            attempts: attempt,
        };
        if margin >= options.min_kink_margin {
            return Ok(candidate);
        }
        if best.as_ref().is_none_or(|b| margin > b.kink_margin) {
            best = Some(candidate);
        }
    }
    let best = best.expect("at least one attempt");
    Err(QacnnError::Numeric(format!(
        "no instance with kink margin >= {} in {} attempts (best {:.3e})",
        options.min_kink_margin, options.max_attempts, best.kink_margin
    )))
}

/// Checks every parameter bank of a randomly drawn `config` model against
/// central finite differences in `f64`.
pub fn gradcheck(config: &ModelConfig, options: &GradCheckOptions) -> Result<GradCheckReport> {
    gradcheck_with(config, options, |_| {})
}

/// Like [`gradcheck`], letting the caller alter the analytic gradient before the
/// comparison (used to confirm that a broken backward pass is caught).
pub fn gradcheck_with(
    config: &ModelConfig,
    options: &GradCheckOptions,
    tamper: impl FnOnce(&mut QacnnParams<f64>),
) -> Result<GradCheckReport> {
    config.validate()?;
    if options.dropout {
        return Err(QacnnError::InvalidArgument(
            "gradient check requires dropout to be disabled (masks make the loss nondeterministic)".into(),
        ));
    }
    let size = crate::model::layout(config, options.variant)
        .slots()
        .iter()
        .map(|s| s.iter().product::<usize>())
        .sum::<usize>();
    if size > MAX_PARAMS {
        return Err(QacnnError::InvalidArgument(format!(
            "model has {size} parameters; gradient checks are limited to {MAX_PARAMS}. \
             Use a smaller config (e.g. fewer kernels, shorter grids)"
        )));
    }
    let inst = sample_instance(config, options)?;
    let mut grads = inst.model.gradient(&inst.maps, inst.label, None)?.grads;
    tamper(&mut grads);
    let banks = compare_gradients(&inst.model, &inst.maps, inst.label, &grads, options.epsilon, options.tolerance)?;
    Ok(GradCheckReport {
        variant: options.variant,
        tolerance: options.tolerance,
        kink_margin: inst.kink_margin,
        attempts: inst.attempts,
        banks,
    })
}
