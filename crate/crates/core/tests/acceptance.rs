//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{oracle_forward, randomize_biases};
use qacnn::checkpoint;
use qacnn::cli::commands::ablate_prepared;
use qacnn::data::{generate_synthetic, SyntheticConfig, SyntheticCorpus};
use qacnn::gradcheck::{gradcheck, random_instance, GradCheckOptions};
use qacnn::training::{ensemble_accuracy, ensemble_predict, evaluate, fit, prepare, LabeledMaps, Split};
use qacnn::{Model, ModelConfig, TrainConfig, Variant};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gradients_match() -> Outcome {
    let started = Instant::now();
    let mut banks = 0;
    let mut worst: f64 = 0.0;
    for variant in Variant::ALL {
        let options = GradCheckOptions { variant, ..GradCheckOptions::default() };
        let report = gradcheck(&ModelConfig::tiny(), &options).map_err(|e| e.to_string())?;
        if !report.passed() {
            return Err(format!("{variant}: {} failed", report.failing().join(", ")));
        }
        banks += report.banks.len();
        worst = report.banks.iter().map(|b| b.max_relative_error).fold(worst, f64::max);
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("{banks} banks over 5 variants, worst relative error {worst:.2e}, {elapsed:.2?}"))
}

fn instance(variant: Variant, seed: u64) -> (Model<f64>, qacnn::EmbeddingTable, qacnn::EncodedExample) {
    let config = ModelConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (table, example) = random_instance(&config, 20, true, &mut rng).unwrap();
    let mut model = Model::<f64>::init(config, variant, seed ^ 0x5eed).unwrap();
    randomize_biases(&mut model, seed);
    (model, table, example)
}

fn oracle_agrees() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        for variant in Variant::ALL {
            let (model, table, example) = instance(variant, seed);
            let got = model.predict(&example, &table).map_err(|e| e.to_string())?;
            let want = oracle_forward(&model, &example, &table);
            let mut d = max_diff(got.probs.data(), &want.probs);
            for (tower, (words, sent)) in got.attention.iter().zip(want.word_attention.iter().zip(&want.sentence_attention)) {
                for (a, b) in tower.word.iter().zip(words) {
                    d = d.max(max_diff(a.data(), b));
                }
                if let (Some(a), Some(b)) = (&tower.sentence, sent) {
                    d = d.max(max_diff(a.data(), b));
                }
            }
            if d > 1e-10 {
                return Err(format!("{variant} seed {seed}: difference {d:.2e}"));
            }
            worst = worst.max(d);
        }
    }
    Ok(format!("100 seeds x 5 variants, max difference {worst:.2e}"))
}

fn invariants_hold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_sum: f64 = 0.0;
    let mut worst_perm: f64 = 0.0;
    for i in 0..1000u64 {
        let variant = Variant::ALL[i as usize % 5];
        let (model, table, example) = instance(variant, 10_000 + i);
        let p = model.predict(&example, &table).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((p.probs.sum() - 1.0).abs());
        for t in &p.attention {
            if let Some(v) = t.word.iter().chain(&t.sentence).flat_map(|a| a.data()).find(|v| !(**v > 0.0 && **v < 1.0)) {
                return Err(format!("input {i}: attention value {v} outside (0,1)"));
            }
        }
        let mut order: Vec<usize> = (0..example.choices.len()).collect();
        order.shuffle(&mut rng);
        let mut permuted = example.clone();
        permuted.choices = order.iter().map(|&m| example.choices[m].clone()).collect();
        let q = model.predict(&permuted, &table).map_err(|e| e.to_string())?;
        for (pos, &m) in order.iter().enumerate() {
            worst_perm = worst_perm.max((q.probs.data()[pos] - p.probs.data()[m]).abs());
        }
    }
    if worst_sum > 1e-6 || worst_perm > 1e-6 {
        return Err(format!("sum error {worst_sum:.2e}, permutation error {worst_perm:.2e}"));
    }
    Ok(format!("1000 inputs, sum error {worst_sum:.2e}, permutation error {worst_perm:.2e}"))
}

struct SyntheticSplit {
    train: Vec<LabeledMaps<f32>>,
    val: Vec<LabeledMaps<f32>>,
    held_out: SyntheticCorpus,
}

fn synthetic(seed: u64) -> SyntheticSplit {
    let config = ModelConfig::tiny_plus();
    let mut s = generate_synthetic(250, &SyntheticConfig::for_model(&config), seed).unwrap();
    let held_out = s.split_off(50, Split::Val);
    let table = &s.embeddings;
    SyntheticSplit {
        train: prepare(&s.corpus.encode(&config, table).unwrap(), table).unwrap(),
        val: prepare(&held_out.corpus.encode(&config, table).unwrap(), table).unwrap(),
        held_out,
    }
}

fn learns(data: &SyntheticSplit, model: &mut Option<Model<f32>>) -> Outcome {
    let started = Instant::now();
    let config = TrainConfig::default();
    let outcome = fit(&data.train, &data.val, &ModelConfig::tiny_plus(), Variant::Full, &config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let train = evaluate(&outcome.best, &data.train).map_err(|e| e.to_string())?.accuracy;
    let val = evaluate(&outcome.best, &data.val).map_err(|e| e.to_string())?.accuracy;
    *model = Some(outcome.best);
    let msg = format!(
        "train {train:.3}, held-out {val:.3}, best epoch {} of {}, {elapsed:.1?}",
        outcome.best_epoch, outcome.epochs_run
    );
    if train >= 0.95 && val >= 0.80 && outcome.epochs_run <= 50 && elapsed < Duration::from_secs(600) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ablation_ordering() -> Outcome {
    let mut sums = [0.0; 5];
    for seed in 0..5 {
        let data = synthetic(seed);
        let config = TrainConfig { seed, ..TrainConfig::default() };
        let rows = ablate_prepared(&ModelConfig::tiny_plus(), &config, &data.train, &data.val).map_err(|e| e.to_string())?;
        for (sum, row) in sums.iter_mut().zip(&rows) {
            *sum += row.val_accuracy / 5.0;
        }
    }
    let acc = |v: Variant| sums[Variant::ALL.iter().position(|&x| x == v).unwrap()];
    let (full, sent, word, none, one) = (
        acc(Variant::Full),
        acc(Variant::SentenceAttentionOnly),
        acc(Variant::WordAttentionOnly),
        acc(Variant::NoAttention),
        acc(Variant::OneStage),
    );
    let msg = format!(
        "full {full:.3}, sentence-only {sent:.3}, word-only {word:.3}, no-attention {none:.3}, one-stage {one:.3}; \
         gaps {:+.3} {:+.3} {:+.3} {:+.3}",
        full - sent,
        sent - word,
        word - none,
        full - one
    );
    if full >= sent && sent >= word && word >= none && full >= one {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn localizes(data: &SyntheticSplit, model: &Model<f32>) -> Outcome {
    let mut hits = 0;
    for (ex, &planted) in data.val.iter().zip(&data.held_out.planted) {
        let p = model.predict_maps(&ex.maps).map_err(|e| e.to_string())?;
        let tower = p.attention.iter().min_by_key(|t| t.width).unwrap();
        let peak = tower.sentence.as_ref().unwrap().argmax();
        if (peak..peak + tower.width).contains(&planted) {
            hits += 1;
        }
    }
    let rate = hits as f64 / data.val.len() as f64;
    let msg = format!("{hits}/{} held-out records ({rate:.2})", data.val.len());
    if rate >= 0.80 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn deterministic(data: &SyntheticSplit, model: &Model<f32>) -> Outcome {
    let small = &data.train[..60];
    let run = |threads| {
        let config = TrainConfig { epochs: 4, threads: Some(threads), seed: 3, ..TrainConfig::default() };
        fit(small, &data.val, &ModelConfig::tiny_plus(), Variant::Full, &config).map(|o| (o.log.to_lines(), o.best))
    };
    let (log_a, best_a) = run(1).map_err(|e| e.to_string())?;
    let (log_b, best_b) = run(2).map_err(|e| e.to_string())?;
    if log_a != log_b || best_a != best_b {
        return Err("two identical runs diverged".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    checkpoint::save(model, &path).map_err(|e| e.to_string())?;
    let loaded = checkpoint::load(&path).map_err(|e| e.to_string())?;
    for ex in &data.val {
        let a = model.predict_maps(&ex.maps).map_err(|e| e.to_string())?;
        let b = loaded.predict_maps(&ex.maps).map_err(|e| e.to_string())?;
        if a.probs.data().iter().zip(b.probs.data()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err("reloaded checkpoint changed a prediction".into());
        }
    }
    Ok(format!("logs bit-identical across thread counts ({} lines); checkpoint round trip bit-exact", log_a.lines().count()))
}

fn ensemble_helps(data: &SyntheticSplit) -> Outcome {
    let train = &data.train[..100];
    let mut members = Vec::new();
    let mut accs = Vec::new();
    for seed in 0..8 {
        let config = TrainConfig { epochs: 6, seed, ..TrainConfig::default() };
        let o = fit(train, &data.val, &ModelConfig::tiny_plus(), Variant::Full, &config).map_err(|e| e.to_string())?;
        accs.push(evaluate(&o.best, &data.val).map_err(|e| e.to_string())?.accuracy);
        members.push(o.best);
    }
    let ens = ensemble_accuracy(&members, &data.val).map_err(|e| e.to_string())?;
    let mut worst_mean: f64 = 0.0;
    for ex in &data.val {
        let got = ensemble_predict(&members, &ex.maps).map_err(|e| e.to_string())?;
        let mut mean = vec![0.0; got.len()];
        for m in &members {
            for (acc, &p) in mean.iter_mut().zip(m.predict_maps(&ex.maps).map_err(|e| e.to_string())?.probs.data()) {
                *acc += p as f64 / 8.0;
            }
        }
        worst_mean = worst_mean.max(max_diff(got.data(), &mean));
    }
    let worst = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = accs.iter().cloned().fold(0.0, f64::max);
    let msg = format!("ensemble {ens:.3}, members {worst:.3}..{best:.3}, mean error {worst_mean:.2e}");
    if ens >= worst && worst_mean <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{n}] {name}: {detail}");
    };
    report(1, "gradient check, tiny config, every bank", gradients_match());
    report(2, "forward pass matches loop oracle", oracle_agrees());
    report(3, "probability, range and permutation invariants", invariants_hold());
    let data = synthetic(0);
    let mut trained = None;
    report(4, "learns the synthetic corpus", learns(&data, &mut trained));
    report(5, "ablation ordering over 5 seeds", ablation_ordering());
    match &trained {
        Some(model) => {
            report(6, "sentence attention localizes the planted sentence", localizes(&data, model));
            report(7, "deterministic training and exact checkpoints", deterministic(&data, model));
        }
        None => {
            report(6, "sentence attention localizes the planted sentence", Err("no trained model".into()));
            report(7, "deterministic training and exact checkpoints", Err("no trained model".into()));
        }
    }
    report(8, "ensemble of 8 checkpoints", ensemble_helps(&data));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
