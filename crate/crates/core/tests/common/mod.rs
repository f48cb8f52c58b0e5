//! Loop-based reference implementation of the whole pipeline, written against
//! parameter names only, plus shared fixtures.
#![allow(dead_code)]

use std::collections::HashMap;

use qacnn::embeddings::EmbeddingTable;
use qacnn::model::Variant;
use qacnn::{EncodedExample, Model};

pub type Grid = Vec<Vec<f64>>;

pub struct Params {
    map: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Params {
    pub fn of(model: &Model<f64>) -> Self {
        Params {
            map: model
                .params
                .entries()
                .into_iter()
                .map(|(n, t)| (n, (t.shape().to_vec(), t.data().to_vec())))
                .collect(),
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &(Vec<usize>, Vec<f64>) {
        self.map.get(name).unwrap_or_else(|| panic!("missing bank {name}"))
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if nu.sqrt() < 1e-12 || nv.sqrt() < 1e-12 {
        0.0
    } else {
        dot / (nu.sqrt() * nv.sqrt())
    }
}

/// `rows[r][i] = cos(passage word i, rows token r)` for one sentence.
pub fn sim_grid(table: &EmbeddingTable, sentence: &[u32], rows: &[u32]) -> Grid {
    rows.iter()
        .map(|&r| {
            sentence
                .iter()
                .map(|&p| cosine(table.vector(p).unwrap(), table.vector(r).unwrap()))
                .collect()
        })
        .collect()
}

/// `out[t][i] = b[t] + Σ_c Σ_u k[t][c][u] · x[c][i + u]`
pub fn conv(x: &Grid, bank: &(Vec<usize>, Vec<f64>), bias: &(Vec<usize>, Vec<f64>)) -> Grid {
    let (l, ch, d) = (bank.0[0], bank.0[1], bank.0[2]);
    assert_eq!(ch, x.len());
    let len = x[0].len();
    let mut out = vec![vec![0.0; len - d + 1]; l];
    for t in 0..l {
        for i in 0..len - d + 1 {
            let mut s = bias.1[t];
            for c in 0..ch {
                for u in 0..d {
                    s += bank.1[(t * ch + c) * d + u] * x[c][i + u];
                }
            }
            out[t][i] = s;
        }
    }
    out
}

pub fn apply(g: &Grid, f: impl Fn(f64) -> f64) -> Grid {
    g.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Max over rows at each column.
pub fn column_max(g: &Grid) -> Vec<f64> {
    (0..g[0].len())
        .map(|i| g.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Max over columns of each row, after weighting column `i` by `w[i]`.
pub fn weighted_row_max(g: &Grid, w: Option<&[f64]>) -> Vec<f64> {
    g.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(i, &v)| v * w.map_or(1.0, |w| w[i]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn columns(cols: &[Vec<f64>]) -> Grid {
    (0..cols[0].len()).map(|t| cols.iter().map(|c| c[t]).collect()).collect()
}

pub struct OracleOutput {
    pub probs: Vec<f64>,
    /// Per width: word maps per sentence (or one flat map), sentence map.
    pub word_attention: Vec<Vec<Vec<f64>>>,
    pub sentence_attention: Vec<Option<Vec<f64>>>,
}

/// Reference forward pass straight from token ids and embeddings.
pub fn oracle_forward(model: &Model<f64>, example: &EncodedExample, table: &EmbeddingTable) -> OracleOutput {
    let p = Params::of(model);
    let c = &model.config;
    let v = model.variant;
    let m_count = c.choices;
    let l = c.kernels;
    let pq: Vec<Grid> = example.passage.iter().map(|s| sim_grid(table, s, &example.query)).collect();
    let pc: Vec<Vec<Grid>> = example
        .choices
        .iter()
        .map(|ch| example.passage.iter().map(|s| sim_grid(table, s, ch)).collect())
        .collect();

    let mut choice_sum = vec![vec![0.0; l]; m_count];
    let mut query_sum = vec![0.0; l];
    let mut word_attention = Vec::new();
    let mut sentence_attention = Vec::new();
    for &d in &c.widths {
        let name = |s: &str| format!("d{d}.{s}");
        let rep_k = p.get(&name("word_rep.kernels"));
        let rep_b = p.get(&name("word_rep.bias"));
        let query_k = if p.has(&name("word_rep.query_kernels")) {
            p.get(&name("word_rep.query_kernels"))
        } else {
            rep_k
        };
        if v == Variant::OneStage {
            let flat = |maps: &[Grid]| -> Grid {
                (0..maps[0].len())
                    .map(|r| maps.iter().flat_map(|g| g[r].clone()).collect())
                    .collect()
            };
            let a = column_max(&apply(
                &conv(&flat(&pq), p.get(&name("word_att.kernels")), p.get(&name("word_att.bias"))),
                sigmoid,
            ));
            for m in 0..m_count {
                let r = weighted_row_max(&apply(&conv(&flat(&pc[m]), rep_k, rep_b), relu), Some(&a));
                choice_sum[m].iter_mut().zip(&r).for_each(|(s, x)| *s += x);
            }
            word_attention.push(vec![a]);
            sentence_attention.push(None);
            continue;
        }
        let word_att = v == Variant::Full || v == Variant::WordAttentionOnly;
        let sent_att = v == Variant::Full || v == Variant::SentenceAttentionOnly;
        let query_path = sent_att || v == Variant::NoAttention;
        let mut maps_n = Vec::new();
        let mut q_cols = Vec::new();
        let mut c_cols = vec![Vec::new(); m_count];
        for n in 0..c.passage_sentences {
            let a = word_att.then(|| {
                column_max(&apply(
                    &conv(&pq[n], p.get(&name("word_att.kernels")), p.get(&name("word_att.bias"))),
                    sigmoid,
                ))
            });
            if query_path {
                q_cols.push(weighted_row_max(&apply(&conv(&pq[n], query_k, rep_b), relu), None));
            }
            for m in 0..m_count {
                c_cols[m].push(weighted_row_max(&apply(&conv(&pc[m][n], rep_k, rep_b), relu), a.as_deref()));
            }
            maps_n.extend(a);
        }
        let s_k = p.get(&name("sent_rep.kernels"));
        let s_b = p.get(&name("sent_rep.bias"));
        let a_hat = sent_att.then(|| {
            column_max(&apply(
                &conv(&columns(&q_cols), p.get(&name("sent_att.kernels")), p.get(&name("sent_att.bias"))),
                sigmoid,
            ))
        });
        for m in 0..m_count {
            let r = weighted_row_max(&apply(&conv(&columns(&c_cols[m]), s_k, s_b), relu), a_hat.as_deref());
            choice_sum[m].iter_mut().zip(&r).for_each(|(s, x)| *s += x);
        }
        if v == Variant::NoAttention {
            let r = weighted_row_max(&apply(&conv(&columns(&q_cols), s_k, s_b), relu), None);
            query_sum.iter_mut().zip(&r).for_each(|(s, x)| *s += x);
        }
        word_attention.push(maps_n);
        sentence_attention.push(a_hat);
    }

    let (wp_shape, wp) = p.get("head.hidden.weights");
    let bp = &p.get("head.hidden.bias").1;
    let wo = &p.get("head.output.weights").1;
    let bo = p.get("head.output.bias").1[0];
    let scores: Vec<f64> = choice_sum
        .iter()
        .map(|r| {
            let input: Vec<f64> = if v == Variant::NoAttention {
                query_sum.iter().chain(r).copied().collect()
            } else {
                r.clone()
            };
            assert_eq!(input.len(), wp_shape[1]);
            let mut s = bo;
            for t in 0..wp_shape[0] {
                let mut h = bp[t];
                for (x, inp) in input.iter().enumerate() {
                    h += wp[t * wp_shape[1] + x] * inp;
                }
                s += wo[t] * h.tanh();
            }
            s
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    OracleOutput {
        probs: exps.iter().map(|e| e / z).collect(),
        word_attention,
        sentence_attention,
    }
}

/// Random biases in ±0.5 so units are away from activation kinks.
pub fn randomize_biases(model: &mut Model<f64>, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in model.params.entries_mut() {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
}
