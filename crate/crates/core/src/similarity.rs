//! Word-by-word cosine similarity maps between the passage and the query or
//! each answer choice.

use crate::embeddings::{EmbeddingTable, EncodedExample, TokenId};
use crate::error::{QacnnError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Norms below this are treated as zero (PAD), giving similarity 0.
pub const ZERO_NORM: f64 = 1e-12;

/// `u·v / (‖u‖‖v‖)`, or 0 when either vector has (near-)zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(QacnnError::shape(
            "cosine",
            format!("vector lengths {} and {} differ", u.len(), v.len()),
        ));
    }
    let nu: f64 = u.iter().map(|x| x * x).sum();
    let nv: f64 = v.iter().map(|x| x * x).sum();
    Ok(cosine_with_norms(u, v, nu, nv))
}

fn cosine_with_norms(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    if nu.sqrt() < ZERO_NORM || nv.sqrt() < ZERO_NORM {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0)
}

/// Passage–query and passage–choice similarity maps for one question.
///
/// Axis order puts the query (or choice) word first and the passage word last,
/// so each sentence slice is `[J × I]` (or `[K × I]`).
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMaps<T> {
    /// `[N × J × I]`
    pub pq: Tensor<T>,
    /// One `[N × K × I]` map per choice.
    pub pc: Vec<Tensor<T>>,
}

impl<T: Real> SimilarityMaps<T> {
    pub fn sentences(&self) -> usize {
        self.pq.shape()[0]
    }

    pub fn choices(&self) -> usize {
        self.pc.len()
    }

    /// `[J × I]` slice for sentence `n`.
    pub fn pq_sentence(&self, n: usize) -> Tensor<T> {
        self.pq.slice_outer(n)
    }

    /// `[K × I]` slice for choice `m`, sentence `n`.
    pub fn pc_sentence(&self, m: usize, n: usize) -> Tensor<T> {
        self.pc[m].slice_outer(n)
    }

    /// The passage–query map with every sentence laid end to end: `[J × N·I]`.
    pub fn flat_pq(&self) -> Tensor<T> {
        flatten_sentences(&self.pq)
    }

    /// `[K × N·I]` for choice `m`.
    pub fn flat_pc(&self, m: usize) -> Tensor<T> {
        flatten_sentences(&self.pc[m])
    }

    pub fn cast<U: Real>(&self) -> SimilarityMaps<U> {
        SimilarityMaps {
            pq: self.pq.cast(),
            pc: self.pc.iter().map(Tensor::cast).collect(),
        }
    }
}

fn flatten_sentences<T: Real>(map: &Tensor<T>) -> Tensor<T> {
    let (n, rows, cols) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let mut out = vec![T::zero(); rows * n * cols];
    for s in 0..n {
        for r in 0..rows {
            let src = &map.data()[(s * rows + r) * cols..(s * rows + r + 1) * cols];
            out[r * n * cols + s * cols..r * n * cols + (s + 1) * cols].copy_from_slice(src);
        }
    }
    Tensor::new(vec![rows, n * cols], out).expect("flattened shape")
}

fn lookup<'a>(table: &'a EmbeddingTable, id: TokenId) -> Result<&'a [f64]> {
    table.vector(id).ok_or_else(|| {
        QacnnError::InvalidArgument(format!(
            "token id {id} is outside the embedding table ({} rows)",
            table.len()
        ))
    })
}

fn grid_map<T: Real>(
    passage: &[Vec<TokenId>],
    other: &[TokenId],
    table: &EmbeddingTable,
) -> Result<Tensor<T>> {
    let n = passage.len();
    let i_len = passage.first().map_or(0, Vec::len);
    let rows = other.len();
    let other_vecs = other
        .iter()
        .map(|&id| lookup(table, id).map(|v| (v, v.iter().map(|x| x * x).sum::<f64>())))
        .collect::<Result<Vec<_>>>()?;
    let mut data = vec![T::zero(); n * rows * i_len];
    for (s, sentence) in passage.iter().enumerate() {
        for (i, &pid) in sentence.iter().enumerate() {
            let p = lookup(table, pid)?;
            let np: f64 = p.iter().map(|x| x * x).sum();
            for (r, &(o, no)) in other_vecs.iter().enumerate() {
                data[(s * rows + r) * i_len + i] = T::of(cosine_with_norms(p, o, np, no));
            }
        }
    }
    Tensor::new(vec![n, rows, i_len], data)
}

/// Builds `pq[n][j][i] = cos(passage[n][i], query[j])` and, for each choice m,
/// `pc[m][n][k][i] = cos(passage[n][i], choice_m[k])`.
pub fn build_maps<T: Real>(example: &EncodedExample, table: &EmbeddingTable) -> Result<SimilarityMaps<T>> {
    if example.passage.is_empty() || example.query.is_empty() || example.choices.is_empty() {
        return Err(QacnnError::InvalidArgument("example has an empty passage, query or choice list".into()));
    }
    let pq = grid_map(&example.passage, &example.query, table)?;
    let pc = example
        .choices
        .iter()
        .map(|c| grid_map(&example.passage, c, table))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityMaps { pq, pc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::PAD;

    #[test]
    fn cosine_reference_values() {
        assert!((cosine(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn toy() -> (EmbeddingTable, EncodedExample) {
        let table = EmbeddingTable::from_entries(
            2,
            [
                ("a".to_string(), vec![1.0, 0.0]),
                ("b".to_string(), vec![0.0, 2.0]),
                ("c".to_string(), vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        let (a, b, c) = (table.id("a"), table.id("b"), table.id("c"));
        let ex = EncodedExample {
            passage: vec![vec![a, b, c], vec![PAD, PAD, PAD]],
            query: vec![c, a],
            choices: vec![vec![b, PAD], vec![a, c]],
            label: Some(1),
        };
        (table, ex)
    }

    #[test]
    fn identical_words_score_one_and_pad_scores_zero() {
        let (table, ex) = toy();
        let maps = build_maps::<f64>(&ex, &table).unwrap();
        assert_eq!(maps.pq.shape(), &[2, 2, 3]);
        assert!((maps.pq.at(&[0, 1, 0]) - 1.0).abs() < 1e-15);
        assert!((maps.pq.at(&[0, 0, 2]) - 1.0).abs() < 1e-15);
        assert!(maps.pq.slice_outer(1).data().iter().all(|&v| v == 0.0));
        assert!(maps.pc[0].slice_outer(0).slice_outer(1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let (table, mut ex) = toy();
        ex.query[0] = 99;
        assert!(build_maps::<f64>(&ex, &table).is_err());
    }

    #[test]
    fn flattening_lays_sentences_end_to_end() {
        let (table, ex) = toy();
        let maps = build_maps::<f64>(&ex, &table).unwrap();
        let flat = maps.flat_pq();
        assert_eq!(flat.shape(), &[2, 6]);
        for n in 0..2 {
            for j in 0..2 {
                for i in 0..3 {
                    assert_eq!(flat.at(&[j, n * 3 + i]), maps.pq.at(&[n, j, i]));
                }
            }
        }
    }
}
