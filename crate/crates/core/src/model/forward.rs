use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::layers::{attend_and_pool_on, attention_on, representation_on, score_on};
use crate::model::params::{ParamSet, WidthBanks};
use crate::model::{TowerAttention, Variant};
use crate::real::Real;
use crate::similarity::SimilarityMaps;
use crate::tape::{Tape, Var};
use crate::training::dropout::Dropout;

pub(crate) struct Graph {
    pub probs: Var,
    pub attention: Vec<TowerAttention<Var>>,
}

/// Per-tower result: one passage representation per choice, plus the query-side
/// representation for the concatenating variant.
struct TowerOutput {
    choices: Vec<Var>,
    query: Option<Var>,
    attention: TowerAttention<Var>,
}

pub(crate) fn build<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamSet<Var>,
    maps: &SimilarityMaps<T>,
    config: &ModelConfig,
    variant: Variant,
    mut dropout: Option<&mut Dropout>,
) -> Result<Graph> {
    let mut outputs = Vec::with_capacity(params.towers.len());
    for tower in &params.towers {
        let out = if variant.two_stage() {
            two_stage_tower(tape, tower, maps, variant, dropout.as_deref_mut())?
        } else {
            one_stage_tower(tape, tower, maps, dropout.as_deref_mut())?
        };
        outputs.push(out);
    }

    let query_sum = if variant.concatenates_query() {
        let parts: Vec<Var> = outputs.iter().filter_map(|o| o.query).collect();
        Some(tape.add(&parts)?)
    } else {
        None
    };

    let mut scores = Vec::with_capacity(config.choices);
    for m in 0..config.choices {
        let parts: Vec<Var> = outputs.iter().map(|o| o.choices[m]).collect();
        let mut features = tape.add(&parts)?;
        if let Some(q) = query_sum {
            features = tape.concat(&[q, features])?;
        }
        scores.push(score_on(tape, features, &params.head)?);
    }
    let scores = tape.concat(&scores)?;
    let probs = tape.softmax(scores)?;
    Ok(Graph {
        probs,
        attention: outputs.into_iter().map(|o| o.attention).collect(),
    })
}

fn two_stage_tower<T: Real>(
    tape: &mut Tape<T>,
    tower: &WidthBanks<Var>,
    maps: &SimilarityMaps<T>,
    variant: Variant,
    mut dropout: Option<&mut Dropout>,
) -> Result<TowerOutput> {
    let sentences = maps.sentences();
    let choices = maps.choices();
    let bias = tower.word_rep.bias;

    let mut word_maps = Vec::new();
    let mut query_feats = Vec::with_capacity(sentences);
    let mut choice_feats: Vec<Vec<Var>> = vec![Vec::with_capacity(sentences); choices];
    for n in 0..sentences {
        let pq = tape.constant(maps.pq_sentence(n));
        let att = match &tower.word_att {
            Some(bank) => Some(attention_on(tape, pq, bank)?),
            None => None,
        };
        word_maps.extend(att);
        if variant.query_path() {
            let q = representation_on(tape, pq, *tower.query_kernels(), bias, dropout.as_deref_mut())?;
            query_feats.push(tape.max_over_length(q)?);
        }
        for (m, feats) in choice_feats.iter_mut().enumerate() {
            let pc = tape.constant(maps.pc_sentence(m, n));
            let c = representation_on(tape, pc, tower.word_rep.kernels, bias, dropout.as_deref_mut())?;
            feats.push(attend_and_pool_on(tape, c, att)?);
        }
    }

    let sent_rep = tower
        .sent_rep
        .as_ref()
        .expect("two-stage tower has a sentence representation bank");
    let query_matrix = if variant.query_path() {
        Some(tape.stack_columns(&query_feats)?)
    } else {
        None
    };
    let sentence_map = match (&tower.sent_att, query_matrix) {
        (Some(bank), Some(q)) => Some(attention_on(tape, q, bank)?),
        _ => None,
    };

    let mut passage_reps = Vec::with_capacity(choices);
    for feats in &choice_feats {
        let matrix = tape.stack_columns(feats)?;
        let c = representation_on(tape, matrix, sent_rep.kernels, sent_rep.bias, dropout.as_deref_mut())?;
        passage_reps.push(attend_and_pool_on(tape, c, sentence_map)?);
    }

    let query = match query_matrix {
        Some(q) if variant.concatenates_query() => {
            let r = representation_on(tape, q, sent_rep.kernels, sent_rep.bias, dropout.as_deref_mut())?;
            Some(tape.max_over_length(r)?)
        }
        _ => None,
    };

    Ok(TowerOutput {
        choices: passage_reps,
        query,
        attention: TowerAttention {
            width: tower.width,
            word: word_maps,
            sentence: sentence_map,
        },
    })
}

fn one_stage_tower<T: Real>(
    tape: &mut Tape<T>,
    tower: &WidthBanks<Var>,
    maps: &SimilarityMaps<T>,
    mut dropout: Option<&mut Dropout>,
) -> Result<TowerOutput> {
    let pq = tape.constant(maps.flat_pq());
    let att = match &tower.word_att {
        Some(bank) => Some(attention_on(tape, pq, bank)?),
        None => None,
    };
    let mut reps = Vec::with_capacity(maps.choices());
    for m in 0..maps.choices() {
        let pc = tape.constant(maps.flat_pc(m));
        let c = representation_on(
            tape,
            pc,
            tower.word_rep.kernels,
            tower.word_rep.bias,
            dropout.as_deref_mut(),
        )?;
        reps.push(attend_and_pool_on(tape, c, att)?);
    }
    Ok(TowerOutput {
        choices: reps,
        query: None,
        attention: TowerAttention {
            width: tower.width,
            word: att.into_iter().collect(),
            sentence: None,
        },
    })
}
