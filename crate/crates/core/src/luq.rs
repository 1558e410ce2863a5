//! Sentence-level consistency estimators: LUQ, LUQ-Pair, LUQ-Atomic and the
//! SelfCheckNLI confidence baseline.
//!
//! For a response set R' = {main} ∪ samples, each response r_i is cut into
//! units (sentences or atomic claims). A unit's support from a reference r'
//! is the two-class entailment probability; S(r_i, r') averages it over the
//! units of r_i, C(r_i) averages S over the other responses, and
//! U = 1 - mean_i C(r_i).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Method, Response, ResponseSet, UncertaintyScore};
use crate::entailment::{contradict_probability, entail_probability, EntailmentGateway, NliPair};
use crate::estimation::{EstimationError, Pool};
use crate::text::{Decomposer, Granularity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LuqVariant {
    Luq,
    LuqPair,
    LuqAtomic,
}

impl LuqVariant {
    pub fn granularity(self) -> Granularity {
        match self {
            LuqVariant::LuqAtomic => Granularity::Atomic,
            _ => Granularity::Sentence,
        }
    }

    /// Whether the reference is split into sentences and the best match taken.
    pub fn pairwise(self) -> bool {
        matches!(self, LuqVariant::LuqPair)
    }

    pub fn method(self) -> Method {
        match self {
            LuqVariant::Luq => Method::Luq,
            LuqVariant::LuqPair => Method::LuqPair,
            LuqVariant::LuqAtomic => Method::LuqAtomic,
        }
    }
}

/// Mean of per-unit entailment probabilities.
pub fn similarity_from_unit_probabilities(probs: &[f64]) -> Result<f64, EstimationError> {
    if probs.is_empty() {
        return Err(EstimationError::EmptyResponse);
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// `grid[u][s]` is the entailment probability of unit `u` given reference
/// sentence `s`; each unit takes its best-supporting sentence, then units are averaged.
pub fn similarity_from_pairwise_grid(grid: &[Vec<f64>]) -> Result<f64, EstimationError> {
    let maxima = grid
        .iter()
        .map(|row| {
            row.iter()
                .copied()
                .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
                .ok_or(EstimationError::EmptyResponse)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    similarity_from_unit_probabilities(&maxima)
}

/// `1 - mean(confidences)`.
pub fn uncertainty_from_confidences(confidences: &[f64]) -> Result<f64, EstimationError> {
    if confidences.is_empty() {
        return Err(EstimationError::TooFewResponses { usable: 0 });
    }
    let mean = confidences.iter().sum::<f64>() / confidences.len() as f64;
    Ok((1.0 - mean).clamp(0.0, 1.0))
}

fn entail(j: &crate::entailment::EntailmentJudgment) -> Result<f64, EstimationError> {
    entail_probability(j).map_err(|e| EstimationError::NonFinite(e.to_string()))
}

/// S(r_i, r_ref): mean over units of `r_i` of P(entail | unit, r_ref).
pub fn response_similarity(
    r_i: &Response,
    r_ref: &Response,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
    granularity: Granularity,
) -> Result<f64, EstimationError> {
    let units = decomposer.units(r_i, granularity)?;
    if units.is_empty() || r_ref.text.trim().is_empty() {
        return Err(EstimationError::EmptyResponse);
    }
    let pairs: Vec<NliPair> = units.iter().map(|u| NliPair::new(u.clone(), r_ref.text.clone())).collect();
    let probs = gateway
        .score_cached(&pairs)?
        .iter()
        .map(entail)
        .collect::<Result<Vec<_>, _>>()?;
    similarity_from_unit_probabilities(&probs)
}

/// Pairwise S(r_i, r_ref): each unit is scored against every sentence of `r_ref` and keeps the maximum.
pub fn response_similarity_pairwise(
    r_i: &Response,
    r_ref: &Response,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
    granularity: Granularity,
) -> Result<f64, EstimationError> {
    let units = decomposer.units(r_i, granularity)?;
    let ref_sentences = decomposer.units(r_ref, Granularity::Sentence)?;
    if units.is_empty() || ref_sentences.is_empty() {
        return Err(EstimationError::EmptyResponse);
    }
    let pairs: Vec<NliPair> = units
        .iter()
        .flat_map(|u| ref_sentences.iter().map(move |s| NliPair::new(u.clone(), s.clone())))
        .collect();
    let probs = gateway
        .score_cached(&pairs)?
        .iter()
        .map(entail)
        .collect::<Result<Vec<_>, _>>()?;
    let grid: Vec<Vec<f64>> = probs.chunks(ref_sentences.len()).map(<[f64]>::to_vec).collect();
    similarity_from_pairwise_grid(&grid)
}

/// Every intermediate quantity of one LUQ computation. Indices refer to
/// positions in R' (0 is the main response).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub variant: LuqVariant,
    /// Responses that took part; refused or unit-less responses are left out.
    pub participants: Vec<usize>,
    /// `(i, j)` → per-unit entailment probabilities of r_i's units given r_j.
    pub unit_probabilities: BTreeMap<(usize, usize), Vec<f64>>,
    /// `(i, j)` → S(r_i, r_j).
    pub similarity: BTreeMap<(usize, usize), f64>,
    /// Per participant confidence C(r_i).
    pub confidence: BTreeMap<usize, f64>,
    pub uncertainty: f64,
}

/// Computes the full consistency table for `rs`, sending every NLI pair of
/// the set through the gateway in one call.
pub fn luq_table(
    rs: &ResponseSet,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
    variant: LuqVariant,
) -> Result<ConsistencyTable, EstimationError> {
    let pool = Pool::new(rs, decomposer, variant.granularity())?;
    let members = pool.members();

    // For the pair variant references are split into sentences; otherwise the full text is the premise.
    let premises: Vec<Vec<String>> = members
        .iter()
        .map(|m| {
            if variant.pairwise() {
                decomposer.units(m.response, Granularity::Sentence)
            } else {
                Ok(vec![m.response.text.clone()])
            }
        })
        .collect::<Result<_, _>>()?;

    let mut pairs: Vec<NliPair> = Vec::new();
    for (a, hyp) in members.iter().enumerate() {
        for (b, prem) in premises.iter().enumerate() {
            if a == b {
                continue;
            }
            for u in &hyp.units {
                for p in prem {
                    pairs.push(NliPair::new(u.clone(), p.clone()));
                }
            }
        }
    }
    let judgments = gateway.score_cached(&pairs)?;
    let probs = judgments.iter().map(entail).collect::<Result<Vec<f64>, _>>()?;

    let mut cursor = 0;
    let mut unit_probabilities = BTreeMap::new();
    let mut similarity = BTreeMap::new();
    let mut confidence = BTreeMap::new();
    for (a, hyp) in members.iter().enumerate() {
        let mut sims = Vec::with_capacity(members.len() - 1);
        for (b, prem) in premises.iter().enumerate() {
            if a == b {
                continue;
            }
            let width = prem.len();
            let block = &probs[cursor..cursor + hyp.units.len() * width];
            cursor += block.len();
            let per_unit: Vec<f64> = block
                .chunks(width)
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let s = similarity_from_unit_probabilities(&per_unit)?;
            unit_probabilities.insert((hyp.index, members[b].index), per_unit);
            similarity.insert((hyp.index, members[b].index), s);
            sims.push(s);
        }
        confidence.insert(hyp.index, sims.iter().sum::<f64>() / sims.len() as f64);
    }
    let confs: Vec<f64> = confidence.values().copied().collect();
    let uncertainty = uncertainty_from_confidences(&confs)?;
    Ok(ConsistencyTable {
        variant,
        participants: members.iter().map(|m| m.index).collect(),
        unit_probabilities,
        similarity,
        confidence,
        uncertainty,
    })
}

/// C(x, r_i) for the response at position `index` of R'.
pub fn luq_confidence(
    rs: &ResponseSet,
    index: usize,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
    variant: LuqVariant,
) -> Result<f64, EstimationError> {
    let table = luq_table(rs, gateway, decomposer, variant)?;
    table
        .confidence
        .get(&index)
        .copied()
        .ok_or(EstimationError::NotParticipating { index })
}

pub fn luq_uncertainty(
    rs: &ResponseSet,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
    variant: LuqVariant,
) -> Result<UncertaintyScore, EstimationError> {
    let table = luq_table(rs, gateway, decomposer, variant)?;
    Ok(UncertaintyScore::new(variant.method(), table.uncertainty))
}

/// Mean over main-response sentences of the mean contradiction probability against each sample.
pub fn selfcheck_nli(
    rs: &ResponseSet,
    gateway: &EntailmentGateway,
    decomposer: &Decomposer,
) -> Result<UncertaintyScore, EstimationError> {
    let pool = Pool::new(rs, decomposer, Granularity::Sentence)?;
    let members = pool.members();
    let main = &members[0];
    let refs: Vec<&str> = members[1..].iter().map(|m| m.response.text.as_str()).collect();
    let pairs: Vec<NliPair> = main
        .units
        .iter()
        .flat_map(|s| refs.iter().map(move |r| NliPair::new(s.clone(), *r)))
        .collect();
    let judgments = gateway.score_cached(&pairs)?;
    let contra = judgments
        .iter()
        .map(|j| contradict_probability(j).map_err(|e| EstimationError::NonFinite(e.to_string())))
        .collect::<Result<Vec<f64>, _>>()?;
    let per_sentence: Vec<f64> = contra
        .chunks(refs.len())
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let value = per_sentence.iter().sum::<f64>() / per_sentence.len() as f64;
    Ok(UncertaintyScore::new(Method::SelfcheckNli, value))
}
