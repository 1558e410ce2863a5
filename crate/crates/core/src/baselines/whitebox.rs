//! Baselines that read token log-probabilities.
//!
//! With ℓ_i the sequence log-likelihood of response i (sum of token
//! log-probabilities, or their mean when length-normalised):
//! MSP = -max_i ℓ_i, MCSE = -mean_i ℓ_i, and semantic entropy is the Shannon
//! entropy of semantic-set masses p(c) ∝ Σ_{i∈c} exp(ℓ_i).

use crate::domain::{Method, Response, UncertaintyScore};
use crate::entailment::EntailmentGateway;
use crate::estimation::EstimationError;

use super::spectral::{directional_entailment, semantic_partition, SemanticPartition};

fn sequence_loglik(r: &Response, index: usize, length_normalize: bool) -> Result<f64, EstimationError> {
    let lp = r
        .token_logprobs
        .as_ref()
        .ok_or(EstimationError::MissingLogprobs { index })?;
    if length_normalize {
        if lp.is_empty() {
            return Err(EstimationError::MissingLogprobs { index });
        }
        Ok(lp.iter().sum::<f64>() / lp.len() as f64)
    } else {
        Ok(lp.iter().sum())
    }
}

fn logliks(responses: &[&Response], length_normalize: bool) -> Result<Vec<f64>, EstimationError> {
    if responses.is_empty() {
        return Err(EstimationError::TooFewResponses { usable: 0 });
    }
    responses
        .iter()
        .enumerate()
        .map(|(i, r)| sequence_loglik(r, i, length_normalize))
        .collect()
}

pub fn msp(responses: &[&Response]) -> Result<UncertaintyScore, EstimationError> {
    let best = logliks(responses, false)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(UncertaintyScore::new(Method::Msp, (-best).max(0.0)))
}

pub fn mcse(responses: &[&Response], length_normalize: bool) -> Result<UncertaintyScore, EstimationError> {
    let l = logliks(responses, length_normalize)?;
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    Ok(UncertaintyScore::new(Method::Mcse, (-mean).max(0.0)))
}

/// Entropy of cluster masses. `log_weights[i]` is the log mass of item i;
/// `None` weights every item equally.
pub fn cluster_entropy(partition: &SemanticPartition, log_weights: Option<&[f64]>) -> f64 {
    let k = partition.num_clusters();
    let n = partition.labels.len();
    let weights: Vec<f64> = match log_weights {
        Some(lw) => lw.to_vec(),
        None => vec![0.0; n],
    };
    let top = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = vec![0.0; k];
    for (i, &c) in partition.labels.iter().enumerate() {
        mass[c] += (weights[i] - top).exp();
    }
    let total: f64 = mass.iter().sum();
    -mass
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn semantic_entropy(
    responses: &[&Response],
    gateway: &EntailmentGateway,
    threshold: f64,
    length_normalize: bool,
    count_fallback: bool,
) -> Result<UncertaintyScore, EstimationError> {
    let weights = match logliks(responses, length_normalize) {
        Ok(l) => Some(l),
        Err(EstimationError::MissingLogprobs { .. }) if count_fallback => None,
        Err(e) => return Err(e),
    };
    let partition = semantic_partition(&directional_entailment(responses, gateway)?, threshold);
    let h = cluster_entropy(&partition, weights.as_deref());
    Ok(UncertaintyScore::new(Method::Se, h.max(0.0)))
}
