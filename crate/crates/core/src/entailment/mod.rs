//! NLI scoring of (hypothesis, premise) pairs.
//!
//! Scorers return raw three-class logits. Probabilities are a two-class
//! softmax over the entailment and contradiction logits; the neutral logit
//! is carried along but never enters a probability.

mod gateway;
mod mock;
mod remote;

pub use gateway::{EntailmentCache, EntailmentGateway, GatewayConfig, GatewayCounters, GatewayError};
pub use mock::MockScorer;
pub use remote::RemoteScorer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw logits for one (hypothesis, premise) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentJudgment {
    #[serde(rename = "entail")]
    pub entail_logit: f64,
    #[serde(rename = "neutral")]
    pub neutral_logit: f64,
    #[serde(rename = "contradict")]
    pub contradict_logit: f64,
}

impl EntailmentJudgment {
    pub const fn new(entail: f64, neutral: f64, contradict: f64) -> Self {
        EntailmentJudgment {
            entail_logit: entail,
            neutral_logit: neutral,
            contradict_logit: contradict,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entail_logit.is_finite() && self.neutral_logit.is_finite() && self.contradict_logit.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
}

impl NliPair {
    pub fn new(hypothesis: impl Into<String>, premise: impl Into<String>) -> Self {
        NliPair {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite logit in judgment {0:?}")]
pub struct NonFiniteLogit(pub EntailmentJudgment);

fn two_class(favoured: f64, other: f64) -> f64 {
    let top = favoured.max(other);
    let a = (favoured - top).exp();
    let b = (other - top).exp();
    a / (a + b)
}

/// `exp(l_e) / (exp(l_e) + exp(l_c))`, evaluated after subtracting the larger logit.
pub fn entail_probability(j: &EntailmentJudgment) -> Result<f64, NonFiniteLogit> {
    if !j.is_finite() {
        return Err(NonFiniteLogit(*j));
    }
    Ok(two_class(j.entail_logit, j.contradict_logit))
}

/// `exp(l_c) / (exp(l_e) + exp(l_c))`.
pub fn contradict_probability(j: &EntailmentJudgment) -> Result<f64, NonFiniteLogit> {
    if !j.is_finite() {
        return Err(NonFiniteLogit(*j));
    }
    Ok(two_class(j.contradict_logit, j.entail_logit))
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unreachable: {0}")]
    Unreachable(String),
    #[error("scorer returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed scorer reply: {0}")]
    Malformed(String),
}

/// Anything that maps NLI pairs to logits, one judgment per pair in input order.
pub trait EntailmentScorer: Send + Sync {
    /// Stable identity used in cache keys.
    fn scorer_id(&self) -> &str;

    /// Longest premise, in whitespace-separated words, the scorer accepts.
    fn max_premise_words(&self) -> Option<usize> {
        None
    }

    fn score_batch(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentJudgment>, ScorerError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn j(e: f64, c: f64) -> EntailmentJudgment {
        EntailmentJudgment::new(e, 0.0, c)
    }

    #[test]
    fn symmetric_logits_give_one_half() {
        assert_eq!(entail_probability(&j(0.0, 0.0)).unwrap(), 0.5);
        assert_eq!(contradict_probability(&j(0.0, 0.0)).unwrap(), 0.5);
    }

    #[test]
    fn two_class_softmax_values() {
        // 1 / (1 + e^-2)
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((expected - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!((entail_probability(&j(2.0, 0.0)).unwrap() - expected).abs() < 1e-15);
        assert!((entail_probability(&j(0.0, 2.0)).unwrap() - (1.0 - expected)).abs() < 1e-15);
        assert!((contradict_probability(&j(2.0, 0.0)).unwrap() - 0.119_202_922_022_117_6).abs() < 1e-15);
    }

    #[test]
    fn neutral_logit_is_ignored() {
        let a = EntailmentJudgment::new(1.0, -50.0, 0.3);
        let b = EntailmentJudgment::new(1.0, 50.0, 0.3);
        assert_eq!(entail_probability(&a).unwrap(), entail_probability(&b).unwrap());
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let p = entail_probability(&j(1000.0, -1000.0)).unwrap();
        assert_eq!(p, 1.0);
        let q = entail_probability(&j(-800.0, -801.0)).unwrap();
        assert!((q - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_are_rejected() {
        assert!(entail_probability(&j(f64::NAN, 0.0)).is_err());
        assert!(contradict_probability(&EntailmentJudgment::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn wire_names_match_protocol() {
        let v = serde_json::to_value(j(1.0, -1.0)).unwrap();
        assert_eq!(v, serde_json::json!({"entail": 1.0, "neutral": 0.0, "contradict": -1.0}));
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(e in -50.0f64..50.0, c in -50.0f64..50.0) {
            let s = entail_probability(&j(e, c)).unwrap() + contradict_probability(&j(e, c)).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn shift_invariance(e in -50.0f64..50.0, c in -50.0f64..50.0, shift in -100.0f64..100.0) {
            let a = entail_probability(&j(e, c)).unwrap();
            let b = entail_probability(&j(e + shift, c + shift)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
