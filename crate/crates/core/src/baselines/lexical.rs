use crate::domain::{Method, Response, UncertaintyScore};
use crate::estimation::EstimationError;
use crate::text::lower_tokens;

/// Pairwise text similarity in [0, 1].
pub trait LexicalSimilarity: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// ROUGE-L style F1: longest common token subsequence over lowercased words.
#[derive(Debug, Clone, Copy, Default)]
pub struct LcsF1;

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

impl LexicalSimilarity for LcsF1 {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let ta = lower_tokens(a);
        let tb = lower_tokens(b);
        if ta.is_empty() && tb.is_empty() {
            return 1.0;
        }
        if ta.is_empty() || tb.is_empty() {
            return 0.0;
        }
        let l = lcs_len(&ta, &tb) as f64;
        let p = l / ta.len() as f64;
        let r = l / tb.len() as f64;
        if l == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// `1 - mean` of the off-diagonal pairwise similarities.
pub fn lexsim_uncertainty(
    responses: &[&Response],
    sim: &dyn LexicalSimilarity,
) -> Result<UncertaintyScore, EstimationError> {
    let m = responses.len();
    if m < 2 {
        return Err(EstimationError::TooFewResponses { usable: m });
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                total += sim.similarity(&responses[i].text, &responses[j].text);
            }
        }
    }
    let mean = total / (m * (m - 1)) as f64;
    Ok(UncertaintyScore::new(Method::Lexsim, (1.0 - mean).clamp(0.0, 1.0)))
}
