use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{penalized_aggregates, Aggregates, EvalError, JoinedRecord};
use crate::domain::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleChoice {
    pub query_id: String,
    pub model_id: String,
    /// Uncertainty used for the comparison; refusals rank as 1, or +inf for unbounded methods.
    pub uncertainty: f64,
    pub responded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub method: Method,
    pub choices: Vec<EnsembleChoice>,
    pub aggregates: Aggregates,
    /// Percentage of questions answered by each model; sums to 100.
    pub answer_distribution: BTreeMap<String, f64>,
}

fn effective_uncertainty(r: &JoinedRecord, method: Method) -> f64 {
    let refused = if method.is_bounded01() { 1.0 } else { f64::INFINITY };
    if !r.responded() {
        return refused;
    }
    r.score(method).unwrap_or(f64::INFINITY)
}

/// Per question, keeps the answer of the model with the lowest uncertainty.
///
/// Ties go to the model listed first in `priority`; models absent from it
/// follow in name order. Every model must cover the same questions.
pub fn ensemble_select(
    per_model: &BTreeMap<String, Vec<JoinedRecord>>,
    method: Method,
    priority: &[String],
) -> Result<EnsembleResult, EvalError> {
    if per_model.is_empty() {
        return Err(EvalError::Empty);
    }
    let indexed: BTreeMap<&str, BTreeMap<&str, &JoinedRecord>> = per_model
        .iter()
        .map(|(m, recs)| (m.as_str(), recs.iter().map(|r| (r.query_id.as_str(), r)).collect()))
        .collect();
    let all_queries: BTreeSet<&str> = indexed.values().flat_map(|q| q.keys().copied()).collect();
    for (model, qs) in &indexed {
        if let Some(missing) = all_queries.iter().find(|q| !qs.contains_key(*q)) {
            return Err(EvalError::CoverageGap(format!("model {model} has no record for {missing}")));
        }
    }
    let rank = |model: &str| -> (usize, String) {
        let pos = priority.iter().position(|p| p == model).unwrap_or(priority.len());
        (pos, model.to_string())
    };
    let mut order: Vec<&str> = indexed.keys().copied().collect();
    order.sort_by_key(|m| rank(m));

    let mut choices = Vec::with_capacity(all_queries.len());
    let mut chosen = Vec::with_capacity(all_queries.len());
    for q in &all_queries {
        let mut best: Option<(&str, f64)> = None;
        for &model in &order {
            let u = effective_uncertainty(indexed[model][q], method);
            if best.is_none_or(|(_, b)| u < b) {
                best = Some((model, u));
            }
        }
        let (model, u) = best.expect("at least one model");
        let rec = indexed[model][q];
        choices.push(EnsembleChoice {
            query_id: q.to_string(),
            model_id: model.to_string(),
            uncertainty: u,
            responded: rec.responded(),
        });
        chosen.push(rec.clone());
    }
    let aggregates = penalized_aggregates(&chosen, method, !method.is_bounded01())?;
    let mut counts: BTreeMap<String, usize> = per_model.keys().map(|m| (m.clone(), 0)).collect();
    for c in &choices {
        *counts.get_mut(&c.model_id).expect("known model") += 1;
    }
    let answer_distribution = counts
        .into_iter()
        .map(|(m, k)| (m, k as f64 * 100.0 / choices.len() as f64))
        .collect();
    Ok(EnsembleResult { method, choices, aggregates, answer_distribution })
}
