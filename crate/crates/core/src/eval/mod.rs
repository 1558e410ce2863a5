//! Scores joined with factuality labels: correlations, penalized aggregates,
//! frequency buckets, ensembling and selective answering.

mod correlation;
mod ensemble;
mod selective;

pub use correlation::{average_ranks, classify_correlation, pearson, spearman, CorrelationStrength};
pub use ensemble::{ensemble_select, EnsembleChoice, EnsembleResult};
pub use selective::{selective_curve, SelectiveCurve, SelectivePoint, DEFAULT_GRID};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FactualityRecord, FrequencyLabel, Method, UncertaintyScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("constant-input: correlation undefined for a constant series")]
    ConstantInput,
    #[error("length-mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("insufficient-data: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("correlation {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("method {0} is not bounded to [0, 1]; penalized uncertainty undefined")]
    UnboundedMethod(Method),
    #[error("coverage-gap: {0}")]
    CoverageGap(String),
    #[error("empty-retained-set at percentile {0}")]
    EmptyRetainedSet(f64),
    #[error("invalid percentile grid: {0}")]
    InvalidGrid(String),
    #[error("all-unknown: no record carries a frequency label")]
    AllUnknown,
    #[error("no records to evaluate")]
    Empty,
}

/// One question for one model after the inner join of scores and factuality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRecord {
    pub query_id: String,
    pub model_id: String,
    pub scores: BTreeMap<Method, UncertaintyScore>,
    pub factuality: FactualityRecord,
    #[serde(default)]
    pub frequency: FrequencyLabel,
}

impl JoinedRecord {
    pub fn responded(&self) -> bool {
        self.factuality.responded
    }

    pub fn score(&self, method: Method) -> Option<f64> {
        self.scores.get(&method).map(|s| s.value)
    }
}

/// Rounds a fraction to a percentage with one decimal.
pub fn percent(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub method: Method,
    pub questions: usize,
    pub responded: usize,
    /// Responded questions lacking a score for `method`; left out of US and PUS.
    pub unscored: usize,
    pub fs: Option<f64>,
    pub pfs: f64,
    pub us: Option<f64>,
    pub pus: Option<f64>,
    pub rr: f64,
}

/// FS and US average responded questions; PFS and PUS average every
/// question with refusals counted as factuality 0 and uncertainty 1.
///
/// Unbounded methods are rejected unless `normalize_unbounded`, which
/// min-max scales the responded scores of this record list into [0, 1].
pub fn penalized_aggregates(
    records: &[JoinedRecord],
    method: Method,
    normalize_unbounded: bool,
) -> Result<Aggregates, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let bounded = records
        .iter()
        .filter_map(|r| r.scores.get(&method))
        .all(|s| s.bounded01)
        && method.is_bounded01();
    if !bounded && !normalize_unbounded {
        return Err(EvalError::UnboundedMethod(method));
    }
    let responded: Vec<&JoinedRecord> = records.iter().filter(|r| r.responded()).collect();
    let raw: Vec<f64> = responded.iter().filter_map(|r| r.score(method)).collect();
    let scale = |v: f64| -> f64 {
        if bounded {
            return v;
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    };
    let fs = mean(responded.iter().map(|r| r.factuality.fs));
    let pfs = mean(records.iter().map(|r| if r.responded() { r.factuality.fs } else { 0.0 })).unwrap_or(0.0);
    let us = mean(raw.iter().map(|&v| scale(v)));
    let pus = mean(records.iter().filter_map(|r| {
        if r.responded() {
            r.score(method).map(scale)
        } else {
            Some(1.0)
        }
    }));
    Ok(Aggregates {
        method,
        questions: records.len(),
        responded: responded.len(),
        unscored: responded.len() - raw.len(),
        fs,
        pfs,
        us,
        pus,
        rr: responded.len() as f64 / records.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub method: Method,
    pub n: usize,
    pub pcc: Option<f64>,
    pub scc: Option<f64>,
    /// Coefficients as percentages with one decimal.
    pub pcc_pct: Option<f64>,
    pub scc_pct: Option<f64>,
    pub pcc_category: Option<CorrelationStrength>,
    pub scc_category: Option<CorrelationStrength>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Per-method PCC/SCC between raw uncertainty and raw factuality over responded questions.
pub fn correlation_report(records: &[JoinedRecord], methods: &[Method]) -> Vec<CorrelationRow> {
    methods
        .iter()
        .map(|&method| {
            let (us, fs): (Vec<f64>, Vec<f64>) = records
                .iter()
                .filter(|r| r.responded())
                .filter_map(|r| r.score(method).map(|u| (u, r.factuality.fs)))
                .unzip();
            let both = pearson(&us, &fs).and_then(|p| spearman(&us, &fs).map(|s| (p, s)));
            match both {
                Ok((p, s)) => CorrelationRow {
                    method,
                    n: us.len(),
                    pcc: Some(p),
                    scc: Some(s),
                    pcc_pct: Some(percent(p)),
                    scc_pct: Some(percent(s)),
                    pcc_category: classify_correlation(p).ok(),
                    scc_category: classify_correlation(s).ok(),
                    note: None,
                },
                Err(e) => CorrelationRow {
                    method,
                    n: us.len(),
                    pcc: None,
                    scc: None,
                    pcc_pct: None,
                    scc_pct: None,
                    pcc_category: None,
                    scc_category: None,
                    note: Some(format!("skipped: {e}")),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBucket {
    pub label: FrequencyLabel,
    pub questions: usize,
    pub responded: usize,
    pub fs: Option<f64>,
    pub us: Option<f64>,
}

/// Mean FS and US per frequency bucket, rarest first; unknown labels and empty buckets are left out.
pub fn frequency_report(records: &[JoinedRecord], method: Method) -> Result<Vec<FrequencyBucket>, EvalError> {
    if records.iter().all(|r| r.frequency == FrequencyLabel::Unknown) {
        return Err(EvalError::AllUnknown);
    }
    Ok(FrequencyLabel::ORDERED
        .iter()
        .filter_map(|&label| {
            let bucket: Vec<&JoinedRecord> = records.iter().filter(|r| r.frequency == label).collect();
            if bucket.is_empty() {
                return None;
            }
            let responded: Vec<&&JoinedRecord> = bucket.iter().filter(|r| r.responded()).collect();
            Some(FrequencyBucket {
                label,
                questions: bucket.len(),
                responded: responded.len(),
                fs: mean(responded.iter().map(|r| r.factuality.fs)),
                us: mean(responded.iter().filter_map(|r| r.score(method))),
            })
        })
        .collect())
}
