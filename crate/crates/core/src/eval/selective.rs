use serde::{Deserialize, Serialize};

use super::{EvalError, JoinedRecord};
use crate::domain::Method;

/// Percentages of the most uncertain questions to withhold.
pub const DEFAULT_GRID: [f64; 7] = [0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivePoint {
    pub percentile: f64,
    pub dropped: usize,
    pub retained: usize,
    pub fs: f64,
    pub us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveCurve {
    pub method: Method,
    pub questions: usize,
    pub points: Vec<SelectivePoint>,
}

/// Withholds the `ceil(p% * Q)` most uncertain answered questions for each `p`
/// and reports mean factuality of the rest. Equal uncertainties are dropped
/// in query id order.
pub fn selective_curve(records: &[JoinedRecord], method: Method, grid: &[f64]) -> Result<SelectiveCurve, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InvalidGrid("empty".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..100.0).contains(*p)) {
        return Err(EvalError::InvalidGrid(format!("{p} not in [0, 100)")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::InvalidGrid("not strictly increasing".into()));
    }
    let mut scored: Vec<(&str, f64, f64)> = records
        .iter()
        .filter(|r| r.responded())
        .filter_map(|r| r.score(method).map(|u| (r.query_id.as_str(), u, r.factuality.fs)))
        .collect();
    if scored.iter().any(|(_, u, _)| !u.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let q = scored.len();
    let mut points = Vec::with_capacity(grid.len());
    for &p in grid {
        let dropped = ((p / 100.0 * q as f64) - 1e-9).ceil().max(0.0) as usize;
        let kept = &scored[dropped.min(q)..];
        if kept.is_empty() {
            return Err(EvalError::EmptyRetainedSet(p));
        }
        let n = kept.len() as f64;
        points.push(SelectivePoint {
            percentile: p,
            dropped,
            retained: kept.len(),
            fs: kept.iter().map(|k| k.2).sum::<f64>() / n,
            us: kept.iter().map(|k| k.1).sum::<f64>() / n,
        });
    }
    Ok(SelectiveCurve { method, questions: q, points })
}
