use serde::{Deserialize, Serialize};

use super::EvalError;

fn check(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(EvalError::InsufficientData { have: xs.len(), need: 3 });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Product-moment correlation. Both inputs must vary.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationStrength {
    VeryStrong,
    Strong,
    Moderate,
    Weak,
    VeryWeak,
    Negligible,
}

/// Buckets `|rho|` with half-open intervals; a boundary value falls in the weaker class.
pub fn classify_correlation(rho: f64) -> Result<CorrelationStrength, EvalError> {
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(EvalError::OutOfRange(rho));
    }
    let a = rho.abs();
    Ok(if a > 0.9 {
        CorrelationStrength::VeryStrong
    } else if a > 0.7 {
        CorrelationStrength::Strong
    } else if a > 0.5 {
        CorrelationStrength::Moderate
    } else if a > 0.3 {
        CorrelationStrength::Weak
    } else if a > 0.1 {
        CorrelationStrength::VeryWeak
    } else {
        CorrelationStrength::Negligible
    })
}
