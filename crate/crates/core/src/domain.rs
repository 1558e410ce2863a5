//! Shared vocabulary: queries, responses, scores and factuality labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Coarse popularity of the query subject, used for bucketed reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyLabel {
    VeryRare,
    Rare,
    Medium,
    Frequent,
    VeryFrequent,
    #[default]
    Unknown,
}

impl FrequencyLabel {
    /// Known buckets in report order.
    pub const ORDERED: [FrequencyLabel; 5] = [
        FrequencyLabel::VeryRare,
        FrequencyLabel::Rare,
        FrequencyLabel::Medium,
        FrequencyLabel::Frequent,
        FrequencyLabel::VeryFrequent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyLabel::VeryRare => "very_rare",
            FrequencyLabel::Rare => "rare",
            FrequencyLabel::Medium => "medium",
            FrequencyLabel::Frequent => "frequent",
            FrequencyLabel::VeryFrequent => "very_frequent",
            FrequencyLabel::Unknown => "unknown",
        }
    }
}

impl FromStr for FrequencyLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Ok(match norm.as_str() {
            "very_rare" => FrequencyLabel::VeryRare,
            "rare" => FrequencyLabel::Rare,
            "medium" => FrequencyLabel::Medium,
            "frequent" => FrequencyLabel::Frequent,
            "very_frequent" => FrequencyLabel::VeryFrequent,
            "unknown" | "" => FrequencyLabel::Unknown,
            other => return Err(format!("unknown frequency label `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub entity: String,
    pub prompt: String,
    #[serde(default)]
    pub frequency_label: FrequencyLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentences: Vec<Sentence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atomic_claims: Option<Vec<AtomicClaim>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default)]
    pub is_refusal: bool,
}

impl Response {
    pub fn new(text: impl Into<String>) -> Self {
        Response {
            text: text.into(),
            sentences: Vec::new(),
            atomic_claims: None,
            token_logprobs: None,
            is_refusal: false,
        }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.token_logprobs = Some(logprobs);
        self
    }

    pub fn refused(mut self) -> Self {
        self.is_refusal = true;
        self
    }

    /// Sequence log-likelihood: sum of token log-probabilities.
    pub fn sequence_logprob(&self) -> Option<f64> {
        self.token_logprobs.as_ref().map(|lp| lp.iter().sum())
    }
}

/// A query with its main response and `n` stochastic samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub query: Query,
    pub main: Response,
    pub samples: Vec<Response>,
    pub temperature: f64,
    pub model_id: String,
}

impl ResponseSet {
    /// Number of stochastic samples (excluding the main response).
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// The full set: main response first, then samples in order. Length is `n + 1`.
    pub fn all(&self) -> Vec<&Response> {
        std::iter::once(&self.main).chain(self.samples.iter()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Luq,
    LuqPair,
    LuqAtomic,
    SelfcheckNli,
    Lexsim,
    Numsets,
    Eigv,
    Deg,
    Ecc,
    Msp,
    Mcse,
    Se,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Luq,
        Method::LuqPair,
        Method::LuqAtomic,
        Method::SelfcheckNli,
        Method::Lexsim,
        Method::Numsets,
        Method::Eigv,
        Method::Deg,
        Method::Ecc,
        Method::Msp,
        Method::Mcse,
        Method::Se,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Luq => "luq",
            Method::LuqPair => "luq_pair",
            Method::LuqAtomic => "luq_atomic",
            Method::SelfcheckNli => "selfcheck_nli",
            Method::Lexsim => "lexsim",
            Method::Numsets => "numsets",
            Method::Eigv => "eigv",
            Method::Deg => "deg",
            Method::Ecc => "ecc",
            Method::Msp => "msp",
            Method::Mcse => "mcse",
            Method::Se => "se",
        }
    }

    /// Whether scores of this method always lie in [0, 1].
    pub fn is_bounded01(self) -> bool {
        matches!(
            self,
            Method::Luq | Method::LuqPair | Method::LuqAtomic | Method::SelfcheckNli | Method::Lexsim
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub method: Method,
    pub value: f64,
    pub bounded01: bool,
}

impl UncertaintyScore {
    pub fn new(method: Method, value: f64) -> Self {
        UncertaintyScore {
            method,
            value,
            bounded01: method.is_bounded01(),
        }
    }
}

/// Externally computed factuality of a main response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualityRecord {
    pub query_id: String,
    /// Fraction of supported facts, in [0, 1].
    pub fs: f64,
    pub responded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_facts: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<FrequencyLabel>,
    /// Restricts the record to one model; absent means it applies to every model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

/// Square similarity matrix between the `m` responses of one set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from rows, forcing the diagonal to 1 and symmetrising by averaging.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, String> {
        let m = rows.len();
        if m == 0 {
            return Err("similarity matrix needs at least one row".into());
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err("similarity matrix must be square".into());
        }
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let v = if i == j { 1.0 } else { 0.5 * (rows[i][j] + rows[j][i]) };
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(format!("entry ({i},{j}) = {v} outside [0, 1]"));
                }
                entries[i * m + j] = v;
            }
        }
        Ok(SimilarityMatrix { m, entries })
    }

    pub fn identity(m: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows).expect("identity is valid")
    }

    pub fn ones(m: usize) -> Self {
        Self::from_rows(&vec![vec![1.0; m]; m]).expect("all-ones is valid")
    }

    /// Binary block-diagonal matrix: responses sharing a label are fully similar.
    pub fn from_blocks(labels: &[usize]) -> Self {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|a| labels.iter().map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows).expect("block matrix is valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks(self.m).map(|r| r.iter().sum()).collect()
    }

    pub fn off_diagonal_mean(&self) -> Option<f64> {
        if self.m < 2 {
            return None;
        }
        let mut total = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j {
                    total += self.get(i, j);
                }
            }
        }
        Some(total / (self.m * (self.m - 1)) as f64)
    }
}

/// One broken invariant found by [`validate_response_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn check_response(field: &str, r: &Response, out: &mut Vec<Violation>) {
    if let Some(lp) = &r.token_logprobs {
        for (t, v) in lp.iter().enumerate() {
            if v.is_nan() {
                out.push(Violation {
                    field: format!("{field}.token_logprobs[{t}]"),
                    rule: "logprob is NaN".into(),
                });
            } else if *v > 0.0 {
                out.push(Violation {
                    field: format!("{field}.token_logprobs[{t}]"),
                    rule: "logprob > 0".into(),
                });
            }
        }
    }
    for s in &r.sentences {
        if s.text.trim().is_empty() {
            out.push(Violation {
                field: format!("{field}.sentences[{}]", s.index),
                rule: "sentence text empty".into(),
            });
        }
    }
    for c in r.atomic_claims.iter().flatten() {
        if c.text.trim().is_empty() {
            out.push(Violation {
                field: format!("{field}.atomic_claims[{}]", c.index),
                rule: "claim text empty".into(),
            });
        }
    }
}

/// Reports every broken invariant of a response set; never fails.
pub fn validate_response_set(rs: &ResponseSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if rs.query.prompt.trim().is_empty() {
        out.push(Violation {
            field: "query.prompt".into(),
            rule: "prompt must be non-empty".into(),
        });
    }
    if rs.samples.is_empty() {
        out.push(Violation {
            field: "samples".into(),
            rule: "need n ≥ 1".into(),
        });
    }
    if !(rs.temperature > 0.0 && rs.temperature <= 2.0) {
        out.push(Violation {
            field: "temperature".into(),
            rule: "must lie in (0, 2]".into(),
        });
    }
    check_response("main", &rs.main, &mut out);
    for (i, s) in rs.samples.iter().enumerate() {
        check_response(&format!("samples[{i}]"), s, &mut out);
    }
    out
}
