use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use luq_core::domain::{FrequencyLabel, Method, Query, Response, ResponseSet};
use luq_core::entailment::GatewayCounters;

/// One dataset line. A missing prompt is filled from the biography template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default)]
    pub frequency_label: FrequencyLabel,
}

/// One (model, query) line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub query_id: String,
    pub entity: String,
    pub prompt: String,
    #[serde(default)]
    pub frequency_label: FrequencyLabel,
    pub model_id: String,
    pub temperature: f64,
    pub main: Response,
    pub samples: Vec<Response>,
}

impl SampleRecord {
    pub fn from_set(rs: ResponseSet) -> Self {
        SampleRecord {
            query_id: rs.query.id,
            entity: rs.query.entity,
            prompt: rs.query.prompt,
            frequency_label: rs.query.frequency_label,
            model_id: rs.model_id,
            temperature: rs.temperature,
            main: rs.main,
            samples: rs.samples,
        }
    }

    pub fn to_set(&self) -> ResponseSet {
        ResponseSet {
            query: Query {
                id: self.query_id.clone(),
                entity: self.entity.clone(),
                prompt: self.prompt.clone(),
                frequency_label: self.frequency_label,
            },
            main: self.main.clone(),
            samples: self.samples.clone(),
            temperature: self.temperature,
            model_id: self.model_id.clone(),
        }
    }
}

/// One (model, query, method) line of `scores.jsonl`. Exactly one of
/// `value` and `error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub model_id: String,
    pub method: Method,
    pub bounded01: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Short failure tag such as `missing-logprobs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub model_id: String,
    pub query_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub stage: String,
    /// The config file exactly as read.
    pub config_source: String,
    pub effective_config: serde_json::Value,
    pub dataset_sha256: String,
    pub queries: usize,
    pub models: Vec<String>,
    pub records_written: usize,
    pub refusals: usize,
    pub failures: Vec<Failure>,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateManifest {
    pub stage: String,
    pub config_source: String,
    pub effective_config: serde_json::Value,
    pub samples_sha256: String,
    pub scorer_id: String,
    pub counters: GatewayCounters,
    pub scores_written: usize,
    /// Count of score records per failure tag.
    pub skipped: BTreeMap<String, usize>,
    pub failures: Vec<Failure>,
    pub partial: bool,
}
