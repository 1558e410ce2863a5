use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EntailmentJudgment, EntailmentScorer, NliPair, ScorerError};

#[derive(Serialize)]
struct ScoreRequest<'a> {
    pairs: &'a [NliPair],
}

#[derive(Deserialize)]
struct ScoreResponse {
    results: Vec<EntailmentJudgment>,
    #[allow(dead_code)]
    model_id: String,
}

#[derive(Deserialize)]
struct Health {
    status: String,
    model_id: String,
}

/// Client for the `/v1/nli` scoring service.
pub struct RemoteScorer {
    base: String,
    client: reqwest::blocking::Client,
    model_id: String,
    max_premise_words: Option<usize>,
}

impl RemoteScorer {
    /// Probes `GET /healthz` and records the served model id.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScorerError::Unreachable(e.to_string()))?;
        let base = base_url.trim_end_matches('/').to_string();
        let resp = client
            .get(format!("{base}/healthz"))
            .send()
            .map_err(|e| ScorerError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ScorerError::Status {
                status: status.as_u16(),
                body: resp.text().unwrap_or_default(),
            });
        }
        let health: Health = resp.json().map_err(|e| ScorerError::Malformed(e.to_string()))?;
        if health.status != "ok" {
            return Err(ScorerError::Malformed(format!("health status `{}`", health.status)));
        }
        Ok(RemoteScorer {
            base,
            client,
            model_id: health.model_id,
            max_premise_words: None,
        })
    }

    pub fn with_max_premise_words(mut self, limit: usize) -> Self {
        self.max_premise_words = Some(limit);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }
}

impl EntailmentScorer for RemoteScorer {
    fn scorer_id(&self) -> &str {
        &self.model_id
    }

    fn max_premise_words(&self) -> Option<usize> {
        self.max_premise_words
    }

    fn score_batch(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentJudgment>, ScorerError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self
            .client
            .post(format!("{}/v1/nli", self.base))
            .json(&ScoreRequest { pairs })
            .send()
            .map_err(|e| ScorerError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ScorerError::Status {
                status: status.as_u16(),
                body: resp.text().unwrap_or_default(),
            });
        }
        let body: ScoreResponse = resp.json().map_err(|e| ScorerError::Malformed(e.to_string()))?;
        if body.results.len() != pairs.len() {
            return Err(ScorerError::Malformed(format!(
                "expected {} results, got {}",
                pairs.len(),
                body.results.len()
            )));
        }
        if let Some(bad) = body.results.iter().find(|j| !j.is_finite()) {
            return Err(ScorerError::Malformed(format!("non-finite logits {bad:?}")));
        }
        Ok(body.results)
    }
}
