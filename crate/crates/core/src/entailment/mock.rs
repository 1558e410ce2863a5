use std::collections::{BTreeMap, BTreeSet};

use super::{EntailmentJudgment, EntailmentScorer, NliPair, ScorerError};
use crate::text::lower_tokens;

const ENTAIL: EntailmentJudgment = EntailmentJudgment::new(3.0, 0.0, -3.0);
const CONTRADICT: EntailmentJudgment = EntailmentJudgment::new(-3.0, 0.0, 3.0);
const NEUTRAL: EntailmentJudgment = EntailmentJudgment::new(0.0, 1.0, 0.0);

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "and", "or", "is", "was", "were", "are", "be",
    "been", "by", "with", "as", "from", "that", "this", "it", "he", "she", "his", "her", "they", "their",
    "its", "who", "which", "also", "has", "had", "have",
];

/// Head words whose following content token is treated as an attribute value.
/// Two texts that attach different values to the same head word conflict.
const DEFAULT_HEAD_WORDS: &[&str] = &[
    "born", "died", "founded", "married", "graduated", "won", "wrote", "published", "released", "elected",
    "ruled", "reigned", "served", "joined", "moved", "received", "scored", "appeared", "established",
    "retired", "awarded", "studied", "worked", "directed", "composed", "recorded", "coached", "played",
];

/// Deterministic rule-based scorer for tests and synthetic benchmarks.
///
/// * hypothesis content words ⊆ premise content words → `(3, 0, -3)`
/// * a head word carries a value in the hypothesis that the premise never
///   attaches to that head word → `(-3, 0, 3)`
/// * otherwise → `(0, 1, 0)`
#[derive(Debug, Clone)]
pub struct MockScorer {
    id: String,
    heads: BTreeSet<String>,
    max_premise_words: Option<usize>,
}

impl Default for MockScorer {
    fn default() -> Self {
        MockScorer::new()
    }
}

fn is_stopword(w: &str) -> bool {
    STOPWORDS.contains(&w)
}

impl MockScorer {
    pub fn new() -> Self {
        MockScorer {
            id: "mock-v1".into(),
            heads: DEFAULT_HEAD_WORDS.iter().map(|s| s.to_string()).collect(),
            max_premise_words: None,
        }
    }

    /// Advertise a premise limit so the gateway's truncation path can be exercised.
    pub fn with_max_premise_words(mut self, limit: usize) -> Self {
        self.max_premise_words = Some(limit);
        self
    }

    pub fn with_head_words<I, S>(mut self, heads: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.heads = heads.into_iter().map(Into::into).collect();
        self
    }

    fn content(text: &str) -> BTreeSet<String> {
        lower_tokens(text).into_iter().filter(|w| !is_stopword(w)).collect()
    }

    /// head word → values attached to it anywhere in the text.
    fn attributes(&self, text: &str) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        // Values never cross a sentence boundary.
        for sentence in text.split(['.', '!', '?', ';']) {
            let toks = lower_tokens(sentence);
            for (i, t) in toks.iter().enumerate() {
                if !self.heads.contains(t) {
                    continue;
                }
                if let Some(v) = toks[i + 1..].iter().find(|w| !is_stopword(w) && !self.heads.contains(*w)) {
                    out.entry(t.clone()).or_default().insert(v.clone());
                }
            }
        }
        out
    }

    pub fn judge(&self, hypothesis: &str, premise: &str) -> EntailmentJudgment {
        let hyp = Self::content(hypothesis);
        let prem = Self::content(premise);
        if !hyp.is_empty() && hyp.is_subset(&prem) {
            return ENTAIL;
        }
        let hyp_attrs = self.attributes(hypothesis);
        let prem_attrs = self.attributes(premise);
        let conflict = hyp_attrs.iter().any(|(head, values)| {
            prem_attrs
                .get(head)
                .is_some_and(|known| values.iter().any(|v| !known.contains(v)))
        });
        if conflict {
            CONTRADICT
        } else {
            NEUTRAL
        }
    }
}

impl EntailmentScorer for MockScorer {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn max_premise_words(&self) -> Option<usize> {
        self.max_premise_words
    }

    fn score_batch(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentJudgment>, ScorerError> {
        Ok(pairs.iter().map(|p| self.judge(&p.hypothesis, &p.premise)).collect())
    }
}
