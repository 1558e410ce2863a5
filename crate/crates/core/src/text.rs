//! Sentence segmentation and atomic-claim decomposition.

use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AtomicClaim, Response, Sentence};
use crate::sampling::{ChatMessage, ChatProvider, ChatRequest, GenerationCache};

/// Lowercased alphanumeric runs.
pub fn lower_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

// Lowercase, without the trailing period.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "gen", "col", "lt", "sgt", "capt", "cmdr",
    "adm", "gov", "sen", "rep", "pres", "rev", "hon", "fr", "messrs", "mme", "mlle", "vs", "etc", "e.g", "i.e",
    "al", "inc", "ltd", "co", "corp", "no", "vol", "ed", "eds", "approx", "est", "dept", "univ", "jan", "feb",
    "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "ca", "cf", "op", "pp", "ch",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '”', '’', '»'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '“', '‘', '«'];

fn period_ends_sentence(text: &str, dot: usize) -> bool {
    let before = &text[..dot];
    let token_start = before
        .rfind(char::is_whitespace)
        .map(|i| i + before[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let token = before[token_start..].trim_start_matches(OPENERS);
    if token.is_empty() {
        return true;
    }
    let lower = token.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return false;
    }
    let mut chars = token.chars();
    // Initial such as "J." in "J. R. R. Tolkien".
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if c.is_uppercase() {
            return false;
        }
    }
    // Dotted acronym such as "M.I.T." or "U.S.".
    if token.contains('.') && token.chars().filter(|c| c.is_alphabetic()).count() <= 6 {
        return false;
    }
    true
}

/// Splits text into ordered sentences.
///
/// A boundary is a run of `.`, `!` or `?` (plus closing quotes/brackets)
/// followed by whitespace and an uppercase letter, digit or opening quote,
/// or the end of the text. A blank line is always a boundary. Periods after
/// known abbreviations, single-letter initials and dotted acronyms do not end
/// a sentence.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let mut cuts: Vec<usize> = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c == '\n' {
            // Blank line: newline, optional horizontal space, newline.
            let mut j = k + 1;
            while j < chars.len() && chars[j].1 != '\n' && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                cuts.push(pos);
                k = j + 1;
                continue;
            }
            k += 1;
            continue;
        }
        if !matches!(c, '.' | '!' | '?') {
            k += 1;
            continue;
        }
        let mut j = k;
        let mut has_bang = false;
        while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
            has_bang |= chars[j].1 != '.';
            j += 1;
        }
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let at_end = j >= chars.len();
        let followed_by_space = !at_end && chars[j].1.is_whitespace();
        if !(at_end || followed_by_space) {
            k = j.max(k + 1);
            continue;
        }
        let next = chars[j..].iter().map(|&(_, ch)| ch).find(|ch| !ch.is_whitespace());
        let starts_sentence = match next {
            None => true,
            Some(ch) => ch.is_uppercase() || ch.is_ascii_digit() || OPENERS.contains(&ch),
        };
        let lone_period = !has_bang && (k + 1 == chars.len() || chars[k + 1].1 != '.');
        let terminal = next.is_none() || !lone_period || period_ends_sentence(text, pos);
        if starts_sentence && terminal {
            cuts.push(end);
        }
        k = j.max(k + 1);
    }
    cuts.push(text.len());

    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts {
        if cut < start {
            continue;
        }
        let piece = text[start..cut].trim();
        if !piece.is_empty() {
            out.push(Sentence {
                text: piece.to_string(),
                index: out.len(),
            });
        }
        start = cut;
    }
    out
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("claim splitter unavailable: {0}")]
    Unavailable(String),
}

/// Breaks text into atomic claims. Claims never span two source sentences.
pub trait ClaimSplitter: Send + Sync {
    fn split(&self, text: &str) -> Result<Vec<AtomicClaim>, SplitError>;
}

const CLAUSE_VERBS: &[&str] = &[
    "is", "was", "are", "were", "has", "had", "have", "became", "becomes", "served", "serves", "ruled", "rules",
    "reigned", "died", "born", "won", "wins", "wrote", "writes", "studied", "worked", "works", "married",
    "founded", "graduated", "received", "moved", "joined", "led", "leads", "played", "plays", "published",
    "released", "directed", "composed", "recorded", "taught", "earned", "attended", "created", "developed",
    "established", "held", "remained", "returned", "retired", "appeared", "starred", "signed", "coached",
    "scored", "lived", "lives", "built", "discovered", "invented", "elected", "appointed", "awarded", "made",
    "produced", "spent", "began", "started", "continued", "left", "helped", "introduced", "completed",
];

fn first_verb_position(words: &[String]) -> Option<usize> {
    words.iter().position(|w| CLAUSE_VERBS.contains(&w.as_str()))
}

fn clause_separator() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i);\s+|,\s+and\s+|\s+and\s+").expect("static regex"))
}

fn finish_clause(s: &str) -> String {
    let s = s.trim().trim_end_matches([',', ';', ' ']);
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

/// Deterministic splitter: sentence segmentation, then clause splitting on
/// `"; "`, `", and "` and `" and "` when both sides carry a verb from a closed
/// list. A right-hand clause that starts with its verb inherits the subject
/// of the sentence's first clause.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClaimSplitter;

impl RuleClaimSplitter {
    fn split_sentence(sentence: &str) -> Vec<String> {
        let mut clauses: Vec<String> = Vec::new();
        let mut start = 0;
        for m in clause_separator().find_iter(sentence) {
            if m.start() < start {
                continue;
            }
            let left = &sentence[start..m.start()];
            let right = &sentence[m.end()..];
            let lw = lower_tokens(left);
            let rw = lower_tokens(right);
            if first_verb_position(&lw).is_some() && first_verb_position(&rw).is_some() {
                clauses.push(left.to_string());
                start = m.end();
            }
        }
        clauses.push(sentence[start..].to_string());

        let subject: Option<String> = clauses.first().and_then(|first| {
            let words: Vec<&str> = first.split_whitespace().collect();
            let lowered: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
            first_verb_position(&lowered)
                .filter(|&p| p > 0)
                .map(|p| words[..p].join(" "))
        });
        clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.trim().is_empty())
            .map(|(i, c)| {
                let c = c.trim();
                let starts_with_verb = lower_tokens(c)
                    .first()
                    .is_some_and(|w| CLAUSE_VERBS.contains(&w.as_str()));
                match (&subject, i > 0 && starts_with_verb) {
                    (Some(subj), true) => finish_clause(&format!("{subj} {c}")),
                    _ => finish_clause(c),
                }
            })
            .collect()
    }
}

impl ClaimSplitter for RuleClaimSplitter {
    fn split(&self, text: &str) -> Result<Vec<AtomicClaim>, SplitError> {
        Ok(split_sentences(text)
            .iter()
            .flat_map(|s| Self::split_sentence(&s.text))
            .enumerate()
            .map(|(index, text)| AtomicClaim { text, index })
            .collect())
    }
}

/// Decomposition prompt sent once per sentence; bump the version tag when editing.
pub const CLAIM_PROMPT_V1: &str = "[claim-split v1] Please break down the following sentence into independent facts. \
Write one fact per line, each line starting with \"- \". Each fact must be a complete, self-contained statement. \
Do not add information that is not in the sentence.\n\nSentence: ";

/// Claim splitter backed by a chat model, with generations cached like samples.
pub struct LlmClaimSplitter {
    provider: Arc<dyn ChatProvider>,
    cache: Arc<GenerationCache>,
    model_id: String,
    prompt: String,
    max_tokens: u32,
    fallback: Option<RuleClaimSplitter>,
}

impl LlmClaimSplitter {
    pub fn new(provider: Arc<dyn ChatProvider>, cache: Arc<GenerationCache>, model_id: impl Into<String>) -> Self {
        LlmClaimSplitter {
            provider,
            cache,
            model_id: model_id.into(),
            prompt: CLAIM_PROMPT_V1.to_string(),
            max_tokens: 256,
            fallback: None,
        }
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = prompt.into();
        self
    }

    /// Use the rule-based splitter when the provider cannot be reached.
    pub fn with_rule_fallback(mut self) -> Self {
        self.fallback = Some(RuleClaimSplitter);
        self
    }

    fn parse(reply: &str) -> Vec<String> {
        reply
            .lines()
            .map(str::trim)
            .filter_map(|l| l.strip_prefix("- ").or_else(|| l.strip_prefix("* ")))
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    }

    fn split_sentence(&self, sentence: &str) -> Result<Vec<String>, SplitError> {
        let request = ChatRequest {
            model: self.model_id.clone(),
            messages: vec![ChatMessage::user(format!("{}{}", self.prompt, sentence))],
            // Lowest temperature the provider contract accepts; decomposition should not be creative.
            temperature: 0.01,
            max_tokens: self.max_tokens,
            logprobs: false,
            seed: None,
            sample_index: 0,
        };
        let key = GenerationCache::key(&request);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(Self::parse(&hit.text));
        }
        let completion = self
            .provider
            .complete(&request)
            .map_err(|e| SplitError::Unavailable(e.to_string()))?;
        self.cache
            .put(&key, "claim-split", &request, &completion)
            .map_err(|e| SplitError::Unavailable(e.to_string()))?;
        let claims = Self::parse(&completion.text);
        Ok(if claims.is_empty() {
            vec![sentence.to_string()]
        } else {
            claims
        })
    }
}

impl ClaimSplitter for LlmClaimSplitter {
    fn split(&self, text: &str) -> Result<Vec<AtomicClaim>, SplitError> {
        let mut texts = Vec::new();
        for s in split_sentences(text) {
            match self.split_sentence(&s.text) {
                Ok(c) => texts.extend(c),
                Err(_) if self.fallback.is_some() => texts.extend(RuleClaimSplitter::split_sentence(&s.text)),
                Err(e) => return Err(e),
            }
        }
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| AtomicClaim { text, index })
            .collect())
    }
}

/// Splits `text` into atomic claims with the given splitter.
pub fn split_atomic(text: &str, splitter: &dyn ClaimSplitter) -> Result<Vec<AtomicClaim>, SplitError> {
    splitter.split(text)
}

/// Unit of comparison for consistency estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Sentence,
    Atomic,
}

/// Produces comparison units for responses, preferring units already stored on the response.
pub struct Decomposer {
    splitter: Box<dyn ClaimSplitter>,
}

impl Default for Decomposer {
    fn default() -> Self {
        Decomposer::new(Box::new(RuleClaimSplitter))
    }
}

impl Decomposer {
    pub fn new(splitter: Box<dyn ClaimSplitter>) -> Self {
        Decomposer { splitter }
    }

    pub fn units(&self, response: &Response, granularity: Granularity) -> Result<Vec<String>, SplitError> {
        match granularity {
            Granularity::Sentence if !response.sentences.is_empty() => {
                Ok(response.sentences.iter().map(|s| s.text.clone()).collect())
            }
            Granularity::Sentence => Ok(split_sentences(&response.text).into_iter().map(|s| s.text).collect()),
            Granularity::Atomic => match &response.atomic_claims {
                Some(claims) => Ok(claims.iter().map(|c| c.text.clone()).collect()),
                None => Ok(self.splitter.split(&response.text)?.into_iter().map(|c| c.text).collect()),
            },
        }
    }
}
