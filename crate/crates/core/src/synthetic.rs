//! A seeded world of fictional people with known biographical facts.
//!
//! Each (model, entity) pair gets a latent factuality `f`. A generated
//! biography states every fact, each one correct with probability `f` and
//! otherwise replaced by a wrong value from the same pool. Low-`f` pairs
//! refuse. Everything is a pure function of the world seed, the model id,
//! the entity and the sample index.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::domain::{FactualityRecord, FrequencyLabel, Query, Response, ResponseSet};
use crate::sampling::{
    bio_prompt, entity_from_bio_prompt, ChatProvider, ChatRequest, Completion, ProviderError,
};

/// Endpoint scheme that selects [`SyntheticProvider`] instead of HTTP.
pub const SYNTHETIC_SCHEME: &str = "synthetic://";

const FIRST_NAMES: &[&str] = &[
    "Mara", "Tobias", "Ilse", "Quentin", "Saskia", "Evander", "Linnea", "Osric", "Rosalind", "Caspian",
    "Imogen", "Lysander", "Thea", "Benedikt", "Odile", "Florian", "Petra", "Anselm", "Greta", "Cyprian",
];
const LAST_NAMES: &[&str] = &[
    "Lindqvist", "Okonkwo", "Varga", "Ashdown", "Morrell", "Halloran", "Strand", "Kestrel", "Duvall",
    "Marchetti", "Thornbury", "Voss", "Abernathy", "Castellan", "Ferreira", "Nakamura", "Pellegrin",
    "Rasmussen", "Sorensen", "Whitlock",
];

struct Template {
    text: &'static str,
    values: &'static [&'static str],
}

const TEMPLATES: &[Template] = &[
    Template {
        text: "{e} was born in {v}.",
        values: &["1921", "1934", "1942", "1947", "1953", "1958", "1961", "1966", "1972", "1979"],
    },
    Template {
        text: "{e} graduated from {v} University.",
        values: &["Harrowgate", "Millbrook", "Eastwick", "Fairhaven", "Oakridge", "Kingsley", "Westmoor", "Brightwater"],
    },
    Template {
        text: "{e} moved to {v} early in their career.",
        values: &["Lisbon", "Toronto", "Melbourne", "Nairobi", "Oslo", "Santiago", "Krakow", "Osaka"],
    },
    Template {
        text: "{e} married {v}, a fellow researcher.",
        values: &["Adrienne", "Bartholomew", "Celestine", "Desmond", "Eleanor", "Fitzgerald", "Genevieve", "Horatio"],
    },
    Template {
        text: "{e} won the {v} Prize for outstanding work.",
        values: &["Halvorsen", "Merriweather", "Lancaster", "Beaumont", "Cartwright", "Ellsworth", "Pemberton", "Rutherford"],
    },
    Template {
        text: "{e} wrote {v}, a widely cited book.",
        values: &["Meridian", "Undertow", "Lanterns", "Cartography", "Driftwood", "Solstice", "Thresholds", "Embers"],
    },
    Template {
        text: "{e} worked at {v} Laboratories for many years.",
        values: &["Corvane", "Helix", "Northgate", "Pinnacle", "Quarry", "Redfern", "Sterling", "Tamarind"],
    },
    Template {
        text: "{e} died in {v}.",
        values: &["1998", "2003", "2007", "2011", "2014", "2016", "2019", "2021"],
    },
];

/// Latent factuality below which every generation refuses.
pub const REFUSAL_THRESHOLD: f64 = 0.12;

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn unit(bytes: [u8; 32]) -> f64 {
    let x = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    (x >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticWorld {
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn new(seed: u64) -> Self {
        SyntheticWorld { seed }
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let seed = self.seed.to_le_bytes();
        let mut all: Vec<&[u8]> = vec![&seed];
        all.extend_from_slice(parts);
        ChaCha8Rng::from_seed(digest(&all))
    }

    /// `count` distinct entity names in a seed-dependent order.
    pub fn entities(&self, count: usize) -> Vec<String> {
        let mut names: Vec<String> = FIRST_NAMES
            .iter()
            .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}")))
            .collect();
        let mut rng = self.rng(&[b"entities"]);
        rand::seq::SliceRandom::shuffle(names.as_mut_slice(), &mut rng);
        assert!(count <= names.len(), "at most {} synthetic entities", names.len());
        names.truncate(count);
        names
    }

    /// How well known the entity is, in [0, 1).
    pub fn popularity(&self, entity: &str) -> f64 {
        unit(digest(&[&self.seed.to_le_bytes(), b"popularity", entity.as_bytes()]))
    }

    pub fn frequency_label(&self, entity: &str) -> FrequencyLabel {
        let p = self.popularity(entity);
        FrequencyLabel::ORDERED[((p * 5.0) as usize).min(4)]
    }

    /// Latent factuality of `model` on `entity`: popularity plus a per-model skill offset and noise.
    pub fn latent_factuality(&self, model: &str, entity: &str) -> f64 {
        let seed = self.seed.to_le_bytes();
        let skill = unit(digest(&[&seed, b"skill", model.as_bytes()])) * 0.3 - 0.15;
        let noise = unit(digest(&[&seed, b"noise", model.as_bytes(), entity.as_bytes()])) * 0.2 - 0.1;
        (self.popularity(entity) + skill + noise).clamp(0.0, 1.0)
    }

    fn true_values(&self, entity: &str) -> Vec<usize> {
        let mut rng = self.rng(&[b"truth", entity.as_bytes()]);
        TEMPLATES.iter().map(|t| rng.random_range(0..t.values.len())).collect()
    }

    pub fn queries(&self, count: usize) -> Vec<Query> {
        self.entities(count)
            .into_iter()
            .enumerate()
            .map(|(i, entity)| Query {
                id: format!("q{:03}", i + 1),
                prompt: bio_prompt(&entity).expect("non-empty entity"),
                frequency_label: self.frequency_label(&entity),
                entity,
            })
            .collect()
    }

    /// One biography at latent factuality `f`, with pseudo token log-probabilities.
    pub fn generate(&self, model: &str, entity: &str, f: f64, sample_index: usize) -> Completion {
        let idx = (sample_index as u64).to_le_bytes();
        let mut rng = self.rng(&[b"sample", model.as_bytes(), entity.as_bytes(), &idx]);
        if f < REFUSAL_THRESHOLD {
            let text = format!("I'm sorry, I do not have reliable information about {entity}.");
            let lp = vec![-0.2; text.split_whitespace().count()];
            return Completion { text, token_logprobs: Some(lp) };
        }
        let truth = self.true_values(entity);
        let mut sentences = Vec::with_capacity(TEMPLATES.len());
        let mut logprobs = Vec::new();
        for (t, &true_idx) in TEMPLATES.iter().zip(&truth) {
            let correct = rng.random_bool(f);
            let value = if correct {
                t.values[true_idx]
            } else {
                let wrong: Vec<&&str> = t.values.iter().enumerate().filter(|(i, _)| *i != true_idx).map(|(_, v)| v).collect();
                *wrong.choose(&mut rng).expect("pools have several values")
            };
            let sentence = t.text.replace("{e}", entity).replace("{v}", value);
            let per_token = if correct { -0.05 - 0.1 * rng.random::<f64>() } else { -0.6 - 0.8 * rng.random::<f64>() };
            logprobs.extend(std::iter::repeat_n(per_token, sentence.split_whitespace().count()));
            sentences.push(sentence);
        }
        Completion { text: sentences.join(" "), token_logprobs: Some(logprobs) }
    }

    /// Fraction of the entity's facts stated correctly in `text`; `None` for a refusal.
    pub fn factuality_of(&self, entity: &str, text: &str) -> Option<(f64, usize)> {
        let truth = self.true_values(entity);
        let mut stated = 0;
        let mut correct = 0;
        for (t, &true_idx) in TEMPLATES.iter().zip(&truth) {
            for (i, v) in t.values.iter().enumerate() {
                if text.contains(&t.text.replace("{e}", entity).replace("{v}", v)) {
                    stated += 1;
                    correct += usize::from(i == true_idx);
                }
            }
        }
        (stated > 0).then(|| (correct as f64 / stated as f64, stated))
    }

    /// Factuality labels for `model`'s main responses, as an external judge would produce them.
    pub fn factuality_records(&self, model: &str, queries: &[Query]) -> Vec<FactualityRecord> {
        queries
            .iter()
            .map(|q| {
                let f = self.latent_factuality(model, &q.entity);
                let main = self.generate(model, &q.entity, f, 0);
                let judged = self.factuality_of(&q.entity, &main.text);
                FactualityRecord {
                    query_id: q.id.clone(),
                    fs: judged.map_or(0.0, |(fs, _)| fs),
                    responded: judged.is_some(),
                    num_facts: judged.map(|(_, n)| n as u32),
                    frequency: Some(q.frequency_label),
                    model_id: Some(model.to_string()),
                }
            })
            .collect()
    }

    /// A response set generated directly at factuality `f`, bypassing any provider.
    pub fn response_set(&self, model: &str, query: &Query, f: f64, n: usize) -> ResponseSet {
        let mut all = (0..=n).map(|i| {
            let c = self.generate(model, &query.entity, f, i);
            let refused = f < REFUSAL_THRESHOLD;
            let mut r = Response::new(c.text);
            r.token_logprobs = c.token_logprobs;
            r.is_refusal = refused;
            r
        });
        let main = all.next().expect("main response");
        ResponseSet {
            query: query.clone(),
            main,
            samples: all.collect(),
            temperature: 1.0,
            model_id: model.to_string(),
        }
    }
}

/// Chat provider answering biography prompts from a [`SyntheticWorld`].
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    world: SyntheticWorld,
}

impl SyntheticProvider {
    pub fn new(world: SyntheticWorld) -> Self {
        SyntheticProvider { world }
    }

    /// Parses `synthetic://<seed>`; a missing seed means 0.
    pub fn from_endpoint(endpoint: &str) -> Option<Self> {
        let rest = endpoint.strip_prefix(SYNTHETIC_SCHEME)?.trim_end_matches('/');
        let seed = if rest.is_empty() { 0 } else { rest.parse().ok()? };
        Some(SyntheticProvider::new(SyntheticWorld::new(seed)))
    }
}

impl ChatProvider for SyntheticProvider {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, ProviderError> {
        let prompt = request
            .messages
            .last()
            .map(|m| m.content.as_str())
            .ok_or_else(|| ProviderError::Rejected { status: 400, body: "no messages".into() })?;
        let entity = entity_from_bio_prompt(prompt)
            .ok_or_else(|| ProviderError::Rejected { status: 400, body: "not a biography prompt".into() })?;
        let f = self.world.latent_factuality(&request.model, entity);
        let mut c = self.world.generate(&request.model, entity, f, request.sample_index);
        if !request.logprobs {
            c.token_logprobs = None;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::ChatMessage;

    #[test]
    fn deterministic_generation() {
        let w = SyntheticWorld::new(7);
        let a = w.generate("m", "Mara Lindqvist", 0.5, 3);
        let b = w.generate("m", "Mara Lindqvist", 0.5, 3);
        assert_eq!(a, b);
        assert_ne!(a.text, w.generate("m", "Mara Lindqvist", 0.5, 4).text);
        assert_eq!(w.entities(20), SyntheticWorld::new(7).entities(20));
    }

    #[test]
    fn perfect_factuality_round_trips() {
        let w = SyntheticWorld::new(1);
        let c = w.generate("m", "Thea Voss", 1.0, 0);
        assert_eq!(w.factuality_of("Thea Voss", &c.text), Some((1.0, TEMPLATES.len())));
        let c = w.generate("m", "Thea Voss", 0.2, 0);
        let (fs, n) = w.factuality_of("Thea Voss", &c.text).unwrap();
        assert_eq!(n, TEMPLATES.len());
        assert!(fs < 1.0);
        assert_eq!(c.token_logprobs.unwrap().len(), c.text.split_whitespace().count());
    }

    #[test]
    fn low_factuality_refuses() {
        let w = SyntheticWorld::new(1);
        let c = w.generate("m", "Thea Voss", 0.05, 0);
        assert!(c.text.starts_with("I'm sorry"));
        assert_eq!(w.factuality_of("Thea Voss", &c.text), None);
    }

    #[test]
    fn provider_answers_bio_prompts() {
        let p = SyntheticProvider::from_endpoint("synthetic://9").unwrap();
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user(bio_prompt("Greta Strand").unwrap())],
            temperature: 0.7,
            max_tokens: 512,
            logprobs: false,
            seed: None,
            sample_index: 2,
        };
        let c = p.complete(&req).unwrap();
        assert!(c.token_logprobs.is_none());
        let w = SyntheticWorld::new(9);
        let f = w.latent_factuality("m", "Greta Strand");
        assert_eq!(c.text, w.generate("m", "Greta Strand", f, 2).text);
        let bad = ChatRequest { messages: vec![ChatMessage::user("hello")], ..req };
        assert!(p.complete(&bad).is_err());
        assert!(SyntheticProvider::from_endpoint("http://x").is_none());
    }

    #[test]
    fn frequency_tracks_popularity() {
        let w = SyntheticWorld::new(3);
        for q in w.queries(50) {
            let p = w.popularity(&q.entity);
            assert_eq!(FrequencyLabel::ORDERED[((p * 5.0) as usize).min(4)], q.frequency_label);
        }
    }
}
