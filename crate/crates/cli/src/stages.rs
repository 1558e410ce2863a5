use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use luq_core::baselines::LcsF1;
use luq_core::domain::{FactualityRecord, FrequencyLabel, Method, Query, UncertaintyScore};
use luq_core::entailment::{
    EntailmentCache, EntailmentGateway, EntailmentScorer, MockScorer, RemoteScorer,
};
use luq_core::estimation::{estimate, EstimationContext, EstimationError};
use luq_core::eval::{
    correlation_report, ensemble_select, frequency_report, penalized_aggregates, selective_curve,
    Aggregates, CorrelationRow, EnsembleResult, EvalError, FrequencyBucket, JoinedRecord, SelectiveCurve,
};
use luq_core::sampling::{
    bio_prompt, generate_response_set, ChatProvider, GenerationCache, HttpChatProvider, ProviderConfig,
    RetryPolicy, SamplingContext, SamplingError,
};
use luq_core::synthetic::{SyntheticProvider, SYNTHETIC_SCHEME};
use luq_core::text::{
    split_atomic, split_sentences, ClaimSplitter, Decomposer, Granularity, LlmClaimSplitter, RuleClaimSplitter,
};

use crate::output::{file_sha256, read_jsonl, write_csv, write_json, write_jsonl, Header};
use crate::records::{
    DatasetRow, EstimateManifest, Failure, SampleManifest, SampleRecord, ScoreRecord,
};
use crate::{CliError, LoadedConfig, Outcome};

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const SAMPLES_MANIFEST: &str = "samples.manifest.json";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const SCORES_MANIFEST: &str = "scores.manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const SELECTIVE_FILE: &str = "selective.json";
pub const SELECTIVE_CSV: &str = "selective.csv";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const ENSEMBLE_CSV: &str = "ensemble.csv";

fn generation_cache(cfg: &LoadedConfig) -> Result<Arc<GenerationCache>, CliError> {
    Ok(Arc::new(match cfg.cache_dir() {
        Some(dir) => {
            let p = dir.join("generations.jsonl");
            GenerationCache::open(&p).map_err(|e| CliError::io(&p, e))?
        }
        None => GenerationCache::in_memory(),
    }))
}

fn chat_provider(p: &ProviderConfig) -> Result<Arc<dyn ChatProvider>, CliError> {
    if p.endpoint_url.starts_with(SYNTHETIC_SCHEME) {
        return SyntheticProvider::from_endpoint(&p.endpoint_url)
            .map(|s| Arc::new(s) as Arc<dyn ChatProvider>)
            .ok_or_else(|| CliError::Config(format!("bad synthetic endpoint `{}`", p.endpoint_url)));
    }
    let key = if p.api_key_env_var.is_empty() {
        None
    } else {
        Some(std::env::var(&p.api_key_env_var).map_err(|_| {
            CliError::Config(format!("environment variable {} is not set", p.api_key_env_var))
        })?)
    };
    let http = HttpChatProvider::new(&p.endpoint_url, key, p.request_timeout())
        .map_err(|e| CliError::Config(format!("provider {}: {e}", p.model_id)))?;
    Ok(Arc::new(http))
}

fn claim_splitter(cfg: &LoadedConfig, cache: &Arc<GenerationCache>) -> Result<Box<dyn ClaimSplitter>, CliError> {
    match &cfg.config.claim_splitter {
        None => Ok(Box::new(RuleClaimSplitter)),
        Some(p) => {
            let provider = chat_provider(p)?;
            Ok(Box::new(
                LlmClaimSplitter::new(provider, Arc::clone(cache), p.model_id.clone()).with_rule_fallback(),
            ))
        }
    }
}

fn load_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    let (_, rows): (_, Vec<DatasetRow>) = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    rows.into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(CliError::Input(format!("duplicate query id `{}`", r.id)));
            }
            let prompt = match r.prompt {
                Some(p) if !p.trim().is_empty() => p,
                _ => bio_prompt(&r.entity).map_err(|e| CliError::Input(format!("query {}: {e}", r.id)))?,
            };
            Ok(Query { id: r.id, entity: r.entity, prompt, frequency_label: r.frequency_label })
        })
        .collect()
}

/// Draws the main response and samples for every (provider, query) pair.
pub fn cmd_sample(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let c = &cfg.config;
    let dataset = cfg.resolve(&c.dataset);
    let queries = load_queries(&dataset)?;
    if queries.is_empty() {
        return Err(CliError::Input(format!("{}: no queries", dataset.display())));
    }
    let policy = c.refusal_policy()?;
    let cache = generation_cache(cfg)?;
    let splitter = claim_splitter(cfg, &cache)?;
    let retry = RetryPolicy {
        max_retries: c.max_retries,
        base_delay: Duration::from_millis(c.retry_base_delay_ms),
    };
    let providers = c.effective_providers();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut fatal = false;
    'models: for p in &providers {
        let provider = chat_provider(p)?;
        for q in &queries {
            let ctx = SamplingContext {
                config: p,
                policy: &policy,
                provider: provider.as_ref(),
                cache: &cache,
                retry,
                seed: Some(c.seed),
            };
            let fail = |error: String| Failure { model_id: p.model_id.clone(), query_id: q.id.clone(), error };
            match generate_response_set(q, &ctx) {
                Ok(mut rs) => {
                    let mut split_error = None;
                    for r in std::iter::once(&mut rs.main).chain(rs.samples.iter_mut()) {
                        if r.is_refusal {
                            continue;
                        }
                        r.sentences = split_sentences(&r.text);
                        if c.granularity == Granularity::Atomic {
                            match split_atomic(&r.text, splitter.as_ref()) {
                                Ok(claims) => r.atomic_claims = Some(claims),
                                Err(e) => split_error = Some(e.to_string()),
                            }
                        }
                    }
                    match split_error {
                        Some(e) => failures.push(fail(e)),
                        None => records.push(SampleRecord::from_set(rs)),
                    }
                }
                Err(e @ SamplingError::AuthFailure(_)) => {
                    failures.push(fail(e.to_string()));
                    fatal = true;
                    break 'models;
                }
                Err(e) => failures.push(fail(e.to_string())),
            }
        }
    }

    let out = cfg.out_dir();
    write_jsonl(&out.join(SAMPLES_FILE), &Header::new("samples", &cfg.hash), &records)?;
    let outcome = if fatal { Outcome::Fatal } else { Outcome::from_counts(records.len(), failures.len()) };
    let manifest = SampleManifest {
        stage: "sample".into(),
        config_source: cfg.source.clone(),
        effective_config: cfg.config.canonical(),
        dataset_sha256: file_sha256(&dataset)?,
        queries: queries.len(),
        models: providers.iter().map(|p| p.model_id.clone()).collect(),
        records_written: records.len(),
        refusals: records.iter().filter(|r| r.main.is_refusal).count(),
        partial: outcome != Outcome::Success,
        failures,
    };
    write_json(&out.join(SAMPLES_MANIFEST), &Header::new("samples-manifest", &cfg.hash), &manifest)?;
    Ok(outcome)
}

fn entailment_scorer(cfg: &LoadedConfig) -> Result<Box<dyn EntailmentScorer>, CliError> {
    let c = &cfg.config;
    if c.scorer == "mock" {
        return Ok(Box::new(MockScorer::new()));
    }
    RemoteScorer::connect(&c.scorer, Duration::from_secs(c.scorer_timeout_secs))
        .map(|r| Box::new(r) as Box<dyn EntailmentScorer>)
        .map_err(|e| CliError::Fatal(format!("scorer {}: {e}", c.scorer)))
}

/// Scores every sampled question with every configured method.
pub fn cmd_estimate(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let c = &cfg.config;
    let out = cfg.out_dir();
    let samples_path = out.join(SAMPLES_FILE);
    let (_, samples): (_, Vec<SampleRecord>) = read_jsonl(&samples_path)?;
    let scorer = entailment_scorer(cfg)?;
    let nli_cache = match cfg.cache_dir() {
        Some(dir) => {
            let p = dir.join("nli.jsonl");
            EntailmentCache::open(&p).map_err(|e| CliError::io(&p, e))?
        }
        None => EntailmentCache::in_memory(),
    };
    let gateway = EntailmentGateway::new(scorer, nli_cache, c.gateway);
    let gen_cache = generation_cache(cfg)?;
    let decomposer = Decomposer::new(claim_splitter(cfg, &gen_cache)?);
    let ctx = EstimationContext {
        gateway: &gateway,
        decomposer: &decomposer,
        lexical: &LcsF1,
        config: c.estimator,
    };
    let methods = c.methods();

    let mut scores = Vec::with_capacity(samples.len() * methods.len());
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut failed_questions = 0;
    for rec in &samples {
        let rs = rec.to_set();
        let mut question_failed = false;
        for &method in &methods {
            let mut row = ScoreRecord {
                query_id: rec.query_id.clone(),
                model_id: rec.model_id.clone(),
                method,
                bounded01: method.is_bounded01(),
                value: None,
                error: None,
                detail: None,
            };
            match estimate(method, &rs, &ctx) {
                Ok(UncertaintyScore { value, bounded01, .. }) => {
                    row.value = Some(value);
                    row.bounded01 = bounded01;
                }
                Err(e) => {
                    *skipped.entry(e.tag().to_string()).or_default() += 1;
                    if matches!(e, EstimationError::Unscorable(_) | EstimationError::Split(_)) {
                        question_failed = true;
                        failures.push(Failure {
                            model_id: rec.model_id.clone(),
                            query_id: rec.query_id.clone(),
                            error: format!("{method}: {e}"),
                        });
                    }
                    row.error = Some(e.tag().to_string());
                    row.detail = Some(e.to_string());
                }
            }
            scores.push(row);
        }
        failed_questions += usize::from(question_failed);
    }

    write_jsonl(&out.join(SCORES_FILE), &Header::new("scores", &cfg.hash), &scores)?;
    let outcome = Outcome::from_counts(samples.len() - failed_questions, failed_questions);
    let manifest = EstimateManifest {
        stage: "estimate".into(),
        config_source: cfg.source.clone(),
        effective_config: cfg.config.canonical(),
        samples_sha256: file_sha256(&samples_path)?,
        scorer_id: gateway.scorer_id().to_string(),
        counters: gateway.counters(),
        scores_written: scores.len(),
        skipped,
        partial: outcome != Outcome::Success,
        failures,
    };
    write_json(&out.join(SCORES_MANIFEST), &Header::new("scores-manifest", &cfg.hash), &manifest)?;
    Ok(outcome)
}

/// Scores joined with factuality labels, one list per model.
pub struct Joined {
    pub per_model: BTreeMap<String, Vec<JoinedRecord>>,
    /// (model, query) → method → failure tag.
    pub errors: BTreeMap<(String, String), BTreeMap<Method, String>>,
    pub unmatched: usize,
}

fn factuality_path(cfg: &LoadedConfig) -> Result<PathBuf, CliError> {
    cfg.config
        .factuality
        .as_deref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| CliError::Config("`factuality` must name the factuality file for evaluation".into()))
}

/// Inner join of `scores.jsonl` and the factuality file on query id. A
/// factuality record with a model id applies to that model only and wins
/// over one without.
pub fn load_joined(cfg: &LoadedConfig) -> Result<Joined, CliError> {
    let (_, scores): (_, Vec<ScoreRecord>) = read_jsonl(&cfg.out_dir().join(SCORES_FILE))?;
    let (_, facts): (_, Vec<FactualityRecord>) = read_jsonl(&factuality_path(cfg)?)?;
    let mut specific: BTreeMap<(String, String), FactualityRecord> = BTreeMap::new();
    let mut generic: BTreeMap<String, FactualityRecord> = BTreeMap::new();
    for f in facts {
        if !(0.0..=1.0).contains(&f.fs) {
            return Err(CliError::Input(format!("factuality for {} outside [0, 1]", f.query_id)));
        }
        match &f.model_id {
            Some(m) => {
                specific.insert((m.clone(), f.query_id.clone()), f);
            }
            None => {
                generic.insert(f.query_id.clone(), f);
            }
        }
    }

    let mut order: Vec<(String, String)> = Vec::new();
    let mut by_key: BTreeMap<(String, String), BTreeMap<Method, UncertaintyScore>> = BTreeMap::new();
    let mut errors: BTreeMap<(String, String), BTreeMap<Method, String>> = BTreeMap::new();
    for s in scores {
        let key = (s.model_id.clone(), s.query_id.clone());
        if !by_key.contains_key(&key) {
            order.push(key.clone());
            by_key.insert(key.clone(), BTreeMap::new());
        }
        match (s.value, s.error) {
            (Some(v), _) => {
                by_key.get_mut(&key).expect("inserted").insert(
                    s.method,
                    UncertaintyScore { method: s.method, value: v, bounded01: s.bounded01 },
                );
            }
            (None, err) => {
                errors.entry(key).or_default().insert(s.method, err.unwrap_or_else(|| "missing".into()));
            }
        }
    }

    let mut per_model: BTreeMap<String, Vec<JoinedRecord>> = BTreeMap::new();
    let mut unmatched = 0;
    for key in order {
        let fact = specific.get(&key).or_else(|| generic.get(&key.1));
        let Some(fact) = fact else {
            unmatched += 1;
            continue;
        };
        let (model_id, query_id) = key.clone();
        per_model.entry(model_id.clone()).or_default().push(JoinedRecord {
            query_id,
            model_id,
            scores: by_key.remove(&key).unwrap_or_default(),
            frequency: fact.frequency.unwrap_or(FrequencyLabel::Unknown),
            factuality: fact.clone(),
        });
    }
    if per_model.is_empty() {
        return Err(CliError::Fatal("join-empty: no scored question has a factuality record".into()));
    }
    Ok(Joined { per_model, errors, unmatched })
}

#[derive(Debug, Serialize)]
pub struct PerQuestion {
    pub model_id: String,
    pub query_id: String,
    pub responded: bool,
    pub fs: f64,
    pub frequency: FrequencyLabel,
    pub scores: BTreeMap<Method, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<Method, String>,
}

#[derive(Debug, Serialize)]
pub struct AggregateEntry {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct CurveEntry {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<SelectiveCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub models: Vec<String>,
    pub methods: Vec<Method>,
    pub primary_method: Method,
    pub unmatched_questions: usize,
    pub per_question: Vec<PerQuestion>,
    pub correlations: BTreeMap<String, Vec<CorrelationRow>>,
    pub aggregates: BTreeMap<String, Vec<AggregateEntry>>,
    pub frequency: BTreeMap<String, Vec<FrequencyBucket>>,
    pub selective_curves: BTreeMap<String, Vec<CurveEntry>>,
    pub ensemble: Option<EnsembleResult>,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    model_id: &'a str,
    query_id: &'a str,
    method: Method,
    fs: f64,
    us: f64,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    model_id: &'a str,
    method: Method,
    percentile: f64,
    dropped: usize,
    retained: usize,
    fs: f64,
    us: f64,
}

#[derive(Serialize)]
struct EnsembleRow<'a> {
    query_id: &'a str,
    model_id: &'a str,
    uncertainty: f64,
    responded: bool,
}

fn curves(cfg: &LoadedConfig, joined: &Joined, methods: &[Method]) -> BTreeMap<String, Vec<CurveEntry>> {
    joined
        .per_model
        .iter()
        .map(|(model, recs)| {
            let entries = methods
                .iter()
                .map(|&method| match selective_curve(recs, method, &cfg.config.selective_grid) {
                    Ok(curve) => CurveEntry { method, curve: Some(curve), note: None },
                    Err(e) => CurveEntry { method, curve: None, note: Some(e.to_string()) },
                })
                .collect();
            (model.clone(), entries)
        })
        .collect()
}

fn write_curves(cfg: &LoadedConfig, curves: &BTreeMap<String, Vec<CurveEntry>>, kind: &str) -> Result<(), CliError> {
    let rows: Vec<CurveRow> = curves
        .iter()
        .flat_map(|(model, entries)| {
            entries.iter().filter_map(|e| e.curve.as_ref()).flat_map(move |c| {
                c.points.iter().map(move |p| CurveRow {
                    model_id: model,
                    method: c.method,
                    percentile: p.percentile,
                    dropped: p.dropped,
                    retained: p.retained,
                    fs: p.fs,
                    us: p.us,
                })
            })
        })
        .collect();
    write_csv(&cfg.out_dir().join(SELECTIVE_CSV), &Header::new(kind, &cfg.hash), &rows)
}

fn ensemble(cfg: &LoadedConfig, joined: &Joined) -> Result<EnsembleResult, EvalError> {
    ensemble_select(&joined.per_model, cfg.config.primary_method, &cfg.config.priority)
}

fn write_ensemble_csv(cfg: &LoadedConfig, e: &EnsembleResult, kind: &str) -> Result<(), CliError> {
    let rows: Vec<EnsembleRow> = e
        .choices
        .iter()
        .map(|c| EnsembleRow {
            query_id: &c.query_id,
            model_id: &c.model_id,
            uncertainty: c.uncertainty,
            responded: c.responded,
        })
        .collect();
    write_csv(&cfg.out_dir().join(ENSEMBLE_CSV), &Header::new(kind, &cfg.hash), &rows)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Fail unless an ensemble over at least two models can be formed.
    pub require_ensemble: bool,
    /// Fail unless every selective curve can be computed.
    pub require_selective: bool,
}

/// Joins scores with factuality and writes the report and CSV exports.
pub fn cmd_eval(cfg: &LoadedConfig, opts: EvalOptions) -> Result<Outcome, CliError> {
    let c = &cfg.config;
    let joined = load_joined(cfg)?;
    let methods = c.methods();
    let mut notes = Vec::new();
    if joined.unmatched > 0 {
        notes.push(format!("{} scored question(s) lack a factuality record and were left out", joined.unmatched));
    }

    let per_question = joined
        .per_model
        .values()
        .flatten()
        .map(|r| PerQuestion {
            model_id: r.model_id.clone(),
            query_id: r.query_id.clone(),
            responded: r.responded(),
            fs: r.factuality.fs,
            frequency: r.frequency,
            scores: r.scores.iter().map(|(m, s)| (*m, s.value)).collect(),
            errors: joined
                .errors
                .get(&(r.model_id.clone(), r.query_id.clone()))
                .cloned()
                .unwrap_or_default(),
        })
        .collect();

    let correlations = joined
        .per_model
        .iter()
        .map(|(m, recs)| (m.clone(), correlation_report(recs, &methods)))
        .collect();

    let aggregates = joined
        .per_model
        .iter()
        .map(|(model, recs)| {
            let entries = methods
                .iter()
                .map(|&method| match penalized_aggregates(recs, method, c.normalize_unbounded) {
                    Ok(a) => AggregateEntry { method, aggregates: Some(a), note: None },
                    Err(e) => AggregateEntry { method, aggregates: None, note: Some(e.to_string()) },
                })
                .collect();
            (model.clone(), entries)
        })
        .collect();

    let mut frequency = BTreeMap::new();
    for (model, recs) in &joined.per_model {
        match frequency_report(recs, c.primary_method) {
            Ok(b) => {
                frequency.insert(model.clone(), b);
            }
            Err(e) => notes.push(format!("frequency report for {model}: {e}")),
        }
    }

    let selective_curves = curves(cfg, &joined, &methods);
    if opts.require_selective {
        if let Some(e) = selective_curves.values().flatten().find(|e| e.curve.is_none()) {
            return Err(CliError::Fatal(format!(
                "selective curve for {}: {}",
                e.method,
                e.note.as_deref().unwrap_or("unavailable")
            )));
        }
    }

    let ensemble = if joined.per_model.len() >= 2 {
        match ensemble(cfg, &joined) {
            Ok(e) => Some(e),
            Err(e) if opts.require_ensemble => return Err(CliError::Fatal(format!("ensemble: {e}"))),
            Err(e) => {
                notes.push(format!("ensemble: {e}"));
                None
            }
        }
    } else if opts.require_ensemble {
        return Err(CliError::Fatal("ensemble needs at least two models".into()));
    } else {
        None
    };

    let report = Report {
        models: joined.per_model.keys().cloned().collect(),
        methods: methods.clone(),
        primary_method: c.primary_method,
        unmatched_questions: joined.unmatched,
        per_question,
        correlations,
        aggregates,
        frequency,
        selective_curves,
        ensemble,
        notes,
    };

    let out = cfg.out_dir();
    write_json(&out.join(REPORT_FILE), &Header::new("report", &cfg.hash), &report)?;
    let scatter: Vec<ScatterRow> = joined
        .per_model
        .values()
        .flatten()
        .filter(|r| r.responded())
        .flat_map(|r| {
            r.scores.values().map(move |s| ScatterRow {
                model_id: &r.model_id,
                query_id: &r.query_id,
                method: s.method,
                fs: r.factuality.fs,
                us: s.value,
            })
        })
        .collect();
    write_csv(&out.join(SCATTER_CSV), &Header::new("scatter", &cfg.hash), &scatter)?;
    write_curves(cfg, &report.selective_curves, "selective")?;
    if let Some(e) = &report.ensemble {
        write_ensemble_csv(cfg, e, "ensemble")?;
    }
    Ok(Outcome::Success)
}

/// Per-question selection of the least uncertain model under the primary method.
pub fn cmd_ensemble(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let joined = load_joined(cfg)?;
    if joined.per_model.len() < 2 {
        return Err(CliError::Fatal("ensemble needs at least two models".into()));
    }
    let e = ensemble(cfg, &joined).map_err(|e| CliError::Fatal(format!("ensemble: {e}")))?;
    write_json(&cfg.out_dir().join(ENSEMBLE_FILE), &Header::new("ensemble", &cfg.hash), &e)?;
    write_ensemble_csv(cfg, &e, "ensemble")?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SelectiveDoc {
    grid: Vec<f64>,
    curves: BTreeMap<String, Vec<CurveEntry>>,
}

/// Selective answering curves for every model and method.
pub fn cmd_select(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let joined = load_joined(cfg)?;
    let doc = SelectiveDoc {
        grid: cfg.config.selective_grid.clone(),
        curves: curves(cfg, &joined, &cfg.config.methods()),
    };
    write_json(&cfg.out_dir().join(SELECTIVE_FILE), &Header::new("selective", &cfg.hash), &doc)?;
    write_curves(cfg, &doc.curves, "selective")?;
    let any_missing = doc.curves.values().flatten().any(|e| e.curve.is_none());
    Ok(if any_missing { Outcome::Partial } else { Outcome::Success })
}
