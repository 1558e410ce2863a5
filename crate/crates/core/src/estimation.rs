//! Shared estimator plumbing and the method dispatcher.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, LexicalSimilarity};
use crate::domain::{Method, Response, ResponseSet, UncertaintyScore};
use crate::entailment::{EntailmentGateway, GatewayError};
use crate::luq::{self, LuqVariant};
use crate::text::{Decomposer, Granularity, SplitError};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("response has no scorable units")]
    EmptyResponse,
    #[error("main response is a refusal; question goes to the penalization path")]
    MainRefused,
    #[error("need at least two usable responses, have {usable}")]
    TooFewResponses { usable: usize },
    #[error("response {index} did not take part in estimation")]
    NotParticipating { index: usize },
    #[error("missing-logprobs: response {index} has no token log-probabilities")]
    MissingLogprobs { index: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("unscorable pairs: {0}")]
    Unscorable(#[from] GatewayError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl EstimationError {
    /// Short machine-readable tag for score files.
    pub fn tag(&self) -> &'static str {
        match self {
            EstimationError::EmptyResponse => "empty-response",
            EstimationError::MainRefused => "main-refused",
            EstimationError::TooFewResponses { .. } => "too-few-responses",
            EstimationError::NotParticipating { .. } => "not-participating",
            EstimationError::MissingLogprobs { .. } => "missing-logprobs",
            EstimationError::NonFinite(_) => "non-finite",
            EstimationError::Unscorable(_) => "unscorable",
            EstimationError::Split(_) => "splitter-unavailable",
            EstimationError::Numerical(_) => "numerical",
        }
    }
}

pub(crate) struct Member<'a> {
    /// Position in R' (0 = main).
    pub index: usize,
    pub response: &'a Response,
    pub units: Vec<String>,
}

/// The responses of a set that take part in estimation: refusals and
/// responses without units are dropped; a refused main response aborts.
pub(crate) struct Pool<'a> {
    members: Vec<Member<'a>>,
}

impl<'a> Pool<'a> {
    pub fn new(rs: &'a ResponseSet, decomposer: &Decomposer, granularity: Granularity) -> Result<Self, EstimationError> {
        if rs.main.is_refusal {
            return Err(EstimationError::MainRefused);
        }
        let mut members = Vec::new();
        for (index, response) in rs.all().into_iter().enumerate() {
            if response.is_refusal {
                continue;
            }
            let units = decomposer.units(response, granularity)?;
            if units.is_empty() {
                if index == 0 {
                    return Err(EstimationError::EmptyResponse);
                }
                continue;
            }
            members.push(Member { index, response, units });
        }
        if members.len() < 2 {
            return Err(EstimationError::TooFewResponses { usable: members.len() });
        }
        Ok(Pool { members })
    }

    /// Whole-response pool for baselines that never look at units.
    pub fn whole(rs: &'a ResponseSet) -> Result<Self, EstimationError> {
        if rs.main.is_refusal {
            return Err(EstimationError::MainRefused);
        }
        if rs.main.text.trim().is_empty() {
            return Err(EstimationError::EmptyResponse);
        }
        let members: Vec<Member<'a>> = rs
            .all()
            .into_iter()
            .enumerate()
            .filter(|(_, r)| !r.is_refusal && !r.text.trim().is_empty())
            .map(|(index, response)| Member {
                index,
                response,
                units: Vec::new(),
            })
            .collect();
        Ok(Pool { members })
    }

    pub fn members(&self) -> &[Member<'a>] {
        &self.members
    }

    pub fn responses(&self) -> Vec<&'a Response> {
        self.members.iter().map(|m| m.response).collect()
    }
}

/// Responses of `rs` used by the whole-response baselines, in R' order.
pub fn usable_responses(rs: &ResponseSet) -> Result<Vec<&Response>, EstimationError> {
    Ok(Pool::whole(rs)?.responses())
}

fn default_threshold() -> f64 {
    0.5
}
fn default_cutoff() -> f64 {
    0.9
}

/// Tunables of the baseline estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Bidirectional entailment probability above which two responses share a semantic set.
    #[serde(default = "default_threshold")]
    pub entail_threshold: f64,
    /// Eigenvalues below this select the eigenvectors used by eccentricity.
    #[serde(default = "default_cutoff")]
    pub eigenvalue_cutoff: f64,
    /// Per-token mean instead of sum for sequence log-likelihoods.
    #[serde(default)]
    pub length_normalize: bool,
    /// Let semantic entropy fall back to cluster sizes without log-probabilities.
    #[serde(default)]
    pub se_count_fallback: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            entail_threshold: default_threshold(),
            eigenvalue_cutoff: default_cutoff(),
            length_normalize: false,
            se_count_fallback: false,
        }
    }
}

pub struct EstimationContext<'a> {
    pub gateway: &'a EntailmentGateway,
    pub decomposer: &'a Decomposer,
    pub lexical: &'a dyn LexicalSimilarity,
    pub config: EstimatorConfig,
}

/// Runs one estimator on one response set.
pub fn estimate(method: Method, rs: &ResponseSet, ctx: &EstimationContext<'_>) -> Result<UncertaintyScore, EstimationError> {
    let cfg = &ctx.config;
    match method {
        Method::Luq => luq::luq_uncertainty(rs, ctx.gateway, ctx.decomposer, LuqVariant::Luq),
        Method::LuqPair => luq::luq_uncertainty(rs, ctx.gateway, ctx.decomposer, LuqVariant::LuqPair),
        Method::LuqAtomic => luq::luq_uncertainty(rs, ctx.gateway, ctx.decomposer, LuqVariant::LuqAtomic),
        Method::SelfcheckNli => luq::selfcheck_nli(rs, ctx.gateway, ctx.decomposer),
        Method::Lexsim => baselines::lexsim_uncertainty(&usable_responses(rs)?, ctx.lexical),
        Method::Numsets => baselines::numsets(&usable_responses(rs)?, ctx.gateway, cfg.entail_threshold),
        Method::Eigv | Method::Deg | Method::Ecc => {
            let responses = usable_responses(rs)?;
            let s = baselines::similarity_matrix(&responses, baselines::SimilarityKind::EntailSym, ctx.gateway, ctx.lexical)?;
            match method {
                Method::Eigv => baselines::eigv_uncertainty(&s),
                Method::Deg => Ok(baselines::deg_uncertainty(&s)),
                _ => baselines::ecc_uncertainty(&s, cfg.eigenvalue_cutoff),
            }
        }
        Method::Msp => baselines::msp(&usable_responses(rs)?),
        Method::Mcse => baselines::mcse(&usable_responses(rs)?, cfg.length_normalize),
        Method::Se => baselines::semantic_entropy(
            &usable_responses(rs)?,
            ctx.gateway,
            cfg.entail_threshold,
            cfg.length_normalize,
            cfg.se_count_fallback,
        ),
    }
}
