//! Uncertainty of long-form LLM responses from sentence-level cross-sample
//! consistency, with baselines, evaluation against factuality labels,
//! ensembling and selective answering.

pub mod baselines;
pub mod domain;
pub mod entailment;
pub mod estimation;
pub mod eval;
pub mod luq;
pub mod sampling;
pub mod text;
pub mod synthetic;
