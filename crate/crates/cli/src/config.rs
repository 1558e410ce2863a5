use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use luq_core::domain::Method;
use luq_core::entailment::GatewayConfig;
use luq_core::estimation::EstimatorConfig;
use luq_core::eval::DEFAULT_GRID;
use luq_core::sampling::{ProviderConfig, RefusalPolicy, DEFAULT_REFUSAL_PATTERNS};
use luq_core::text::Granularity;

use crate::CliError;

fn default_scorer() -> String {
    "mock".into()
}
fn default_methods() -> Vec<Method> {
    vec![Method::Luq]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_primary() -> Method {
    Method::Luq
}
fn default_grid() -> Vec<f64> {
    DEFAULT_GRID.to_vec()
}
fn default_retries() -> u32 {
    3
}
fn default_retry_delay() -> u64 {
    500
}
fn default_scorer_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefusalConfig {
    #[serde(default = "RefusalConfig::default_patterns")]
    pub patterns: Vec<String>,
    #[serde(default = "RefusalConfig::default_min_words")]
    pub min_word_count: usize,
}

impl RefusalConfig {
    fn default_patterns() -> Vec<String> {
        DEFAULT_REFUSAL_PATTERNS.iter().map(|s| s.to_string()).collect()
    }
    fn default_min_words() -> usize {
        25
    }
}

impl Default for RefusalConfig {
    fn default() -> Self {
        RefusalConfig {
            patterns: Self::default_patterns(),
            min_word_count: Self::default_min_words(),
        }
    }
}

/// Everything one run needs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factuality: Option<PathBuf>,
    pub providers: Vec<ProviderConfig>,
    /// `"mock"` or the base URL of an NLI scoring service.
    #[serde(default = "default_scorer")]
    pub scorer: String,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Overrides every provider's `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Overrides every provider's `temperature`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Units stored on each response by the sample stage.
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default = "default_scorer_timeout")]
    pub scorer_timeout_secs: u64,
    #[serde(default)]
    pub refusal: RefusalConfig,
    /// LLM used to split responses into atomic claims; rule-based when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_splitter: Option<ProviderConfig>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_delay")]
    pub retry_base_delay_ms: u64,
    /// Method used for ensembling and frequency buckets.
    #[serde(default = "default_primary")]
    pub primary_method: Method,
    /// Ensemble tie-break order of model ids.
    #[serde(default)]
    pub priority: Vec<String>,
    #[serde(default = "default_grid")]
    pub selective_grid: Vec<f64>,
    /// Min-max scale unbounded methods so that PUS is defined.
    #[serde(default)]
    pub normalize_unbounded: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub methods: Option<Vec<Method>>,
    pub n_samples: Option<usize>,
    pub temperature: Option<f64>,
    pub scorer: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A parsed config with overrides applied, plus where its relative paths point.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// The config file as written.
    pub source: String,
    pub base_dir: PathBuf,
    pub hash: String,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if o.n_samples.is_some() {
            self.n_samples = o.n_samples;
        }
        if o.temperature.is_some() {
            self.temperature = o.temperature;
        }
        if let Some(s) = &o.scorer {
            self.scorer = s.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    /// Providers with the run-level sample count and temperature applied.
    pub fn effective_providers(&self) -> Vec<ProviderConfig> {
        self.providers
            .iter()
            .cloned()
            .map(|mut p| {
                if let Some(n) = self.n_samples {
                    p.n_samples = n;
                }
                if let Some(t) = self.temperature {
                    p.temperature = t;
                }
                p
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.providers.is_empty() {
            return Err(CliError::Config("at least one provider is required".into()));
        }
        let mut ids: Vec<&str> = self.providers.iter().map(|p| p.model_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("provider model ids must be distinct".into()));
        }
        for p in self.effective_providers() {
            p.validate().map_err(|e| CliError::Config(format!("provider {}: {e}", p.model_id)))?;
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods selected".into()));
        }
        self.refusal_policy()?;
        Ok(())
    }

    pub fn refusal_policy(&self) -> Result<RefusalPolicy, CliError> {
        RefusalPolicy::new(self.refusal.patterns.iter().cloned(), self.refusal.min_word_count)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Methods in the configured order, without repeats.
    pub fn methods(&self) -> Vec<Method> {
        let mut seen = Vec::new();
        for &m in &self.methods {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        seen
    }

    /// The config as JSON without the output and cache locations, which do not affect results.
    pub fn canonical(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("out");
            map.remove("cache_dir");
        }
        v
    }

    /// sha256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = RunConfig::from_toml(&source)?;
        config.apply(overrides);
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let hash = config.hash();
        Ok(LoadedConfig { config, source, base_dir, hash })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.out)
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.config.cache_dir.as_deref().map(|p| self.resolve(p))
    }
}
