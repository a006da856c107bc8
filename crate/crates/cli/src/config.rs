//! Run configuration: TOML file, environment, then command-line overrides.

use std::path::PathBuf;
use std::time::Duration;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use varm::attrkit::AttrMethod;
use varm::catalog::SynthSpec;
use varm::matchkit::{Endpoint, GenerationParams, RetryPolicy};
use varm::pairforge::{NegativeMix, Sampler, MIN_BUDGET};
use varm::text::{BasicTokenizer, Tokenizer, WhitespaceTokenizer};

pub const ENV_REMOTE_URL: &str = "VARM_REMOTE_URL";
pub const ENV_GENERATIVE_URL: &str = "VARM_GENERATIVE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// Input and output locations. Not part of the config digest.
    pub paths: Paths,
    pub synth: SynthSpec,
    pub pairs: PairsConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub attrs: AttrsConfig,
    pub curve: CurveConfig,
    pub remote: EndpointConfig,
    pub generative: GenerativeConfig,
    pub retry: RetryPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            workers: varm::concurrency::DEFAULT_WORKERS,
            paths: Paths::default(),
            synth: SynthSpec::default(),
            pairs: PairsConfig::default(),
            matching: MatchConfig::default(),
            attrs: AttrsConfig::default(),
            curve: CurveConfig::default(),
            remote: EndpointConfig::default(),
            generative: GenerativeConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub catalog: PathBuf,
    pub pairs: PathBuf,
    pub scores: PathBuf,
    pub attrs: PathBuf,
    pub report: PathBuf,
    pub curve: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            catalog: "catalog.jsonl".into(),
            pairs: "pairs.jsonl".into(),
            scores: "scores.jsonl".into(),
            attrs: "attrs.jsonl".into(),
            report: "report.json".into(),
            curve: "curve.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Informed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsConfig {
    pub sampler: SamplerKind,
    pub mix: NegativeMix,
    /// Negatives drawn per positive pair.
    pub negatives_per_positive: f64,
    /// Train share as `"num/den"`.
    pub ratio: String,
    pub budget: usize,
    pub tokenizer: String,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Informed,
            mix: NegativeMix::default(),
            negatives_per_positive: 1.0,
            ratio: "7/10".into(),
            budget: varm::pairforge::DEFAULT_BUDGET,
            tokenizer: BasicTokenizer::ID.into(),
        }
    }
}

impl PairsConfig {
    pub fn sampler(&self) -> Sampler {
        match self.sampler {
            SamplerKind::Informed => Sampler::Informed(self.mix),
            SamplerKind::Random => Sampler::Random,
        }
    }

    pub fn ratio(&self) -> Result<Ratio<u64>, String> {
        let (n, d) = self.ratio.split_once('/').ok_or("expected \"num/den\"")?;
        let n: u64 = n.trim().parse().map_err(|_| "numerator is not an integer")?;
        let d: u64 = d.trim().parse().map_err(|_| "denominator is not an integer")?;
        if d == 0 || n == 0 || n >= d {
            return Err("must lie strictly between 0 and 1".into());
        }
        Ok(Ratio::new(n, d))
    }

    pub fn tokenizer(&self) -> Option<Box<dyn Tokenizer>> {
        match self.tokenizer.as_str() {
            BasicTokenizer::ID => Some(Box::new(BasicTokenizer)),
            WhitespaceTokenizer::ID => Some(Box::new(WhitespaceTokenizer)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Baseline,
    Oracle,
    Remote,
    Generative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitSel {
    Train,
    Eval,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub backend: BackendKind,
    pub threshold: f64,
    pub batch_size: usize,
    pub split: SplitSel,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Baseline,
            threshold: varm::matchkit::DEFAULT_THRESHOLD,
            batch_size: varm::matchkit::DEFAULT_BATCH_SIZE,
            split: SplitSel::Eval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Heuristic,
    ZeroShot,
    Rag,
}

impl From<MethodKind> for AttrMethod {
    fn from(m: MethodKind) -> Self {
        match m {
            MethodKind::Heuristic => AttrMethod::Heuristic,
            MethodKind::ZeroShot => AttrMethod::ZeroShot,
            MethodKind::Rag => AttrMethod::Rag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttrsConfig {
    pub method: MethodKind,
    /// Keys for the restricted recall column.
    pub recall_keys: Vec<String>,
}

impl Default for AttrsConfig {
    fn default() -> Self {
        Self {
            method: MethodKind::Heuristic,
            recall_keys: vec!["color".into(), "size".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub sizes: Vec<usize>,
    pub backend: BackendKind,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400],
            backend: BackendKind::Baseline,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
}

impl EndpointConfig {
    pub fn endpoint(&self) -> Result<Option<Endpoint>, String> {
        let Some(url) = &self.url else { return Ok(None) };
        let timeout = self
            .timeout_ms
            .map_or(varm::matchkit::DEFAULT_TIMEOUT, Duration::from_millis);
        Endpoint::with_timeout(url.clone(), timeout)
            .map(Some)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerativeConfig {
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub match_params: GenerationParams,
    pub attr_params: GenerationParams,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            url: None,
            timeout_ms: None,
            match_params: GenerationParams::MATCHING,
            attr_params: GenerationParams::ATTRIBUTES,
        }
    }
}

impl GenerativeConfig {
    pub fn endpoint_config(&self) -> EndpointConfig {
        EndpointConfig {
            url: self.url.clone(),
            timeout_ms: self.timeout_ms,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Endpoint URLs from the environment override the file.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_REMOTE_URL) {
            self.remote.url = Some(url);
        }
        if let Some(url) = get(ENV_GENERATIVE_URL) {
            self.generative.url = Some(url);
        }
    }

    /// Every violated field, each as `"field: problem"`.
    pub fn validate(&self, needs: Needs) -> Vec<String> {
        let mut errs = Vec::new();
        if self.workers == 0 {
            errs.push("workers: must be at least 1".to_string());
        }
        if let Err(e) = self.pairs.mix.validate() {
            errs.push(format!("pairs.mix: {e}"));
        }
        if let Err(e) = self.pairs.ratio() {
            errs.push(format!("pairs.ratio: {:?} {e}", self.pairs.ratio));
        }
        if !(self.pairs.negatives_per_positive.is_finite() && self.pairs.negatives_per_positive > 0.0) {
            errs.push("pairs.negatives_per_positive: must be a positive number".into());
        }
        if self.pairs.budget < MIN_BUDGET {
            errs.push(format!("pairs.budget: must be at least {MIN_BUDGET}"));
        }
        if self.pairs.tokenizer().is_none() {
            errs.push(format!(
                "pairs.tokenizer: unknown tokenizer {:?} (expected {} or {})",
                self.pairs.tokenizer,
                BasicTokenizer::ID,
                WhitespaceTokenizer::ID
            ));
        }
        if !(0.0..=1.0).contains(&self.matching.threshold) {
            errs.push("match.threshold: must lie in [0, 1]".into());
        }
        if self.matching.batch_size == 0 {
            errs.push("match.batch_size: must be at least 1".into());
        }
        let (lo, hi) = self.synth.group_size_range;
        if lo < 2 || lo > hi {
            errs.push("synth.group_size_range: need 2 <= min <= max".into());
        }
        if self.retry.max_attempts == 0 {
            errs.push("retry.max_attempts: must be at least 1".into());
        }
        if self.curve.sizes.is_empty() || self.curve.sizes[0] == 0 || self.curve.sizes.windows(2).any(|w| w[0] >= w[1])
        {
            errs.push("curve.sizes: must be positive and strictly ascending".into());
        }
        for (name, cfg) in [("remote", self.remote.clone()), ("generative", self.generative.endpoint_config())] {
            if let Err(e) = cfg.endpoint() {
                errs.push(format!("{name}.url: {e}"));
            }
        }
        if needs.remote && self.remote.url.is_none() {
            errs.push(format!("remote.url: required for the remote backend (or set {ENV_REMOTE_URL})"));
        }
        if needs.generative && self.generative.url.is_none() {
            errs.push(format!(
                "generative.url: required for generative backends (or set {ENV_GENERATIVE_URL})"
            ));
        }
        for (name, p) in [("match_params", &self.generative.match_params), ("attr_params", &self.generative.attr_params)] {
            if p.max_tokens == 0 || !(p.temperature.is_finite() && p.temperature >= 0.0) {
                errs.push(format!("generative.{name}: max_tokens must be positive and temperature non-negative"));
            }
            if p.top_p.is_some_and(|t| !(t > 0.0 && t <= 1.0)) {
                errs.push(format!("generative.{name}.top_p: must lie in (0, 1]"));
            }
        }
        errs
    }

    /// The configuration that the digest covers: everything except paths.
    pub fn digest_view(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("paths");
        v
    }
}

/// Endpoints a command requires.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub remote: bool,
    pub generative: bool,
}

impl Needs {
    pub fn for_backend(b: BackendKind) -> Self {
        Self {
            remote: b == BackendKind::Remote,
            generative: b == BackendKind::Generative,
        }
    }
}
