//! Model backends: deterministic mock corpus replay for desk-scale runs and
//! an HTTP client for driving real completion servers.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::hash::position_unit;
use super::step::{StepText, STEP_BOUNDARY};
use super::EngineError;

/// A step-producing model with a declared constant per-step virtual cost
/// (in units of the target step time T).
pub trait ModelBackend {
    /// Produces the next step for the given prefix, or `None` at end of
    /// generation. `branch` selects one of the parallel draft branches in
    /// multi-branch mode; single-branch callers pass 0.
    fn generate_step(
        &self,
        prefix: &[StepText],
        branch: u32,
    ) -> Result<Option<StepText>, EngineError>;

    /// Virtual cost of one step, in T units.
    fn step_cost(&self) -> f64;
}

/// Marker appended to corrupted draft steps; guarantees they are never
/// byte-equal to the original.
pub const CORRUPTION_MARKER: &str = " \u{2260}corrupt\u{2260}";

#[derive(Debug, Clone)]
enum Corruption {
    None,
    /// Each (position, branch) independently corrupted with probability `p`,
    /// decided by a stable hash so the outcome does not depend on call order.
    Probability { p: f64, seed: u64 },
    /// Exact (position, branch) pairs to corrupt; used for scripted timing
    /// scenarios.
    Scripted(HashSet<(usize, u32)>),
}

/// Replays a fixed step corpus by position: the step offered for a prefix of
/// length `i` is `corpus[i]`, and prefixes beyond the corpus end the
/// generation.
#[derive(Debug, Clone)]
pub struct MockBackend {
    corpus: Arc<Vec<StepText>>,
    cost: f64,
    corruption: Corruption,
}

impl MockBackend {
    pub fn target(corpus: Arc<Vec<StepText>>) -> Self {
        MockBackend {
            corpus,
            cost: 1.0,
            corruption: Corruption::None,
        }
    }

    pub fn draft(corpus: Arc<Vec<StepText>>, cost: f64, corruption_prob: f64, seed: u64) -> Self {
        MockBackend {
            corpus,
            cost,
            corruption: if corruption_prob == 0.0 {
                Corruption::None
            } else {
                Corruption::Probability {
                    p: corruption_prob,
                    seed,
                }
            },
        }
    }

    /// Draft that corrupts exactly the listed (position, branch) pairs.
    pub fn scripted_draft(
        corpus: Arc<Vec<StepText>>,
        cost: f64,
        corrupt: HashSet<(usize, u32)>,
    ) -> Self {
        MockBackend {
            corpus,
            cost,
            corruption: Corruption::Scripted(corrupt),
        }
    }

    fn corrupts(&self, position: usize, branch: u32) -> bool {
        match &self.corruption {
            Corruption::None => false,
            Corruption::Probability { p, seed } => {
                position_unit(*seed, position as u64, branch) < *p
            }
            Corruption::Scripted(set) => set.contains(&(position, branch)),
        }
    }
}

impl ModelBackend for MockBackend {
    fn generate_step(
        &self,
        prefix: &[StepText],
        branch: u32,
    ) -> Result<Option<StepText>, EngineError> {
        let position = prefix.len();
        let Some(step) = self.corpus.get(position) else {
            return Ok(None);
        };
        if self.corrupts(position, branch) {
            let body = step.trimmed();
            let boundary = &step.text[body.len()..];
            Ok(Some(StepText::new(format!(
                "{body}{CORRUPTION_MARKER}{boundary}"
            ))))
        } else {
            Ok(Some(step.clone()))
        }
    }

    fn step_cost(&self) -> f64 {
        self.cost
    }
}

/// Builds a deterministic target/draft pair over a shared corpus. The draft
/// independently replaces each step with a marked corrupted variant with
/// probability `corruption_prob`, so under exact-match verification the
/// long-run accept rate converges to `1 - corruption_prob`.
pub fn make_mock_backends(
    corpus: Vec<StepText>,
    corruption_prob: f64,
    draft_cost: f64,
    seed: u64,
) -> Result<(MockBackend, MockBackend), EngineError> {
    if corpus.is_empty() {
        return Err(EngineError::Config("corpus must be non-empty".into()));
    }
    if !(0.0..1.0).contains(&corruption_prob) {
        return Err(EngineError::Config(format!(
            "corruption_prob must be in [0, 1), got {corruption_prob}"
        )));
    }
    let corpus = Arc::new(corpus);
    let target = MockBackend::target(corpus.clone());
    let draft = MockBackend::draft(corpus, draft_cost, corruption_prob, seed);
    Ok((target, draft))
}

/// Wire request for the remote completion protocol. Field names are fixed
/// for stub-server interoperability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub seed: u64,
}

/// Wire response for the remote completion protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
}

/// Configuration for a remote completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Full URL of the completion endpoint, e.g. `http://host:port/v1/complete`.
    pub url: String,
    pub max_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Declared per-step cost in T units, from a calibration run.
    #[serde(default = "default_cost")]
    pub step_cost: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_cost() -> f64 {
    1.0
}

/// Plain text completion, used by the LLM-judge verifier.
pub trait TextCompletion {
    fn complete(&self, prompt: &str) -> Result<String, EngineError>;
}

impl<F> TextCompletion for F
where
    F: Fn(&str) -> Result<String, EngineError>,
{
    fn complete(&self, prompt: &str) -> Result<String, EngineError> {
        self(prompt)
    }
}

/// Drives a server speaking the completion wire protocol.
pub struct RemoteBackend {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, EngineError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| EngineError::Transport {
                endpoint: config.url.clone(),
                message: e.to_string(),
            })?;
        Ok(RemoteBackend { config, client })
    }

    fn post(&self, request: &CompletionRequest) -> Result<CompletionResponse, EngineError> {
        let endpoint = &self.config.url;
        let response = self
            .client
            .post(endpoint)
            .json(request)
            .send()
            .map_err(|e| EngineError::Transport {
                endpoint: endpoint.clone(),
                message: e.to_string(),
            })?;
        if !response.status().is_success() {
            return Err(EngineError::Transport {
                endpoint: endpoint.clone(),
                message: format!("HTTP status {}", response.status()),
            });
        }
        response.json().map_err(|e| EngineError::Transport {
            endpoint: endpoint.clone(),
            message: format!("malformed response: {e}"),
        })
    }
}

impl ModelBackend for RemoteBackend {
    fn generate_step(
        &self,
        prefix: &[StepText],
        _branch: u32,
    ) -> Result<Option<StepText>, EngineError> {
        let prompt: String = prefix.iter().map(|s| s.text.as_str()).collect();
        let response = self.post(&CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            stop: vec![STEP_BOUNDARY.to_string()],
            seed: self.config.seed,
        })?;
        if response.text.is_empty() {
            return Ok(None);
        }
        let step = match response.text.find(STEP_BOUNDARY) {
            Some(i) => StepText::new(&response.text[..i + STEP_BOUNDARY.len()]),
            None => StepText {
                text: response.text,
                truncated: response.finish_reason == FinishReason::Length,
            },
        };
        Ok(Some(step))
    }

    fn step_cost(&self) -> f64 {
        self.config.step_cost
    }
}

impl TextCompletion for RemoteBackend {
    fn complete(&self, prompt: &str) -> Result<String, EngineError> {
        let response = self.post(&CompletionRequest {
            prompt: prompt.to_string(),
            max_tokens: self.config.max_tokens,
            stop: Vec::new(),
            seed: self.config.seed,
        })?;
        Ok(response.text)
    }
}
