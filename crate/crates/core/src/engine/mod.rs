//! Executable speculation engine: step segmentation, model backends,
//! verifiers, token-level speculative sampling, and the virtual-clock
//! pipelines.

use thiserror::Error;

pub mod backend;
pub mod hash;
pub mod pipeline;
pub mod step;
pub mod token_sd;
pub mod verifier;

/// Engine-side failures: configuration problems, numeric validation, and
/// backend transport errors.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric validation failed: {0}")]
    Numeric(String),

    #[error("transport failure talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
}

pub use backend::{
    make_mock_backends, CompletionRequest, CompletionResponse, EndpointConfig, FinishReason,
    MockBackend, ModelBackend, RemoteBackend, TextCompletion, CORRUPTION_MARKER,
};
pub use pipeline::{
    run_async_pipeline, run_autoregressive_baseline, run_multibranch_cycle, run_sync_cycle,
    run_sync_pipeline, CycleOutcome, GenerationReport, PipelineConfig, TokenSdConfig,
    REPORT_SCHEMA_VERSION,
};
pub use step::{split_steps, StepText, Trace, STEP_BOUNDARY};
pub use token_sd::{
    acceptance_tables, simulate_token_sd_step_cost, token_sd_generate, TableBackend, TokenBackend,
};
pub use verifier::{jaccard_scorer, JudgeVerifier, Scorer, Verifier, JUDGE_PROMPT_TEMPLATE};
