//! Core library for step-level speculative generation: closed-form speedup
//! models, Monte Carlo estimators for the acceptance process, and an
//! executable speculation engine on a deterministic virtual clock.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod stochastics;

pub use analytics::{
    AllocationResult, GConvention, Mode, Regime, SpecParams, TheoremReport,
};
pub use engine::{
    CycleOutcome, EngineError, GenerationReport, PipelineConfig, StepText, TokenSdConfig, Trace,
    Verifier,
};
pub use error::{Error, Result};
pub use stochastics::{AcceptRun, ExpectationEstimates, MonteCarloEstimate, RngSeed};
