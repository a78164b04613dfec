//! Algorithm-1 execution on a deterministic virtual clock.
//!
//! The scheduler is a single logical thread: backends are invoked in a fixed
//! order and every cost is charged on the virtual clock, so identical
//! (config, corpus, seeds) always yield identical reports. Parallel work
//! (the per-cycle target batch, multi-branch drafting) is charged as the
//! maximum of its members' costs, while a separate compute-units counter
//! accumulates the sum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::ModelBackend;
use super::hash::splitmix64;
use super::step::{StepText, Trace};
use super::token_sd::{acceptance_tables, simulate_token_sd_step_cost};
use super::verifier::Verifier;
use super::EngineError;
use crate::analytics::Mode;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Nested token-level speculation, realized through constructed acceptance
/// tables. When enabled, every generated step's cost is scaled by a simulated
/// token-round factor instead of staying at the flat per-step cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSdConfig {
    /// Tokens covered by the target per token-level round.
    pub k2: u32,
    /// Token acceptance rate realized by the constructed (P, Q) tables.
    pub alpha2: f64,
    /// Draft/target per-token cost ratio.
    pub c2: f64,
    /// Tokens per reasoning step.
    #[serde(default = "default_step_tokens")]
    pub step_tokens: u32,
}

fn default_step_tokens() -> u32 {
    256
}

impl TokenSdConfig {
    pub fn new(k2: u32, alpha2: f64, c2: f64) -> Self {
        TokenSdConfig {
            k2,
            alpha2,
            c2,
            step_tokens: default_step_tokens(),
        }
    }
}

/// Executable configuration for one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Max lookahead steps per cycle.
    pub gamma: u32,
    /// Draft branches per position.
    #[serde(default = "default_width")]
    pub width: u32,
    pub mode: Mode,
    #[serde(default)]
    pub token_sd: Option<TokenSdConfig>,
    /// Cap on the number of generated steps.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_width() -> u32 {
    1
}

fn default_max_steps() -> usize {
    usize::MAX
}

impl PipelineConfig {
    pub fn new(gamma: u32, mode: Mode) -> Self {
        PipelineConfig {
            gamma,
            width: 1,
            mode,
            token_sd: None,
            max_steps: usize::MAX,
            seed: 0,
        }
    }

    pub fn with_width(mut self, width: u32) -> Self {
        self.width = width;
        self
    }

    pub fn with_token_sd(mut self, token_sd: TokenSdConfig) -> Self {
        self.token_sd = Some(token_sd);
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.gamma < 1 {
            return Err(EngineError::Config("gamma must be >= 1".into()));
        }
        if self.width < 1 {
            return Err(EngineError::Config("width must be >= 1".into()));
        }
        if self.max_steps < 1 {
            return Err(EngineError::Config("max_steps must be >= 1".into()));
        }
        if self.mode == Mode::Async && self.width > 1 {
            return Err(EngineError::Config(
                "multi-branch drafting is only defined for sync mode".into(),
            ));
        }
        if let Some(ts) = &self.token_sd {
            if ts.k2 < 1 || ts.step_tokens < 1 {
                return Err(EngineError::Config(
                    "token_sd k2 and step_tokens must be >= 1".into(),
                ));
            }
            if !(ts.alpha2 > 0.0 && ts.alpha2 < 1.0) {
                return Err(EngineError::Config(format!(
                    "token_sd alpha2 must be in (0, 1), got {}",
                    ts.alpha2
                )));
            }
            if !(0.0..1.0).contains(&ts.c2) {
                return Err(EngineError::Config(format!(
                    "token_sd c2 must be in [0, 1), got {}",
                    ts.c2
                )));
            }
        }
        Ok(())
    }
}

/// Record of one speculation cycle (sync) or one acceptance segment (async:
/// the run of accepted drafts up to a rejection, which may span several
/// lookahead rounds, so `j_star` is not bounded by `gamma` there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    /// First unaccepted index; equals the number of accepted draft steps.
    pub j_star: usize,
    /// Accepted drafts followed by the decisive target step. One shorter
    /// than `j_star + 1` only when generation ended inside the cycle.
    pub emitted: Vec<StepText>,
    /// Virtual wall time of the cycle, in units of T.
    pub wall_time: f64,
    /// Total model work charged, in units of T; exceeds `wall_time` whenever
    /// parallel work overlapped.
    pub compute_units: f64,
}

/// Summary of a full generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub schema_version: u32,
    pub output_text: String,
    pub total_wall_time: f64,
    pub total_compute_units: f64,
    pub cycles: Vec<CycleOutcome>,
    /// Accepted verification positions over decided ones; 1.0 by convention
    /// when nothing was proposed (autoregressive baseline).
    pub accept_rate: f64,
    /// Emitted steps times the target step cost, over total wall time.
    pub measured_speedup: f64,
}

/// Per-step cost source: flat backend costs, or backend costs scaled by a
/// simulated nested token-speculation round factor.
struct CostModel {
    nested: Option<NestedSd>,
}

struct NestedSd {
    p: Vec<f64>,
    q: Vec<f64>,
    k2: u32,
    c2: f64,
    step_tokens: u32,
    rng: ChaCha8Rng,
}

impl CostModel {
    fn new(config: &PipelineConfig, salt: u64) -> Result<Self, EngineError> {
        let nested = match &config.token_sd {
            None => None,
            Some(ts) => {
                let (p, q) = acceptance_tables(ts.alpha2)?;
                Some(NestedSd {
                    p,
                    q,
                    k2: ts.k2,
                    c2: ts.c2,
                    step_tokens: ts.step_tokens,
                    rng: ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ salt)),
                })
            }
        };
        Ok(CostModel { nested })
    }

    /// Multiplier applied to one step's base cost.
    fn multiplier(&mut self) -> Result<f64, EngineError> {
        match &mut self.nested {
            None => Ok(1.0),
            Some(sd) => simulate_token_sd_step_cost(
                &sd.p,
                &sd.q,
                sd.k2,
                sd.c2,
                sd.step_tokens,
                &mut sd.rng,
            ),
        }
    }
}

/// Running acceptance tally over verification positions.
#[derive(Default)]
struct AcceptStats {
    accepted: u64,
    decided: u64,
}

impl AcceptStats {
    fn record(&mut self, accepted: bool) {
        self.decided += 1;
        self.accepted += u64::from(accepted);
    }

    fn rate(&self) -> f64 {
        if self.decided == 0 {
            1.0
        } else {
            self.accepted as f64 / self.decided as f64
        }
    }
}

/// One synchronous cycle: the draft proposes up to `gamma` positions
/// sequentially (`width` branches per position, drafted in parallel), the
/// target produces one step per position plus a bonus step, and the first
/// verifier rejection fixes `j_star`. Wall time is `gamma * c1 + 1` exactly:
/// drafting is sequential, the target batch fully parallel, verification
/// free.
pub fn run_sync_cycle(
    config: &PipelineConfig,
    draft: &dyn ModelBackend,
    target: &dyn ModelBackend,
    verifier: &Verifier,
    trace: &Trace,
) -> Result<CycleOutcome, EngineError> {
    config.validate()?;
    if trace.is_done() {
        return Err(EngineError::Config("trace is already finished".into()));
    }
    let mut costs = CostModel::new(config, trace.len() as u64)?;
    let mut stats = AcceptStats::default();
    let mut work = trace.steps().to_vec();
    sync_cycle(config, draft, target, verifier, &mut work, &mut costs, &mut stats)
}

/// Multi-branch drafting wrapper: `config.width` candidates per position,
/// any passing branch accepts the position and the lowest-index passing
/// branch is kept. With `width` 1 this is exactly [`run_sync_cycle`].
pub fn run_multibranch_cycle(
    config: &PipelineConfig,
    draft: &dyn ModelBackend,
    target: &dyn ModelBackend,
    verifier: &Verifier,
    trace: &Trace,
) -> Result<CycleOutcome, EngineError> {
    run_sync_cycle(config, draft, target, verifier, trace)
}

/// Cycle body over a reusable prefix buffer; the buffer is restored to its
/// entry length before returning.
fn sync_cycle(
    config: &PipelineConfig,
    draft: &dyn ModelBackend,
    target: &dyn ModelBackend,
    verifier: &Verifier,
    work: &mut Vec<StepText>,
    costs: &mut CostModel,
    stats: &mut AcceptStats,
) -> Result<CycleOutcome, EngineError> {
    let base = work.len();
    let d = draft.step_cost();
    let t = target.step_cost();

    let mut accepted: Vec<StepText> = Vec::new();
    let mut decisive: Option<StepText> = None;
    let mut rejected = false;
    let mut draft_wall = 0.0;
    let mut target_wall: f64 = 0.0;
    let mut compute = 0.0;
    let mut targets_ran = false;

    let result = (|| -> Result<(), EngineError> {
        for _position in 0..config.gamma {
            let mut candidates: Vec<StepText> = Vec::new();
            let mut branch_wall: f64 = 0.0;
            for b in 0..config.width {
                match draft.generate_step(work, b)? {
                    Some(step) => {
                        let cost = d * costs.multiplier()?;
                        branch_wall = branch_wall.max(cost);
                        compute += cost;
                        candidates.push(step);
                    }
                    None => break,
                }
            }
            if candidates.is_empty() {
                return Ok(());
            }
            draft_wall += branch_wall;

            let Some(target_step) = target.generate_step(work, 0)? else {
                // Target ends here; the candidates cannot be verified.
                return Ok(());
            };
            let cost = t * costs.multiplier()?;
            target_wall = target_wall.max(cost);
            compute += cost;
            targets_ran = true;

            if rejected {
                // Past the first rejection the cycle keeps drafting and
                // verifying only for cost accounting; the chain continues
                // from the draft's own proposal and nothing more is emitted.
                work.push(candidates.swap_remove(0));
                continue;
            }
            let mut kept: Option<usize> = None;
            for (i, candidate) in candidates.iter().enumerate() {
                if verifier.decide(&target_step, candidate)? {
                    kept = Some(i);
                    break;
                }
            }
            stats.record(kept.is_some());
            match kept {
                Some(i) => {
                    let step = candidates.swap_remove(i);
                    accepted.push(step.clone());
                    work.push(step);
                }
                None => {
                    rejected = true;
                    decisive = Some(target_step);
                    work.push(candidates.swap_remove(0));
                }
            }
        }
        if !rejected {
            // Bonus target step conditioned on the full accepted chain.
            if let Some(step) = target.generate_step(work, 0)? {
                let cost = t * costs.multiplier()?;
                target_wall = target_wall.max(cost);
                compute += cost;
                targets_ran = true;
                decisive = Some(step);
            }
        }
        Ok(())
    })();
    work.truncate(base);
    result?;

    let j_star = accepted.len();
    let mut emitted = accepted;
    if let Some(step) = decisive {
        emitted.push(step);
    }
    let wall_time = draft_wall + if targets_ran { target_wall } else { 0.0 };
    Ok(CycleOutcome {
        j_star,
        emitted,
        wall_time,
        compute_units: compute,
    })
}

/// Runs sync cycles until the backends end the generation or `max_steps`
/// is reached.
pub fn run_sync_pipeline(
    config: &PipelineConfig,
    draft: &dyn ModelBackend,
    target: &dyn ModelBackend,
    verifier: &Verifier,
    input: &Trace,
) -> Result<GenerationReport, EngineError> {
    config.validate()?;
    if config.mode != Mode::Sync {
        return Err(EngineError::Config("config mode is not sync".into()));
    }
    if input.is_done() {
        return Err(EngineError::Config("trace is already finished".into()));
    }
    let mut costs = CostModel::new(config, 0)?;
    let mut stats = AcceptStats::default();
    let mut work = input.steps().to_vec();
    let base = work.len();
    let mut cycles: Vec<CycleOutcome> = Vec::new();

    loop {
        let generated = work.len() - base;
        if generated >= config.max_steps {
            break;
        }
        let outcome = sync_cycle(config, draft, target, verifier, &mut work, &mut costs, &mut stats)?;
        let ended = outcome.emitted.len() <= outcome.j_star || outcome.emitted.is_empty();
        let budget = config.max_steps - generated;
        work.extend(outcome.emitted.iter().take(budget).cloned());
        if !outcome.emitted.is_empty() || outcome.wall_time > 0.0 {
            cycles.push(outcome);
        }
        if ended {
            break;
        }
    }
    Ok(assemble_report(
        &work[base..],
        cycles,
        &stats,
        target.step_cost(),
    ))
}

/// Asynchronous pipeline. The draft runs ahead continuously and the target
/// verifies each position as soon as its prefix is available; a rejection
/// cancels everything downstream of it. Per acceptance segment (a run of `X`
/// accepted drafts ending in a rejection), the virtual clock charges
/// `max(T, gamma * c1 * T)` for each completed lookahead round plus
/// `(X mod gamma) * c1 * T + T` for the terminal round, which reduces to
/// `c1 X + 1` target-units once drafting a full round takes at least one
/// target step.
pub fn run_async_pipeline(
    config: &PipelineConfig,
    draft: &dyn ModelBackend,
    target: &dyn ModelBackend,
    verifier: &Verifier,
    input: &Trace,
) -> Result<GenerationReport, EngineError> {
    config.validate()?;
    if config.mode != Mode::Async {
        return Err(EngineError::Config("config mode is not async".into()));
    }
    if input.is_done() {
        return Err(EngineError::Config("trace is already finished".into()));
    }
    let d = draft.step_cost();
    let t = target.step_cost();
    let mut costs = CostModel::new(config, 0)?;
    let mut stats = AcceptStats::default();
    let mut work = input.steps().to_vec();
    let base = work.len();
    let mut cycles: Vec<CycleOutcome> = Vec::new();
    let mut ended = false;

    while !ended && work.len() - base < config.max_steps {
        // One acceptance segment.
        let seg_base = work.len();
        let mut wall = 0.0;
        let mut compute = 0.0;
        let mut round_draft_cost = 0.0;
        let mut round_target_wall: f64 = 0.0;
        let mut round_len = 0u32;
        let mut decisive: Option<StepText> = None;

        loop {
            if work.len() - base >= config.max_steps {
                wall += round_draft_cost + round_target_wall;
                ended = true;
                break;
            }
            let Some(draft_step) = draft.generate_step(&work, 0)? else {
                // Draft exhausted; flush the partial round.
                wall += round_draft_cost + round_target_wall;
                ended = true;
                break;
            };
            let Some(target_step) = target.generate_step(&work, 0)? else {
                // Target ends the generation; the extra draft is discarded.
                wall += round_draft_cost + round_target_wall;
                ended = true;
                break;
            };
            let draft_cost = d * costs.multiplier()?;
            compute += draft_cost;
            let target_cost = t * costs.multiplier()?;
            round_target_wall = round_target_wall.max(target_cost);
            compute += target_cost;

            let accepted = verifier.decide(&target_step, &draft_step)?;
            stats.record(accepted);
            if accepted {
                round_draft_cost += draft_cost;
                round_len += 1;
                work.push(draft_step);
                if round_len == config.gamma {
                    // Completed lookahead round: block verification and its
                    // drafting overlap downstream work.
                    wall += round_target_wall.max(round_draft_cost);
                    round_draft_cost = 0.0;
                    round_target_wall = 0.0;
                    round_len = 0;
                }
            } else {
                // Terminal round: drafting of the accepted run plus the
                // decisive target step, which nothing can hide. The rejected
                // draft itself overlaps that target step.
                wall += round_draft_cost + target_cost;
                decisive = Some(target_step);
                break;
            }
        }

        let j_star = work.len() - seg_base;
        let mut emitted: Vec<StepText> = work[seg_base..].to_vec();
        if let Some(step) = decisive {
            if work.len() - base < config.max_steps {
                work.push(step.clone());
            }
            emitted.push(step);
        }
        let empty = emitted.is_empty();
        if !empty || wall > 0.0 {
            cycles.push(CycleOutcome {
                j_star,
                emitted,
                wall_time: wall,
                compute_units: compute,
            });
        }
        if empty {
            break;
        }
    }
    Ok(assemble_report(
        &work[base..],
        cycles,
        &stats,
        target.step_cost(),
    ))
}

/// Plain target-only generation; the reference both for losslessness checks
/// and for measured speedups. Wall time is one target step cost per step.
pub fn run_autoregressive_baseline(
    target: &dyn ModelBackend,
    input: &Trace,
    max_steps: usize,
) -> Result<GenerationReport, EngineError> {
    if max_steps < 1 {
        return Err(EngineError::Config("max_steps must be >= 1".into()));
    }
    let t = target.step_cost();
    let mut work = input.steps().to_vec();
    let base = work.len();
    let mut cycles: Vec<CycleOutcome> = Vec::new();
    while work.len() - base < max_steps {
        let Some(step) = target.generate_step(&work, 0)? else {
            break;
        };
        work.push(step.clone());
        cycles.push(CycleOutcome {
            j_star: 0,
            emitted: vec![step],
            wall_time: t,
            compute_units: t,
        });
    }
    Ok(assemble_report(
        &work[base..],
        cycles,
        &AcceptStats::default(),
        t,
    ))
}

fn assemble_report(
    generated: &[StepText],
    cycles: Vec<CycleOutcome>,
    stats: &AcceptStats,
    target_cost: f64,
) -> GenerationReport {
    let total_wall_time: f64 = cycles.iter().map(|c| c.wall_time).sum();
    let total_compute_units: f64 = cycles.iter().map(|c| c.compute_units).sum();
    let output_text: String = generated.iter().map(|s| s.text.as_str()).collect();
    let measured_speedup = if total_wall_time > 0.0 {
        generated.len() as f64 * target_cost / total_wall_time
    } else {
        1.0
    };
    GenerationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        output_text,
        total_wall_time,
        total_compute_units,
        cycles,
        accept_rate: stats.rate(),
        measured_speedup,
    }
}
