//! Token-level speculative sampling over explicit next-token distributions.
//!
//! The rejection-sampling procedure preserves the target distribution
//! exactly: each proposed token is accepted with probability
//! `min(1, P/Q)`, a rejection resamples from the normalized positive part of
//! `P - Q`, and an all-accepted round samples one bonus token from `P`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EngineError;

const DIST_SUM_TOLERANCE: f64 = 1e-9;

/// A token-mode model exposing its next-token distribution.
pub trait TokenBackend {
    fn vocab_size(&self) -> usize;
    fn next_token_dist(&self, prefix: &[u32]) -> Vec<f64>;
}

/// A backend with one fixed next-token distribution at every position.
#[derive(Debug, Clone)]
pub struct TableBackend {
    dist: Vec<f64>,
}

impl TableBackend {
    pub fn new(dist: Vec<f64>) -> Result<Self, EngineError> {
        validate_dist(&dist)?;
        Ok(TableBackend { dist })
    }
}

impl TokenBackend for TableBackend {
    fn vocab_size(&self) -> usize {
        self.dist.len()
    }

    fn next_token_dist(&self, _prefix: &[u32]) -> Vec<f64> {
        self.dist.clone()
    }
}

fn validate_dist(dist: &[f64]) -> Result<(), EngineError> {
    if dist.is_empty() || dist.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(EngineError::Numeric(
            "distribution entries must lie in [0, 1]".into(),
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
        return Err(EngineError::Numeric(format!(
            "distribution sums to {sum}, expected 1 within {DIST_SUM_TOLERANCE}"
        )));
    }
    Ok(())
}

fn sample_from(dist: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        cum += p;
        if u < cum {
            return i as u32;
        }
    }
    (dist.len() - 1) as u32
}

/// Samples from the normalized positive part of `P - Q`.
fn sample_residual(p: &[f64], q: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let residual: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| (pi - qi).max(0.0))
        .collect();
    let total: f64 = residual.iter().sum();
    if total <= 0.0 {
        // P == Q: the residual is empty, any P-sample is exact.
        return sample_from(p, rng);
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &r) in residual.iter().enumerate() {
        cum += r;
        if u < cum {
            return i as u32;
        }
    }
    (residual.len() - 1) as u32
}

/// One speculative round: the draft proposes `k2` tokens from its own
/// distribution and the target keeps the longest accepted prefix, appending a
/// corrected token on rejection or a bonus token after a full accept. Stops
/// early at `boundary_token` or once `max_tokens` are emitted.
pub fn token_sd_generate(
    target: &dyn TokenBackend,
    draft: &dyn TokenBackend,
    k2: u32,
    prefix: &[u32],
    rng: &mut ChaCha8Rng,
    max_tokens: usize,
    boundary_token: Option<u32>,
) -> Result<Vec<u32>, EngineError> {
    if target.vocab_size() != draft.vocab_size() {
        return Err(EngineError::Config(format!(
            "vocabulary mismatch: target {} vs draft {}",
            target.vocab_size(),
            draft.vocab_size()
        )));
    }
    if k2 < 1 {
        return Err(EngineError::Config("k2 must be >= 1".into()));
    }
    let mut out: Vec<u32> = Vec::new();
    let mut context: Vec<u32> = prefix.to_vec();
    'rounds: while out.len() < max_tokens {
        let emit = |tok: u32, out: &mut Vec<u32>, context: &mut Vec<u32>| -> bool {
            out.push(tok);
            context.push(tok);
            out.len() >= max_tokens || Some(tok) == boundary_token
        };
        // Draft proposes k2 tokens autoregressively.
        let mut proposals = Vec::with_capacity(k2 as usize);
        let mut draft_ctx = context.clone();
        for _ in 0..k2 {
            let q = draft.next_token_dist(&draft_ctx);
            validate_dist(&q)?;
            let tok = sample_from(&q, rng);
            proposals.push((tok, q));
            draft_ctx.push(tok);
        }
        // Target processes them sequentially.
        for (tok, q) in &proposals {
            let p = target.next_token_dist(&context);
            validate_dist(&p)?;
            let (pi, qi) = (p[*tok as usize], q[*tok as usize]);
            let accept = qi > 0.0 && rng.random::<f64>() < (pi / qi).min(1.0);
            if accept {
                if emit(*tok, &mut out, &mut context) {
                    break 'rounds;
                }
            } else {
                let corrected = sample_residual(&p, q, rng);
                if emit(corrected, &mut out, &mut context) {
                    break 'rounds;
                }
                continue 'rounds;
            }
        }
        // Full accept: one bonus token from the target distribution.
        let p = target.next_token_dist(&context);
        validate_dist(&p)?;
        let bonus = sample_from(&p, rng);
        if emit(bonus, &mut out, &mut context) {
            break;
        }
    }
    Ok(out)
}

/// A `(P, Q)` table pair over a two-symbol vocabulary whose speculative
/// acceptance probability is exactly `alpha2`: `sum_x min(P, Q) = alpha2`.
pub fn acceptance_tables(alpha2: f64) -> Result<(Vec<f64>, Vec<f64>), EngineError> {
    if !(alpha2 > 0.0 && alpha2 < 1.0) {
        return Err(EngineError::Config(format!(
            "alpha2 must be in (0, 1), got {alpha2}"
        )));
    }
    Ok((vec![1.0, 0.0], vec![alpha2, 1.0 - alpha2]))
}

/// Virtual cost, in T units, of generating one `step_tokens`-long step with
/// nested token speculation, by simulating the acceptance process round by
/// round.
///
/// Each round proposes `k2 - 1` draft tokens and charges
/// `(1 - c2 + c2 k2)` token-times (the convention where `k2` counts the
/// tokens the target covers per round), so the long-run per-step speedup
/// converges to the token-level model `g(k2)`.
pub fn simulate_token_sd_step_cost(
    p: &[f64],
    q: &[f64],
    k2: u32,
    c2: f64,
    step_tokens: u32,
    rng: &mut ChaCha8Rng,
) -> Result<f64, EngineError> {
    validate_dist(p)?;
    validate_dist(q)?;
    if p.len() != q.len() {
        return Err(EngineError::Config("table length mismatch".into()));
    }
    if k2 < 1 || step_tokens < 1 {
        return Err(EngineError::Config(
            "k2 and step_tokens must be >= 1".into(),
        ));
    }
    let round_cost = 1.0 - c2 + c2 * f64::from(k2);
    let proposals = k2 - 1;
    let mut emitted = 0u64;
    let mut rounds = 0u64;
    while emitted < u64::from(step_tokens) {
        rounds += 1;
        let mut accepted_all = true;
        for _ in 0..proposals {
            let tok = sample_from(q, rng);
            let accept_p = if q[tok as usize] > 0.0 {
                (p[tok as usize] / q[tok as usize]).min(1.0)
            } else {
                0.0
            };
            if rng.random::<f64>() < accept_p {
                emitted += 1;
            } else {
                emitted += 1; // corrected token
                accepted_all = false;
                break;
            }
            if emitted >= u64::from(step_tokens) {
                break;
            }
        }
        if accepted_all && emitted < u64::from(step_tokens) {
            emitted += 1; // bonus token
        }
    }
    Ok(rounds as f64 * round_cost / f64::from(step_tokens))
}
