//! Monte Carlo estimation of the acceptance process.
//!
//! These estimators are the brute-force oracles for the closed forms in
//! [`crate::analytics`]: the sampler counts Bernoulli trials directly instead
//! of inverting a geometric CDF, so the simulation path shares no algebra
//! with the formulas it validates.
//!
//! Determinism contract: every estimate is a pure function of
//! `(seed, parameters, n)`. Draws are organized in fixed-size batches and
//! batch `b` uses the ChaCha8 stream `(seed, b)`, so replications could be
//! fanned out across workers without changing any result.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::draft_saturation_depth;
use crate::error::{Error, Result};

/// Seed for the documented PRNG (ChaCha8 with per-batch streams).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

/// Count of consecutively accepted drafts before the first rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptRun {
    pub x: u64,
}

/// A Monte Carlo mean with its plain standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// The three per-stage expectations estimated by [`mc_expectations`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationEstimates {
    /// E[X]
    pub accept_run: MonteCarloEstimate,
    /// E[ceil((X + 1) / gamma)]
    pub ceil_term: MonteCarloEstimate,
    /// E[X mod gamma]
    pub mod_term: MonteCarloEstimate,
}

/// Replications per PRNG stream.
const BATCH: u64 = 1 << 16;

/// RNG for batch `index` of the stream family rooted at `seed`.
pub fn batch_rng(seed: RngSeed, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(index.into());
    rng
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "open interval (0, 1)"))
    }
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("c1", c, "open interval (0, 1)"))
    }
}

fn check_positive(name: &'static str, v: u64) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::domain(name, v as f64, ">= 1"))
    }
}

/// Draws one accept run by counting independent Bernoulli(alpha) successes.
pub fn sample_accept_run(rng: &mut ChaCha8Rng, alpha: f64) -> Result<AcceptRun> {
    check_alpha(alpha)?;
    let mut x = 0;
    while rng.random::<f64>() < alpha {
        x += 1;
    }
    Ok(AcceptRun { x })
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn estimate(&self) -> MonteCarloEstimate {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        MonteCarloEstimate {
            mean: self.mean,
            stderr: (var / self.n as f64).sqrt(),
            n: self.n,
        }
    }
}

fn for_each_replication(seed: RngSeed, n: u64, mut body: impl FnMut(&mut ChaCha8Rng)) {
    let mut done = 0;
    let mut batch = 0;
    while done < n {
        let take = BATCH.min(n - done);
        let mut rng = batch_rng(seed, batch);
        for _ in 0..take {
            body(&mut rng);
        }
        done += take;
        batch += 1;
    }
}

/// Simulates synchronous cycles and estimates the per-cycle speedup.
///
/// Each cycle draws `k1` Bernoulli accept decisions, truncates the accepted
/// prefix at `k1 - 1`, emits `m + 1` steps, and charges the fixed wall cost
/// `1 - c1 + c1 k1`. The mean converges to `step_speedup_sync`.
pub fn mc_sync_speedup(
    alpha1: f64,
    c1: f64,
    k1: u32,
    n_cycles: u64,
    seed: RngSeed,
) -> Result<MonteCarloEstimate> {
    check_alpha(alpha1)?;
    check_c(c1)?;
    check_positive("k1", u64::from(k1))?;
    check_positive("n_cycles", n_cycles)?;
    let wall = 1.0 - c1 + c1 * f64::from(k1);
    let cap = u64::from(k1) - 1;
    let mut acc = Accumulator::default();
    for_each_replication(seed, n_cycles, |rng| {
        let mut leading = 0;
        let mut unbroken = true;
        for _ in 0..k1 {
            let accepted = rng.random::<f64>() < alpha1;
            if unbroken && accepted {
                leading += 1;
            } else {
                unbroken = false;
            }
        }
        let emitted = leading.min(cap) + 1;
        acc.push(emitted as f64 / wall);
    });
    Ok(acc.estimate())
}

/// Simulates asynchronous stages and estimates the long-run speedup.
///
/// Each stage draws an unbounded accept run `X`, emits `1 + X` steps, and
/// charges wall time `1 + c1 X` in the saturated regime or
/// `ceil((X+1)/k1) + c1 (X mod k1)` in the depth-limited one. The mean is the
/// ratio of totals; the standard error comes from the delta method applied to
/// the per-stage residuals.
pub fn mc_async_speedup(
    alpha1: f64,
    c1: f64,
    k1: u32,
    n_stages: u64,
    seed: RngSeed,
) -> Result<MonteCarloEstimate> {
    check_alpha(alpha1)?;
    check_c(c1)?;
    check_positive("k1", u64::from(k1))?;
    check_positive("n_stages", n_stages)?;
    let saturated = u64::from(k1) >= draft_saturation_depth(c1);
    let gamma = u64::from(k1);
    let (mut sum_s, mut sum_w) = (0.0f64, 0.0f64);
    let (mut sum_ss, mut sum_ww, mut sum_sw) = (0.0f64, 0.0f64, 0.0f64);
    for_each_replication(seed, n_stages, |rng| {
        let mut x = 0u64;
        while rng.random::<f64>() < alpha1 {
            x += 1;
        }
        let s = (1 + x) as f64;
        let w = if saturated {
            1.0 + c1 * x as f64
        } else {
            ((x + 1).div_ceil(gamma)) as f64 + c1 * (x % gamma) as f64
        };
        sum_s += s;
        sum_w += w;
        sum_ss += s * s;
        sum_ww += w * w;
        sum_sw += s * w;
    });
    let n = n_stages as f64;
    let mean = sum_s / sum_w;
    let mean_w = sum_w / n;
    // Var(s - R w) expanded from the raw sums.
    let var_s = (sum_ss - sum_s * sum_s / n) / (n - 1.0).max(1.0);
    let var_w = (sum_ww - sum_w * sum_w / n) / (n - 1.0).max(1.0);
    let cov = (sum_sw - sum_s * sum_w / n) / (n - 1.0).max(1.0);
    let var_resid = (var_s - 2.0 * mean * cov + mean * mean * var_w).max(0.0);
    Ok(MonteCarloEstimate {
        mean,
        stderr: (var_resid / n).sqrt() / mean_w,
        n: n_stages,
    })
}

/// Empirical means of `X`, `ceil((X+1)/gamma)`, and `X mod gamma`.
pub fn mc_expectations(
    alpha: f64,
    gamma: u32,
    n: u64,
    seed: RngSeed,
) -> Result<ExpectationEstimates> {
    check_alpha(alpha)?;
    check_positive("gamma", u64::from(gamma))?;
    check_positive("n", n)?;
    let g = u64::from(gamma);
    let mut run = Accumulator::default();
    let mut ceil = Accumulator::default();
    let mut modt = Accumulator::default();
    for_each_replication(seed, n, |rng| {
        let mut x = 0u64;
        while rng.random::<f64>() < alpha {
            x += 1;
        }
        run.push(x as f64);
        ceil.push(((x + 1).div_ceil(g)) as f64);
        modt.push((x % g) as f64);
    });
    Ok(ExpectationEstimates {
        accept_run: run.estimate(),
        ceil_term: ceil.estimate(),
        mod_term: modt.estimate(),
    })
}

/// Estimates the per-position acceptance probability with `w` independent
/// draft branches: a position is accepted when any branch matches, so the
/// estimate converges to `1 - (1 - alpha)^w`.
///
/// The independence across branches is a modeling assumption; no joint
/// distribution of branch matches is available.
pub fn mc_multibranch_accept(
    alpha_branch: f64,
    w: u32,
    n: u64,
    seed: RngSeed,
) -> Result<MonteCarloEstimate> {
    check_alpha(alpha_branch)?;
    check_positive("W", u64::from(w))?;
    check_positive("n", n)?;
    let mut acc = Accumulator::default();
    for_each_replication(seed, n, |rng| {
        let mut any = false;
        for _ in 0..w {
            // Draw all branches so the stream shape is position-independent.
            if rng.random::<f64>() < alpha_branch {
                any = true;
            }
        }
        acc.push(if any { 1.0 } else { 0.0 });
    });
    Ok(acc.estimate())
}
