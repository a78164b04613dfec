//! Closed-form speedup models for step-level and token-level speculation,
//! expectation identities for the acceptance process, and the exhaustive
//! budget-constrained allocation optimizer.
//!
//! All functions here are pure; the Monte Carlo estimators in
//! [`crate::stochastics`] serve as their independent cross-checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptance rates and cost ratios for the two speculation layers.
///
/// `alpha1`/`c1` describe step-level drafting (acceptance probability and
/// draft/target per-step cost ratio), `alpha2`/`c2` the token-level layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SpecParams {
    pub fn new(alpha1: f64, alpha2: f64, c1: f64, c2: f64) -> Result<Self> {
        check_open_unit("alpha1", alpha1)?;
        check_open_unit("alpha2", alpha2)?;
        check_open_unit("c1", c1)?;
        check_open_unit("c2", c2)?;
        Ok(SpecParams {
            alpha1,
            alpha2,
            c1,
            c2,
        })
    }
}

/// Step-level execution discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

/// Which published form of the token-level speedup `g` to evaluate.
///
/// The two forms differ in how the speculation depth is counted: under
/// `Background` the argument is the number of drafted tokens, under
/// `Appendix` it is the number of tokens the target model covers per round.
/// All optimizer and theorem code uses the `Appendix` convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GConvention {
    Background,
    Appendix,
}

/// An integer speculation plan under a parallelism budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Lookahead depth (steps drafted per cycle).
    pub k1: u32,
    /// Tokens covered per token-level round.
    pub k2: u32,
    /// Parallel dimension consumed by the step layer.
    pub parallel_dim_f: u32,
    /// Parallel dimension consumed by the token layer (equals `k2`).
    pub parallel_dim_g: u32,
    /// Predicted combined speedup `h(k1, k2)`.
    pub speedup: f64,
}

/// Which pure/hybrid strategy the sync theorem predicts to be optimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    HybridOptimal,
    TokenOnlyOptimal,
    StepOnlyOptimal,
    Indeterminate,
}

/// Outcome of evaluating the sync hybrid-optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremReport {
    /// Step-level condition: (1+a1)/(1+c1) >= D2(M).
    pub eq_step_level_holds: bool,
    /// Token-level condition: (1+a2)/(1+c2) >= D1(M).
    pub eq_token_level_holds: bool,
    /// Whether the mild parameter constraint (both ratios above 1.157) holds.
    pub preconditions_met: bool,
    pub predicted_regime: Regime,
}

fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(name, v, "open interval (0, 1)"))
    }
}

fn check_ratio_with_zero(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(name, v, "half-open interval [0, 1)"))
    }
}

/// `1 - alpha^k` evaluated through `expm1` so that values stay accurate
/// when `alpha` is close to 1 and `k` is large.
fn one_minus_pow(alpha: f64, k: f64) -> f64 {
    -(k * alpha.ln()).exp_m1()
}

/// Token-level speculative decoding speedup `g`.
///
/// `Background`: `(1 - a^(g+1)) / ((1 - a)(1 + c g))`, defined for `gamma2 >= 0`.
/// `Appendix`:   `(1 - a^g) / ((1 - a)(1 - c + c g))`, defined for `gamma2 >= 1`.
pub fn token_speedup_g(
    alpha2: f64,
    c2: f64,
    gamma2: u32,
    convention: GConvention,
) -> Result<f64> {
    check_open_unit("alpha2", alpha2)?;
    check_ratio_with_zero("c2", c2)?;
    match convention {
        GConvention::Background => {
            let num = one_minus_pow(alpha2, f64::from(gamma2) + 1.0);
            Ok(num / ((1.0 - alpha2) * (1.0 + c2 * f64::from(gamma2))))
        }
        GConvention::Appendix => {
            if gamma2 < 1 {
                return Err(Error::domain(
                    "gamma2",
                    f64::from(gamma2),
                    ">= 1 under the Appendix convention",
                ));
            }
            let g = f64::from(gamma2);
            Ok(one_minus_pow(alpha2, g) / ((1.0 - alpha2) * (1.0 - c2 + c2 * g)))
        }
    }
}

/// Step-level speedup of the synchronous cycle:
/// `(1 - a^k) / ((1 - a)(1 - c + c k))`.
pub fn step_speedup_sync(alpha1: f64, c1: f64, k1: u32) -> Result<f64> {
    check_open_unit("alpha1", alpha1)?;
    check_open_unit("c1", c1)?;
    check_k("k1", k1)?;
    let k = f64::from(k1);
    Ok(one_minus_pow(alpha1, k) / ((1.0 - alpha1) * (1.0 - c1 + c1 * k)))
}

/// Step-level speedup of the asynchronous pipeline.
///
/// Saturated regime (`k1 >= ceil(1/c1)`, the depth limit is inactive):
/// `S1 = 1 / (c1 + (1 - c1)(1 - a))`. Depth-limited regime otherwise:
/// `S2 = (1 - a^k) / ((1 - a) + c1 [a - a^(k+1) - k (1 - a) a^k])`.
pub fn step_speedup_async(alpha1: f64, c1: f64, k1: u32) -> Result<f64> {
    check_open_unit("alpha1", alpha1)?;
    check_open_unit("c1", c1)?;
    check_k("k1", k1)?;
    if u64::from(k1) >= draft_saturation_depth(c1) {
        Ok(1.0 / (c1 + (1.0 - c1) * (1.0 - alpha1)))
    } else {
        let k = f64::from(k1);
        let num = one_minus_pow(alpha1, k);
        let bracket =
            alpha1 - alpha1.powf(k + 1.0) - k * (1.0 - alpha1) * alpha1.powf(k);
        Ok(num / ((1.0 - alpha1) + c1 * bracket))
    }
}

/// `ceil(1/c1)`: the lookahead depth past which async drafting saturates.
pub fn draft_saturation_depth(c1: f64) -> u64 {
    (1.0 / c1).ceil() as u64
}

/// Combined speedup `h(k1, k2) = f(k1) * g(k2)`, with `f` selected by `mode`
/// and `g` under the Appendix convention.
pub fn combined_speedup_h(params: &SpecParams, k1: u32, k2: u32, mode: Mode) -> Result<f64> {
    let f = match mode {
        Mode::Sync => step_speedup_sync(params.alpha1, params.c1, k1)?,
        Mode::Async => step_speedup_async(params.alpha1, params.c1, k1)?,
    };
    let g = token_speedup_g(params.alpha2, params.c2, k2, GConvention::Appendix)?;
    Ok(f * g)
}

/// Parallel dimension consumed by the step layer: `k1` in sync mode,
/// `min(ceil(1/c1), k1)` in async mode.
pub fn parallel_dim_f(c1: f64, k1: u32, mode: Mode) -> Result<u32> {
    check_open_unit("c1", c1)?;
    check_k("k1", k1)?;
    Ok(match mode {
        Mode::Sync => k1,
        Mode::Async => draft_saturation_depth(c1).min(u64::from(k1)) as u32,
    })
}

/// Exhaustive search for the `(k1, k2)` maximizing `h` under the budget
/// `parallel_dim_f(k1) * k2 <= M`.
///
/// Ties are broken toward smaller `k1`, then smaller `k2`, so results are
/// reproducible. The feasible sets are small (a few thousand points at
/// `M <= 256`), so enumeration beats any calculus here.
pub fn optimal_allocation(params: &SpecParams, budget: u32, mode: Mode) -> Result<AllocationResult> {
    if budget < 1 {
        return Err(Error::domain("M", f64::from(budget), ">= 1"));
    }
    let k1_max = match mode {
        Mode::Sync => u64::from(budget),
        Mode::Async => u64::from(budget).max(draft_saturation_depth(params.c1)),
    } as u32;
    let mut best: Option<AllocationResult> = None;
    for k1 in 1..=k1_max {
        let dim_f = parallel_dim_f(params.c1, k1, mode)?;
        if dim_f > budget {
            continue;
        }
        let k2_max = budget / dim_f;
        for k2 in 1..=k2_max {
            let h = combined_speedup_h(params, k1, k2, mode)?;
            let better = match &best {
                None => true,
                Some(b) => h > b.speedup,
            };
            if better {
                best = Some(AllocationResult {
                    k1,
                    k2,
                    parallel_dim_f: dim_f,
                    parallel_dim_g: k2,
                    speedup: h,
                });
            }
        }
    }
    // k1 = k2 = 1 is always feasible at M >= 1.
    Ok(best.expect("feasible set is never empty"))
}

fn check_k(name: &'static str, k: u32) -> Result<()> {
    if k >= 1 {
        Ok(())
    } else {
        Err(Error::domain(name, f64::from(k), ">= 1"))
    }
}

/// The decreasing endpoint function `D_i(M)` used by both sync conditions.
fn condition_rhs(alpha: f64, c: f64, m: f64) -> f64 {
    (1.0 + alpha.powf(m / 2.0)) * (1.0 - c + c * m / 2.0) / (1.0 - c + c * m)
}

/// Threshold of the mild parameter constraint.
pub const MILD_CONSTRAINT_THRESHOLD: f64 = 1.157;

/// Evaluates the sync hybrid-optimality conditions at an even budget `M >= 4`.
///
/// The step-level condition compares `(1+a1)/(1+c1)` against `D2(M)`, the
/// token-level condition `(1+a2)/(1+c2)` against `D1(M)`; both are evaluated
/// as exact inequalities on the computed values. When the mild constraint
/// holds, at least one of the two conditions is guaranteed to hold.
pub fn hybrid_conditions_sync(params: &SpecParams, budget: u32) -> Result<TheoremReport> {
    if budget < 4 {
        return Err(Error::domain("M", f64::from(budget), ">= 4"));
    }
    if budget % 2 != 0 {
        return Err(Error::domain("M", f64::from(budget), "an even number"));
    }
    let m = f64::from(budget);
    let lhs_step = (1.0 + params.alpha1) / (1.0 + params.c1);
    let lhs_token = (1.0 + params.alpha2) / (1.0 + params.c2);
    let eq_step_level_holds = lhs_step >= condition_rhs(params.alpha2, params.c2, m);
    let eq_token_level_holds = lhs_token >= condition_rhs(params.alpha1, params.c1, m);
    let preconditions_met = lhs_step.min(lhs_token) > MILD_CONSTRAINT_THRESHOLD;
    let predicted_regime = if !preconditions_met {
        Regime::Indeterminate
    } else {
        match (eq_step_level_holds, eq_token_level_holds) {
            (true, true) => Regime::HybridOptimal,
            (false, true) => Regime::TokenOnlyOptimal,
            (true, false) => Regime::StepOnlyOptimal,
            // Ruled out under the preconditions; surfaced rather than hidden.
            (false, false) => Regime::Indeterminate,
        }
    };
    Ok(TheoremReport {
        eq_step_level_holds,
        eq_token_level_holds,
        preconditions_met,
        predicted_regime,
    })
}

/// Log-derivative helper `a(alpha, x) = -ln(alpha) * x alpha^x / (1 - alpha^x)`.
///
/// Strictly decreasing in `x` on `[1, inf)` and strictly increasing in
/// `alpha` on the range the theorems use.
pub fn log_derivative_a(alpha: f64, x: f64) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    if !(x.is_finite() && x >= 1.0) {
        return Err(Error::domain("x", x, ">= 1"));
    }
    Ok(-alpha.ln() * x * alpha.powf(x) / one_minus_pow(alpha, x))
}

/// Integer argmax of `g` (Appendix convention) over `1..=gamma_max`.
///
/// Requires `alpha2 > c2`, under which `g` is unimodal over the integers and
/// its maximizer is at least 2.
pub fn token_optimum_gamma(alpha2: f64, c2: f64, gamma_max: u32) -> Result<u32> {
    check_open_unit("alpha2", alpha2)?;
    check_open_unit("c2", c2)?;
    if alpha2 <= c2 {
        return Err(Error::domain("alpha2", alpha2, "> c2"));
    }
    if gamma_max < 2 {
        return Err(Error::domain("gamma_max", f64::from(gamma_max), ">= 2"));
    }
    let mut best = 1;
    let mut best_g = token_speedup_g(alpha2, c2, 1, GConvention::Appendix)?;
    for gamma in 2..=gamma_max {
        let g = token_speedup_g(alpha2, c2, gamma, GConvention::Appendix)?;
        if g > best_g {
            best = gamma;
            best_g = g;
        }
    }
    Ok(best)
}

/// Default search ceiling for [`token_optimum_gamma`]; practical speculation
/// depths sit far below it.
pub const DEFAULT_GAMMA_MAX: u32 = 64;

/// The mild-constraint bound function
/// `F(y) = 2 - y + (y - 2 + 1/y) ln(1 - y)`, strictly below 1.157 on (0, 1).
pub fn mild_constraint_f(y: f64) -> Result<f64> {
    if !(y.is_finite() && y > 0.0 && y < 1.0) {
        return Err(Error::domain("y", y, "open interval (0, 1)"));
    }
    Ok(2.0 - y + (y - 2.0 + 1.0 / y) * (-y).ln_1p())
}

/// `E[X] = alpha / (1 - alpha)` for the geometric accept run.
pub fn expected_accept_run(alpha: f64) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    Ok(alpha / (1.0 - alpha))
}

/// `E[ceil((X + 1) / gamma)] = 1 / (1 - alpha^gamma)`.
pub fn expected_ceil_term(alpha: f64, gamma: u32) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    check_k("gamma", gamma)?;
    Ok(1.0 / one_minus_pow(alpha, f64::from(gamma)))
}

/// `E[X mod gamma] = (a - a^(g+1) - g (1-a) a^g) / ((1-a)(1 - a^g))`;
/// identically zero at `gamma = 1`.
pub fn expected_mod_term(alpha: f64, gamma: u32) -> Result<f64> {
    check_open_unit("alpha", alpha)?;
    check_k("gamma", gamma)?;
    let g = f64::from(gamma);
    let num = alpha - alpha.powf(g + 1.0) - g * (1.0 - alpha) * alpha.powf(g);
    Ok(num / ((1.0 - alpha) * one_minus_pow(alpha, g)))
}
