//! Step verification strategies.
//!
//! Every strategy is a pure decision on `(target_step, draft_step)` given
//! its configuration: even the random-acceptance verifier derives its coin
//! from a stable hash of the step contents, so decisions do not depend on
//! call order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::backend::TextCompletion;
use super::hash::{fnv1a, splitmix64, unit_interval};
use super::step::StepText;
use super::EngineError;

/// The judge prompt template shipped with the crate. Two placeholder slots,
/// `{s1}` for the target step and `{s2}` for the draft step.
pub const JUDGE_PROMPT_TEMPLATE: &str = include_str!("../../assets/judge_prompt.txt");

/// Score function used by [`Verifier::ScoreThreshold`].
pub type Scorer = Arc<dyn Fn(&StepText, &StepText) -> f64 + Send + Sync>;

/// A draft-step acceptance decision procedure.
pub enum Verifier {
    /// Byte equality after trimming trailing boundary markers.
    ExactMatch,
    /// Jaccard similarity of token n-gram sets against a threshold; a cheap
    /// stand-in for embedding similarity with the same threshold interface.
    NgramSimilarity { n: usize, threshold: f64 },
    /// Accept with probability `p`, hashed from the step pair and seed.
    RandomAccept { p: f64, seed: u64 },
    /// Accept when `scorer(target, draft)` reaches the threshold on the 0-9
    /// scale.
    ScoreThreshold { scorer: Scorer, threshold: f64 },
    /// Renders the judge prompt and accepts when the backend's reply begins
    /// with "ali".
    Judge(JudgeVerifier),
}

impl std::fmt::Debug for Verifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verifier::ExactMatch => write!(f, "ExactMatch"),
            Verifier::NgramSimilarity { n, threshold } => {
                write!(f, "NgramSimilarity(n={n}, threshold={threshold})")
            }
            Verifier::RandomAccept { p, .. } => write!(f, "RandomAccept(p={p})"),
            Verifier::ScoreThreshold { threshold, .. } => {
                write!(f, "ScoreThreshold(threshold={threshold})")
            }
            Verifier::Judge(_) => write!(f, "Judge"),
        }
    }
}

impl Verifier {
    pub fn decide(&self, target_step: &StepText, draft_step: &StepText) -> Result<bool, EngineError> {
        match self {
            Verifier::ExactMatch => Ok(target_step.trimmed() == draft_step.trimmed()),
            Verifier::NgramSimilarity { n, threshold } => {
                Ok(ngram_jaccard(target_step, draft_step, *n) >= *threshold)
            }
            Verifier::RandomAccept { p, seed } => {
                let h = splitmix64(
                    seed ^ fnv1a(target_step.trimmed().as_bytes())
                        ^ splitmix64(fnv1a(draft_step.trimmed().as_bytes())),
                );
                Ok(unit_interval(h) < *p)
            }
            Verifier::ScoreThreshold { scorer, threshold } => {
                Ok(scorer(target_step, draft_step) >= *threshold)
            }
            Verifier::Judge(judge) => judge.decide(target_step, draft_step),
        }
    }
}

/// Built-in scorer: token Jaccard similarity scaled to the 0-9 range.
pub fn jaccard_scorer() -> Scorer {
    Arc::new(|target, draft| 9.0 * ngram_jaccard(target, draft, 1))
}

fn ngram_jaccard(a: &StepText, b: &StepText, n: usize) -> f64 {
    let n = n.max(1);
    let grams = |s: &StepText| -> std::collections::HashSet<u64> {
        let tokens: Vec<&str> = s.tokens().collect();
        if tokens.len() < n {
            return std::collections::HashSet::new();
        }
        tokens
            .windows(n)
            .map(|w| fnv1a(w.join("\u{1f}").as_bytes()))
            .collect()
    };
    let ga = grams(a);
    let gb = grams(b);
    if ga.is_empty() && gb.is_empty() {
        return 1.0;
    }
    let inter = ga.intersection(&gb).count() as f64;
    let union = ga.union(&gb).count() as f64;
    inter / union
}

/// LLM-as-a-judge adapter over a text-completion backend.
pub struct JudgeVerifier {
    backend: Box<dyn TextCompletion + Send + Sync>,
    template: String,
    malformed: AtomicU64,
}

impl JudgeVerifier {
    pub fn new(backend: Box<dyn TextCompletion + Send + Sync>) -> Self {
        JudgeVerifier {
            backend,
            template: JUDGE_PROMPT_TEMPLATE.to_string(),
            malformed: AtomicU64::new(0),
        }
    }

    pub fn with_template(
        backend: Box<dyn TextCompletion + Send + Sync>,
        template: String,
    ) -> Self {
        JudgeVerifier {
            backend,
            template,
            malformed: AtomicU64::new(0),
        }
    }

    /// Number of replies that matched neither the aligned nor the unaligned
    /// prefix; those are counted and treated as rejections.
    pub fn malformed_replies(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn render(&self, target_step: &StepText, draft_step: &StepText) -> String {
        self.template
            .replace("{s1}", target_step.trimmed())
            .replace("{s2}", draft_step.trimmed())
    }

    fn decide(&self, target_step: &StepText, draft_step: &StepText) -> Result<bool, EngineError> {
        let prompt = self.render(target_step, draft_step);
        let reply = self.backend.complete(&prompt)?;
        let body = reply.trim_start().trim_start_matches('[');
        if body.starts_with("ali") {
            Ok(true)
        } else {
            if !body.starts_with("una") {
                self.malformed.fetch_add(1, Ordering::Relaxed);
            }
            Ok(false)
        }
    }
}
