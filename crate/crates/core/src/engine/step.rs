//! Reasoning-step segmentation and generation traces.

use serde::{Deserialize, Serialize};

/// The step boundary marker. Retained at the end of the preceding step so
/// splitting is lossless.
pub const STEP_BOUNDARY: &str = "\n\n";

/// One reasoning step, boundary marker included when present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepText {
    pub text: String,
    /// Set when a backend hit its token cap before reaching a boundary.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl StepText {
    pub fn new(text: impl Into<String>) -> Self {
        StepText {
            text: text.into(),
            truncated: false,
        }
    }

    /// Step text with any trailing boundary markers removed; the unit of
    /// comparison for exact-match verification.
    pub fn trimmed(&self) -> &str {
        let mut s = self.text.as_str();
        while let Some(rest) = s.strip_suffix(STEP_BOUNDARY) {
            s = rest;
        }
        s
    }

    /// Whitespace tokens of the step, for similarity-based verifiers.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.trimmed().split_whitespace()
    }
}

/// Splits text at each boundary marker, keeping the marker on the preceding
/// step, so that concatenating the steps reproduces the input exactly.
pub fn split_steps(text: &str) -> Vec<StepText> {
    let mut steps = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find(STEP_BOUNDARY) {
            Some(i) => {
                let (head, tail) = rest.split_at(i + STEP_BOUNDARY.len());
                steps.push(StepText::new(head));
                rest = tail;
            }
            None => {
                steps.push(StepText::new(rest));
                break;
            }
        }
    }
    steps
}

/// An append-only generation prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    prefix: Vec<StepText>,
    done: bool,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn from_steps(steps: Vec<StepText>) -> Self {
        Trace {
            prefix: steps,
            done: false,
        }
    }

    pub fn steps(&self) -> &[StepText] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn push(&mut self, step: StepText) {
        debug_assert!(!self.done, "trace is sealed");
        self.prefix.push(step);
    }

    pub fn finish(&mut self) {
        self.done = true;
    }

    pub fn text(&self) -> String {
        self.prefix.iter().map(|s| s.text.as_str()).collect()
    }
}
