//! The composite rule-based reward: a format component driven by answer
//! tags plus a correctness component driven by the reference set.
//!
//! The format reward pays a bonus for exactly one open tag and exactly one
//! close tag, and (only when the close-tag bonus fires) charges a linear
//! penalty per character trailing the first delimiter occurrence. The
//! correctness reward is a six-way case split on how the extracted answer
//! relates to the source and its references. Both components are sums of
//! configured constants — no accumulation, so every branch is bit-exact.

use serde::{Deserialize, Serialize};

use crate::corpus::SentencePair;
use crate::text::{nfc_trim, norm_eq};

/// Answer-tag configuration. The delimiter (suffix-penalty anchor) defaults
/// to the close tag but is independently configurable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagConfig {
    pub open_tag: String,
    pub close_tag: String,
    pub delimiter: String,
}

impl Default for TagConfig {
    fn default() -> Self {
        TagConfig {
            open_tag: "<answer>".into(),
            close_tag: "</answer>".into(),
            delimiter: "</answer>".into(),
        }
    }
}

/// Reward constants. Defaults are the published values; the prose variant
/// that raises the preserve-correct reward is available as
/// [`RewardConfig::tuned_preserve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub open_bonus: f64,
    pub close_bonus: f64,
    pub suffix_coeff: f64,
    pub r_preserve_correct: f64,
    pub r_fix_correct: f64,
    pub r_changed_still_wrong: f64,
    pub r_unchanged_wrong: f64,
    pub r_changed_correct: f64,
    /// Reward when no answer can be extracted. Outputs without a parsable
    /// answer sit between the failure penalties and the success rewards:
    /// the malformed format is already punished by the missing tag bonuses.
    pub r_no_answer: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            open_bonus: 0.125,
            close_bonus: 0.125,
            suffix_coeff: 0.001,
            r_preserve_correct: 4.0,
            r_fix_correct: 2.1,
            r_changed_still_wrong: 0.1,
            r_unchanged_wrong: -0.05,
            r_changed_correct: -0.1,
            r_no_answer: 0.0,
        }
    }
}

impl RewardConfig {
    /// Variant with the preserve-correct reward raised to 6.0 — the value
    /// reported as the final pick after tuning, versus 4.0 in the formula.
    pub fn tuned_preserve() -> Self {
        RewardConfig {
            r_preserve_correct: 6.0,
            ..Self::default()
        }
    }
}

/// Outcome classes for the correctness component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RcCase {
    PreserveCorrect,
    FixCorrect,
    ChangedStillWrong,
    UnchangedWrong,
    ChangedCorrect,
    NoAnswer,
}

/// Full accounting for one scored text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub open_count: usize,
    pub close_count: usize,
    pub suffix_len: usize,
    pub r_rule: f64,
    pub case: RcCase,
    pub r_c: f64,
    pub total: f64,
}

/// Extract the answer: the text strictly between the first open tag and the
/// first close tag after it, trimmed and NFC-normalized. A close tag with
/// no preceding open tag is ignored; absence of either tag (in that order)
/// yields `None`.
pub fn extract_answer(text: &str, tags: &TagConfig) -> Option<String> {
    let open_at = text.find(&tags.open_tag)?;
    let after = &text[open_at + tags.open_tag.len()..];
    let close_at = after.find(&tags.close_tag)?;
    Some(nfc_trim(&after[..close_at]))
}

/// The format component. Returns `(r_rule, open_count, close_count,
/// suffix_len)`. Counts are non-overlapping left-to-right occurrence
/// counts; `suffix_len` counts Unicode scalars after the end of the first
/// delimiter occurrence (0 when absent). The suffix penalty applies only
/// when the close-tag indicator fires.
pub fn rule_reward(text: &str, tags: &TagConfig, cfg: &RewardConfig) -> (f64, usize, usize, usize) {
    let open_count = text.matches(&tags.open_tag).count();
    let close_count = text.matches(&tags.close_tag).count();
    let suffix_len = match text.find(&tags.delimiter) {
        Some(at) => text[at + tags.delimiter.len()..].chars().count(),
        None => 0,
    };
    let mut r = 0.0;
    if open_count == 1 {
        r += cfg.open_bonus;
    }
    if close_count == 1 {
        r += cfg.close_bonus;
        r -= cfg.suffix_coeff * suffix_len as f64;
    }
    (r, open_count, close_count, suffix_len)
}

/// The correctness component: classify `answer` against the pair and return
/// the configured constant for that case, bit-exactly.
pub fn correctness_reward(
    answer: Option<&str>,
    pair: &SentencePair,
    cfg: &RewardConfig,
) -> (RcCase, f64) {
    let answer = match answer {
        None => return (RcCase::NoAnswer, cfg.r_no_answer),
        Some(a) => a,
    };
    if !pair.errorful() {
        if norm_eq(answer, &pair.source) {
            (RcCase::PreserveCorrect, cfg.r_preserve_correct)
        } else {
            (RcCase::ChangedCorrect, cfg.r_changed_correct)
        }
    } else if pair.references.iter().any(|r| norm_eq(answer, r)) {
        (RcCase::FixCorrect, cfg.r_fix_correct)
    } else if norm_eq(answer, &pair.source) {
        (RcCase::UnchangedWrong, cfg.r_unchanged_wrong)
    } else {
        (RcCase::ChangedStillWrong, cfg.r_changed_still_wrong)
    }
}

/// Compose both components for a raw completion.
pub fn total_reward(
    text: &str,
    pair: &SentencePair,
    tags: &TagConfig,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let (r_rule, open_count, close_count, suffix_len) = rule_reward(text, tags, cfg);
    let answer = extract_answer(text, tags);
    let (case, r_c) = correctness_reward(answer.as_deref(), pair, cfg);
    RewardBreakdown {
        open_count,
        close_count,
        suffix_len,
        r_rule,
        case,
        r_c,
        total: r_rule + r_c,
    }
}
