//! A toy discrete-action policy over tagged text outputs.
//!
//! Instead of decoding free text, the policy picks one of five rendering
//! actions per sentence. That keeps action probabilities and importance
//! ratios analytic — every quantity the optimizer consumes is exact — while
//! the rendered strings still exercise every reward branch: correct fixes,
//! preservation, wrong edits, a missing close tag, and trailing garbage
//! that triggers the length penalty.

use std::fmt;
use std::fs;
use std::path::Path;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::corpus::{corrupt_avoiding, CorpusError, SentencePair};
use crate::reward::RewardConfig;
use crate::rng::{self, domain};
use crate::text::fnv1a64;

/// The action space. `EmitTrailingGarbage` carries its garbage length
/// (1..=200); the default space uses a single length so the space stays
/// finite and small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Action {
    EmitGoldFix,
    EmitPreserve,
    EmitCorruptedFix,
    EmitMissingCloseTag,
    EmitTrailingGarbage(usize),
}

pub const GARBAGE_LEN_MAX: usize = 200;

impl Action {
    /// The default five-action space used by training and the demo.
    pub fn default_space() -> Vec<Action> {
        vec![
            Action::EmitGoldFix,
            Action::EmitPreserve,
            Action::EmitCorruptedFix,
            Action::EmitMissingCloseTag,
            Action::EmitTrailingGarbage(50),
        ]
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::EmitGoldFix => write!(f, "emit_gold_fix"),
            Action::EmitPreserve => write!(f, "emit_preserve"),
            Action::EmitCorruptedFix => write!(f, "emit_corrupted_fix"),
            Action::EmitMissingCloseTag => write!(f, "emit_missing_close_tag"),
            Action::EmitTrailingGarbage(n) => write!(f, "emit_trailing_garbage:{n}"),
        }
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Action {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "emit_gold_fix" => Ok(Action::EmitGoldFix),
            "emit_preserve" => Ok(Action::EmitPreserve),
            "emit_corrupted_fix" => Ok(Action::EmitCorruptedFix),
            "emit_missing_close_tag" => Ok(Action::EmitMissingCloseTag),
            other => {
                let n = other
                    .strip_prefix("emit_trailing_garbage:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| format!("unknown action {other:?}"))?;
                if (1..=GARBAGE_LEN_MAX).contains(&n) {
                    Ok(Action::EmitTrailingGarbage(n))
                } else {
                    Err(format!("garbage length {n} outside 1..={GARBAGE_LEN_MAX}"))
                }
            }
        }
    }
}

/// Feature names, in vector order. The noisy error signal is the errorful
/// indicator plus per-pair uniform noise in (−0.2, 0.2) — enough jitter
/// that the policy has to generalize instead of memorizing a constant.
pub const FEATURE_NAMES: [&str; 3] = ["bias", "noisy_error_signal", "normalized_length"];

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("non-finite logit for action {action}")]
    NonFiniteLogits { action: String },
    #[error(
        "weight matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}"
    )]
    BadShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("non-finite weight at [{row}][{col}]")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("checkpoint feature list {got:?} does not match {expected:?}")]
    BadFeatureSpec { got: Vec<String>, expected: Vec<String> },
    #[error("failed to access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint JSON: {message}")]
    BadCheckpoint { message: String },
    #[error("rendering failed: {0}")]
    Render(#[from] CorpusError),
}

/// Policy parameters: one weight row per action, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub weights: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
}

impl PolicyParams {
    /// Zero-initialized parameters (a uniform policy) over the default
    /// action space.
    pub fn zeros() -> Self {
        Self::zeros_for(Action::default_space())
    }

    pub fn zeros_for(actions: Vec<Action>) -> Self {
        let weights = vec![vec![0.0; FEATURE_NAMES.len()]; actions.len()];
        PolicyParams { weights, actions }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.weights.len() != self.actions.len()
            || self.weights.iter().any(|row| row.len() != FEATURE_NAMES.len())
        {
            let cols = self.weights.first().map_or(0, |r| r.len());
            return Err(PolicyError::BadShape {
                rows: self.weights.len(),
                cols,
                expected_rows: self.actions.len(),
                expected_cols: FEATURE_NAMES.len(),
            });
        }
        for (i, row) in self.weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                if !w.is_finite() {
                    return Err(PolicyError::NonFiniteWeight { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

/// Feature vector with the noise term fixed — the deterministic core of
/// [`features`], also used by tests and the closed-form oracle.
pub fn features_with_noise(pair: &SentencePair, eps: f64) -> [f64; 3] {
    let e = if pair.errorful() { 1.0 } else { 0.0 };
    let len = pair.source.chars().count().min(100);
    [1.0, e + eps, len as f64 / 100.0]
}

/// Feature vector for a pair: `[1, errorful ± ε, min(len,100)/100]` with ε
/// drawn from the stream keyed by (seed, pair id) — the same pair always
/// sees the same noise within a run.
pub fn features(pair: &SentencePair, seed: u64) -> [f64; 3] {
    let mut stream = rng::stream(seed, &[domain::FEATURES, fnv1a64(pair.id.as_bytes())]);
    let eps = rng::uniform_in(&mut stream, -0.2, 0.2);
    features_with_noise(pair, eps)
}

/// Temperature-scaled logits `W·φ / T`.
fn logits(params: &PolicyParams, phi: &[f64], temperature: f64) -> Result<Vec<f64>, PolicyError> {
    assert!(temperature > 0.0, "temperature must be positive");
    params
        .weights
        .iter()
        .zip(&params.actions)
        .map(|(row, action)| {
            let z: f64 = row.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() / temperature;
            if z.is_finite() {
                Ok(z)
            } else {
                Err(PolicyError::NonFiniteLogits {
                    action: action.to_string(),
                })
            }
        })
        .collect()
}

/// Softmax over the temperature-scaled logits (max-subtracted for
/// stability; sums to 1 within 1e-12).
pub fn action_probs_from(
    params: &PolicyParams,
    phi: &[f64],
    temperature: f64,
) -> Result<Vec<f64>, PolicyError> {
    let z = logits(params, phi, temperature)?;
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Action distribution for a pair at a given temperature. The `seed` pins
/// the pair's feature noise; see [`features`].
pub fn action_probs(
    params: &PolicyParams,
    pair: &SentencePair,
    temperature: f64,
    seed: u64,
) -> Result<Vec<f64>, PolicyError> {
    action_probs_from(params, &features(pair, seed), temperature)
}

/// Draw one action by inverse-CDF sampling; returns `(index, log prob)`.
/// `logp` is exactly `probs[index].ln()`.
pub fn sample_action(
    params: &PolicyParams,
    phi: &[f64],
    temperature: f64,
    rng: &mut impl RngCore,
) -> Result<(usize, f64), PolicyError> {
    let probs = action_probs_from(params, phi, temperature)?;
    let u = rng::uniform_f64(rng);
    let mut cum = 0.0;
    let mut index = probs.len() - 1; // fallback guards float underflow slack
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            index = i;
            break;
        }
    }
    Ok((index, probs[index].ln()))
}

/// Argmax action index (temperature-free; ties resolve to the lowest
/// index, so greedy decoding is deterministic).
pub fn greedy_action(params: &PolicyParams, phi: &[f64]) -> Result<usize, PolicyError> {
    let z = logits(params, phi, 1.0)?;
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Shannon entropy (natural log) of a probability vector; zero terms are
/// skipped so one-hot distributions give exactly 0.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Render an action into output text. Deterministic in `(action, pair,
/// seed)`: corruption retries and garbage letters draw from a stream keyed
/// by the pair id.
pub fn render(action: Action, pair: &SentencePair, seed: u64) -> Result<String, PolicyError> {
    let mut stream = rng::stream(seed, &[domain::RENDER, fnv1a64(pair.id.as_bytes())]);
    render_with_rng(action, pair, &mut stream)
}

/// Render using an already-derived stream — the training loop threads each
/// rollout's own stream through here so one sampled action consumes one
/// stream.
pub fn render_with_rng(
    action: Action,
    pair: &SentencePair,
    rng: &mut impl RngCore,
) -> Result<String, PolicyError> {
    let text = match action {
        Action::EmitGoldFix => format!("<answer>{}</answer>", pair.first_reference()),
        Action::EmitPreserve => format!("<answer>{}</answer>", pair.source),
        Action::EmitCorruptedFix => {
            // A fluent-looking wrong edit: corrupt the first reference but
            // avoid accidentally hitting any reference or the source.
            let mut forbidden: Vec<&str> = pair.references.iter().map(|s| s.as_str()).collect();
            forbidden.push(&pair.source);
            let (_, corrupted) = corrupt_avoiding(pair.first_reference(), &forbidden, rng)?;
            format!("<answer>{corrupted}</answer>")
        }
        Action::EmitMissingCloseTag => format!("<answer>{}", pair.source),
        Action::EmitTrailingGarbage(n) => {
            debug_assert!((1..=GARBAGE_LEN_MAX).contains(&n));
            let mut garbage = String::with_capacity(n);
            for _ in 0..n {
                garbage.push((b'a' + rng::below(rng, 26) as u8) as char);
            }
            format!("<answer>{}</answer>{garbage}", pair.source)
        }
    };
    Ok(text)
}

/// Closed-form expected total reward of an action on a pair. Exact because
/// every rendering of an action lands in the same reward case: corruptions
/// are guaranteed wrong, garbage letters never contain a tag.
pub fn expected_reward(
    action: Action,
    pair: &SentencePair,
    cfg: &RewardConfig,
) -> f64 {
    use crate::text::norm_eq;
    let well_formed = cfg.open_bonus + cfg.close_bonus;
    let errorful = pair.errorful();
    match action {
        Action::EmitGoldFix => {
            let r_c = if errorful {
                cfg.r_fix_correct
            } else if norm_eq(pair.first_reference(), &pair.source) {
                cfg.r_preserve_correct
            } else {
                // Correct pair whose first reference is a different valid
                // phrasing: the edit counts as changing a correct sentence.
                cfg.r_changed_correct
            };
            well_formed + r_c
        }
        Action::EmitPreserve => {
            let r_c = if errorful {
                cfg.r_unchanged_wrong
            } else {
                cfg.r_preserve_correct
            };
            well_formed + r_c
        }
        Action::EmitCorruptedFix => {
            let r_c = if errorful {
                cfg.r_changed_still_wrong
            } else {
                cfg.r_changed_correct
            };
            well_formed + r_c
        }
        Action::EmitMissingCloseTag => cfg.open_bonus + cfg.r_no_answer,
        Action::EmitTrailingGarbage(n) => {
            let rule = well_formed - cfg.suffix_coeff * n as f64;
            let r_c = if errorful {
                cfg.r_unchanged_wrong
            } else {
                cfg.r_preserve_correct
            };
            rule + r_c
        }
    }
}

/// Indices of the actions whose closed-form expected reward attains the
/// maximum for this pair. On errorful pairs with defaults this is the
/// singleton gold fix; on correct pairs gold-fix and preserve render the
/// same text and tie exactly.
pub fn oracle_argmax_set(actions: &[Action], pair: &SentencePair, cfg: &RewardConfig) -> Vec<usize> {
    let rewards: Vec<f64> = actions
        .iter()
        .map(|&a| expected_reward(a, pair, cfg))
        .collect();
    let best = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rewards
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == best)
        .map(|(i, _)| i)
        .collect()
}

/// On-disk checkpoint: weights plus the feature and action vocabularies
/// and the step that produced it.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    weights: Vec<Vec<f64>>,
    features: Vec<String>,
    actions: Vec<Action>,
    step: u64,
}

/// Write a checkpoint. Output is byte-stable: field order is fixed and
/// floats use shortest round-trip formatting.
pub fn save_checkpoint(
    params: &PolicyParams,
    step: u64,
    path: impl AsRef<Path>,
) -> Result<(), PolicyError> {
    params.validate()?;
    let file = CheckpointFile {
        weights: params.weights.clone(),
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        actions: params.actions.clone(),
        step,
    };
    let mut text = serde_json::to_string(&file).expect("serializing checkpoint");
    text.push('\n');
    fs::write(path.as_ref(), text).map_err(|source| PolicyError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Load and validate a checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(PolicyParams, u64), PolicyError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|source| PolicyError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| PolicyError::BadCheckpoint {
            message: e.to_string(),
        })?;
    let expected: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    if file.features != expected {
        return Err(PolicyError::BadFeatureSpec {
            got: file.features,
            expected,
        });
    }
    let params = PolicyParams {
        weights: file.weights,
        actions: file.actions,
    };
    params.validate()?;
    Ok((params, file.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{total_reward, RcCase, TagConfig};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn errorful_pair() -> SentencePair {
        SentencePair {
            id: "e1".into(),
            source: "teh cat sat".into(),
            references: vec!["the cat sat".into()],
        }
    }

    fn correct_pair() -> SentencePair {
        SentencePair {
            id: "c1".into(),
            source: "all is well".into(),
            references: vec!["all is well".into()],
        }
    }

    #[test]
    fn action_names_round_trip() {
        for action in Action::default_space() {
            let name = String::from(action);
            assert_eq!(Action::try_from(name).unwrap(), action);
        }
        assert!(Action::try_from("emit_trailing_garbage:0".to_string()).is_err());
        assert!(Action::try_from("emit_trailing_garbage:201".to_string()).is_err());
        assert!(Action::try_from("warp_core_breach".to_string()).is_err());
    }

    #[test]
    fn features_shape_and_determinism() {
        let e = errorful_pair();
        let phi = features(&e, 7);
        assert_eq!(phi[0], 1.0);
        assert!((phi[1] - 1.0).abs() < 0.2, "noisy signal {}", phi[1]);
        assert_eq!(phi[2], 11.0 / 100.0);
        assert_eq!(phi, features(&e, 7));
        assert_ne!(features(&e, 7)[1], features(&e, 8)[1]);

        let c = correct_pair();
        assert!(features(&c, 7)[1].abs() < 0.2);
        assert_eq!(features_with_noise(&c, 0.0), [1.0, 0.0, 11.0 / 100.0]);
        assert_eq!(features_with_noise(&e, 0.0), [1.0, 1.0, 11.0 / 100.0]);

        // Length saturates at 100 characters.
        let long = SentencePair {
            id: "l".into(),
            source: "x".repeat(400),
            references: vec!["x".repeat(400)],
        };
        assert_eq!(features_with_noise(&long, 0.0)[2], 1.0);
    }

    #[test]
    fn zero_weights_are_uniform() {
        let params = PolicyParams::zeros();
        let probs = action_probs_from(&params, &[1.0, 0.5, 0.1], 1.0).unwrap();
        assert_eq!(probs.len(), 5);
        for p in &probs {
            assert_eq!(*p, 1.0 / 5.0);
        }
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_weight_concentrates_mass() {
        let mut params = PolicyParams::zeros();
        params.weights[1][0] = 50.0; // bias weight on EmitPreserve
        let probs = action_probs_from(&params, &[1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(probs[1] > 0.999);
    }

    #[test]
    fn temperature_flattens() {
        let mut params = PolicyParams::zeros();
        params.weights[0][0] = 2.0;
        let sharp = action_probs_from(&params, &[1.0, 0.0, 0.0], 0.5).unwrap();
        let flat = action_probs_from(&params, &[1.0, 0.0, 0.0], 4.0).unwrap();
        assert!(sharp[0] > flat[0]);
    }

    #[test]
    fn sampling_matches_distribution() {
        let mut params = PolicyParams::zeros();
        params.weights[1][0] = 50.0;
        let mut stream = rng::stream(11, &[1]);
        for _ in 0..1000 {
            let (idx, logp) = sample_action(&params, &[1.0, 0.0, 0.0], 1.0, &mut stream).unwrap();
            assert_eq!(params.actions[idx], Action::EmitPreserve);
            assert!(logp <= 0.0);
        }

        let uniform = PolicyParams::zeros();
        let mut counts = [0usize; 5];
        let mut stream = rng::stream(12, &[2]);
        for _ in 0..10_000 {
            let (idx, logp) = sample_action(&uniform, &[1.0, 1.0, 0.2], 1.0, &mut stream).unwrap();
            counts[idx] += 1;
            assert_eq!(logp, (1.0f64 / 5.0).ln());
        }
        for &c in &counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 0.2).abs() < 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let params = PolicyParams::zeros();
        assert_eq!(greedy_action(&params, &[1.0, 0.0, 0.0]).unwrap(), 0);
        let mut p = PolicyParams::zeros();
        p.weights[3][0] = 1.0;
        assert_eq!(greedy_action(&p, &[1.0, 0.0, 0.0]).unwrap(), 3);
    }

    #[test]
    fn entropy_reference_points() {
        let uniform = [0.2; 5];
        assert!((entropy(&uniform) - 5.0f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(entropy(&[0.5, 0.5, 0.0, 0.0, 0.0]), 2.0f64.ln());
    }

    #[test]
    fn render_shapes() {
        let e = errorful_pair();
        assert_eq!(
            render(Action::EmitGoldFix, &e, 3).unwrap(),
            "<answer>the cat sat</answer>"
        );
        assert_eq!(
            render(Action::EmitPreserve, &e, 3).unwrap(),
            "<answer>teh cat sat</answer>"
        );
        assert_eq!(
            render(Action::EmitMissingCloseTag, &e, 3).unwrap(),
            "<answer>teh cat sat"
        );

        let garbage = render(Action::EmitTrailingGarbage(50), &e, 3).unwrap();
        assert!(garbage.starts_with("<answer>teh cat sat</answer>"));
        let suffix = &garbage["<answer>teh cat sat</answer>".len()..];
        assert_eq!(suffix.chars().count(), 50);
        assert!(suffix.chars().all(|c| c.is_ascii_lowercase()));
    }

    #[test]
    fn render_is_deterministic_per_seed() {
        let e = errorful_pair();
        for action in Action::default_space() {
            let a = render(action, &e, 42).unwrap();
            let b = render(action, &e, 42).unwrap();
            assert_eq!(a, b);
        }
        // Garbage and corruption vary with the seed.
        let g1 = render(Action::EmitTrailingGarbage(50), &e, 1).unwrap();
        let g2 = render(Action::EmitTrailingGarbage(50), &e, 2).unwrap();
        assert_ne!(g1, g2);
    }

    #[test]
    fn corrupted_fix_avoids_references_and_source() {
        let e = errorful_pair();
        for seed in 0..100 {
            let text = render(Action::EmitCorruptedFix, &e, seed).unwrap();
            let inner = text
                .strip_prefix("<answer>")
                .and_then(|t| t.strip_suffix("</answer>"))
                .unwrap();
            assert!(!crate::text::norm_eq(inner, &e.source));
            for r in &e.references {
                assert!(!crate::text::norm_eq(inner, r));
            }
        }
    }

    #[test]
    fn reward_branch_coverage_over_action_space() {
        // The five actions across one errorful and one correct pair must
        // reach at least five distinct correctness cases and both suffix
        // regimes.
        let tags = TagConfig::default();
        let cfg = RewardConfig::default();
        let mut cases = HashSet::new();
        let mut suffix_regimes = HashSet::new();
        for pair in [errorful_pair(), correct_pair()] {
            for action in Action::default_space() {
                let text = render(action, &pair, 5).unwrap();
                let b = total_reward(&text, &pair, &tags, &cfg);
                cases.insert(b.case);
                suffix_regimes.insert(b.suffix_len > 0);
            }
        }
        assert!(cases.len() >= 5, "cases seen: {cases:?}");
        assert_eq!(suffix_regimes.len(), 2);
        assert!(cases.contains(&RcCase::NoAnswer));
    }

    #[test]
    fn expected_reward_closed_form_matches_rendering() {
        let tags = TagConfig::default();
        let cfg = RewardConfig::default();
        for pair in [errorful_pair(), correct_pair()] {
            for action in Action::default_space() {
                let expected = expected_reward(action, &pair, &cfg);
                for seed in 0..20 {
                    let text = render(action, &pair, seed).unwrap();
                    let b = total_reward(&text, &pair, &tags, &cfg);
                    assert_eq!(
                        b.total, expected,
                        "{action:?} on {:?} (seed {seed})",
                        pair.id
                    );
                }
            }
        }
    }

    #[test]
    fn expected_reward_frozen_table() {
        let cfg = RewardConfig::default();
        let e = errorful_pair();
        let c = correct_pair();
        let space = Action::default_space();
        let got_e: Vec<f64> = space.iter().map(|&a| expected_reward(a, &e, &cfg)).collect();
        let got_c: Vec<f64> = space.iter().map(|&a| expected_reward(a, &c, &cfg)).collect();
        assert_eq!(
            got_e,
            vec![
                0.25 + 2.1,
                0.25 + -0.05,
                0.25 + 0.1,
                0.125,
                (0.25 - 0.001 * 50.0) + -0.05,
            ]
        );
        assert_eq!(
            got_c,
            vec![
                0.25 + 4.0,
                0.25 + 4.0,
                0.25 + -0.1,
                0.125,
                (0.25 - 0.001 * 50.0) + 4.0,
            ]
        );
    }

    #[test]
    fn oracle_argmax_sets() {
        let cfg = RewardConfig::default();
        let space = Action::default_space();
        assert_eq!(oracle_argmax_set(&space, &errorful_pair(), &cfg), vec![0]);
        // Gold fix and preserve render identical text on correct pairs.
        assert_eq!(oracle_argmax_set(&space, &correct_pair(), &cfg), vec![0, 1]);
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut params = PolicyParams::zeros();
        params.weights[0][1] = 1.5;
        params.weights[4][2] = -0.25;
        save_checkpoint(&params, 123, &path).unwrap();

        let (loaded, step) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(step, 123);

        // Successive saves are byte-identical.
        let first = fs::read(&path).unwrap();
        save_checkpoint(&params, 123, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);

        // Tampered feature list is rejected.
        let text = String::from_utf8(first).unwrap();
        let bad = text.replace("noisy_error_signal", "vibes");
        fs::write(&path, bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(PolicyError::BadFeatureSpec { .. })
        ));

        // Unknown keys are rejected.
        let with_extra = text.replace("\"step\":123", "\"step\":123,\"extra\":1");
        fs::write(&path, with_extra).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(PolicyError::BadCheckpoint { .. })
        ));
    }

    proptest! {
        #[test]
        fn probs_match_exp_normalize_oracle(
            w in proptest::collection::vec(-5.0f64..5.0, 15),
            phi in proptest::collection::vec(-2.0f64..2.0, 3),
            temperature in 0.25f64..4.0,
        ) {
            let params = PolicyParams {
                weights: w.chunks(3).map(|c| c.to_vec()).collect(),
                actions: Action::default_space(),
            };
            let probs = action_probs_from(&params, &phi, temperature).unwrap();

            // Independent recomputation without max-subtraction.
            let z: Vec<f64> = params.weights.iter()
                .map(|row| row.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() / temperature)
                .collect();
            let raw: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let sum: f64 = raw.iter().sum();
            for (p, r) in probs.iter().zip(&raw) {
                prop_assert!((p - r / sum).abs() < 1e-12);
            }
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
