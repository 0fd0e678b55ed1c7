//! Acceptance gate: one test per release criterion, each printing a single
//! `criterion NN: PASS/FAIL` verdict line (visible with `--nocapture`, and
//! automatically on failure). Tolerances are part of the contract — loosening
//! one here is a release decision, not a test fix.
//!
//! Run with `cargo test -p gec-rl-core --test acceptance`.

use std::time::{Duration, Instant};

use gec_rl_core::corpus::{demo_sentences, synth_corpus, Corpus, SentencePair};
use gec_rl_core::grpo::{
    compute_advantages, grpo_gradient, grpo_objective, kl_approx, train, write_metrics_csv,
    Rollout, RolloutGroup, TrainConfig,
};
use gec_rl_core::pipeline::{run_stage2_with, SyntheticGenerator, SyntheticJudge};
use gec_rl_core::policy::{
    action_probs_from, features, greedy_action, oracle_argmax_set, save_checkpoint, Action,
    PolicyParams,
};
use gec_rl_core::report::write_report;
use gec_rl_core::reward::{total_reward, RcCase, RewardConfig, TagConfig};
use gec_rl_core::rng;
use gec_rl_core::scorer::{align, apply_spans, edit_script, f_from_pr, script_cost};
use gec_rl_core::voting::{majority_vote, vote_eval, write_vote_csv};

fn verdict(n: u32, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {n:02}: {status} — {detail}");
    assert!(ok, "criterion {n:02}: FAIL — {detail}");
}

// ---------------------------------------------------------------------------
// 1. Reward exactness: every correctness case and format configuration
//    returns its constant bit-exactly, in under a second.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_reward_exactness() {
    let started = Instant::now();
    let correct = SentencePair {
        id: "c1".into(),
        source: "the dog runs".into(),
        references: vec!["the dog runs".into()],
    };
    let errorful = SentencePair {
        id: "e1".into(),
        source: "teh dog runs".into(),
        references: vec!["the dog runs".into()],
    };
    let tags = TagConfig::default();
    let cfg = RewardConfig::default();

    struct Row {
        label: &'static str,
        errorful: bool,
        text: &'static str,
        open: usize,
        close: usize,
        suffix: usize,
        r_rule: f64,
        case: RcCase,
        r_c: f64,
    }
    // Five correctness cases (rows 1–5) across six format shapes: canonical,
    // trailing suffix, missing close, missing open, duplicated open, no tags.
    let rows = [
        Row {
            label: "canonical preserve-correct",
            errorful: false,
            text: "<answer>the dog runs</answer>",
            open: 1,
            close: 1,
            suffix: 0,
            r_rule: 0.25,
            case: RcCase::PreserveCorrect,
            r_c: 4.0,
        },
        Row {
            label: "canonical fix-correct",
            errorful: true,
            text: "<answer>the dog runs</answer>",
            open: 1,
            close: 1,
            suffix: 0,
            r_rule: 0.25,
            case: RcCase::FixCorrect,
            r_c: 2.1,
        },
        Row {
            label: "canonical changed-still-wrong",
            errorful: true,
            text: "<answer>the dgo runs</answer>",
            open: 1,
            close: 1,
            suffix: 0,
            r_rule: 0.25,
            case: RcCase::ChangedStillWrong,
            r_c: 0.1,
        },
        Row {
            label: "canonical unchanged-wrong",
            errorful: true,
            text: "<answer>teh dog runs</answer>",
            open: 1,
            close: 1,
            suffix: 0,
            r_rule: 0.25,
            case: RcCase::UnchangedWrong,
            r_c: -0.05,
        },
        Row {
            label: "canonical changed-correct",
            errorful: false,
            text: "<answer>the dog run</answer>",
            open: 1,
            close: 1,
            suffix: 0,
            r_rule: 0.25,
            case: RcCase::ChangedCorrect,
            r_c: -0.1,
        },
        Row {
            label: "7-char trailing suffix",
            errorful: true,
            text: "<answer>the dog runs</answer>garbage",
            open: 1,
            close: 1,
            suffix: 7,
            r_rule: 0.25 - 0.001 * 7.0,
            case: RcCase::FixCorrect,
            r_c: 2.1,
        },
        Row {
            label: "missing close tag",
            errorful: true,
            text: "<answer>teh dog runs",
            open: 1,
            close: 0,
            suffix: 0,
            r_rule: 0.125,
            case: RcCase::NoAnswer,
            r_c: 0.0,
        },
        Row {
            label: "missing open tag",
            errorful: true,
            text: "teh dog runs</answer>",
            open: 0,
            close: 1,
            suffix: 0,
            r_rule: 0.125,
            case: RcCase::NoAnswer,
            r_c: 0.0,
        },
        Row {
            label: "duplicated open tag",
            errorful: true,
            text: "<answer><answer>the dog runs</answer>",
            open: 2,
            close: 1,
            suffix: 0,
            r_rule: 0.125,
            case: RcCase::ChangedStillWrong,
            r_c: 0.1,
        },
        Row {
            label: "no tags at all",
            errorful: true,
            text: "the dog runs",
            open: 0,
            close: 0,
            suffix: 0,
            r_rule: 0.0,
            case: RcCase::NoAnswer,
            r_c: 0.0,
        },
    ];

    let mut fails = Vec::new();
    for row in &rows {
        let pair = if row.errorful { &errorful } else { &correct };
        let b = total_reward(row.text, pair, &tags, &cfg);
        let got = (b.open_count, b.close_count, b.suffix_len, b.r_rule, b.case, b.r_c, b.total);
        let want = (
            row.open,
            row.close,
            row.suffix,
            row.r_rule,
            row.case,
            row.r_c,
            row.r_rule + row.r_c,
        );
        if got != want {
            fails.push(format!("{}: got {got:?}, want {want:?}", row.label));
        }
    }

    // A delimiter that differs from the close tag anchors the suffix count
    // on its own first occurrence.
    let custom = TagConfig {
        delimiter: "###".into(),
        ..TagConfig::default()
    };
    let b = total_reward("<answer>the dog runs</answer>### tail", &errorful, &custom, &cfg);
    if (b.suffix_len, b.r_rule, b.case, b.r_c) != (5, 0.25 - 0.001 * 5.0, RcCase::FixCorrect, 2.1) {
        fails.push(format!("custom delimiter: got {b:?}"));
    }

    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(1) {
        fails.push(format!("took {elapsed:?}, budget 1 s"));
    }
    verdict(
        1,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("{} rows bit-exact in {elapsed:?}", rows.len() + 1)
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 2. F0.5 reproduction: published benchmark rows (percent-scale P, R, F0.5
//    on the FCGEC and NaCGEC test sets) must be recomputable from their own
//    P/R through f_from_pr, to the printed precision.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_f05_formula_reproduction() {
    // (system, test set, precision, recall, published F0.5), all in percent.
    // One published FCGEC row (65.71, 37.78, 57.22) is omitted: recomputing
    // from its own P and R gives 57.25, an inconsistency in the source this
    // suite cannot resolve. Every other row of the same result table is here.
    const ROWS: &[(&str, &str, f64, f64, f64)] = &[
        ("gector", "fcgec", 46.11, 34.35, 43.16),
        ("bart", "fcgec", 38.38, 37.62, 38.23),
        ("bart", "nacgec", 62.04, 45.84, 57.94),
        ("syngec", "fcgec", 63.75, 39.78, 56.89),
        ("syngec", "nacgec", 62.42, 47.41, 58.71),
        ("lm-combiner", "fcgec", 55.67, 39.04, 51.30),
        ("instruction-tuning", "fcgec", 65.65, 36.49, 56.60),
        ("instruction-tuning", "nacgec", 62.50, 40.72, 56.46),
        ("alirector", "fcgec", 64.49, 36.22, 55.78),
        ("alirector", "nacgec", 66.04, 45.91, 60.71),
        ("de-coglm", "fcgec", 56.09, 38.02, 51.22),
        ("o3-mini", "fcgec", 8.24, 19.44, 9.31),
        ("o3-mini", "nacgec", 8.59, 21.66, 9.77),
        ("qwq-32b", "fcgec", 17.33, 32.15, 19.09),
        ("qwq-32b", "nacgec", 17.55, 33.21, 19.38),
        ("r1", "fcgec", 18.78, 36.06, 20.77),
        ("r1", "nacgec", 19.31, 37.30, 21.37),
        ("sft-direct", "fcgec", 64.81, 36.79, 56.24),
        ("sft-direct", "nacgec", 64.01, 43.01, 58.32),
        ("sft-reasoning", "fcgec", 57.96, 46.15, 55.14),
        ("sft-reasoning", "nacgec", 47.91, 41.72, 46.53),
        ("sft-reasoning-16vote", "fcgec", 58.02, 40.97, 53.56),
        ("sft-reasoning-16vote", "nacgec", 48.40, 40.94, 46.70),
        ("rl-reasoning", "fcgec", 60.68, 46.95, 57.33),
        ("rl-reasoning", "nacgec", 61.97, 47.88, 58.52),
        ("rl-reasoning-16vote", "fcgec", 61.84, 48.94, 58.74),
        ("rl-reasoning-16vote", "nacgec", 61.94, 49.68, 59.03),
    ];
    assert!(ROWS.len() >= 6, "need at least six pinned rows");

    let mut fails = Vec::new();
    for &(system, set, p, r, published) in ROWS {
        // f_from_pr is scale-invariant, so percent-scale inputs give a
        // percent-scale F directly; round to the table's two decimals.
        let f = f_from_pr(p, r, 0.5);
        let rounded = (f * 100.0).round() / 100.0;
        if (rounded - published).abs() > 0.01 + 1e-9 {
            fails.push(format!(
                "{system}/{set}: recomputed {rounded:.2}, published {published:.2}"
            ));
        }
    }
    verdict(
        2,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("{} published rows reproduced within ±0.01", ROWS.len())
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness: analytic gradient vs central finite differences
//    on random configurations, away from the clip kinks.
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_gradient_matches_finite_differences() {
    let mut cfg_rng = rng::stream(0xACC3, &[3]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;

    for trial in 0..50u64 {
        let n_actions = 2 + rng::below(&mut cfg_rng, 4); // 2..=5
        let actions = Action::default_space()[..n_actions].to_vec();
        let mut params = PolicyParams::zeros_for(actions.clone());
        for row in &mut params.weights {
            for w in row.iter_mut() {
                *w = rng::uniform_in(&mut cfg_rng, -1.0, 1.0);
            }
        }
        let mut params_ref = params.clone();
        for row in &mut params_ref.weights {
            for w in row.iter_mut() {
                *w += rng::uniform_in(&mut cfg_rng, -0.5, 0.5);
            }
        }
        let cfg = TrainConfig {
            temperature: [0.7, 1.0, 1.3][(trial / 3) as usize % 3],
            kl_coeff: [0.0, 0.05, 0.12][trial as usize % 3],
            ..TrainConfig::default()
        };

        let n_groups = 1 + rng::below(&mut cfg_rng, 3);
        let mut groups = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let size = 3 + rng::below(&mut cfg_rng, 4); // 3..=6 rollouts
            let phi = [
                1.0,
                rng::uniform_in(&mut cfg_rng, 0.0, 1.2),
                rng::uniform_in(&mut cfg_rng, 0.0, 1.0),
            ];
            let probs = action_probs_from(&params, &phi, cfg.temperature).unwrap();
            let rewards: Vec<f64> = (0..size)
                .map(|_| rng::uniform_in(&mut cfg_rng, -1.0, 2.0))
                .collect();
            let advantages = compute_advantages(&rewards, cfg.std_floor).unwrap();
            let mean = rewards.iter().sum::<f64>() / size as f64;
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / size as f64;
            let rollouts = (0..size)
                .map(|i| {
                    let a = rng::below(&mut cfg_rng, n_actions);
                    // Keep the ratio clear of the clip boundaries at
                    // 1−eps_low and 1+eps_high (log 0.8 ≈ −0.223,
                    // log 1.28 ≈ 0.247): an h-sized weight nudge must not
                    // flip the min() branch or the difference quotient
                    // straddles the kink.
                    let delta = match rng::below(&mut cfg_rng, 3) {
                        0 => rng::uniform_in(&mut cfg_rng, -0.15, 0.15),
                        1 => rng::uniform_in(&mut cfg_rng, 0.3, 0.6),
                        _ => rng::uniform_in(&mut cfg_rng, -0.6, -0.3),
                    };
                    Rollout {
                        action_index: a,
                        action: actions[a],
                        text: String::new(),
                        logp_old: probs[a].ln() - delta,
                        reward: rewards[i],
                        advantage: advantages[i],
                    }
                })
                .collect();
            groups.push(RolloutGroup {
                pair_index: g,
                features: phi,
                rollouts,
                reward_mean: mean,
                reward_std: var.sqrt(),
            });
        }

        let grad = grpo_gradient(&params, &groups, &params_ref, &cfg).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for b in 0..n_actions {
            for f in 0..3 {
                let mut plus = params.clone();
                plus.weights[b][f] += h;
                let mut minus = params.clone();
                minus.weights[b][f] -= h;
                let fd = (grpo_objective(&plus, &groups, &params_ref, &cfg).unwrap()
                    - grpo_objective(&minus, &groups, &params_ref, &cfg).unwrap())
                    / (2.0 * h);
                num += (grad[b][f] - fd) * (grad[b][f] - fd);
                den += fd * fd;
            }
        }
        let rel = (num / den.max(1e-24)).sqrt();
        worst = worst.max(rel);
        assert!(
            rel < 1e-5,
            "criterion 03: FAIL — trial {trial}: relative error {rel:.3e}"
        );
    }
    verdict(3, true, &format!("50 configs, worst relative error {worst:.3e}"));
}

// ---------------------------------------------------------------------------
// 4. Convergence at desk scale: 200 training pairs, default optimizer, 500
//    steps; the greedy policy must match the closed-form reward oracle on a
//    held-out set, and mean reward must rise.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_grpo_convergence() {
    let started = Instant::now();
    let tags = TagConfig::default();
    let reward_cfg = RewardConfig::default();
    let corpus = synth_corpus(&demo_sentences(200, 211), 0.5, 211).unwrap();
    let cfg = TrainConfig {
        max_steps: Some(500),
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&corpus, &cfg, &tags, &reward_cfg).unwrap();
    assert_eq!(out.steps, 500);

    let held_out = synth_corpus(&demo_sentences(100, 977), 0.5, 977).unwrap();
    let mut hits = 0;
    for pair in &held_out.pairs {
        let phi = features(pair, cfg.seed);
        let greedy = greedy_action(&out.params, &phi).unwrap();
        if oracle_argmax_set(&out.params.actions, pair, &reward_cfg).contains(&greedy) {
            hits += 1;
        }
    }

    let first: f64 = out.metrics[..50].iter().map(|m| m.mean_reward).sum::<f64>() / 50.0;
    let last: f64 = out.metrics[450..].iter().map(|m| m.mean_reward).sum::<f64>() / 50.0;
    let elapsed = started.elapsed();

    let mut fails = Vec::new();
    if hits < 95 {
        fails.push(format!("greedy matches oracle on {hits}/100 held-out pairs, need 95"));
    }
    if last <= first {
        fails.push(format!("mean reward did not rise: first-50 {first:.4}, last-50 {last:.4}"));
    }
    if elapsed >= Duration::from_secs(120) {
        fails.push(format!("took {elapsed:?}, budget 120 s"));
    }
    verdict(
        4,
        fails.is_empty(),
        &if fails.is_empty() {
            format!(
                "oracle agreement {hits}/100, reward {first:.3} → {last:.3}, {elapsed:?}"
            )
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 5. KL approximation: exactly zero at equal inputs, non-negative on random
//    ratios spanning four orders of magnitude.
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_kl_approximation_properties() {
    let mut fails = Vec::new();
    for x in [-10.0, -2.5, -1.0, -0.3, -1e-9] {
        let kl = kl_approx(x, x);
        if kl != 0.0 {
            fails.push(format!("kl_approx({x}, {x}) = {kl:e}, want exactly 0"));
        }
    }

    let (lo, hi) = ((0.01f64).ln(), (100.0f64).ln());
    let mut min_seen = f64::INFINITY;
    for i in 0..1000u64 {
        let mut stream = rng::stream(0x05, &[i]);
        let log_ratio = rng::uniform_in(&mut stream, lo, hi);
        let logp_theta = rng::uniform_in(&mut stream, -6.0, -0.05);
        let kl = kl_approx(logp_theta + log_ratio, logp_theta);
        min_seen = min_seen.min(kl);
        if kl < 0.0 {
            fails.push(format!("negative KL {kl:e} at log-ratio {log_ratio:.4}"));
            break;
        }
    }
    verdict(
        5,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("zero at equality, 1000 ratios non-negative (min {min_seen:.3e})")
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 6. Advantage normalization: standardized mean/std on random groups,
//    all-zero on degenerate ones.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_advantage_normalization() {
    let floor = 1e-8;
    let mut fails = Vec::new();
    let mut checked = 0;
    for i in 0..1000u64 {
        let mut stream = rng::stream(0x06, &[i]);
        let rewards: Vec<f64> = (0..16)
            .map(|_| rng::uniform_in(&mut stream, -2.0, 5.0))
            .collect();
        let mean = rewards.iter().sum::<f64>() / 16.0;
        let std =
            (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / 16.0).sqrt();
        let adv = compute_advantages(&rewards, floor).unwrap();
        if std <= floor {
            continue; // degenerate draw: covered by the all-equal check below
        }
        checked += 1;
        let mu = adv.iter().sum::<f64>() / 16.0;
        let sigma = (adv.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / 16.0).sqrt();
        if mu.abs() >= 1e-9 || (sigma - 1.0).abs() >= 1e-9 {
            fails.push(format!("group {i}: mean {mu:e}, std {sigma}"));
            break;
        }
    }
    if checked < 990 {
        fails.push(format!("only {checked}/1000 groups exceeded the std floor"));
    }
    for v in [0.0, 2.35, -0.05] {
        if compute_advantages(&vec![v; 16], floor).unwrap() != vec![0.0; 16] {
            fails.push(format!("all-equal group at {v} not zeroed"));
        }
    }
    verdict(
        6,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("{checked} random groups standardized, all-equal groups zeroed")
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 7. Voting vs the exact multinomial oracle: 16-sample majority voting over
//    a {0.6, 0.25, 0.15} candidate distribution, with first-occurrence
//    tie-breaking folded into the closed form.
// ---------------------------------------------------------------------------

/// P(candidate 0 wins an n-sample vote) for sampling probabilities `p`,
/// enumerating all count compositions. Ties are broken by first occurrence:
/// given tied counts, the winner is whichever tied candidate appears first,
/// and among the tied candidates every interleaving is equally likely, so
/// candidate 0 takes a tie with probability count0 / (sum of tied counts).
fn exact_mode_probability(n: usize, p: [f64; 3]) -> f64 {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let mut total = 0.0;
    for a in 0..=n {
        for b in 0..=(n - a) {
            let c = n - a - b;
            let weight = fact(n) / (fact(a) * fact(b) * fact(c))
                * p[0].powi(a as i32)
                * p[1].powi(b as i32)
                * p[2].powi(c as i32);
            let win = if a > b && a > c {
                1.0
            } else if a > 0 && a == b && a == c {
                a as f64 / n as f64
            } else if a == b && a > c {
                a as f64 / (a + b) as f64
            } else if a == c && a > b {
                a as f64 / (a + c) as f64
            } else {
                0.0
            };
            total += weight * win;
        }
    }
    total
}

#[test]
fn criterion_07_voting_matches_multinomial_oracle() {
    let probs = [0.6, 0.25, 0.15];
    let names = ["A", "B", "C"];
    let oracle16 = exact_mode_probability(16, probs);

    let trials = 10_000u64;
    let mut wins16 = 0u32;
    let mut wins1 = 0u32;
    for t in 0..trials {
        let mut stream = rng::stream(0x07, &[t]);
        let samples: Vec<String> = (0..16)
            .map(|_| {
                let u = rng::uniform_f64(&mut stream);
                let i = if u < probs[0] {
                    0
                } else if u < probs[0] + probs[1] {
                    1
                } else {
                    2
                };
                names[i].to_string()
            })
            .collect();
        if majority_vote(&samples).unwrap().winner == "A" {
            wins16 += 1;
        }
        if samples[0] == "A" {
            wins1 += 1; // the n=1 vote is the first sample of the same pool
        }
    }
    let rate16 = wins16 as f64 / trials as f64;
    let rate1 = wins1 as f64 / trials as f64;

    let mut fails = Vec::new();
    if (rate16 - oracle16).abs() > 0.02 {
        fails.push(format!(
            "simulated {rate16:.4} vs oracle {oracle16:.4} at n=16, gap over 2%"
        ));
    }
    if rate16 <= rate1 {
        fails.push(format!("n=16 rate {rate16:.4} not above n=1 rate {rate1:.4}"));
    }
    verdict(
        7,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("n=16: simulated {rate16:.4}, oracle {oracle16:.4}; n=1: {rate1:.4}")
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 8. Pipeline yield: the two-attempt filter accepts 1 − (1−p)² of sentences
//    and spends exactly one generator call on first-pass accepts, two on
//    everything else.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_pipeline_yield() {
    let n = 10_000usize;
    let pairs: Vec<SentencePair> = demo_sentences(n, 88)
        .into_iter()
        .enumerate()
        .map(|(i, s)| SentencePair {
            id: format!("y{i:05}"),
            source: s.clone(),
            references: vec![s],
        })
        .collect();
    let corpus = Corpus { pairs, seed: 88 };
    let tags = TagConfig::default();
    let generator = SyntheticGenerator {
        fix_prob: 0.9,
        seed: 1,
    };

    let mut fails = Vec::new();
    let mut observed = Vec::new();
    for p in [0.3, 0.5, 0.9] {
        let judge = SyntheticJudge {
            accept_prob: p,
            seed: 2,
        };
        let out = run_stage2_with(&corpus, &generator, &judge, 8, &tags);
        let s = &out.summary;
        let yield_rate = s.accepted as f64 / n as f64;
        let expected = 1.0 - (1.0 - p) * (1.0 - p);
        observed.push(format!("p={p}: {yield_rate:.4} (expect {expected:.4})"));
        if (yield_rate - expected).abs() > 0.02 {
            fails.push(format!(
                "p={p}: yield {yield_rate:.4}, expected {expected:.4} ± 0.02"
            ));
        }

        let pass1 = out
            .records
            .iter()
            .filter(|r| r.pass_index == 1)
            .count();
        let expected_calls = pass1 + 2 * (n - pass1);
        if s.generator_calls != expected_calls || s.judge_calls != expected_calls {
            fails.push(format!(
                "p={p}: {} generator / {} judge calls, expected exactly {expected_calls}",
                s.generator_calls, s.judge_calls
            ));
        }
        if s.generator_calls > 2 * n {
            fails.push(format!("p={p}: over two generator calls per sentence"));
        }
        if s.skipped != 0 || !s.errors.is_empty() {
            fails.push(format!("p={p}: unexpected skips {:?}", s.errors));
        }
    }
    verdict(
        8,
        fails.is_empty(),
        &if fails.is_empty() {
            observed.join(", ")
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 9. Scorer oracle equivalence: edit cost equals textbook Levenshtein on an
//    exhaustive small universe, and span application inverts alignment.
// ---------------------------------------------------------------------------

/// Plain prefix-table Wagner–Fischer, written independently of the
/// production suffix-table walk.
fn reference_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

#[test]
fn criterion_09_scorer_oracle_equivalence() {
    // Every string of length 0..=6 over a three-letter alphabet: 3^0 + …
    // + 3^6 = 1093 strings, 1_194_649 ordered pairs.
    let alphabet = ['a', 'b', 'c'];
    let mut universe = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..6 {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for s in &layer {
            for &ch in &alphabet {
                let mut t = s.clone();
                t.push(ch);
                next.push(t);
            }
        }
        universe.extend(next.iter().cloned());
        layer = next;
    }
    assert_eq!(universe.len(), 1093);

    let mut fails = Vec::new();
    let mut compared = 0u64;
    'outer: for src in &universe {
        for hyp in &universe {
            let got = script_cost(&edit_script(src, hyp));
            let want = reference_levenshtein(src, hyp);
            compared += 1;
            if got != want {
                fails.push(format!("cost({src:?}, {hyp:?}) = {got}, textbook {want}"));
                break 'outer;
            }
        }
    }

    // Reconstruction on random pairs over a wider alphabet (multibyte
    // characters included — spans index by char, not byte).
    let wide = ['a', 'b', 'c', 'é', '中', 'ß', ' ', '!'];
    let mut reconstructed = 0u64;
    for i in 0..10_000u64 {
        let mut stream = rng::stream(0x09, &[i]);
        let draw = |stream: &mut _| -> String {
            let len = rng::below(stream, 25);
            (0..len).map(|_| wide[rng::below(stream, wide.len())]).collect()
        };
        let src = draw(&mut stream);
        let hyp = draw(&mut stream);
        if apply_spans(&src, &align(&src, &hyp)) != hyp {
            fails.push(format!("apply_spans failed to rebuild {hyp:?} from {src:?}"));
            break;
        }
        reconstructed += 1;
    }
    verdict(
        9,
        fails.is_empty(),
        &if fails.is_empty() {
            format!("{compared} pairs cost-equal, {reconstructed} reconstructions exact")
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// 10. End-to-end reproducibility: the demo composition run twice with one
//     seed produces byte-identical artifacts, and the report names its three
//     curves reward / response length / entropy.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_end_to_end_reproducibility() {
    let tags = TagConfig::default();
    let reward_cfg = RewardConfig::default();
    let run = |dir: &std::path::Path| {
        let corpus = synth_corpus(&demo_sentences(80, 5), 0.5, 5).unwrap();
        let cfg = TrainConfig {
            max_steps: Some(60),
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &cfg, &tags, &reward_cfg).unwrap();
        write_metrics_csv(&out.metrics, dir.join("metrics.csv")).unwrap();
        save_checkpoint(&out.params, out.steps as u64, dir.join("checkpoint.json")).unwrap();
        let points =
            vote_eval(&out.params, &corpus, &[1, 4, 8], cfg.temperature, &tags, cfg.seed)
                .unwrap();
        write_vote_csv(&points, dir.join("vote.csv")).unwrap();
        write_report(&out.metrics, Some(&points), dir).unwrap();
    };

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(dir_a.path());
    run(dir_b.path());

    let mut fails = Vec::new();
    for name in ["metrics.csv", "vote.csv", "checkpoint.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        if a != b {
            fails.push(format!("{name} differs between identically-seeded runs"));
        }
    }
    for (file, title) in [
        ("reward.svg", ">reward</text>"),
        ("response_length.svg", ">response length</text>"),
        ("entropy.svg", ">entropy</text>"),
    ] {
        let svg = std::fs::read_to_string(dir_a.path().join(file)).unwrap();
        if !svg.contains(title) {
            fails.push(format!("{file} missing its {title} title"));
        }
    }
    verdict(
        10,
        fails.is_empty(),
        &if fails.is_empty() {
            "three artifacts byte-identical across runs, three curves titled".into()
        } else {
            fails.join("; ")
        },
    );
}
