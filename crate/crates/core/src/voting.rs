//! Majority voting over repeated sampled corrections.
//!
//! The same prompt is sampled n times at a given temperature, each
//! completion's answer is extracted, and the most frequent answer wins.
//! Sampling noise that occasionally flips a good policy onto a bad action
//! washes out as n grows, which is the cheap test-time scaling knob this
//! crate exposes. Samples are pooled once at the largest requested n and
//! the smaller settings vote over prefixes, so the n-sweep reflects one
//! set of draws rather than independent luck per point.

use std::fs;
use std::path::Path;

use crate::corpus::Corpus;
use crate::policy::{
    features, greedy_action, render_with_rng, sample_action, PolicyError, PolicyParams,
};
use crate::reward::{extract_answer, TagConfig};
use crate::rng::{self, domain};
use crate::scorer::{score_corpus, ScorerError};
use crate::text::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum VotingError {
    #[error("majority vote over zero candidates")]
    EmptyCandidates,
    #[error("vote sizes must be positive, got {n}")]
    BadVoteSize { n: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Outcome of one vote: the winning candidate, the tally in first-seen
/// order, and how many samples voted.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub winner: String,
    pub counts: Vec<(String, usize)>,
    pub n_samples: usize,
}

/// Most frequent candidate; ties go to the candidate that appeared first.
pub fn majority_vote(candidates: &[String]) -> Result<VoteResult, VotingError> {
    if candidates.is_empty() {
        return Err(VotingError::EmptyCandidates);
    }
    let mut counts: Vec<(String, usize)> = Vec::new();
    for c in candidates {
        match counts.iter_mut().find(|(s, _)| s == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c.clone(), 1)),
        }
    }
    // max_by_key takes the last maximum, so scan manually for the first.
    let mut winner = 0;
    for (i, (_, n)) in counts.iter().enumerate() {
        if *n > counts[winner].1 {
            winner = i;
        }
    }
    Ok(VoteResult {
        winner: counts[winner].0.clone(),
        counts,
        n_samples: candidates.len(),
    })
}

/// One row of the n-sweep: corpus-level scores when every sentence is
/// answered by an n-way vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VotePoint {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub f05: f64,
}

/// Sample `max(n_list)` corrections per sentence, then score the majority
/// answer for each prefix length in `n_list`.
///
/// Sampling streams are keyed by (seed, pair id, slot index); the policy
/// parameters never change during evaluation. A sample whose text has no
/// extractable answer votes for the unchanged source — the same fallback
/// the scorer applies to a model that failed to answer. Temperature 0 is
/// accepted as "greedy": every slot takes the argmax action, so all vote
/// sizes agree.
pub fn vote_eval(
    params: &PolicyParams,
    corpus: &Corpus,
    n_list: &[usize],
    temperature: f64,
    tags: &TagConfig,
    seed: u64,
) -> Result<Vec<VotePoint>, VotingError> {
    if corpus.is_empty() {
        return Err(VotingError::EmptyCorpus);
    }
    if let Some(&n) = n_list.iter().find(|&&n| n == 0) {
        return Err(VotingError::BadVoteSize { n });
    }
    let max_n = n_list.iter().copied().max().unwrap_or(0);

    // candidates[pair][slot]
    let mut candidates: Vec<Vec<String>> = Vec::with_capacity(corpus.len());
    for pair in &corpus.pairs {
        let phi = features(pair, seed);
        let id_tag = fnv1a64(pair.id.as_bytes());
        let mut per_pair = Vec::with_capacity(max_n);
        for slot in 0..max_n {
            let mut stream = rng::stream(seed, &[domain::VOTE, id_tag, slot as u64]);
            let action_index = if temperature > 0.0 {
                sample_action(params, &phi, temperature, &mut stream)?.0
            } else {
                greedy_action(params, &phi)?
            };
            let text = render_with_rng(params.actions[action_index], pair, &mut stream)?;
            let answer = extract_answer(&text, tags).unwrap_or_else(|| pair.source.clone());
            per_pair.push(answer);
        }
        candidates.push(per_pair);
    }

    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let hyps: Vec<String> = candidates
            .iter()
            .map(|per_pair| {
                let take = n.min(per_pair.len());
                Ok(majority_vote(&per_pair[..take])?.winner)
            })
            .collect::<Result<_, VotingError>>()?;
        let score = score_corpus(corpus, &hyps)?;
        points.push(VotePoint {
            n,
            precision: score.precision,
            recall: score.recall,
            f05: score.f05,
        });
    }
    Ok(points)
}

/// Write the sweep as CSV: `n,p,r,f05`, one row per vote size.
pub fn write_vote_csv(points: &[VotePoint], path: impl AsRef<Path>) -> Result<(), VotingError> {
    let mut out = String::from("n,p,r,f05\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.n, p.precision, p.recall, p.f05));
    }
    fs::write(path.as_ref(), out).map_err(|source| VotingError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;
    use crate::policy::Action;
    use proptest::prelude::*;

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn majority_picks_most_frequent() {
        let v = majority_vote(&strings(&["A", "A", "B"])).unwrap();
        assert_eq!(v.winner, "A");
        assert_eq!(v.n_samples, 3);
        assert_eq!(v.counts, vec![("A".into(), 2), ("B".into(), 1)]);
    }

    #[test]
    fn ties_go_to_first_seen() {
        assert_eq!(majority_vote(&strings(&["A", "B"])).unwrap().winner, "A");
        // B reaches its count first even though A catches up.
        assert_eq!(
            majority_vote(&strings(&["B", "A", "A", "B"])).unwrap().winner,
            "B"
        );
    }

    #[test]
    fn empty_vote_is_an_error() {
        assert!(matches!(
            majority_vote(&[]),
            Err(VotingError::EmptyCandidates)
        ));
    }

    fn gold_biased_params() -> PolicyParams {
        // Strong bias toward the gold fix; sampling still occasionally
        // picks something else at temperature 1.
        let mut params = PolicyParams::zeros();
        let gold = params
            .actions
            .iter()
            .position(|&a| a == Action::EmitGoldFix)
            .unwrap();
        params.weights[gold][0] = 3.0;
        params
    }

    #[test]
    fn near_deterministic_policy_scores_perfectly() {
        let clean: Vec<String> = (0..20).map(|i| format!("plain sentence number {i}")).collect();
        let corpus = synth_corpus(&clean, 0.5, 11).unwrap();
        let mut params = PolicyParams::zeros();
        let gold = params
            .actions
            .iter()
            .position(|&a| a == Action::EmitGoldFix)
            .unwrap();
        params.weights[gold][0] = 40.0; // p(gold) > 0.999999
        let points = vote_eval(
            &params,
            &corpus,
            &[1, 4],
            1.0,
            &TagConfig::default(),
            7,
        )
        .unwrap();
        for p in &points {
            assert_eq!(p.f05, 1.0, "n={}", p.n);
            assert_eq!(p.precision, 1.0);
            assert_eq!(p.recall, 1.0);
        }
    }

    #[test]
    fn voting_rescues_a_noisy_policy() {
        let clean: Vec<String> = (0..40).map(|i| format!("plain sentence number {i}")).collect();
        let corpus = synth_corpus(&clean, 0.5, 23).unwrap();
        let params = gold_biased_params();
        let points = vote_eval(
            &params,
            &corpus,
            &[1, 16],
            1.0,
            &TagConfig::default(),
            23,
        )
        .unwrap();
        assert_eq!(points[0].n, 1);
        assert_eq!(points[1].n, 16);
        assert!(
            points[1].f05 >= points[0].f05,
            "n=16 gave {} vs n=1 {}",
            points[1].f05,
            points[0].f05
        );
        // With p(gold) ≈ 0.87, a 16-way vote is essentially always right.
        assert!(points[1].f05 > 0.99, "{}", points[1].f05);
    }

    #[test]
    fn temperature_zero_means_greedy() {
        let clean: Vec<String> = (0..10).map(|i| format!("plain sentence number {i}")).collect();
        let corpus = synth_corpus(&clean, 0.5, 3).unwrap();
        let params = gold_biased_params();
        let points = vote_eval(
            &params,
            &corpus,
            &[1, 8, 32],
            0.0,
            &TagConfig::default(),
            3,
        )
        .unwrap();
        // Greedy sampling makes every slot identical, so all sweep points
        // coincide.
        assert_eq!(points[0].f05, points[1].f05);
        assert_eq!(points[1].f05, points[2].f05);
    }

    #[test]
    fn rejects_zero_vote_size_and_empty_corpus() {
        let clean = vec!["plain sentence".to_string()];
        let corpus = synth_corpus(&clean, 0.0, 1).unwrap();
        let params = PolicyParams::zeros();
        assert!(matches!(
            vote_eval(&params, &corpus, &[1, 0], 1.0, &TagConfig::default(), 1),
            Err(VotingError::BadVoteSize { n: 0 })
        ));
        let empty = Corpus {
            pairs: vec![],
            seed: 0,
        };
        assert!(matches!(
            vote_eval(&params, &empty, &[1], 1.0, &TagConfig::default(), 1),
            Err(VotingError::EmptyCorpus)
        ));
    }

    #[test]
    fn vote_csv_layout() {
        let points = vec![
            VotePoint {
                n: 1,
                precision: 0.5,
                recall: 0.25,
                f05: 0.4166666666666667,
            },
            VotePoint {
                n: 4,
                precision: 1.0,
                recall: 1.0,
                f05: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vote.csv");
        write_vote_csv(&points, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "n,p,r,f05\n1,0.5,0.25,0.4166666666666667\n4,1,1,1\n"
        );
    }

    proptest! {
        #[test]
        fn winner_has_maximal_count(
            raw in proptest::collection::vec(0u8..4, 1..24),
        ) {
            let candidates: Vec<String> =
                raw.iter().map(|c| format!("c{c}")).collect();
            let v = majority_vote(&candidates).unwrap();
            let max = v.counts.iter().map(|(_, n)| *n).max().unwrap();
            let winner_count = v
                .counts
                .iter()
                .find(|(s, _)| *s == v.winner)
                .unwrap()
                .1;
            prop_assert_eq!(winner_count, max);
            let total: usize = v.counts.iter().map(|(_, n)| *n).sum();
            prop_assert_eq!(total, candidates.len());
        }
    }
}
