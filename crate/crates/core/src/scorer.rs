//! Character-level alignment and span-based P/R/F scoring.
//!
//! Hypotheses are compared to references through minimal edit scripts over
//! Unicode scalar values (unit costs; matches are free). Runs of adjacent
//! non-match operations collapse into [`EditSpan`]s, and sentences are
//! scored by exact span agreement against the best-matching reference.
//! Corpus scores micro-average the counts before applying F_β once.

use std::collections::HashSet;

use crate::corpus::{Corpus, SentencePair};

/// One contiguous edit: replace `source[start..end]` (character indices)
/// with `replacement`. `start == end` inserts; an empty replacement deletes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EditSpan {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

/// Classification of a span, fully determined by its shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    Insert,
    Delete,
    Replace,
}

impl EditSpan {
    pub fn kind(&self) -> SpanKind {
        if self.start == self.end {
            SpanKind::Insert
        } else if self.replacement.is_empty() {
            SpanKind::Delete
        } else {
            SpanKind::Replace
        }
    }
}

/// Micro-averaged span counts. `fn_` because `fn` is reserved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ScoreCounts {
    pub fn add(&mut self, other: ScoreCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("score_sentence requires at least one reference edit set")]
    EmptyReferenceSets,
    #[error("corpus has {corpus} pairs but {hypotheses} hypotheses were supplied")]
    LengthMismatch { corpus: usize, hypotheses: usize },
}

/// A single step of an edit script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// Minimal-cost edit script from `source` to `hypothesis` (unit costs,
/// matches free). Among equal-cost scripts the walk prefers, at every
/// position, match > substitute > delete > insert — this fixes one
/// deterministic script so downstream spans are stable.
pub fn edit_script(source: &str, hypothesis: &str) -> Vec<EditOp> {
    let src: Vec<char> = source.chars().collect();
    let hyp: Vec<char> = hypothesis.chars().collect();
    let (n, m) = (src.len(), hyp.len());

    // dp[i][j] = cost of converting src[i..] into hyp[j..]; suffix form so
    // the preference walk below can run forward over the strings.
    let width = m + 1;
    let mut dp = vec![0u32; (n + 1) * width];
    for j in 0..=m {
        dp[n * width + j] = (m - j) as u32;
    }
    for i in (0..n).rev() {
        dp[i * width + m] = (n - i) as u32;
        for j in (0..m).rev() {
            let diag = dp[(i + 1) * width + j + 1] + u32::from(src[i] != hyp[j]);
            let del = dp[(i + 1) * width + j] + 1;
            let ins = dp[i * width + j + 1] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = dp[i * width + j];
        if i < n && j < m && src[i] == hyp[j] && here == dp[(i + 1) * width + j + 1] {
            ops.push(EditOp::Match);
            i += 1;
            j += 1;
        } else if i < n && j < m && src[i] != hyp[j] && here == dp[(i + 1) * width + j + 1] + 1 {
            ops.push(EditOp::Substitute);
            i += 1;
            j += 1;
        } else if i < n && here == dp[(i + 1) * width + j] + 1 {
            ops.push(EditOp::Delete);
            i += 1;
        } else {
            ops.push(EditOp::Insert);
            j += 1;
        }
    }
    ops
}

/// Cost of an edit script: every non-match step counts one.
pub fn script_cost(ops: &[EditOp]) -> usize {
    ops.iter().filter(|op| !matches!(op, EditOp::Match)).count()
}

/// Align `hypothesis` against `source` and return merged edit spans:
/// maximal runs of consecutive non-match operations become single spans.
/// Applying the spans (see [`apply_spans`]) reproduces the hypothesis.
pub fn align(source: &str, hypothesis: &str) -> Vec<EditSpan> {
    let hyp: Vec<char> = hypothesis.chars().collect();
    let ops = edit_script(source, hypothesis);

    let mut spans = Vec::new();
    let (mut i, mut j) = (0usize, 0usize); // cursors into source / hypothesis
    let mut run: Option<(usize, usize)> = None; // (span start in source, start in hyp)
    for op in ops {
        match op {
            EditOp::Match => {
                if let Some((s, h)) = run.take() {
                    spans.push(EditSpan {
                        start: s,
                        end: i,
                        replacement: hyp[h..j].iter().collect(),
                    });
                }
                i += 1;
                j += 1;
            }
            EditOp::Substitute => {
                run.get_or_insert((i, j));
                i += 1;
                j += 1;
            }
            EditOp::Delete => {
                run.get_or_insert((i, j));
                i += 1;
            }
            EditOp::Insert => {
                run.get_or_insert((i, j));
                j += 1;
            }
        }
    }
    if let Some((s, h)) = run {
        spans.push(EditSpan {
            start: s,
            end: i,
            replacement: hyp[h..j].iter().collect(),
        });
    }
    spans
}

/// Apply sorted, non-overlapping spans to `source`. Inverse of [`align`] in
/// the sense that `apply_spans(src, &align(src, hyp)) == hyp`.
pub fn apply_spans(source: &str, spans: &[EditSpan]) -> String {
    let src: Vec<char> = source.chars().collect();
    let mut out = String::new();
    let mut cursor = 0usize;
    for span in spans {
        debug_assert!(span.start >= cursor && span.end <= src.len());
        out.extend(&src[cursor..span.start]);
        out.push_str(&span.replacement);
        cursor = span.end;
    }
    out.extend(&src[cursor..]);
    out
}

/// Edit sets for every reference of a pair, in reference order.
pub fn extract_ref_edits(pair: &SentencePair) -> Vec<(String, Vec<EditSpan>)> {
    pair.references
        .iter()
        .map(|r| (r.clone(), align(&pair.source, r)))
        .collect()
}

fn counts_against(hyp: &[EditSpan], reference: &[EditSpan]) -> ScoreCounts {
    let ref_set: HashSet<&EditSpan> = reference.iter().collect();
    let tp = hyp.iter().filter(|s| ref_set.contains(s)).count() as u64;
    ScoreCounts {
        tp,
        fp: hyp.len() as u64 - tp,
        fn_: reference.len() as u64 - tp,
    }
}

/// Score one sentence: count exact span matches against each reference edit
/// set and keep the reference maximizing sentence-level F0.5 (ties: higher
/// tp, then lower fp, then the earliest reference).
pub fn score_sentence(
    hyp_edits: &[EditSpan],
    ref_edit_sets: &[Vec<EditSpan>],
) -> Result<ScoreCounts, ScorerError> {
    if ref_edit_sets.is_empty() {
        return Err(ScorerError::EmptyReferenceSets);
    }
    let mut best: Option<(f64, ScoreCounts)> = None;
    for ref_edits in ref_edit_sets {
        let counts = counts_against(hyp_edits, ref_edits);
        let (_, _, f) = f_beta(counts, 0.5);
        let better = match &best {
            None => true,
            Some((best_f, best_counts)) => {
                f > *best_f
                    || (f == *best_f
                        && (counts.tp > best_counts.tp
                            || (counts.tp == best_counts.tp && counts.fp < best_counts.fp)))
            }
        };
        if better {
            best = Some((f, counts));
        }
    }
    Ok(best.expect("non-empty reference sets").1)
}

/// F from precision and recall directly: (1+β²)PR / (β²P + R), or 0 when
/// the denominator vanishes.
pub fn f_from_pr(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Precision, recall, and F_β from counts. Zero-denominator conventions:
/// P = 1 when tp+fp = 0, R = 1 when tp+fn = 0 (so an empty hypothesis set
/// against an empty reference set scores a perfect 1 — abstention on clean
/// text is not punished).
pub fn f_beta(counts: ScoreCounts, beta: f64) -> (f64, f64, f64) {
    assert!(beta > 0.0, "beta must be positive");
    let p = if counts.tp + counts.fp == 0 {
        1.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let r = if counts.tp + counts.fn_ == 0 {
        1.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fn_) as f64
    };
    (p, r, f_from_pr(p, r, beta))
}

/// Corpus-level score: summed counts, F applied once (micro-average).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusScore {
    pub counts: ScoreCounts,
    pub precision: f64,
    pub recall: f64,
    pub f05: f64,
}

/// Score index-aligned hypotheses against a corpus.
pub fn score_corpus(corpus: &Corpus, hypotheses: &[String]) -> Result<CorpusScore, ScorerError> {
    if corpus.pairs.len() != hypotheses.len() {
        return Err(ScorerError::LengthMismatch {
            corpus: corpus.pairs.len(),
            hypotheses: hypotheses.len(),
        });
    }
    let mut total = ScoreCounts::default();
    for (pair, hyp) in corpus.pairs.iter().zip(hypotheses) {
        let hyp_edits = align(&pair.source, hyp);
        let ref_sets: Vec<Vec<EditSpan>> = pair
            .references
            .iter()
            .map(|r| align(&pair.source, r))
            .collect();
        total.add(score_sentence(&hyp_edits, &ref_sets)?);
    }
    let (precision, recall, f05) = f_beta(total, 0.5);
    Ok(CorpusScore {
        counts: total,
        precision,
        recall,
        f05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(start: usize, end: usize, replacement: &str) -> EditSpan {
        EditSpan {
            start,
            end,
            replacement: replacement.into(),
        }
    }

    #[test]
    fn identity_aligns_to_nothing() {
        assert!(align("abc", "abc").is_empty());
        assert!(align("", "").is_empty());
    }

    #[test]
    fn single_insertion() {
        assert_eq!(align("ab", "axb"), vec![span(1, 1, "x")]);
    }

    #[test]
    fn merges_split_and_suffix_edits() {
        // 4 edits: delete the space inside "any one", insert "ing" at the
        // end; the tie-break walk pins exactly these two spans.
        let spans = align("any one start", "anyone starting");
        assert_eq!(spans, vec![span(3, 4, ""), span(13, 13, "ing")]);
        assert_eq!(spans[0].kind(), SpanKind::Delete);
        assert_eq!(spans[1].kind(), SpanKind::Insert);
        assert_eq!(
            apply_spans("any one start", &spans),
            "anyone starting"
        );
        assert_eq!(script_cost(&edit_script("any one start", "anyone starting")), 4);
    }

    #[test]
    fn substitution_preferred_over_delete_insert() {
        assert_eq!(align("ab", "cb"), vec![span(0, 1, "c")]);
        // Two substitutions merge into one replace span.
        assert_eq!(align("abc", "xyc"), vec![span(0, 2, "xy")]);
        // "ab" -> "ba" resolves as a double substitution, not delete+insert.
        assert_eq!(align("ab", "ba"), vec![span(0, 2, "ba")]);
    }

    #[test]
    fn match_preferred_over_everything() {
        // Inserting "a" into "aa" could go at any offset; preferring match
        // first pushes the insertion to the end.
        assert_eq!(align("aa", "aaa"), vec![span(2, 2, "a")]);
    }

    #[test]
    fn alignment_counts_scalars_not_bytes() {
        assert_eq!(align("日本語", "日木語"), vec![span(1, 2, "木")]);
    }

    #[test]
    fn extract_ref_edits_per_reference() {
        let pair = SentencePair {
            id: "1".into(),
            source: "abc".into(),
            references: vec!["abc".into(), "abcd".into()],
        };
        let edits = extract_ref_edits(&pair);
        assert_eq!(edits.len(), 2);
        assert_eq!(edits[0].1, vec![]);
        assert_eq!(edits[1].1, vec![span(3, 3, "d")]);
    }

    #[test]
    fn sentence_scoring_counts() {
        let hyp = vec![span(1, 2, "x")];
        let same = vec![vec![span(1, 2, "x")]];
        assert_eq!(
            score_sentence(&hyp, &same).unwrap(),
            ScoreCounts { tp: 1, fp: 0, fn_: 0 }
        );

        let empty_ref = vec![vec![]];
        assert_eq!(
            score_sentence(&hyp, &empty_ref).unwrap(),
            ScoreCounts { tp: 0, fp: 1, fn_: 0 }
        );

        assert!(matches!(
            score_sentence(&hyp, &[]),
            Err(ScorerError::EmptyReferenceSets)
        ));
    }

    #[test]
    fn best_reference_wins() {
        // Only the second reference contains the hypothesis span.
        let hyp = vec![span(0, 1, "z")];
        let refs = vec![vec![], vec![span(0, 1, "z"), span(4, 5, "q")]];
        let counts = score_sentence(&hyp, &refs).unwrap();
        assert_eq!(counts, ScoreCounts { tp: 1, fp: 0, fn_: 1 });
    }

    #[test]
    fn tied_f_prefers_first_reference() {
        // Both references miss the hypothesis equally; counts must come
        // from the first.
        let hyp = vec![span(0, 1, "z")];
        let refs = vec![vec![span(2, 3, "a")], vec![span(4, 5, "b")]];
        let counts = score_sentence(&hyp, &refs).unwrap();
        assert_eq!(counts, ScoreCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn f_beta_conventions() {
        let perfect = ScoreCounts { tp: 1, fp: 0, fn_: 0 };
        assert_eq!(f_beta(perfect, 0.5), (1.0, 1.0, 1.0));

        let nothing = ScoreCounts::default();
        assert_eq!(f_beta(nothing, 0.5), (1.0, 1.0, 1.0));

        let all_wrong = ScoreCounts { tp: 0, fp: 3, fn_: 2 };
        let (p, r, f) = f_beta(all_wrong, 0.5);
        assert_eq!((p, r, f), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f_beta_matches_published_rows() {
        // Percent-scale P/R from two published result rows.
        let f = f_from_pr(0.4611, 0.3435, 0.5);
        assert!((f - 0.4316).abs() < 1e-4, "got {f}");
        let f = f_from_pr(0.6204, 0.4584, 0.5);
        assert!((f - 0.5794).abs() < 1e-4, "got {f}");
    }

    #[test]
    fn corpus_scoring_micro_averages() {
        let corpus = Corpus {
            pairs: vec![
                SentencePair {
                    id: "1".into(),
                    source: "ab".into(),
                    references: vec!["axb".into()],
                },
                SentencePair {
                    id: "2".into(),
                    source: "cd".into(),
                    references: vec!["cd".into()],
                },
            ],
            seed: 0,
        };
        // First hypothesis matches the reference edit; second adds a bogus
        // edit to a clean sentence.
        let hyps = vec!["axb".to_string(), "cdq".to_string()];
        let score = score_corpus(&corpus, &hyps).unwrap();
        assert_eq!(score.counts, ScoreCounts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(score.precision, 0.5);
        assert_eq!(score.recall, 1.0);

        // Abstaining everywhere on a clean corpus is perfect by convention.
        let clean = Corpus {
            pairs: vec![SentencePair {
                id: "1".into(),
                source: "ok".into(),
                references: vec!["ok".into()],
            }],
            seed: 0,
        };
        let score = score_corpus(&clean, &["ok".to_string()]).unwrap();
        assert_eq!((score.precision, score.recall, score.f05), (1.0, 1.0, 1.0));

        assert!(matches!(
            score_corpus(&clean, &[]),
            Err(ScorerError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fixing_errorful_pairs_exactly_scores_one() {
        let corpus = Corpus {
            pairs: vec![SentencePair {
                id: "1".into(),
                source: "teh cat".into(),
                references: vec!["the cat".into()],
            }],
            seed: 0,
        };
        let score = score_corpus(&corpus, &["the cat".to_string()]).unwrap();
        assert_eq!(score.counts.fp, 0);
        assert_eq!(score.counts.fn_, 0);
        assert_eq!(score.f05, 1.0);
    }

    proptest! {
        #[test]
        fn spans_reconstruct_hypothesis(
            src in "[abcd]{0,20}",
            hyp in "[abcd]{0,20}",
        ) {
            let spans = align(&src, &hyp);
            prop_assert_eq!(apply_spans(&src, &spans), hyp);
        }

        #[test]
        fn f_monotone_in_tp_for_fixed_fn(tp in 0u64..50, fp in 1u64..50, fn_ in 0u64..50) {
            // Promote one false positive to a true positive: F never drops.
            let (_, _, f_before) = f_beta(ScoreCounts { tp, fp, fn_ }, 0.5);
            let (_, _, f_after) = f_beta(ScoreCounts { tp: tp + 1, fp: fp - 1, fn_ }, 0.5);
            prop_assert!(f_after >= f_before);
        }

        #[test]
        fn f05_weights_precision(tp in 1u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let counts = ScoreCounts { tp, fp, fn_ };
            let (p, r, f05) = f_beta(counts, 0.5);
            let (_, _, f1) = f_beta(counts, 1.0);
            if p > r {
                prop_assert!(f05 > f1, "P={p} R={r} F0.5={f05} F1={f1}");
            }
        }
    }
}
