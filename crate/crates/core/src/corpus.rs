//! Data model and synthetic task generation.
//!
//! A [`SentencePair`] couples one source sentence with a non-empty set of
//! acceptable reference corrections; an error-free sentence is represented
//! by a reference set containing the source itself. [`synth_corpus`] turns
//! clean sentences into a seeded mix of error-free pairs and corrupted pairs
//! whose single reference is the original sentence — a language-agnostic
//! stand-in for native-speaker errors.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::{self, domain};
use crate::text::norm_eq;

/// One source sentence plus its acceptable corrections.
///
/// `references` is an ordered set: non-empty, members pairwise distinct.
/// Strings are stored raw; every equality decision in the crate goes through
/// NFC + trim normalization (see [`crate::text::norm_eq`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentencePair {
    pub id: String,
    pub source: String,
    pub references: Vec<String>,
}

impl SentencePair {
    /// True iff the source is not among the references, i.e. the sentence
    /// needs correction.
    pub fn errorful(&self) -> bool {
        !self.references.iter().any(|r| norm_eq(r, &self.source))
    }

    /// The canonical correction — the first reference. Well-defined because
    /// references are non-empty by invariant.
    pub fn first_reference(&self) -> &str {
        &self.references[0]
    }
}

/// An ordered list of pairs with unique ids, plus the seed that produced it
/// (0 for corpora loaded from disk).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub pairs: Vec<SentencePair>,
    pub seed: u64,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: record {id:?} has an empty reference list")]
    EmptyReferences { line: usize, id: String },
    #[error("line {line}: record {id:?} repeats reference {reference:?}")]
    DuplicateReference {
        line: usize,
        id: String,
        reference: String,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("could not corrupt {sentence:?} after {attempts} attempts (every edit collides with a reference)")]
    CorruptionFailed { sentence: String, attempts: u32 },
}

/// Validate the per-record invariants shared by the loader and the builders.
fn validate_pair(pair: &SentencePair, line: usize) -> Result<(), CorpusError> {
    if pair.references.is_empty() {
        return Err(CorpusError::EmptyReferences {
            line,
            id: pair.id.clone(),
        });
    }
    let mut seen = HashSet::new();
    for r in &pair.references {
        if !seen.insert(r.as_str()) {
            return Err(CorpusError::DuplicateReference {
                line,
                id: pair.id.clone(),
                reference: r.clone(),
            });
        }
    }
    Ok(())
}

/// Load a JSONL corpus: one `{"id","source","references"}` object per line.
///
/// The loader is strict — a malformed line, an empty reference list, a
/// repeated reference, or a duplicate id anywhere in the file aborts the
/// load with the offending line number. Blank lines are permitted (and
/// skipped) so trailing newlines don't matter.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut pairs: Vec<SentencePair> = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SentencePair =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: lineno,
                message: e.to_string(),
            })?;
        validate_pair(&pair, lineno)?;
        if !ids.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: pair.id,
            });
        }
        pairs.push(pair);
    }
    Ok(Corpus { pairs, seed: 0 })
}

/// Write a corpus in canonical form: UTF-8, LF line endings, keys in the
/// order `id, source, references`, no extra whitespace.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for pair in &corpus.pairs {
        // Serialization of a plain struct cannot fail.
        let line = serde_json::to_string(pair).expect("serializing SentencePair");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The four corruption operators. All positions are indices into the
/// sequence of Unicode scalar values, never bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    CharDelete,
    CharDuplicate,
    AdjacentSwap,
    TokenSwap,
}

/// A single corruption: an operator applied at a character position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionOp {
    pub kind: CorruptionKind,
    pub position: usize,
}

impl fmt::Display for CorruptionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{}", self.kind, self.position)
    }
}

impl CorruptionOp {
    /// Apply the operator to `s`. Returns `None` when it does not apply at
    /// this position (out of range, or a swap with no right neighbour).
    pub fn apply(&self, s: &str) -> Option<String> {
        let chars: Vec<char> = s.chars().collect();
        let p = self.position;
        if p >= chars.len() {
            return None;
        }
        match self.kind {
            CorruptionKind::CharDelete => {
                let mut out = chars.clone();
                out.remove(p);
                Some(out.into_iter().collect())
            }
            CorruptionKind::CharDuplicate => {
                let mut out = chars.clone();
                out.insert(p, chars[p]);
                Some(out.into_iter().collect())
            }
            CorruptionKind::AdjacentSwap => {
                if p + 1 >= chars.len() {
                    return None;
                }
                let mut out = chars.clone();
                out.swap(p, p + 1);
                Some(out.into_iter().collect())
            }
            CorruptionKind::TokenSwap => token_swap(&chars, p),
        }
    }
}

/// Swap the whitespace-delimited token containing (or following) position
/// `p` with its right neighbour, preserving the original separator runs.
/// Single-token sentences fall back to an adjacent character swap.
fn token_swap(chars: &[char], p: usize) -> Option<String> {
    // Segment into alternating runs of non-whitespace tokens and gaps,
    // remembering each token's start offset.
    let mut tokens: Vec<(usize, String)> = Vec::new(); // (start, text)
    let mut gaps: Vec<String> = Vec::new(); // gaps[i] follows tokens[i]
    let mut prefix = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            let run: String = chars[i..]
                .iter()
                .take_while(|c| c.is_whitespace())
                .collect();
            i += run.chars().count();
            if tokens.is_empty() {
                prefix = run;
            } else {
                gaps.push(run);
            }
        } else {
            let run: String = chars[i..]
                .iter()
                .take_while(|c| !c.is_whitespace())
                .collect();
            let len = run.chars().count();
            tokens.push((i, run));
            i += len;
        }
    }
    if tokens.len() < 2 {
        return CorruptionOp {
            kind: CorruptionKind::AdjacentSwap,
            position: p,
        }
        .apply(&chars.iter().collect::<String>());
    }
    // After the loop, gaps[i] is the whitespace following token i (the last
    // entry may be a trailing run). Tokens permute; gaps stay in place.
    let t = tokens
        .iter()
        .rposition(|&(start, _)| start <= p)
        .unwrap_or(0)
        .min(tokens.len() - 2);
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.swap(t, t + 1);

    let mut out = prefix;
    for (slot, &tok_idx) in order.iter().enumerate() {
        out.push_str(&tokens[tok_idx].1);
        if let Some(gap) = gaps.get(slot) {
            out.push_str(gap);
        }
    }
    Some(out)
}

const CORRUPTION_ATTEMPTS: u32 = 100;

/// Corrupt `sentence` with a random operator at a random position, retrying
/// until the (normalized) result differs from every string in `forbidden`.
/// Fails after 100 attempts — only pathological inputs (e.g. whitespace-only
/// sentences) get that far.
pub fn corrupt_avoiding(
    sentence: &str,
    forbidden: &[&str],
    rng: &mut impl RngCore,
) -> Result<(CorruptionOp, String), CorpusError> {
    let len = sentence.chars().count().max(1);
    for _ in 0..CORRUPTION_ATTEMPTS {
        let kind = match rng::below(rng, 4) {
            0 => CorruptionKind::CharDelete,
            1 => CorruptionKind::CharDuplicate,
            2 => CorruptionKind::AdjacentSwap,
            _ => CorruptionKind::TokenSwap,
        };
        let op = CorruptionOp {
            kind,
            position: rng::below(rng, len),
        };
        if let Some(corrupted) = op.apply(sentence) {
            if !forbidden.iter().any(|f| norm_eq(f, &corrupted)) {
                return Ok((op, corrupted));
            }
        }
    }
    Err(CorpusError::CorruptionFailed {
        sentence: sentence.to_string(),
        attempts: CORRUPTION_ATTEMPTS,
    })
}

/// Build a synthetic corpus from clean sentences.
///
/// Each sentence independently becomes errorful with probability
/// `error_rate`: its source is a corruption (guaranteed to differ from the
/// clean sentence under normalization) and its single reference is the
/// clean sentence. Otherwise source == reference == the clean sentence.
/// Deterministic given `seed`; every sentence owns its own RNG stream, so
/// the result does not depend on iteration or thread order.
pub fn synth_corpus(
    clean_sentences: &[impl AsRef<str>],
    error_rate: f64,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    assert!(
        (0.0..=1.0).contains(&error_rate),
        "error_rate must lie in [0, 1]"
    );
    let mut pairs = Vec::with_capacity(clean_sentences.len());
    for (i, clean) in clean_sentences.iter().enumerate() {
        let clean = clean.as_ref();
        assert!(!clean.is_empty(), "clean sentences must be non-empty");
        let mut stream = rng::stream(seed, &[domain::CORPUS, i as u64]);
        let corrupt = rng::bernoulli(&mut stream, error_rate);
        let source = if corrupt {
            let (_, corrupted) = corrupt_avoiding(clean, &[clean], &mut stream)?;
            debug_assert!(!norm_eq(&corrupted, clean));
            corrupted
        } else {
            clean.to_string()
        };
        pairs.push(SentencePair {
            id: format!("s{:05}", i + 1),
            source,
            references: vec![clean.to_string()],
        });
    }
    Ok(Corpus { pairs, seed })
}

/// Word bank for [`demo_sentences`]. Deliberately boring: short common
/// words keep rendered outputs readable in demo artifacts.
const DEMO_WORDS: &[&str] = &[
    "the", "a", "quick", "slow", "brown", "grey", "fox", "dog", "bird", "cat", "jumps", "runs",
    "sleeps", "walks", "over", "under", "near", "behind", "lazy", "small", "large", "old", "young",
    "river", "fence", "garden", "house", "tree", "road", "hill", "quietly", "quickly", "often",
    "rarely", "today", "yesterday", "again", "still", "always", "never",
];

/// Generate `count` deterministic clean sentences (4–9 words each) for the
/// demo pipeline. Not a model of grammar — just varied, non-empty inputs
/// whose corruptions are visibly wrong.
pub fn demo_sentences(count: usize, seed: u64) -> Vec<String> {
    (0..count)
        .map(|i| {
            let mut stream = rng::stream(seed, &[domain::CORPUS, 0xDE, i as u64]);
            let n_words = 4 + rng::below(&mut stream, 6);
            let words: Vec<&str> = (0..n_words)
                .map(|_| DEMO_WORDS[rng::below(&mut stream, DEMO_WORDS.len())])
                .collect();
            words.join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn pair(id: &str, source: &str, refs: &[&str]) -> SentencePair {
        SentencePair {
            id: id.into(),
            source: source.into(),
            references: refs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn errorful_is_reference_membership() {
        assert!(!pair("1", "s", &["s"]).errorful());
        assert!(pair("1", "s", &["t"]).errorful());
        assert!(!pair("1", "s", &["s", "t"]).errorful());
        // membership is decided under normalization
        assert!(!pair("1", " s ", &["s"]).errorful());
    }

    #[test]
    fn load_accepts_well_formed_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"1","source":"abc","references":["abc"]}}"#).unwrap();
        writeln!(f, r#"{{"id":"2","source":"ab","references":["abc"]}}"#).unwrap();
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert!(!corpus.pairs[0].errorful());
        assert!(corpus.pairs[1].errorful());
    }

    #[test]
    fn load_rejects_empty_references_with_id() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"3","source":"x","references":[]}}"#).unwrap();
        let err = load_corpus(f.path()).unwrap_err();
        match err {
            CorpusError::EmptyReferences { line, ref id } => {
                assert_eq!(line, 1);
                assert_eq!(id, "3");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn load_reports_line_numbers_for_bad_json() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"1","source":"a","references":["a"]}}"#).unwrap();
        writeln!(f, "not json").unwrap();
        let err = load_corpus(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn load_rejects_unknown_keys_and_duplicates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            r#"{{"id":"1","source":"a","references":["a"],"extra":1}}"#
        )
        .unwrap();
        assert!(matches!(
            load_corpus(f.path()).unwrap_err(),
            CorpusError::MalformedLine { line: 1, .. }
        ));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, r#"{{"id":"1","source":"a","references":["a"]}}"#).unwrap();
        writeln!(g, r#"{{"id":"1","source":"b","references":["b"]}}"#).unwrap();
        assert!(matches!(
            load_corpus(g.path()).unwrap_err(),
            CorpusError::DuplicateId { line: 2, .. }
        ));

        let mut h = tempfile::NamedTempFile::new().unwrap();
        writeln!(h, r#"{{"id":"1","source":"a","references":["x","x"]}}"#).unwrap();
        assert!(matches!(
            load_corpus(h.path()).unwrap_err(),
            CorpusError::DuplicateReference { line: 1, .. }
        ));
    }

    #[test]
    fn canonical_round_trip() {
        // Keys deliberately out of canonical order on disk.
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"references":["abc"],"id":"1","source":"ab"}}"#).unwrap();
        let corpus = load_corpus(f.path()).unwrap();

        let out = tempfile::NamedTempFile::new().unwrap();
        write_corpus(&corpus, out.path()).unwrap();
        let text = fs::read_to_string(out.path()).unwrap();
        assert_eq!(text, "{\"id\":\"1\",\"source\":\"ab\",\"references\":[\"abc\"]}\n");

        // And loading the canonical form reproduces the same corpus.
        let again = load_corpus(out.path()).unwrap();
        assert_eq!(again.pairs, corpus.pairs);
    }

    #[test]
    fn corruption_ops_unicode_aware() {
        let del = CorruptionOp {
            kind: CorruptionKind::CharDelete,
            position: 1,
        };
        assert_eq!(del.apply("日本語").unwrap(), "日語");

        let dup = CorruptionOp {
            kind: CorruptionKind::CharDuplicate,
            position: 1,
        };
        assert_eq!(dup.apply("abc").unwrap(), "abbc");

        let swap = CorruptionOp {
            kind: CorruptionKind::AdjacentSwap,
            position: 1,
        };
        assert_eq!(swap.apply("abc").unwrap(), "acb");
        let last = CorruptionOp {
            kind: CorruptionKind::AdjacentSwap,
            position: 2,
        };
        assert_eq!(last.apply("abc"), None);

        let out_of_range = CorruptionOp {
            kind: CorruptionKind::CharDelete,
            position: 3,
        };
        assert_eq!(out_of_range.apply("abc"), None);
    }

    #[test]
    fn token_swap_preserves_separators() {
        let op = CorruptionOp {
            kind: CorruptionKind::TokenSwap,
            position: 0,
        };
        assert_eq!(op.apply("a b c").unwrap(), "b a c");

        // Position inside the last token clamps to the final adjacent pair.
        let tail = CorruptionOp {
            kind: CorruptionKind::TokenSwap,
            position: 4,
        };
        assert_eq!(tail.apply("a b c").unwrap(), "a c b");

        // Double spaces survive.
        let wide = CorruptionOp {
            kind: CorruptionKind::TokenSwap,
            position: 0,
        };
        assert_eq!(wide.apply("ab  cd").unwrap(), "cd  ab");

        // Single token falls back to an adjacent character swap.
        let single = CorruptionOp {
            kind: CorruptionKind::TokenSwap,
            position: 1,
        };
        assert_eq!(single.apply("abc").unwrap(), "acb");
    }

    #[test]
    fn synth_rate_zero_and_one() {
        let clean = ["abcd".to_string()];
        let none = synth_corpus(&clean, 0.0, 7).unwrap();
        assert_eq!(none.pairs[0].source, "abcd");
        assert!(!none.pairs[0].errorful());

        let all = synth_corpus(&clean, 1.0, 7).unwrap();
        assert_ne!(all.pairs[0].source, "abcd");
        assert_eq!(all.pairs[0].references, vec!["abcd".to_string()]);
        assert!(all.pairs[0].errorful());
    }

    #[test]
    fn synth_errorful_fraction_near_rate() {
        let clean: Vec<String> = (0..1000).map(|i| format!("sentence number {i}")).collect();
        let corpus = synth_corpus(&clean, 0.5, 7).unwrap();
        let errorful = corpus.pairs.iter().filter(|p| p.errorful()).count();
        let fraction = errorful as f64 / 1000.0;
        assert!(
            (0.45..=0.55).contains(&fraction),
            "errorful fraction {fraction} outside [0.45, 0.55]"
        );
    }

    #[test]
    fn synth_is_reproducible() {
        let clean: Vec<String> = (0..50).map(|i| format!("line {i} of text")).collect();
        let a = synth_corpus(&clean, 0.7, 99).unwrap();
        let b = synth_corpus(&clean, 0.7, 99).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&clean, 0.7, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corruption_failure_is_reported() {
        // A whitespace-only sentence normalizes to "" no matter which
        // operator is applied, so every attempt collides with a forbidden
        // whitespace-only reference.
        let mut stream = rng::stream(1, &[domain::CORPUS]);
        let err = corrupt_avoiding("  ", &["  "], &mut stream).unwrap_err();
        assert!(matches!(err, CorpusError::CorruptionFailed { .. }));
    }

    #[test]
    fn demo_sentences_are_deterministic_and_nonempty() {
        let a = demo_sentences(20, 3);
        let b = demo_sentences(20, 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| !s.is_empty()));
        let words: Vec<usize> = a.iter().map(|s| s.split_whitespace().count()).collect();
        assert!(words.iter().all(|&w| (4..=9).contains(&w)));
    }
}
