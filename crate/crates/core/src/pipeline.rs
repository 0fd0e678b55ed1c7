//! Two-stage reasoning-data generation with pluggable model clients.
//!
//! Stage 1 asks a generator for a reasoning trace per sentence and keeps
//! everything. Stage 2 adds a judge: each generation is evaluated, a
//! rejected sentence gets exactly one more generation attempt, and only
//! judge-approved records survive. The expected yield with an i.i.d.
//! accept probability p is therefore 1 − (1−p)².
//!
//! Clients are either `remote` (a JSON-over-HTTP endpoint) or `synthetic`
//! (a seeded local simulator, pure in (seed, pair id, attempt), which
//! makes whole runs reproducible and lets tests pin exact call counts).

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentencePair};
use crate::reward::{extract_answer, TagConfig};
use crate::rng::{self, domain};
use crate::text::fnv1a64;

/// Env var that overrides any configured remote endpoint.
pub const ENDPOINT_ENV: &str = "GEC_RL_ENDPOINT";

/// Default generator prompt: demonstrates a correction thought process for
/// a (source, target) pair without revealing that the target is known.
pub const DEFAULT_GENERATION_TEMPLATE: &str = "\
Your task is to demonstrate the thought process for grammatically correcting a Chinese sentence, but without showing the known correct answer or revealing the fact that you know it. Please read the following information carefully and output the thought process as instructed.

Sentence to be corrected (may have no errors):

<sentence_to_be_corrected>
{src}
</sentence_to_be_corrected>

Corrected sentence (if it's already correct, no correction is needed):

<corrected_sentence>
{tgt}
</corrected_sentence>

When demonstrating the thought process, please follow these requirements:
1. From the perspective of grammatical rules, analyze potential problems in the original sentence, such as part of speech, word order, collocation, components, etc. Chinese grammatical errors can be categorized as follows: Improper word order, improper collocation, missing component, redundant component, confused structure, illogical, or ambiguous meaning.
2. Explain the basis for judging that the original sentence has a problem.
3. Avoid mentioning the content of the known correct answer.
4. Ensure the thought process is rich and comprehensive.
5. If there are no grammatical errors, do not stylistically polish the sentence.

Please write your thought process within the <thought> tags.

Please write your answer within the <answer> tags.
<answer>
The corrected sentence
</answer>
";

/// Default judge prompt: decides whether a thought process reaches the
/// known standard answer. {think} is substituted after generation.
pub const DEFAULT_JUDGE_TEMPLATE: &str = "\
You are a linguist responsible for evaluating the effectiveness of grammar correction.

I will provide you with a grammatically incorrect sentence that needs to be revised, along with the correct version of that sentence. Your task is to determine whether another person's thought process for correcting the sentence is reasonable in terms of reaching the correct answer I provide.

If their thought process fails to identify any of the errors addressed in the standard answer, or incorrectly identifies as wrong any part that the standard answer considers correct, or their thought process contains ambiguity or confusion, then it should be regarded as unreasonable.

If you believe that the thought process can produce the standard answer I provided, reply with Yes. Otherwise, reply with No.

Note: You must simulate the sentence that would result from the thought process, and then compare it to the provided standard answer. If they are not the same, reply with No.

Do not consider whether my standard answer could be further improved, nor how logically sound or elaborate the thought process is. Your only concern is whether the thought process can lead to the standard answer I provided.

I will present the items in the following format:

Incorrect sentence

{ori}

Thought process

{think}

Standard answer

{ans}

Explain your reasoning, and on a new line, write only:

Yes or No (without quotes).
";

/// The plain correction prompt used when no gold target is available
/// (inference-style). Not a pipeline default, but shipped for configs
/// that point the generator at raw sentences.
pub const REASONING_TEMPLATE: &str = "\
Please identify if the sentence I provide has grammatical errors. If there are grammatical errors, please correct them, making the minimum necessary changes.

The requirements for modification are very strict: do not modify for issues that fall outside the scope of grammar and are considered optimizable, such as fluency, politeness, structure, colloquialism, sentence length, awkwardness, or style.

If there are no errors, please reply with the original sentence. Ensure that all the modifications you make are based on grammatical rules; do not embellish the sentence. Please format your final answer as follows.

<answer>
Your corrected sentence, or the original sentence
</answer>

The sentence for you to modify is as follows:

{sentence}
";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid client config: {message}")]
    Config { message: String },
    #[error("{role} template is missing a required placeholder (needs {needs})")]
    MissingPlaceholder { role: &'static str, needs: &'static str },
    #[error("request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Request {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("{endpoint} returned HTTP {status} after {attempts} attempt(s)")]
    Status {
        endpoint: String,
        status: u16,
        attempts: u32,
    },
    #[error("bad response from {endpoint}: {message}")]
    BadResponse { endpoint: String, message: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Remote,
    Synthetic,
}

/// Configuration for one model client (generator or judge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSpec {
    pub kind: ClientKind,
    /// Remote only; [`ENDPOINT_ENV`] overrides it when set.
    pub endpoint: Option<String>,
    /// Synthetic judge: probability of answering Yes per attempt.
    pub accept_prob: f64,
    /// Synthetic generator: probability of emitting the gold fix.
    pub fix_prob: f64,
    /// None uses the role's default template.
    pub prompt_template: Option<String>,
    /// Sampling temperature forwarded to remote endpoints.
    pub temperature: f64,
    pub timeout_ms: u64,
    pub max_inflight: usize,
    pub seed: u64,
}

impl Default for ClientSpec {
    fn default() -> Self {
        ClientSpec {
            kind: ClientKind::Synthetic,
            endpoint: None,
            accept_prob: 0.5,
            fix_prob: 0.9,
            prompt_template: None,
            temperature: 1.0,
            timeout_ms: 10_000,
            max_inflight: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Judge,
}

impl ClientSpec {
    /// Endpoint after applying the env override. Only meaningful for
    /// remote clients.
    pub fn effective_endpoint(&self) -> Result<String, PipelineError> {
        if let Ok(v) = std::env::var(ENDPOINT_ENV) {
            if !v.is_empty() {
                return Ok(v);
            }
        }
        self.endpoint.clone().ok_or_else(|| PipelineError::Config {
            message: format!(
                "remote client needs an endpoint (config field or {ENDPOINT_ENV})"
            ),
        })
    }

    pub fn template_for(&self, role: Role) -> &str {
        match (&self.prompt_template, role) {
            (Some(t), _) => t,
            (None, Role::Generator) => DEFAULT_GENERATION_TEMPLATE,
            (None, Role::Judge) => DEFAULT_JUDGE_TEMPLATE,
        }
    }

    /// Load-time validation: probabilities in range, sane concurrency,
    /// endpoint present for remote clients, and the role's required
    /// placeholders present in any custom template.
    pub fn validate(&self, role: Role) -> Result<(), PipelineError> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p) && p.is_finite();
        if !prob_ok(self.accept_prob) || !prob_ok(self.fix_prob) {
            return Err(PipelineError::Config {
                message: "accept_prob and fix_prob must lie in [0, 1]".into(),
            });
        }
        if self.max_inflight == 0 {
            return Err(PipelineError::Config {
                message: "max_inflight must be at least 1".into(),
            });
        }
        if self.kind == ClientKind::Remote {
            self.effective_endpoint()?;
        }
        let template = self.template_for(role);
        match role {
            Role::Generator => {
                if !template.contains("{sentence}") && !template.contains("{src}") {
                    return Err(PipelineError::MissingPlaceholder {
                        role: "generator",
                        needs: "{sentence} or {src}",
                    });
                }
            }
            Role::Judge => {
                for needs in ["{ori}", "{think}", "{ans}"] {
                    if !template.contains(needs) {
                        return Err(PipelineError::MissingPlaceholder {
                            role: "judge",
                            needs: match needs {
                                "{ori}" => "{ori}",
                                "{think}" => "{think}",
                                _ => "{ans}",
                            },
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Substitute every placeholder verbatim; templates are opaque strings.
pub fn fill_template(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in substitutions {
        out = out.replace(key, value);
    }
    out
}

/// Render both prompts for a pair. The generation prompt is complete; the
/// judge prompt still contains {think}, which only exists after the
/// generator has run. {ans} is the pair's first reference — the judge
/// compares the thought process against the known standard answer.
pub fn render_prompts(
    pair: &SentencePair,
    generation_template: &str,
    judge_template: &str,
) -> (String, String) {
    let generation = fill_template(
        generation_template,
        &[
            ("{sentence}", &pair.source),
            ("{src}", &pair.source),
            ("{tgt}", pair.first_reference()),
        ],
    );
    let judge = fill_template(
        judge_template,
        &[("{ori}", &pair.source), ("{ans}", pair.first_reference())],
    );
    (generation, judge)
}

/// Verdict extraction: the last non-empty line, trimmed and case-folded,
/// must read "yes" or "no". Anything else is a parse failure (`None`),
/// which stage 2 treats as a rejection.
pub fn judge_parse(judge_text: &str) -> Option<bool> {
    let line = judge_text.lines().rev().find(|l| !l.trim().is_empty())?;
    match line.trim().to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Deserialize)]
struct RemoteReply {
    text: String,
}

/// POST `{"prompt", "temperature"}` to the endpoint and return the
/// `{"text"}` reply, retrying transport and HTTP errors up to twice with
/// exponential backoff.
pub fn remote_generate(spec: &ClientSpec, filled_prompt: &str) -> Result<String, PipelineError> {
    let endpoint = spec.effective_endpoint()?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_millis(spec.timeout_ms))
        .build()
        .map_err(|e| PipelineError::Config {
            message: format!("http client: {e}"),
        })?;
    let body = serde_json::json!({
        "prompt": filled_prompt,
        "temperature": spec.temperature,
    });

    let mut last = None;
    for attempt in 1..=3u32 {
        if attempt > 1 {
            std::thread::sleep(Duration::from_millis(25 << (attempt - 2)));
        }
        match client.post(&endpoint).json(&body).send() {
            Ok(resp) if resp.status().is_success() => {
                return match resp.json::<RemoteReply>() {
                    Ok(reply) => Ok(reply.text),
                    Err(e) => Err(PipelineError::BadResponse {
                        endpoint,
                        message: e.to_string(),
                    }),
                };
            }
            Ok(resp) => {
                last = Some(PipelineError::Status {
                    endpoint: endpoint.clone(),
                    status: resp.status().as_u16(),
                    attempts: attempt,
                });
            }
            Err(e) => {
                // reqwest's Display hides the cause ("error sending
                // request…"); walk the chain so timeouts and refused
                // connections are visible in the logged reason.
                let mut message = e.to_string();
                let mut source = std::error::Error::source(&e);
                while let Some(s) = source {
                    message.push_str(": ");
                    message.push_str(&s.to_string());
                    source = s.source();
                }
                last = Some(PipelineError::Request {
                    endpoint: endpoint.clone(),
                    attempts: attempt,
                    message,
                });
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// A model that produces a reasoning trace for a pair. `attempt` is 1 or 2
/// and seeds the retry's fresh randomness.
pub trait Generator: Sync {
    fn generate(&self, pair: &SentencePair, attempt: u32) -> Result<String, PipelineError>;
}

/// A model that reads a thought process and answers Yes/No (as raw text —
/// parsing happens in [`judge_parse`]).
pub trait Judge: Sync {
    fn judge(&self, pair: &SentencePair, think: &str, attempt: u32)
        -> Result<String, PipelineError>;
}

/// Local generator simulator: with probability `fix_prob` it emits a tidy
/// trace ending in the gold answer; otherwise it either leaves the source
/// unchanged or forgets the answer block entirely. Pure in
/// (seed, pair id, attempt).
pub struct SyntheticGenerator {
    pub fix_prob: f64,
    pub seed: u64,
}

impl Generator for SyntheticGenerator {
    fn generate(&self, pair: &SentencePair, attempt: u32) -> Result<String, PipelineError> {
        let mut stream = rng::stream(
            self.seed,
            &[domain::GENERATOR, fnv1a64(pair.id.as_bytes()), attempt as u64],
        );
        let good = rng::bernoulli(&mut stream, self.fix_prob);
        let skip_block = !good && rng::bernoulli(&mut stream, 0.3);
        let think = format!(
            "<thought>\nExamined \"{}\" for word order, collocation, and missing \
             or redundant components.\n</thought>",
            pair.source
        );
        if skip_block {
            return Ok(format!("{think}\nNo confident correction was produced."));
        }
        let answer = if good {
            pair.first_reference()
        } else {
            &pair.source
        };
        Ok(format!("{think}\n<answer>{answer}</answer>"))
    }
}

/// Local judge simulator: Yes with probability `accept_prob`, i.i.d. per
/// (pair, attempt); ignores the thought content by design so yields have a
/// closed form.
pub struct SyntheticJudge {
    pub accept_prob: f64,
    pub seed: u64,
}

impl Judge for SyntheticJudge {
    fn judge(&self, pair: &SentencePair, _think: &str, attempt: u32)
        -> Result<String, PipelineError> {
        let mut stream = rng::stream(
            self.seed,
            &[domain::JUDGE, fnv1a64(pair.id.as_bytes()), attempt as u64],
        );
        let verdict = if rng::bernoulli(&mut stream, self.accept_prob) {
            "Yes"
        } else {
            "No"
        };
        Ok(format!(
            "Simulated the thought process against the standard answer.\n{verdict}"
        ))
    }
}

struct RemoteGenerator {
    spec: ClientSpec,
    template: String,
}

impl Generator for RemoteGenerator {
    fn generate(&self, pair: &SentencePair, _attempt: u32) -> Result<String, PipelineError> {
        let (prompt, _) = render_prompts(pair, &self.template, DEFAULT_JUDGE_TEMPLATE);
        remote_generate(&self.spec, &prompt)
    }
}

struct RemoteJudge {
    spec: ClientSpec,
    template: String,
}

impl Judge for RemoteJudge {
    fn judge(&self, pair: &SentencePair, think: &str, _attempt: u32)
        -> Result<String, PipelineError> {
        let (_, partial) = render_prompts(pair, DEFAULT_GENERATION_TEMPLATE, &self.template);
        let prompt = partial.replace("{think}", think);
        remote_generate(&self.spec, &prompt)
    }
}

pub fn build_generator(spec: &ClientSpec) -> Result<Box<dyn Generator>, PipelineError> {
    spec.validate(Role::Generator)?;
    Ok(match spec.kind {
        ClientKind::Synthetic => Box::new(SyntheticGenerator {
            fix_prob: spec.fix_prob,
            seed: spec.seed,
        }),
        ClientKind::Remote => Box::new(RemoteGenerator {
            template: spec.template_for(Role::Generator).to_string(),
            spec: spec.clone(),
        }),
    })
}

pub fn build_judge(spec: &ClientSpec) -> Result<Box<dyn Judge>, PipelineError> {
    spec.validate(Role::Judge)?;
    Ok(match spec.kind {
        ClientKind::Synthetic => Box::new(SyntheticJudge {
            accept_prob: spec.accept_prob,
            seed: spec.seed,
        }),
        ClientKind::Remote => Box::new(RemoteJudge {
            template: spec.template_for(Role::Judge).to_string(),
            spec: spec.clone(),
        }),
    })
}

/// One produced training record. `reasoning` is the text before the first
/// answer block; when no block exists the whole trace lands in `reasoning`
/// and `answer` stays empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedRecord {
    pub id: String,
    pub source: String,
    pub reasoning: String,
    pub answer: String,
    pub pass_index: u8,
    pub accepted: bool,
}

fn split_reasoning(text: &str, tags: &TagConfig) -> (String, String) {
    match (text.find(&tags.open_tag), extract_answer(text, tags)) {
        (Some(open_idx), Some(answer)) => (text[..open_idx].trim().to_string(), answer),
        _ => (text.trim().to_string(), String::new()),
    }
}

/// Run workers over `0..n` with at most `max_inflight` in flight; results
/// come back in index order regardless of completion order.
fn parallel_map<T, F>(n: usize, max_inflight: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = max_inflight.max(1).min(n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

/// Stage 1: one generation per sentence, nothing filtered. Any client
/// error aborts the run — stage 1 promises a record per sentence.
pub fn run_stage1(
    corpus: &Corpus,
    generator_spec: &ClientSpec,
    tags: &TagConfig,
) -> Result<Vec<GeneratedRecord>, PipelineError> {
    let generator = build_generator(generator_spec)?;
    run_stage1_with(corpus, generator.as_ref(), generator_spec.max_inflight, tags)
}

pub fn run_stage1_with(
    corpus: &Corpus,
    generator: &dyn Generator,
    max_inflight: usize,
    tags: &TagConfig,
) -> Result<Vec<GeneratedRecord>, PipelineError> {
    let results = parallel_map(corpus.len(), max_inflight, |i| {
        let pair = &corpus.pairs[i];
        generator.generate(pair, 1).map(|text| {
            let (reasoning, answer) = split_reasoning(&text, tags);
            GeneratedRecord {
                id: pair.id.clone(),
                source: pair.source.clone(),
                reasoning,
                answer,
                pass_index: 1,
                accepted: true,
            }
        })
    });
    results.into_iter().collect()
}

/// Counters for a stage-2 run. `rejected` counts sentences the judge
/// turned down twice; `skipped` counts sentences dropped by client errors
/// (each with a reason in `errors`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageSummary {
    pub sentences: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    pub parse_failures: usize,
    pub generator_calls: usize,
    pub judge_calls: usize,
    pub errors: Vec<String>,
}

#[derive(Debug)]
pub struct Stage2Output {
    pub records: Vec<GeneratedRecord>,
    pub summary: StageSummary,
}

struct SentenceOutcome {
    record: Option<GeneratedRecord>,
    generator_calls: usize,
    judge_calls: usize,
    parse_failures: usize,
    error: Option<String>,
}

/// Stage 2: generate → judge → (if rejected) regenerate → judge, at most
/// two generation calls per sentence. Client failures skip the sentence
/// with a logged reason; the run continues.
pub fn run_stage2(
    corpus: &Corpus,
    generator_spec: &ClientSpec,
    judge_spec: &ClientSpec,
    tags: &TagConfig,
) -> Result<Stage2Output, PipelineError> {
    let generator = build_generator(generator_spec)?;
    let judge = build_judge(judge_spec)?;
    let inflight = generator_spec.max_inflight.min(judge_spec.max_inflight);
    Ok(run_stage2_with(
        corpus,
        generator.as_ref(),
        judge.as_ref(),
        inflight,
        tags,
    ))
}

pub fn run_stage2_with(
    corpus: &Corpus,
    generator: &dyn Generator,
    judge: &dyn Judge,
    max_inflight: usize,
    tags: &TagConfig,
) -> Stage2Output {
    let outcomes = parallel_map(corpus.len(), max_inflight, |i| {
        let pair = &corpus.pairs[i];
        let mut outcome = SentenceOutcome {
            record: None,
            generator_calls: 0,
            judge_calls: 0,
            parse_failures: 0,
            error: None,
        };
        for attempt in 1..=2u32 {
            outcome.generator_calls += 1;
            let text = match generator.generate(pair, attempt) {
                Ok(t) => t,
                Err(e) => {
                    outcome.error = Some(format!("{}: generator: {e}", pair.id));
                    return outcome;
                }
            };
            let (reasoning, answer) = split_reasoning(&text, tags);
            outcome.judge_calls += 1;
            let verdict_text = match judge.judge(pair, &reasoning, attempt) {
                Ok(t) => t,
                Err(e) => {
                    outcome.error = Some(format!("{}: judge: {e}", pair.id));
                    return outcome;
                }
            };
            let verdict = judge_parse(&verdict_text);
            if verdict.is_none() {
                outcome.parse_failures += 1;
            }
            if verdict == Some(true) {
                outcome.record = Some(GeneratedRecord {
                    id: pair.id.clone(),
                    source: pair.source.clone(),
                    reasoning,
                    answer,
                    pass_index: attempt as u8,
                    accepted: true,
                });
                break;
            }
        }
        outcome
    });

    let mut summary = StageSummary {
        sentences: corpus.len(),
        ..StageSummary::default()
    };
    let mut records = Vec::new();
    for outcome in outcomes {
        summary.generator_calls += outcome.generator_calls;
        summary.judge_calls += outcome.judge_calls;
        summary.parse_failures += outcome.parse_failures;
        match (outcome.record, outcome.error) {
            (Some(record), _) => {
                summary.accepted += 1;
                records.push(record);
            }
            (None, Some(reason)) => {
                summary.skipped += 1;
                summary.errors.push(reason);
            }
            (None, None) => summary.rejected += 1,
        }
    }
    Stage2Output { records, summary }
}

#[derive(Serialize)]
struct SftRow<'a> {
    id: &'a str,
    source: &'a str,
    reasoning: &'a str,
    answer: &'a str,
    pass: u8,
}

/// Write accepted records as SFT JSONL:
/// `{"id","source","reasoning","answer","pass"}` per line.
pub fn write_sft_jsonl(
    records: &[GeneratedRecord],
    path: impl AsRef<Path>,
) -> Result<(), PipelineError> {
    let mut out = String::new();
    for r in records.iter().filter(|r| r.accepted) {
        let row = SftRow {
            id: &r.id,
            source: &r.source,
            reasoning: &r.reasoning,
            answer: &r.answer,
            pass: r.pass_index,
        };
        out.push_str(&serde_json::to_string(&row).expect("plain strings serialize"));
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|source| PipelineError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn test_corpus(n: usize, seed: u64) -> Corpus {
        let clean: Vec<String> = (0..n).map(|i| format!("plain sentence number {i}")).collect();
        synth_corpus(&clean, 0.5, seed).unwrap()
    }

    fn synthetic_spec(accept_prob: f64) -> ClientSpec {
        ClientSpec {
            accept_prob,
            ..ClientSpec::default()
        }
    }

    #[test]
    fn judge_parse_conventions() {
        assert_eq!(judge_parse("thinking...\nYes"), Some(true));
        assert_eq!(judge_parse("thinking...\nNo"), Some(false));
        assert_eq!(judge_parse("verdict:\n  YES  \n\n"), Some(true));
        assert_eq!(judge_parse("maybe"), None);
        assert_eq!(judge_parse("Yes."), None);
        assert_eq!(judge_parse(""), None);
    }

    #[test]
    fn template_fill_and_defaults() {
        let pair = SentencePair {
            id: "t".into(),
            source: "s".into(),
            references: vec!["r".into()],
        };
        let (generation, judge) = render_prompts(&pair, "fix: {sentence}", "j: {ori}/{think}/{ans}");
        assert_eq!(generation, "fix: s");
        assert_eq!(judge, "j: s/{think}/r");

        assert!(DEFAULT_GENERATION_TEMPLATE.contains("<answer>"));
        assert!(REASONING_TEMPLATE.contains("<answer>"));
        assert!(DEFAULT_JUDGE_TEMPLATE.contains("{think}"));
    }

    #[test]
    fn custom_template_missing_placeholder_is_config_error() {
        let mut spec = synthetic_spec(0.5);
        spec.prompt_template = Some("no placeholders here".into());
        assert!(matches!(
            spec.validate(Role::Generator),
            Err(PipelineError::MissingPlaceholder { role: "generator", .. })
        ));
        assert!(matches!(
            spec.validate(Role::Judge),
            Err(PipelineError::MissingPlaceholder { role: "judge", .. })
        ));
        // Defaults validate for their own role.
        assert!(synthetic_spec(0.5).validate(Role::Generator).is_ok());
        assert!(synthetic_spec(0.5).validate(Role::Judge).is_ok());
    }

    #[test]
    fn stage1_keeps_everything_in_order() {
        let corpus = test_corpus(10, 1);
        let records = run_stage1(&corpus, &synthetic_spec(0.5), &TagConfig::default()).unwrap();
        assert_eq!(records.len(), 10);
        for (record, pair) in records.iter().zip(&corpus.pairs) {
            assert_eq!(record.id, pair.id);
            assert_eq!(record.source, pair.source);
            assert_eq!(record.pass_index, 1);
            assert!(record.accepted);
        }
        // The default fix_prob 0.9 generator mostly emits the reference.
        let with_answer = records.iter().filter(|r| !r.answer.is_empty()).count();
        assert!(with_answer >= 8, "{with_answer}");
    }

    #[test]
    fn stage1_empty_corpus() {
        let corpus = Corpus {
            pairs: vec![],
            seed: 0,
        };
        let records = run_stage1(&corpus, &synthetic_spec(0.5), &TagConfig::default()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn stage2_accept_always() {
        let corpus = test_corpus(25, 2);
        let out = run_stage2(
            &corpus,
            &synthetic_spec(1.0),
            &synthetic_spec(1.0),
            &TagConfig::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 25);
        assert!(out.records.iter().all(|r| r.pass_index == 1));
        assert_eq!(out.summary.accepted, 25);
        assert_eq!(out.summary.generator_calls, 25);
        assert_eq!(out.summary.judge_calls, 25);
        assert_eq!(out.summary.rejected, 0);
        // Corpus order survives the thread pool.
        let ids: Vec<&str> = out.records.iter().map(|r| r.id.as_str()).collect();
        let expected: Vec<&str> = corpus.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn stage2_reject_always() {
        let corpus = test_corpus(25, 3);
        let out = run_stage2(
            &corpus,
            &synthetic_spec(0.0),
            &synthetic_spec(0.0),
            &TagConfig::default(),
        )
        .unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.rejected, 25);
        // Exactly two attempts per sentence, never more.
        assert_eq!(out.summary.generator_calls, 50);
        assert_eq!(out.summary.judge_calls, 50);
    }

    #[test]
    fn stage2_yield_matches_two_attempt_formula() {
        let corpus = test_corpus(1500, 4);
        let out = run_stage2(
            &corpus,
            &synthetic_spec(0.5),
            &synthetic_spec(0.5),
            &TagConfig::default(),
        )
        .unwrap();
        let yield_rate = out.records.len() as f64 / corpus.len() as f64;
        // 1 − (1 − 0.5)² = 0.75
        assert!((yield_rate - 0.75).abs() < 0.04, "yield {yield_rate}");
        let pass2 = out.records.iter().filter(|r| r.pass_index == 2).count();
        assert!(pass2 > 0, "some sentences must need the retry");
    }

    struct CountingGenerator<'a> {
        inner: &'a dyn Generator,
        calls: AtomicUsize,
    }

    impl Generator for CountingGenerator<'_> {
        fn generate(&self, pair: &SentencePair, attempt: u32) -> Result<String, PipelineError> {
            assert!(attempt == 1 || attempt == 2);
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.generate(pair, attempt)
        }
    }

    #[test]
    fn stage2_never_exceeds_two_generations_per_sentence() {
        let corpus = test_corpus(60, 5);
        let synthetic = SyntheticGenerator {
            fix_prob: 0.9,
            seed: 0,
        };
        let counting = CountingGenerator {
            inner: &synthetic,
            calls: AtomicUsize::new(0),
        };
        let judge = SyntheticJudge {
            accept_prob: 0.5,
            seed: 0,
        };
        let out = run_stage2_with(&corpus, &counting, &judge, 4, &TagConfig::default());
        let calls = counting.calls.load(Ordering::Relaxed);
        assert!(calls <= 2 * corpus.len(), "{calls}");
        // Accepted-on-first-pass sentences cost one call, everything else two.
        let pass1 = out.records.iter().filter(|r| r.pass_index == 1).count();
        assert_eq!(calls, pass1 + 2 * (corpus.len() - pass1));
    }

    #[test]
    fn stage2_is_deterministic() {
        let corpus = test_corpus(80, 6);
        let run = || {
            run_stage2(
                &corpus,
                &synthetic_spec(0.6),
                &synthetic_spec(0.6),
                &TagConfig::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.records, b.records);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn stage2_skips_and_logs_failing_clients() {
        let corpus = test_corpus(2, 7);
        let mut generator_spec = synthetic_spec(0.5);
        generator_spec.kind = ClientKind::Remote;
        // Discard port: connection refused immediately.
        generator_spec.endpoint = Some("http://127.0.0.1:9/generate".into());
        generator_spec.timeout_ms = 300;
        let out = run_stage2(
            &corpus,
            &generator_spec,
            &synthetic_spec(1.0),
            &TagConfig::default(),
        )
        .unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.skipped, 2);
        assert_eq!(out.summary.errors.len(), 2);
        assert!(out.summary.errors[0].contains("generator"));
    }

    #[test]
    fn sft_jsonl_layout() {
        let records = vec![
            GeneratedRecord {
                id: "a".into(),
                source: "src a".into(),
                reasoning: "think a".into(),
                answer: "ans a".into(),
                pass_index: 1,
                accepted: true,
            },
            GeneratedRecord {
                id: "b".into(),
                source: "src b".into(),
                reasoning: "think b".into(),
                answer: String::new(),
                pass_index: 2,
                accepted: false,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        write_sft_jsonl(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"id\":\"a\",\"source\":\"src a\",\"reasoning\":\"think a\",\"answer\":\"ans a\",\"pass\":1}\n"
        );
    }

    /// Minimal HTTP/1.1 fixture: answers scripted (status, body) pairs in
    /// order, one connection each.
    fn spawn_http(responses: Vec<(u16, String)>, delay: Duration) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                // A timed-out client hangs up mid-exchange; the fixture
                // must shrug and serve the next scripted response.
                let serve = || -> std::io::Result<()> {
                    let (mut sock, _) = listener.accept()?;
                    let mut reader = BufReader::new(sock.try_clone()?);
                    let mut content_length = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line)? == 0 {
                            break;
                        }
                        let line = line.trim_end();
                        if let Some(v) = line
                            .to_ascii_lowercase()
                            .strip_prefix("content-length:")
                            .and_then(|v| v.trim().parse::<usize>().ok())
                        {
                            content_length = v;
                        }
                        if line.is_empty() {
                            break;
                        }
                    }
                    let mut body_buf = vec![0u8; content_length];
                    reader.read_exact(&mut body_buf)?;
                    std::thread::sleep(delay);
                    let reply = if status == 0 {
                        // Scripted echo: bounce the request's prompt back.
                        let v: serde_json::Value = serde_json::from_slice(&body_buf)?;
                        serde_json::json!({"text": v["prompt"]}).to_string()
                    } else {
                        body.clone()
                    };
                    let code = if status == 0 { 200 } else { status };
                    let reason = if code == 200 { "OK" } else { "ERR" };
                    write!(
                        sock,
                        "HTTP/1.1 {code} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                        reply.len()
                    )
                };
                let _ = serve();
            }
        });
        format!("http://{addr}/v1/generate")
    }

    fn remote_spec(endpoint: String, timeout_ms: u64) -> ClientSpec {
        ClientSpec {
            kind: ClientKind::Remote,
            endpoint: Some(endpoint),
            timeout_ms,
            ..ClientSpec::default()
        }
    }

    #[test]
    fn remote_echo_round_trip() {
        let endpoint = spawn_http(vec![(0, String::new())], Duration::ZERO);
        let spec = remote_spec(endpoint, 2000);
        let text = remote_generate(&spec, "fix: teh cat").unwrap();
        assert_eq!(text, "fix: teh cat");
    }

    #[test]
    fn remote_retries_through_two_failures() {
        let endpoint = spawn_http(
            vec![
                (500, "busy".into()),
                (500, "busy".into()),
                (200, "{\"text\":\"ok now\"}".into()),
            ],
            Duration::ZERO,
        );
        let spec = remote_spec(endpoint, 2000);
        assert_eq!(remote_generate(&spec, "p").unwrap(), "ok now");
    }

    #[test]
    fn remote_gives_up_after_three_attempts() {
        let endpoint = spawn_http(
            vec![
                (503, "down".into()),
                (503, "down".into()),
                (503, "down".into()),
            ],
            Duration::ZERO,
        );
        let spec = remote_spec(endpoint, 2000);
        match remote_generate(&spec, "p") {
            Err(PipelineError::Status {
                status, attempts, ..
            }) => {
                assert_eq!(status, 503);
                assert_eq!(attempts, 3);
            }
            other => panic!("expected status error, got {other:?}"),
        }
    }

    #[test]
    fn remote_times_out() {
        let endpoint = spawn_http(
            vec![(200, "{\"text\":\"late\"}".into()); 3],
            Duration::from_millis(400),
        );
        let spec = remote_spec(endpoint, 50);
        match remote_generate(&spec, "p") {
            Err(PipelineError::Request { message, .. }) => {
                assert!(message.contains("timed"), "{message}");
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn endpoint_env_var_overrides_config() {
        let endpoint = spawn_http(vec![(0, String::new())], Duration::ZERO);
        // No endpoint in the spec at all — only the env var.
        std::env::set_var(ENDPOINT_ENV, &endpoint);
        let spec = ClientSpec {
            kind: ClientKind::Remote,
            timeout_ms: 2000,
            ..ClientSpec::default()
        };
        let result = remote_generate(&spec, "via env");
        std::env::remove_var(ENDPOINT_ENV);
        assert_eq!(result.unwrap(), "via env");

        let spec_no_endpoint = ClientSpec {
            kind: ClientKind::Remote,
            ..ClientSpec::default()
        };
        assert!(matches!(
            spec_no_endpoint.effective_endpoint(),
            Err(PipelineError::Config { .. })
        ));
    }
}
