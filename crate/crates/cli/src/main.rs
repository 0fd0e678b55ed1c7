//! `gec-rl`: one binary tying the toolkit together — scoring, reward
//! inspection, training, vote sweeps, the data pipeline, report rendering,
//! and a self-contained demo run.
//!
//! Exit codes: 0 success, 1 runtime failure (bad input data, failed run),
//! 2 configuration error (bad config file, bad flags — clap uses 2 too).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gec_rl_core::corpus::{demo_sentences, load_corpus, synth_corpus, write_corpus, Corpus};
use gec_rl_core::grpo::{train, write_metrics_csv, GrpoError, TrainConfig};
use gec_rl_core::pipeline::{
    run_stage1, run_stage2, write_sft_jsonl, ClientSpec, PipelineError,
};
use gec_rl_core::policy::{load_checkpoint, save_checkpoint};
use gec_rl_core::report::{read_metrics_csv, read_vote_csv, write_report};
use gec_rl_core::reward::{total_reward, RewardConfig, TagConfig};
use gec_rl_core::scorer::score_corpus;
use gec_rl_core::voting::{vote_eval, write_vote_csv, VotePoint};

#[derive(Parser)]
#[command(
    name = "gec-rl",
    version,
    about = "Rule-based-reward GEC toolkit: train, vote, score, and generate data"
)]
struct Cli {
    /// JSON config file (training, reward, tag, client, and demo settings).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seeds everywhere.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts (default: config `out_dir`, then ".").
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Suppress informational output (artifacts are still written).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score hypothesis corrections against a corpus (span-level F0.5).
    Score {
        /// Corpus JSONL ({"id","source","references"} per line).
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Hypothesis file, one correction per line, index-aligned.
        #[arg(long, value_name = "FILE")]
        hyp: PathBuf,
    },
    /// Compute reward breakdowns for raw model outputs.
    Reward {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// One raw completion per line, index-aligned with the corpus.
        #[arg(long, value_name = "FILE")]
        outputs: PathBuf,
        /// Also write the JSONL here (stdout regardless).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train the toy policy with GRPO; writes metrics.csv + checkpoint.json.
    Train {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Evaluate majority voting at several sample counts.
    Vote {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Comma-separated vote sizes.
        #[arg(long, default_value = "1,4,8,16,32")]
        n: String,
    },
    /// Two-stage SFT data generation.
    Pipeline {
        #[command(subcommand)]
        stage: PipelineStage,
    },
    /// Render training curves (and optionally a vote sweep) as SVG.
    Report {
        /// Metrics CSV (default: <out-dir>/metrics.csv).
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
        /// Optional vote CSV to chart alongside.
        #[arg(long, value_name = "FILE")]
        vote: Option<PathBuf>,
    },
    /// End-to-end run: synth corpus → train → vote → score → report.
    Demo,
}

#[derive(Subcommand)]
enum PipelineStage {
    /// One generation per sentence, nothing filtered.
    Stage1 {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// SFT JSONL path (default: <out-dir>/sft.jsonl).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate → judge → retry once → keep only accepted records.
    Stage2 {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Settings for the `demo` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DemoConfig {
    pairs: usize,
    error_rate: f64,
    max_steps: usize,
    n_list: Vec<usize>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            pairs: 200,
            error_rate: 0.5,
            max_steps: 500,
            n_list: vec![1, 4, 8, 16, 32],
        }
    }
}

/// The one config file. Every section is optional and defaults to the
/// constants documented in the library; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    train: TrainConfig,
    reward: RewardConfig,
    tags: TagConfig,
    generator: ClientSpec,
    judge: ClientSpec,
    demo: DemoConfig,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
}

enum CliError {
    /// Bad config file or settings → exit 2.
    Config(String),
    /// Everything else that fails at run time → exit 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(stage: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{stage}: {e}"))
}

impl From<GrpoError> for CliError {
    fn from(e: GrpoError) -> Self {
        match e {
            GrpoError::BadConfig { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config { .. } | PipelineError::MissingPlaceholder { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    config.train.validate()?;
    Ok(config)
}

/// Resolved settings after flag/config precedence.
struct Context {
    config: RunConfig,
    out_dir: PathBuf,
    seed: u64,
    quiet: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let mut config = load_config(cli.config.as_deref())?;
        let seed_override = cli.seed.or(config.seed);
        if let Some(seed) = seed_override {
            config.train.seed = seed;
            config.generator.seed = seed;
            config.judge.seed = seed;
        }
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Context {
            seed: seed_override.unwrap_or(config.train.seed),
            config,
            out_dir,
            quiet: cli.quiet,
        })
    }

    fn ensure_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| runtime("out-dir", format!("{}: {e}", self.out_dir.display())))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| runtime("corpus", e))
}

fn read_lines(path: &Path, label: &str) -> Result<Vec<String>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| runtime(label, format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn cmd_score(_ctx: &Context, corpus: &Path, hyp: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(corpus)?;
    let hyps = read_lines(hyp, "hypotheses")?;
    if hyps.len() != corpus.len() {
        return Err(CliError::Runtime(format!(
            "hypotheses: {} lines for {} corpus sentences",
            hyps.len(),
            corpus.len()
        )));
    }
    let score = score_corpus(&corpus, &hyps).map_err(|e| runtime("score", e))?;
    // Percentages, two decimals — presentation only; the JSON carries the
    // full-precision fractions.
    println!(
        "{:.2}\t{:.2}\t{:.2}",
        score.precision * 100.0,
        score.recall * 100.0,
        score.f05 * 100.0
    );
    let summary = serde_json::json!({
        "tp": score.counts.tp,
        "fp": score.counts.fp,
        "fn": score.counts.fn_,
        "p": score.precision,
        "r": score.recall,
        "f05": score.f05,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_reward(
    ctx: &Context,
    corpus: &Path,
    outputs: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let corpus = read_corpus(corpus)?;
    let lines = read_lines(outputs, "outputs")?;
    if lines.len() != corpus.len() {
        return Err(CliError::Runtime(format!(
            "outputs: {} lines for {} corpus sentences",
            lines.len(),
            corpus.len()
        )));
    }
    let mut jsonl = String::new();
    for (pair, line) in corpus.pairs.iter().zip(&lines) {
        let breakdown = total_reward(line, pair, &ctx.config.tags, &ctx.config.reward);
        jsonl.push_str(&serde_json::to_string(&breakdown).expect("breakdown serializes"));
        jsonl.push('\n');
    }
    print!("{jsonl}");
    if let Some(path) = out {
        fs::write(path, &jsonl)
            .map_err(|e| runtime("reward", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_train(ctx: &Context, corpus: &Path) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let corpus = read_corpus(corpus)?;
    let outcome = train(&corpus, &ctx.config.train, &ctx.config.tags, &ctx.config.reward)?;
    let metrics_path = ctx.out_dir.join("metrics.csv");
    write_metrics_csv(&outcome.metrics, &metrics_path)?;
    let ckpt_path = ctx.out_dir.join("checkpoint.json");
    save_checkpoint(&outcome.params, outcome.steps as u64, &ckpt_path)
        .map_err(|e| runtime("checkpoint", e))?;
    let last = outcome.metrics.last();
    ctx.say(format!(
        "trained {} steps; final mean reward {}",
        outcome.steps,
        last.map(|m| m.mean_reward.to_string()).unwrap_or_default()
    ));
    ctx.say(format!(
        "wrote {} and {}",
        metrics_path.display(),
        ckpt_path.display()
    ));
    Ok(())
}

fn parse_n_list(n: &str) -> Result<Vec<usize>, CliError> {
    n.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("--n: not a count: {tok:?}")))
        })
        .collect()
}

fn cmd_vote(ctx: &Context, corpus: &Path, checkpoint: &Path, n: &str) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let corpus = read_corpus(corpus)?;
    let n_list = parse_n_list(n)?;
    let (params, _step) = load_checkpoint(checkpoint).map_err(|e| runtime("checkpoint", e))?;
    let points = vote_eval(
        &params,
        &corpus,
        &n_list,
        ctx.config.train.temperature,
        &ctx.config.tags,
        ctx.seed,
    )
    .map_err(|e| runtime("vote", e))?;
    let path = ctx.out_dir.join("vote.csv");
    write_vote_csv(&points, &path).map_err(|e| runtime("vote", e))?;
    print!("{}", vote_csv_text(&points));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn vote_csv_text(points: &[VotePoint]) -> String {
    let mut out = String::from("n,p,r,f05\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.n, p.precision, p.recall, p.f05));
    }
    out
}

fn cmd_pipeline(ctx: &Context, stage: &PipelineStage) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let (corpus_path, out) = match stage {
        PipelineStage::Stage1 { corpus, out } | PipelineStage::Stage2 { corpus, out } => {
            (corpus.as_path(), out.clone())
        }
    };
    let corpus = read_corpus(corpus_path)?;
    let out = out.unwrap_or_else(|| ctx.out_dir.join("sft.jsonl"));
    match stage {
        PipelineStage::Stage1 { .. } => {
            let records = run_stage1(&corpus, &ctx.config.generator, &ctx.config.tags)?;
            write_sft_jsonl(&records, &out)?;
            ctx.say(format!("stage1: {} records → {}", records.len(), out.display()));
        }
        PipelineStage::Stage2 { .. } => {
            let output = run_stage2(
                &corpus,
                &ctx.config.generator,
                &ctx.config.judge,
                &ctx.config.tags,
            )?;
            write_sft_jsonl(&output.records, &out)?;
            let s = &output.summary;
            ctx.say(format!(
                "stage2: {} accepted / {} sentences ({} rejected, {} skipped, {} parse failures; {} generator calls, {} judge calls) → {}",
                s.accepted,
                s.sentences,
                s.rejected,
                s.skipped,
                s.parse_failures,
                s.generator_calls,
                s.judge_calls,
                out.display()
            ));
            for line in &s.errors {
                eprintln!("skipped {line}");
            }
        }
    }
    Ok(())
}

fn cmd_report(ctx: &Context, metrics: Option<&Path>, vote: Option<&Path>) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let metrics_path = metrics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out_dir.join("metrics.csv"));
    let metrics = read_metrics_csv(&metrics_path).map_err(|e| runtime("report", e))?;
    let vote_points = match vote {
        Some(path) => Some(read_vote_csv(path).map_err(|e| runtime("report", e))?),
        None => None,
    };
    let files = write_report(&metrics, vote_points.as_deref(), &ctx.out_dir)
        .map_err(|e| runtime("report", e))?;
    for f in &files.files {
        ctx.say(format!("wrote {}", f.display()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    pairs: usize,
    steps: usize,
    corpus: String,
    checkpoint: String,
    metrics: String,
    vote: String,
    report: Vec<String>,
    score: ManifestScore,
}

#[derive(Serialize)]
struct ManifestScore {
    p: f64,
    r: f64,
    f05: f64,
}

/// The whole workflow on synthetic data, reproducible from one seed.
fn cmd_demo(ctx: &Context) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let demo = &ctx.config.demo;
    let seed = ctx.seed;

    // Corpus.
    let clean = demo_sentences(demo.pairs, seed);
    let corpus =
        synth_corpus(&clean, demo.error_rate, seed).map_err(|e| runtime("synth", e))?;
    let corpus_path = ctx.out_dir.join("corpus.jsonl");
    write_corpus(&corpus, &corpus_path).map_err(|e| runtime("synth", e))?;
    ctx.say(format!("synthesized {} pairs → {}", corpus.len(), corpus_path.display()));

    // Train.
    let mut train_cfg = ctx.config.train.clone();
    train_cfg.max_steps = Some(demo.max_steps);
    let outcome = train(&corpus, &train_cfg, &ctx.config.tags, &ctx.config.reward)
        .map_err(|e| runtime("train", e))?;
    let metrics_path = ctx.out_dir.join("metrics.csv");
    write_metrics_csv(&outcome.metrics, &metrics_path).map_err(|e| runtime("train", e))?;
    let ckpt_path = ctx.out_dir.join("checkpoint.json");
    save_checkpoint(&outcome.params, outcome.steps as u64, &ckpt_path)
        .map_err(|e| runtime("train", e))?;
    ctx.say(format!(
        "trained {} steps; final mean reward {}",
        outcome.steps,
        outcome.metrics.last().map(|m| m.mean_reward).unwrap_or(f64::NAN)
    ));

    // Vote sweep.
    let points = vote_eval(
        &outcome.params,
        &corpus,
        &demo.n_list,
        train_cfg.temperature,
        &ctx.config.tags,
        seed,
    )
    .map_err(|e| runtime("vote", e))?;
    let vote_path = ctx.out_dir.join("vote.csv");
    write_vote_csv(&points, &vote_path).map_err(|e| runtime("vote", e))?;

    // Greedy score: a 1-way vote at temperature 0 is exactly the greedy
    // policy.
    let greedy = vote_eval(&outcome.params, &corpus, &[1], 0.0, &ctx.config.tags, seed)
        .map_err(|e| runtime("score", e))?;
    let greedy = &greedy[0];
    ctx.say(format!(
        "greedy corpus score: P {:.2} R {:.2} F0.5 {:.2}",
        greedy.precision * 100.0,
        greedy.recall * 100.0,
        greedy.f05 * 100.0
    ));

    // Report.
    let files = write_report(&outcome.metrics, Some(&points), &ctx.out_dir)
        .map_err(|e| runtime("report", e))?;
    let report_names: Vec<String> = files
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();

    let manifest = Manifest {
        seed,
        pairs: corpus.len(),
        steps: outcome.steps,
        corpus: "corpus.jsonl".into(),
        checkpoint: "checkpoint.json".into(),
        metrics: "metrics.csv".into(),
        vote: "vote.csv".into(),
        report: report_names,
        score: ManifestScore {
            p: greedy.precision,
            r: greedy.recall,
            f05: greedy.f05,
        },
    };
    let manifest_path = ctx.out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n")
        .map_err(|e| runtime("manifest", format!("{}: {e}", manifest_path.display())))?;
    ctx.say(format!("wrote {}", manifest_path.display()));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Score { corpus, hyp } => cmd_score(&ctx, corpus, hyp),
        Command::Reward {
            corpus,
            outputs,
            out,
        } => cmd_reward(&ctx, corpus, outputs, out.as_deref()),
        Command::Train { corpus } => cmd_train(&ctx, corpus),
        Command::Vote {
            corpus,
            checkpoint,
            n,
        } => cmd_vote(&ctx, corpus, checkpoint, n),
        Command::Pipeline { stage } => cmd_pipeline(&ctx, stage),
        Command::Report { metrics, vote } => {
            cmd_report(&ctx, metrics.as_deref(), vote.as_deref())
        }
        Command::Demo => cmd_demo(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
