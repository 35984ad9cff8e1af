use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

mod commands;
mod manifest;

#[derive(Parser)]
#[command(name = "lexinduce", version, about = "Lexicalized grammar induction with concreteness priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Align caption words with image labels
    Align(AlignArgs),
    /// Turn alignments into rewarded spans
    Spans(SpansArgs),
    /// Train a grammar
    Train(TrainArgs),
    /// Viterbi-parse captions with a trained grammar
    Parse(ParseArgs),
    /// Score parses against gold trees and dependencies
    Eval(EvalArgs),
    /// Planted-grammar comparison with and without the root prior
    Synth(SynthArgs),
    /// Write a synthetic fixture corpus
    Fixture(FixtureArgs),
    /// Re-run a command from its manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PlacementArg {
    Root,
    NonRoot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanModeArg {
    Coupling,
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LexiconMode {
    #[value(name = "divide_by_5")]
    DivideBy5,
    #[value(name = "affine_1_5")]
    Affine1To5,
}

fn lambda_c(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(0.0..=10.0).contains(&v) {
        return Err(format!("lambda-c must lie in [0, 10], got {v}"));
    }
    Ok(v)
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("expected a nonnegative number, got {v}"));
    }
    Ok(v)
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SpansArgs {
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub alignments: PathBuf,
    #[arg(long, value_enum, default_value = "coupling")]
    pub mode: SpanModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PriorArgs {
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "divide_by_5")]
    pub lexicon_mode: LexiconMode,
    #[arg(long)]
    pub spans: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0, value_parser = lambda_c)]
    pub lambda_c: f64,
    #[arg(long, default_value_t = 1.0, value_parser = nonnegative)]
    pub lambda_v: f64,
    #[arg(long, value_enum, default_value = "non_root")]
    pub placement: PlacementArg,
    #[arg(long, value_enum, default_value = "on")]
    pub inference_priors: OnOff,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub captions: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub priors: PriorArgs,
    /// Held-out captions for model selection
    #[arg(long, requires = "valid_trees")]
    pub valid_captions: Option<PathBuf>,
    #[arg(long)]
    pub valid_trees: Option<PathBuf>,
    #[arg(long)]
    pub valid_deps: Option<PathBuf>,
    /// Word vectors for k-means emission initialization
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub cluster_bonus: f64,
    #[arg(long, default_value_t = 15)]
    pub nonterminals: usize,
    #[arg(long, default_value_t = 20)]
    pub preterminals: usize,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ParseArgs {
    #[arg(long)]
    pub grammar: PathBuf,
    #[arg(long)]
    pub captions: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub priors: PriorArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold_trees: PathBuf,
    #[arg(long)]
    pub gold_deps: PathBuf,
    #[arg(long)]
    pub pos: Option<PathBuf>,
    #[arg(long)]
    pub keep_trivial: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 200)]
    pub train_size: usize,
    #[arg(long, default_value_t = 50)]
    pub valid_size: usize,
    #[arg(long, default_value_t = 6)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.3, value_parser = lambda_c)]
    pub lambda_c: f64,
    #[arg(long, default_value_t = 5)]
    pub nonterminals: usize,
    #[arg(long, default_value_t = 6)]
    pub preterminals: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn out(&self) -> &Path {
        match self {
            Command::Align(a) => &a.out,
            Command::Spans(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Parse(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Synth(a) => &a.out,
            Command::Fixture(a) => &a.out,
            Command::Replay(_) => unreachable!("replay has no output of its own"),
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Align(a) => a.out = out,
            Command::Spans(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Parse(a) => a.out = out,
            Command::Eval(a) => a.out = out,
            Command::Synth(a) => a.out = out,
            Command::Fixture(a) => a.out = out,
            Command::Replay(_) => {}
        }
    }

    /// Files read by the command, in a fixed order.
    pub fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<Option<&PathBuf>> = Vec::new();
        match self {
            Command::Align(a) => v.extend([Some(&a.captions), Some(&a.labels), a.stopwords.as_ref()]),
            Command::Spans(a) => v.extend([Some(&a.captions), Some(&a.labels), Some(&a.alignments)]),
            Command::Train(a) => v.extend([
                Some(&a.captions),
                a.priors.lexicon.as_ref(),
                a.priors.spans.as_ref(),
                a.valid_captions.as_ref(),
                a.valid_trees.as_ref(),
                a.valid_deps.as_ref(),
                a.vectors.as_ref(),
            ]),
            Command::Parse(a) => v.extend([
                Some(&a.grammar),
                Some(&a.captions),
                a.priors.lexicon.as_ref(),
                a.priors.spans.as_ref(),
            ]),
            Command::Eval(a) => v.extend([Some(&a.pred), Some(&a.gold_trees), Some(&a.gold_deps), a.pos.as_ref()]),
            Command::Synth(_) | Command::Fixture(_) | Command::Replay(_) => {}
        }
        v.into_iter().flatten().map(PathBuf::as_path).collect()
    }

    /// Commands writing a directory keep their manifest inside it.
    pub fn manifest_path(&self) -> PathBuf {
        match self {
            Command::Train(_) | Command::Fixture(_) => self.out().join("manifest.json"),
            _ => {
                let mut p = self.out().as_os_str().to_owned();
                p.push(".manifest.json");
                PathBuf::from(p)
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LEXINDUCE_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("LEXINDUCE_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("LEXINDUCE_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Replay(args) => {
            let (mut cmd, _) = manifest::load_and_verify(&args.manifest)?;
            if let Some(out) = args.out {
                cmd.set_out(out);
            }
            run(cmd)
        }
        cmd => {
            commands::execute(&cmd)?;
            manifest::write(&cmd)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
