//! `mtkit`: corpus cleaning, back-translation, two-stage training and
//! scoring from one binary.
//!
//! Settings come from the `--config` file first; flags given on the command
//! line override it.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "mtkit", version, about = "Chinese-centric multilingual MT toolkit")]
struct Cli {
    /// Seed for every random choice; overrides `run.seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the pipelines and the trainer. Output does not
    /// depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split paragraphs into sentences and filter them.
    CleanMono(CleanMonoArgs),
    /// Clean a parallel corpus (TSV or a directory of aligned files).
    CleanPara(CleanParaArgs),
    /// Append back-translated records to a parallel TSV.
    Augment(AugmentArgs),
    /// Train the expert blocks on monolingual Chinese text.
    TrainStage1(TrainArgs),
    /// Instruction-tune on parallel data with the curriculum.
    TrainStage2(TrainArgs),
    /// Translate a test set with a checkpoint and score it.
    Evaluate(EvaluateArgs),
    /// Score precomputed hypotheses against references.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct CleanMonoArgs {
    /// Paragraphs, one per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Cleaned sentences, one per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline report; printed to stderr when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run file; only its `[mono]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lines per processing batch.
    #[arg(long, default_value_t = 10_000)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "pair_dir"]))]
pub struct CleanParaArgs {
    /// TSV records: src_lang, tgt_lang, src_text, tgt_text[, source_id].
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Directory of `<stem>.<src>` / `<stem>.<tgt>` files.
    #[arg(long, requires_all = ["src", "tgt"])]
    pub pair_dir: Option<PathBuf>,
    /// Source language of the files in `--pair-dir`.
    #[arg(long)]
    pub src: Option<String>,
    /// Target language of the files in `--pair-dir`.
    #[arg(long)]
    pub tgt: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Run file; only its `[para]` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub chunk: usize,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Parallel TSV; a sixth `original`/`synthetic` column is honoured.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Records followed by an origin column.
    #[arg(long)]
    pub out: PathBuf,
    /// identity, word_reverse or dictionary.
    #[arg(long, default_value = "identity")]
    pub translator: String,
    /// Word table for the dictionary translator, `FROM-TO=PATH` for one
    /// direction or a bare `PATH` for every direction needed. Repeatable.
    #[arg(long)]
    pub dict: Vec<String>,
    /// Tiers whose pairs are back-translated.
    #[arg(long, value_delimiter = ',', default_value = "low,verylow")]
    pub tiers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run file; the `[run]` section describes the model, optimizer,
    /// schedule and data.
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint of an interrupted run to continue.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Directory for checkpoints, manifests, the training log and the
    /// resolved config.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Stop after this many steps; overrides `run.stop_after`.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint to decode with.
    #[arg(long)]
    pub model: PathBuf,
    /// Parallel TSV whose target side is the reference.
    #[arg(long)]
    pub testset: PathBuf,
    /// Output directory: hyp_ref.tsv, report.txt and scores.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Template file; the built-in set when absent.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Position of the prompt template in the template list.
    #[arg(long, default_value_t = 0)]
    pub template: usize,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Lines of src_lang, tgt_lang, hypothesis, reference.
    #[arg(long)]
    pub hyp_ref: PathBuf,
    /// Output directory: report.txt and scores.tsv.
    #[arg(long)]
    pub out: PathBuf,
    /// Row label in the tier table.
    #[arg(long, default_value = "model")]
    pub name: String,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::CleanMono(a) => commands::clean_mono(&a),
        Command::CleanPara(a) => commands::clean_para(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::TrainStage1(a) => commands::train(&a, mtkit_model::RunStage::Pretrain, cli.seed),
        Command::TrainStage2(a) => commands::train(&a, mtkit_model::RunStage::Finetune, cli.seed),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Score(a) => commands::score(&a),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(f) = run(cli) {
        eprintln!("error: {:#}", f.error);
        process::exit(f.code as i32);
    }
}
