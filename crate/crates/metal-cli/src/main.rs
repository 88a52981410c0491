//! `metal` — meta-active-learning experiments.
//!
//! Subcommands: `run` (train/evaluate acquisition strategies over an
//! episodic problem suite), `compare` (pivot results files), and
//! `gen-synthetic` (Gaussian-clusters dataset generator).
//!
//! Log verbosity comes from the `RUST_LOG` env var (default `info`).
//! Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metal_cli::dataset::DataFormat;
use metal_cli::experiment::{self, OptimizerName, RunConfig, SimilarityName, StrategyName};
use metal_cli::{compare, synth, CliError};

#[derive(Parser)]
#[command(
    name = "metal",
    version,
    about = "Learn a pool-based label-acquisition strategy across many small classification \
             problems and compare it with random and k-medoids baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment: build the problem suite, train the policy where
    /// requested, evaluate every (strategy, budget) pair on test problems.
    Run(Box<RunArgs>),
    /// Pivot one or more results.csv files into budget x strategy tables.
    Compare(CompareArgs),
    /// Generate a synthetic Gaussian-clusters dataset as CSV.
    GenSynthetic(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Replay a previous run from its manifest (other flags ignored).
    #[arg(long, conflicts_with = "dataset")]
    manifest: Option<PathBuf>,

    /// Dataset file.
    #[arg(long, required_unless_present = "manifest")]
    dataset: Option<PathBuf>,

    /// Dataset format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<DataFormat>,

    /// CSV: first line is a header.
    #[arg(long)]
    csv_has_header: bool,

    /// CSV: 0-based index of the label column.
    #[arg(long, default_value_t = 0)]
    csv_label_col: usize,

    /// Class counts per split as "train,val,test"; default is a 40/30/30
    /// partition of the dataset's classes.
    #[arg(long, value_parser = parse_triple)]
    class_split: Option<(usize, usize, usize)>,

    /// Classes per elementary problem (P).
    #[arg(long, default_value_t = 2)]
    classes_per_problem: usize,

    /// Unlabeled pool size per problem (N).
    #[arg(long, default_value_t = 25)]
    pool_size: usize,

    /// Evaluation examples per problem (M).
    #[arg(long, default_value_t = 40)]
    eval_size: usize,

    /// Problem counts as "train,val,test".
    #[arg(long, value_parser = parse_triple, default_value = "2000,500,500")]
    problems: (usize, usize, usize),

    /// Acquisition strategies to evaluate (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "random")]
    strategy: Vec<StrategyName>,

    /// Label budgets to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    budgets: Vec<usize>,

    /// Predictor similarity.
    #[arg(long, value_enum, default_value = "euclidean")]
    similarity: SimilarityName,

    /// Softmax sharpening temperature of the predictor.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,

    /// Latent dimension of the shared representation.
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,

    /// Hidden size per direction of the recurrent scorer.
    #[arg(long, default_value_t = 32)]
    hidden_dim: usize,

    /// Learning rate.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,

    /// Training episodes per budget (policy strategy only).
    #[arg(long, default_value_t = 4000)]
    episodes: usize,

    /// Monte-Carlo histories per episode.
    #[arg(long, default_value_t = 8)]
    mc_samples: usize,

    /// Labeling-cost weight in the episode loss.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,

    /// Master seed; every stream derives from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output directory for results.csv, manifest.json, checkpoints, logs.
    #[arg(long, default_value = "runs/out")]
    out: PathBuf,

    /// Stratify each problem's pool across its classes.
    #[arg(long)]
    balanced: bool,

    /// Z-score features using train-class statistics only.
    #[arg(long)]
    standardize: bool,

    /// Ablation: literal multinomial sampling with replacement.
    #[arg(long)]
    with_replacement: bool,

    /// Disable the EMA variance-reduction baseline.
    #[arg(long)]
    no_baseline: bool,

    /// Optimizer for policy training.
    #[arg(long, value_enum, default_value = "sgd")]
    optimizer: OptimizerName,

    /// Episodes between validation passes.
    #[arg(long, default_value_t = 250)]
    eval_interval: usize,

    /// Global-norm gradient clip (0 disables).
    #[arg(long, default_value_t = 5.0)]
    clip_norm: f64,

    /// Mask draws per problem at evaluation time.
    #[arg(long, default_value_t = 1)]
    eval_draws: usize,

    /// Record every problem's rows and seeds in the manifest.
    #[arg(long)]
    dump_problems: bool,

    /// Record the test-split selection masks in the manifest.
    #[arg(long)]
    dump_masks: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// results.csv files to pivot together.
    #[arg(required = true)]
    results: Vec<PathBuf>,

    /// Also write the tables as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of classes (clusters).
    #[arg(long, default_value_t = 40)]
    classes: usize,

    /// Examples per class.
    #[arg(long, default_value_t = 100)]
    per_class: usize,

    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    features: usize,

    /// Isotropic cluster standard deviation.
    #[arg(long, default_value_t = 0.3)]
    cluster_spread: f64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated counts, got {s:?}"));
    }
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
    let nums = nums.map_err(|e| format!("{s:?}: {e}"))?;
    Ok((nums[0], nums[1], nums[2]))
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        let dataset = self.dataset.expect("clap enforces dataset without manifest");
        let format = self
            .format
            .unwrap_or_else(|| metal_cli::dataset::guess_format(&dataset));
        RunConfig {
            dataset,
            format,
            csv_has_header: self.csv_has_header,
            csv_label_col: self.csv_label_col,
            class_split: self.class_split,
            classes_per_problem: self.classes_per_problem,
            pool_size: self.pool_size,
            eval_size: self.eval_size,
            problems: self.problems,
            strategies: self.strategy,
            budgets: self.budgets,
            similarity: self.similarity,
            temperature: self.temperature,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            lr: self.lr,
            episodes: self.episodes,
            mc_samples: self.mc_samples,
            lambda: self.lambda,
            seed: self.seed,
            out: self.out,
            balanced: self.balanced,
            standardize: self.standardize,
            with_replacement: self.with_replacement,
            no_baseline: self.no_baseline,
            optimizer: self.optimizer,
            eval_interval: self.eval_interval,
            clip_norm: self.clip_norm,
            eval_draws: self.eval_draws,
            dump_problems: self.dump_problems,
            dump_masks: self.dump_masks,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => match args.manifest.clone() {
            Some(path) => {
                let out_override = if args.out != PathBuf::from("runs/out") {
                    Some(args.out.clone())
                } else {
                    None
                };
                experiment::replay(&path, out_override).map(|o| {
                    println!("replayed into {}", o.results_path.display());
                })
            }
            None => experiment::run_experiment(&args.into_config()).map(|o| {
                println!(
                    "{} result rows -> {}",
                    o.rows.len(),
                    o.results_path.display()
                );
            }),
        },
        Command::Compare(args) => {
            compare::run(&args.results, args.json.as_deref()).map(|table| print!("{table}"))
        }
        Command::GenSynthetic(args) => synth::write_csv(
            &args.out,
            synth::SynthSpec {
                classes: args.classes,
                per_class: args.per_class,
                features: args.features,
                cluster_spread: args.cluster_spread,
                seed: args.seed,
            },
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
