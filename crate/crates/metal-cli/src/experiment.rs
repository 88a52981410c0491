//! The experiment runner: validate a configuration exhaustively, build the
//! problem suite, train/evaluate every (strategy, budget) pair, and emit
//! reproducible results, manifests, checkpoints, and training logs.

use std::io::Write;
use std::path::{Path, PathBuf};

use metal_core::data::{self, BaseDataset, ProblemSpec, ProblemSuite};
use metal_core::predictor::Similarity;
use metal_core::rng::{child_seed, Stream};
use metal_core::selector::{self, Strategy};
use metal_core::trainer::{
    self, Arch, EmbedArch, EvalConfig, ModelParams, OptimizerKind, TrainConfig, TrainLogRow,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{self, CsvOptions, DataFormat};
use crate::manifest::{
    self, MaskRecord, PartitionRecord, ProblemDump, ProblemRecord, RunManifest, MANIFEST_SCHEMA,
};
use crate::{CliError, Result};

pub const RESULTS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Random,
    Kmedoids,
    Policy,
}

impl StrategyName {
    pub fn to_strategy(self) -> Strategy {
        match self {
            StrategyName::Random => Strategy::Random,
            StrategyName::Kmedoids => Strategy::KMedoids,
            StrategyName::Policy => Strategy::Policy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Random => "random",
            StrategyName::Kmedoids => "kmedoids",
            StrategyName::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityName {
    Cosine,
    Euclidean,
}

impl SimilarityName {
    pub fn to_similarity(self) -> Similarity {
        match self {
            SimilarityName::Cosine => Similarity::Cosine,
            SimilarityName::Euclidean => Similarity::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

impl OptimizerName {
    pub fn to_kind(self) -> OptimizerKind {
        match self {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::Adam,
        }
    }
}

/// Everything a run needs; serializable into the manifest for exact replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub csv_has_header: bool,
    pub csv_label_col: usize,
    /// Class counts per split; `None` resolves to a 40/30/30 split.
    pub class_split: Option<(usize, usize, usize)>,
    pub classes_per_problem: usize,
    pub pool_size: usize,
    pub eval_size: usize,
    pub problems: (usize, usize, usize),
    pub strategies: Vec<StrategyName>,
    pub budgets: Vec<usize>,
    pub similarity: SimilarityName,
    pub temperature: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub episodes: usize,
    pub mc_samples: usize,
    pub lambda: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub balanced: bool,
    pub standardize: bool,
    pub with_replacement: bool,
    pub no_baseline: bool,
    pub optimizer: OptimizerName,
    pub eval_interval: usize,
    pub clip_norm: f64,
    pub eval_draws: usize,
    pub dump_problems: bool,
    pub dump_masks: bool,
}

/// One line of results.csv.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub dataset: String,
    pub p: usize,
    pub budget: usize,
    pub strategy: String,
    pub split: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub n_problems: usize,
    pub seed: u64,
}

pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
}

// ── Validation ───────────────────────────────────────────────────────

fn resolve_class_split(cfg: &RunConfig, n_classes: usize) -> (usize, usize, usize) {
    match cfg.class_split {
        Some(t) => t,
        None => {
            let train = ((n_classes as f64 * 0.4).round() as usize).max(1);
            let val = ((n_classes as f64 * 0.3).round() as usize).max(1);
            let test = n_classes.saturating_sub(train + val).max(1);
            (train, val, test)
        }
    }
}

/// Checks that need no dataset. Collects every problem found.
fn validate_static(cfg: &RunConfig) -> Vec<String> {
    let mut diags = Vec::new();
    if cfg.strategies.is_empty() {
        diags.push("no strategies given".into());
    }
    if cfg.budgets.is_empty() {
        diags.push("no budgets given".into());
    }
    for &b in &cfg.budgets {
        if b == 0 || b > cfg.pool_size {
            diags.push(format!(
                "budget {b} outside 1..={} (pool size)",
                cfg.pool_size
            ));
        }
    }
    if cfg.classes_per_problem < 2 {
        diags.push("classes-per-problem must be at least 2".into());
    }
    if cfg.pool_size == 0 {
        diags.push("pool-size must be positive".into());
    }
    if cfg.eval_size == 0 {
        diags.push("eval-size must be positive".into());
    }
    if cfg.mc_samples == 0 {
        diags.push("mc-samples must be positive".into());
    }
    if cfg.lr <= 0.0 {
        diags.push("lr must be positive".into());
    }
    if cfg.temperature <= 0.0 {
        diags.push("temperature must be positive".into());
    }
    if cfg.lambda < 0.0 {
        diags.push("lambda must be nonnegative".into());
    }
    if cfg.eval_interval == 0 {
        diags.push("eval-interval must be positive".into());
    }
    if cfg.eval_draws == 0 {
        diags.push("eval-draws must be positive".into());
    }
    if cfg.embed_dim == 0 {
        diags.push("embed-dim must be positive".into());
    }
    if cfg.hidden_dim == 0 {
        diags.push("hidden-dim must be positive".into());
    }
    if cfg.uses_strategy(StrategyName::Policy) && cfg.problems.1 == 0 {
        diags.push("policy strategy needs validation problems (problems.1 > 0)".into());
    }
    if !cfg.dataset.exists() {
        diags.push(format!("dataset file not found: {}", cfg.dataset.display()));
    }
    diags
}

/// Checks against the loaded dataset: split sizes, class availability, and
/// worst-case feasibility of N + M inside each split.
fn validate_with_dataset(
    cfg: &RunConfig,
    ds: &BaseDataset,
    split: (usize, usize, usize),
) -> Vec<String> {
    let mut diags = Vec::new();
    let total = split.0 + split.1 + split.2;
    if total > ds.n_classes() {
        diags.push(format!(
            "class split {}+{}+{} exceeds the dataset's {} classes",
            split.0,
            split.1,
            split.2,
            ds.n_classes()
        ));
        return diags;
    }
    let per_split = [
        ("train", split.0, cfg.problems.0),
        ("val", split.1, cfg.problems.1),
        ("test", split.2, cfg.problems.2),
    ];
    let mut class_sizes: Vec<usize> = (0..ds.n_classes())
        .map(|c| ds.rows_of_class(c).len())
        .collect();
    class_sizes.sort_unstable();
    let p = cfg.classes_per_problem;
    for (name, classes, problems) in per_split {
        if problems == 0 {
            continue;
        }
        if classes < p {
            diags.push(format!(
                "{name} split has {classes} classes but problems need {p}"
            ));
            continue;
        }
        // Worst case: the P globally-smallest classes end up in this split.
        let worst_union: usize = class_sizes.iter().take(p).sum();
        if worst_union < cfg.pool_size + cfg.eval_size {
            diags.push(format!(
                "{name} split: {p} smallest classes hold {worst_union} examples, fewer than \
                 pool {} + eval {}",
                cfg.pool_size, cfg.eval_size
            ));
        }
        if cfg.balanced {
            let quota = cfg.pool_size.div_ceil(p);
            if class_sizes[0] < quota {
                diags.push(format!(
                    "{name} split: balanced pool needs {quota} examples per class, smallest \
                     class has {}",
                    class_sizes[0]
                ));
            }
        }
    }
    diags
}

impl RunConfig {
    pub fn uses_strategy(&self, s: StrategyName) -> bool {
        self.strategies.contains(&s)
    }

    fn dataset_name(&self) -> String {
        self.dataset
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string()
    }

    fn arch(&self, input_dim: usize) -> Arch {
        Arch {
            input_dim,
            embed: EmbedArch::Mlp {
                hidden: vec![2 * self.embed_dim],
                out: self.embed_dim,
            },
            rnn_hidden: self.hidden_dim,
        }
    }

    fn train_config(&self, budget: usize) -> TrainConfig {
        TrainConfig {
            budget,
            label_cost_weight: self.lambda,
            mc_samples: self.mc_samples,
            learning_rate: self.lr,
            episodes: self.episodes,
            eval_interval: self.eval_interval,
            similarity: self.similarity.to_similarity(),
            temperature: self.temperature,
            seed: self.seed,
            clip_norm: self.clip_norm,
            optimizer: self.optimizer.to_kind(),
            use_baseline: !self.no_baseline,
            eval_draws: self.eval_draws,
            shuffle_pool: true,
            with_replacement: self.with_replacement,
        }
    }
}

// ── Running ──────────────────────────────────────────────────────────

fn strategy_tag(s: StrategyName) -> u64 {
    match s {
        StrategyName::Random => 0,
        StrategyName::Kmedoids => 1,
        StrategyName::Policy => 2,
    }
}

/// Seed of the test evaluation for one (strategy, budget) cell, separated
/// from the training streams by a large offset.
fn test_eval_seed(master: u64, strategy: StrategyName, budget: usize) -> u64 {
    child_seed(
        master,
        Stream::EvalMask,
        1_000_000 + strategy_tag(strategy) * 1_000 + budget as u64,
    )
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    let diags = validate_static(cfg);
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    let raw = dataset::load_dataset(
        &cfg.dataset,
        cfg.format,
        CsvOptions {
            has_header: cfg.csv_has_header,
            label_col: cfg.csv_label_col,
        },
    )?;
    let split = resolve_class_split(cfg, raw.n_classes());
    let diags = validate_with_dataset(cfg, &raw, split);
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }

    std::fs::create_dir_all(&cfg.out)?;
    let partition = data::partition_classes(&raw, split, child_seed(cfg.seed, Stream::Partition, 0))?;
    let ds = if cfg.standardize {
        raw.standardized_on(&partition.train)
    } else {
        raw
    };
    let spec = ProblemSpec {
        classes_per_problem: cfg.classes_per_problem,
        pool_size: cfg.pool_size,
        eval_size: cfg.eval_size,
        balanced: cfg.balanced,
    };
    let suite = data::make_problem_suite(&ds, &partition, spec, cfg.problems, cfg.seed)?;
    log::info!(
        "problem suite ready: {}/{}/{} problems, P={}, N={}, M={}",
        suite.train.len(),
        suite.val.len(),
        suite.test.len(),
        cfg.classes_per_problem,
        cfg.pool_size,
        cfg.eval_size
    );

    let mut man = RunManifest {
        schema: MANIFEST_SCHEMA,
        config: cfg.clone(),
        dataset_sha256: manifest::sha256_file(&cfg.dataset)?,
        partition: PartitionRecord {
            train: partition.train.clone(),
            val: partition.val.clone(),
            test: partition.test.clone(),
        },
        problems: cfg.dump_problems.then(|| dump_problems(&suite)),
        test_masks: None,
    };

    let mut rows = Vec::new();
    let mut masks = Vec::new();
    for &strategy in &cfg.strategies {
        for &budget in &cfg.budgets {
            let cell = run_cell(cfg, &ds, &suite, strategy, budget)?;
            rows.extend(cell.rows);
            if cfg.dump_masks {
                masks.extend(cell.masks);
            }
        }
    }
    if cfg.dump_masks {
        man.test_masks = Some(masks);
    }

    let manifest_path = cfg.out.join("manifest.json");
    manifest::write(&manifest_path, &man)?;
    let results_path = cfg.out.join("results.csv");
    append_results(&results_path, &rows)?;
    Ok(ExperimentOutcome {
        rows,
        results_path,
        manifest_path,
    })
}

/// Re-run an experiment from its manifest. The dataset file must still
/// match the recorded digest; `out_override` redirects the outputs.
pub fn replay(manifest_path: &Path, out_override: Option<PathBuf>) -> Result<ExperimentOutcome> {
    let man = manifest::read(manifest_path)?;
    let mut cfg = man.config;
    if !cfg.dataset.exists() {
        return Err(CliError::config(format!(
            "dataset {} from the manifest no longer exists",
            cfg.dataset.display()
        )));
    }
    let digest = manifest::sha256_file(&cfg.dataset)?;
    if digest != man.dataset_sha256 {
        return Err(CliError::config(format!(
            "dataset {} changed since the manifest was written (sha256 {} != {})",
            cfg.dataset.display(),
            digest,
            man.dataset_sha256
        )));
    }
    if let Some(out) = out_override {
        cfg.out = out;
    }
    run_experiment(&cfg)
}

struct CellOutcome {
    rows: Vec<ResultRow>,
    masks: Vec<MaskRecord>,
}

fn run_cell(
    cfg: &RunConfig,
    ds: &BaseDataset,
    suite: &ProblemSuite,
    strategy: StrategyName,
    budget: usize,
) -> Result<CellOutcome> {
    let dataset_name = cfg.dataset_name();
    let eval_cfg = EvalConfig {
        similarity: cfg.similarity.to_similarity(),
        temperature: cfg.temperature,
        draws: cfg.eval_draws,
        seed: test_eval_seed(cfg.seed, strategy, budget),
    };
    let mut rows = Vec::new();

    let model = match strategy {
        StrategyName::Policy => {
            let train_cfg = cfg.train_config(budget);
            let initial = ModelParams::init(
                cfg.arch(ds.n_features()),
                child_seed(cfg.seed, Stream::ParamInit, budget as u64),
            )?;
            let out = trainer::train(ds, &suite.train, &suite.val, initial, &train_cfg)?;
            if let Some(ep) = out.aborted_at {
                log::warn!("budget {budget}: non-finite update at episode {ep}; kept the last good checkpoint");
            }
            write_train_log(
                &cfg.out.join(format!("train_log_k{budget}.csv")),
                &out.log,
            )?;
            crate::checkpoint::save(
                &cfg.out.join(format!("policy_k{budget}.mpck")),
                &out.best,
                json!({
                    "budget": budget,
                    "lr": cfg.lr,
                    "episodes": cfg.episodes,
                    "mc_samples": cfg.mc_samples,
                    "similarity": cfg.similarity,
                    "temperature": cfg.temperature,
                    "lambda": cfg.lambda,
                    "optimizer": cfg.optimizer,
                }),
                cfg.seed,
            )?;
            rows.push(ResultRow {
                schema_version: RESULTS_SCHEMA,
                dataset: dataset_name.clone(),
                p: cfg.classes_per_problem,
                budget,
                strategy: strategy.as_str().into(),
                split: "val".into(),
                accuracy_mean: out.best_val_accuracy,
                accuracy_std: 0.0,
                n_problems: suite.val.len(),
                seed: cfg.seed,
            });
            Some(out.best)
        }
        _ => None,
    };

    let summary = trainer::evaluate(
        ds,
        &suite.test,
        strategy.to_strategy(),
        budget,
        model.as_ref(),
        &eval_cfg,
    )?;
    log::info!(
        "{} @ budget {budget}: test accuracy {:.4} ± {:.4}",
        strategy.as_str(),
        summary.mean,
        summary.std
    );
    rows.push(ResultRow {
        schema_version: RESULTS_SCHEMA,
        dataset: dataset_name,
        p: cfg.classes_per_problem,
        budget,
        strategy: strategy.as_str().into(),
        split: "test".into(),
        accuracy_mean: summary.mean,
        accuracy_std: summary.std,
        n_problems: suite.test.len(),
        seed: cfg.seed,
    });

    let masks = if cfg.dump_masks {
        dump_test_masks(ds, suite, strategy, budget, model.as_ref(), &eval_cfg)?
    } else {
        Vec::new()
    };
    Ok(CellOutcome { rows, masks })
}

/// Regenerate the exact masks the test evaluation drew (same seed stream)
/// for the manifest.
fn dump_test_masks(
    ds: &BaseDataset,
    suite: &ProblemSuite,
    strategy: StrategyName,
    budget: usize,
    model: Option<&ModelParams>,
    eval_cfg: &EvalConfig,
) -> Result<Vec<MaskRecord>> {
    let mut out = Vec::new();
    let policy = model.map(|m| (&m.policy, &m.store));
    for problem in &suite.test {
        let pool = trainer::embed_rows(model, ds, &problem.pool_rows)?;
        for draw in 0..eval_cfg.draws {
            let seed = trainer::eval_mask_seed(eval_cfg.seed, problem.id, draw);
            let mask = selector::select(strategy.to_strategy(), &pool, budget, policy, seed)?;
            out.push(MaskRecord {
                strategy: strategy.as_str().into(),
                budget,
                problem_id: problem.id,
                chosen: mask.chosen,
                log_prob: mask.log_prob,
            });
        }
    }
    Ok(out)
}

fn dump_problems(suite: &ProblemSuite) -> ProblemDump {
    let rec = |p: &data::Problem| ProblemRecord {
        id: p.id,
        seed: p.seed,
        classes: p.classes.clone(),
        pool_rows: p.pool_rows.clone(),
        eval_rows: p.eval_rows.clone(),
    };
    ProblemDump {
        train: suite.train.iter().map(rec).collect(),
        val: suite.val.iter().map(rec).collect(),
        test: suite.test.iter().map(rec).collect(),
    }
}

// ── Output files ─────────────────────────────────────────────────────

/// Append rows to results.csv, writing the header only when the file is new.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let exists = path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(!exists)
        .from_writer(file);
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::runtime(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: ResultRow =
            rec.map_err(|e| CliError::config(format!("{}: schema mismatch: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_train_log(path: &Path, log: &[TrainLogRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "episode,split,budget,strategy,accuracy_mean,accuracy_std,loss_mean,grad_norm,baseline"
    )?;
    for row in log {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            row.episode,
            row.split,
            row.budget,
            row.strategy,
            row.accuracy_mean,
            row.accuracy_std,
            row.loss_mean,
            row.grad_norm,
            row.baseline
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(dir: &Path) -> RunConfig {
        RunConfig {
            dataset: dir.join("synth.csv"),
            format: DataFormat::Csv,
            csv_has_header: false,
            csv_label_col: 0,
            class_split: Some((4, 2, 2)),
            classes_per_problem: 2,
            pool_size: 10,
            eval_size: 8,
            problems: (6, 4, 4),
            strategies: vec![StrategyName::Random],
            budgets: vec![2],
            similarity: SimilarityName::Euclidean,
            temperature: 1.0,
            embed_dim: 4,
            hidden_dim: 4,
            lr: 0.05,
            episodes: 5,
            mc_samples: 2,
            lambda: 0.0,
            seed: 7,
            out: dir.join("out"),
            balanced: false,
            standardize: false,
            with_replacement: false,
            no_baseline: false,
            optimizer: OptimizerName::Sgd,
            eval_interval: 5,
            clip_norm: 5.0,
            eval_draws: 1,
            dump_problems: false,
            dump_masks: false,
        }
    }

    #[test]
    fn validation_collects_every_problem() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config(dir.path());
        cfg.budgets = vec![0, 99];
        cfg.lr = -1.0;
        cfg.temperature = 0.0;
        cfg.strategies = vec![];
        let diags = validate_static(&cfg);
        assert!(diags.len() >= 5, "got {diags:?}");
        assert!(diags.iter().any(|d| d.contains("budget 0")));
        assert!(diags.iter().any(|d| d.contains("budget 99")));
        assert!(diags.iter().any(|d| d.contains("lr")));
        assert!(diags.iter().any(|d| d.contains("temperature")));
        assert!(diags.iter().any(|d| d.contains("dataset file not found")));
    }

    #[test]
    fn auto_split_covers_all_classes_reasonably() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base_config(dir.path());
        cfg.class_split = None;
        let split = resolve_class_split(&cfg, 26);
        assert_eq!(split.0 + split.1 + split.2, 26);
        assert!(split.0 >= split.1 && split.0 >= split.2);
    }
}
