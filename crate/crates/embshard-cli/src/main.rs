//! Command-line front end for the embshard pipeline: generate pools, tasks,
//! and training data; train cost models; plan shardings; and evaluate
//! algorithms against the analytical oracle.
//!
//! Exit status is nonzero only for configuration and IO errors. An
//! infeasible task is a result, reported in the output files, not a failure
//! of the invocation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use embshard::baselines::{greedy_shard, random_shard};
use embshard::datagen::{
    collect_compute_samples, collect_comm_samples, gen_table_combinations, gen_table_placements,
    read_comm_dataset, read_compute_dataset, write_comm_dataset, write_compute_dataset,
    ComboGenConfig, DatasetHeader, PlacementGenConfig, DATASET_VERSION,
};
use embshard::harness::{
    ablate, common_success_means, compare, save_reports_json, sweep, write_reports_csv,
    Algorithm, EvalOptions, LabeledReport, SweepParam,
};
use embshard::nncost::{train_comm, train_compute, CommCostModel, ComputeCostModel, TrainConfig};
use embshard::oracle::{CommDirection, OracleParams};
use embshard::search::plan_task;
use embshard::tables::{
    augment_pool, gen_pool, gen_tasks, load_tasks, save_tasks, ShardingTask, TablePool,
    TaskGenConfig,
};
use embshard::{CostModelBundle, SearchHyper};

#[derive(Parser)]
#[command(name = "embshard", version, about = "Embedding table sharding planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table pool.
    GenPool(GenPoolArgs),
    /// Draw sharding tasks from a pool.
    GenTasks(GenTasksArgs),
    /// Generate oracle-labeled training data.
    #[command(subcommand)]
    GenData(GenDataCommand),
    /// Train a cost model on a dataset file.
    Train(TrainArgs),
    /// Plan one task with the trained models.
    Shard(ShardArgs),
    /// Shard one task with a model-free baseline.
    Baseline(BaselineArgs),
    /// Evaluate algorithms over a task set.
    Eval(EvalArgs),
    /// Run the planner ablations (full, no_beam, no_grid, no_cache).
    Ablate(AblateArgs),
    /// Sweep one search hyperparameter.
    Sweep(SweepArgs),
    /// Write the default oracle parameters to a file for editing.
    OracleParams(OracleParamsArgs),
}

#[derive(Args)]
struct GenPoolArgs {
    #[arg(long, default_value_t = 100)]
    tables: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-issue every table once per listed dimension.
    #[arg(long, value_delimiter = ',')]
    augment_dims: Vec<u32>,
    /// Import tables from a CSV (id,dim,hash_size,pooling_factor,skew)
    /// instead of sampling them.
    #[arg(long, conflicts_with_all = ["tables", "seed"])]
    from_csv: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenTasksArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    devices: usize,
    #[arg(long, default_value_t = 10)]
    t_min: usize,
    #[arg(long, default_value_t = 60)]
    t_max: usize,
    #[arg(long, default_value_t = 128)]
    max_dim: u32,
    #[arg(long, default_value_t = 4.0)]
    mem_cap_gib: f64,
    #[arg(long, default_value_t = 0.8)]
    fill_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GenDataCommand {
    /// Fused-kernel compute samples from random table combinations.
    Compute(GenComputeArgs),
    /// All-to-all comm samples from random table placements.
    Comm(GenCommArgs),
}

#[derive(Args)]
struct GenComputeArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    #[arg(long, default_value_t = 15)]
    n_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for the label-noise stream (only used when noise is enabled).
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenCommArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, value_parser = parse_direction)]
    direction: CommDirection,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    devices: usize,
    #[arg(long, default_value_t = 10)]
    n_min: usize,
    #[arg(long, default_value_t = 60)]
    n_max: usize,
    /// Per-device start times are uniform in [0, this] ms.
    #[arg(long, default_value_t = 20.0)]
    start_max: f64,
    #[arg(long, default_value_t = 4.0)]
    mem_cap_gib: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by gen-data; its header decides which model is
    /// trained.
    #[arg(long)]
    data: PathBuf,
    /// Model directory; the trained model is written under its canonical
    /// name (compute.json, comm_fwd.json, comm_bwd.json).
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Seed for the split shuffle and batch order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for the weight initialization.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 10)]
    shortlist: usize,
    #[arg(long, default_value_t = 3)]
    beam_width: usize,
    #[arg(long, default_value_t = 10)]
    max_splits: usize,
    #[arg(long, default_value_t = 11)]
    grid_points: usize,
    #[arg(long)]
    no_cache: bool,
}

impl HyperArgs {
    fn hyper(&self) -> SearchHyper {
        SearchHyper {
            shortlist: self.shortlist,
            beam_width: self.beam_width,
            max_splits: self.max_splits,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Args)]
struct OracleArgs {
    /// Oracle parameter file; defaults are used when omitted.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Override the oracle's multiplicative label-noise sigma.
    #[arg(long)]
    noise_sigma: Option<f64>,
}

impl OracleArgs {
    fn load(&self) -> anyhow::Result<OracleParams> {
        let mut params = match &self.oracle {
            Some(path) => OracleParams::load(path)
                .with_context(|| format!("loading oracle parameters from {}", path.display()))?,
            None => OracleParams::default(),
        };
        if let Some(sigma) = self.noise_sigma {
            params.noise_sigma = sigma;
        }
        Ok(params)
    }
}

#[derive(Args)]
struct ShardArgs {
    /// Task file: a single task or a task list from gen-tasks.
    #[arg(long)]
    task: PathBuf,
    /// Index into the task list when the file holds several tasks.
    #[arg(long, default_value_t = 0)]
    task_index: usize,
    #[arg(long)]
    models: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Plan file to write; skipped when the task is infeasible.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    /// Task file: a single task or a task list from gen-tasks.
    #[arg(long)]
    task: PathBuf,
    /// Index into the task list when the file holds several tasks.
    #[arg(long, default_value_t = 0)]
    task_index: usize,
    /// One of: random, size, dim, lookup, size_lookup.
    #[arg(long)]
    algorithm: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// Comma-separated algorithms; "all" runs every one.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    algorithms: Vec<String>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    random_seed: u64,
    /// Zero all wall times so repeated runs produce byte-identical reports.
    #[arg(long)]
    omit_timing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    omit_timing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// One of: shortlist, beam_width, max_splits, grid_points.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    omit_timing: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleParamsArgs {
    #[arg(long)]
    out: PathBuf,
}

fn parse_direction(s: &str) -> Result<CommDirection, String> {
    match s {
        "forward" | "fwd" => Ok(CommDirection::Forward),
        "backward" | "bwd" => Ok(CommDirection::Backward),
        _ => Err(format!("unknown direction {s:?}, expected forward|backward")),
    }
}

fn gib_to_bytes(gib: f64) -> anyhow::Result<u64> {
    if !(gib.is_finite() && gib > 0.0) {
        bail!("memory capacity must be a positive number of GiB, got {gib}");
    }
    Ok((gib * (1u64 << 30) as f64) as u64)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::GenPool(args) => cmd_gen_pool(args),
        Command::GenTasks(args) => cmd_gen_tasks(args),
        Command::GenData(GenDataCommand::Compute(args)) => cmd_gen_compute(args),
        Command::GenData(GenDataCommand::Comm(args)) => cmd_gen_comm(args),
        Command::Train(args) => cmd_train(args),
        Command::Shard(args) => cmd_shard(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::OracleParams(args) => {
            OracleParams::default().save(&args.out)?;
            println!("wrote default oracle parameters to {}", args.out.display());
            Ok(())
        }
    }
}

fn cmd_gen_pool(args: GenPoolArgs) -> anyhow::Result<()> {
    let mut pool = match &args.from_csv {
        Some(csv) => TablePool::from_csv(csv)
            .with_context(|| format!("importing tables from {}", csv.display()))?,
        None => gen_pool(args.tables, args.seed),
    };
    if !args.augment_dims.is_empty() {
        pool = augment_pool(&pool, &args.augment_dims)?;
    }
    pool.save(&args.out)?;
    println!(
        "wrote {} tables to {} (fingerprint {})",
        pool.tables.len(),
        args.out.display(),
        &pool.fingerprint()[..12]
    );
    Ok(())
}

fn cmd_gen_tasks(args: GenTasksArgs) -> anyhow::Result<()> {
    let pool = TablePool::load(&args.pool)?;
    let cfg = TaskGenConfig {
        num_devices: args.devices,
        t_min: args.t_min,
        t_max: args.t_max,
        max_dim: args.max_dim,
        count: args.count,
        mem_cap_bytes: gib_to_bytes(args.mem_cap_gib)?,
        mem_fill_limit: args.fill_limit,
        seed: args.seed,
    };
    let tasks = gen_tasks(&pool, &cfg)?;
    save_tasks(&args.out, &tasks)?;
    println!("wrote {} tasks to {}", tasks.len(), args.out.display());
    Ok(())
}

fn cmd_gen_compute(args: GenComputeArgs) -> anyhow::Result<()> {
    let pool = TablePool::load(&args.pool)?;
    let params = args.oracle.load()?;
    let cfg = ComboGenConfig {
        n_min: args.n_min,
        n_max: args.n_max,
        count: args.count,
        seed: args.seed,
    };
    let combos = gen_table_combinations(&pool, &cfg)?;
    let samples = collect_compute_samples(&pool, &combos, &params, args.noise_seed)?;
    let header = DatasetHeader {
        kind: "compute".into(),
        direction: None,
        oracle_params: params,
        generator: serde_json::to_value(&cfg)?,
        pool_fingerprint: pool.fingerprint(),
        version: DATASET_VERSION,
    };
    write_compute_dataset(&args.out, &header, &samples)?;
    println!("wrote {} compute samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn cmd_gen_comm(args: GenCommArgs) -> anyhow::Result<()> {
    let pool = TablePool::load(&args.pool)?;
    let params = args.oracle.load()?;
    let cfg = PlacementGenConfig {
        devices: args.devices,
        n_min: args.n_min,
        n_max: args.n_max,
        count: args.count,
        start_range_ms: (0.0, args.start_max),
        mem_cap_bytes: gib_to_bytes(args.mem_cap_gib)?,
        seed: args.seed,
    };
    let placements = gen_table_placements(&pool, &cfg)?;
    let samples = collect_comm_samples(&pool, &placements, &params, args.direction)?;
    let header = DatasetHeader {
        kind: "comm".into(),
        direction: Some(args.direction),
        oracle_params: params,
        generator: serde_json::to_value(&cfg)?,
        pool_fingerprint: pool.fingerprint(),
        version: DATASET_VERSION,
    };
    write_comm_dataset(&args.out, &header, &samples)?;
    println!("wrote {} comm samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
        ..TrainConfig::default()
    };
    std::fs::create_dir_all(&args.models)?;

    let header_line = {
        use std::io::BufRead;
        let file = std::fs::File::open(&args.data)
            .with_context(|| format!("opening dataset {}", args.data.display()))?;
        std::io::BufReader::new(file)
            .lines()
            .next()
            .context("dataset file is empty")??
    };
    let header: serde_json::Value = serde_json::from_str(&header_line)?;
    let kind = header["kind"].as_str().unwrap_or_default().to_string();

    let (path, metrics, fingerprint) = match kind.as_str() {
        "compute" => {
            let (_, samples) = read_compute_dataset(&args.data)?;
            let mut model = ComputeCostModel::new(args.init_seed);
            let metrics = train_compute(&mut model, &samples, &cfg)?;
            let path = args.models.join("compute.json");
            model.save(&path)?;
            (path, metrics, model.fingerprint())
        }
        "comm" => {
            let (header, samples) = read_comm_dataset(&args.data)?;
            let direction = header
                .direction
                .context("comm dataset header is missing its direction")?;
            let devices = samples
                .first()
                .context("comm dataset has no samples")?
                .starts_ms
                .len();
            let mut model = CommCostModel::new(direction, devices, args.init_seed);
            let metrics = train_comm(&mut model, &samples, &cfg)?;
            let name = match direction {
                CommDirection::Forward => "comm_fwd.json",
                CommDirection::Backward => "comm_bwd.json",
            };
            let path = args.models.join(name);
            model.save(&path)?;
            (path, metrics, model.fingerprint())
        }
        other => bail!("dataset kind {other:?} is not trainable"),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "model": path,
            "fingerprint": fingerprint,
            "metrics": metrics,
        }))?
    );
    Ok(())
}

fn load_one_task(path: &Path, index: usize) -> anyhow::Result<ShardingTask> {
    if let Ok(tasks) = load_tasks(path) {
        let count = tasks.len();
        return tasks.into_iter().nth(index).ok_or_else(|| {
            anyhow::anyhow!("task index {index} out of range for {count} tasks")
        });
    }
    if index != 0 {
        bail!("task index {index} given but {} holds a single task", path.display());
    }
    Ok(ShardingTask::load(path)?)
}

fn cmd_shard(args: ShardArgs) -> anyhow::Result<()> {
    let task = load_one_task(&args.task, args.task_index)?;
    let models = CostModelBundle::load_dir(&args.models)?;
    let outcome = plan_task(&models, &task, &args.hyper.hyper(), !args.hyper.no_cache)?;
    match outcome.plan {
        Some(plan) => {
            plan.save(&args.out)?;
            println!(
                "{}",
                serde_json::json!({
                    "feasible": true,
                    "predicted_cost_ms": plan.predicted_cost_ms,
                    "splits": plan.col.len(),
                    "cache_hit_rate": outcome.stats.cache_hit_rate(),
                    "plan": args.out,
                })
            );
        }
        None => println!("{}", serde_json::json!({ "feasible": false })),
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> anyhow::Result<()> {
    let task = load_one_task(&args.task, args.task_index)?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let plan = match algorithm {
        Algorithm::Planner => bail!("use the shard command for the planner"),
        Algorithm::Random => random_shard(&task, args.seed)?,
        _ => greedy_shard(&task, algorithm.heuristic().unwrap())?,
    };
    match plan {
        Some(plan) => {
            plan.save(&args.out)?;
            println!(
                "{}",
                serde_json::json!({ "feasible": true, "plan": args.out })
            );
        }
        None => println!("{}", serde_json::json!({ "feasible": false })),
    }
    Ok(())
}

fn parse_algorithms(names: &[String]) -> anyhow::Result<Vec<Algorithm>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Algorithm::all().to_vec());
    }
    names.iter().map(|n| Ok(n.parse()?)).collect()
}

fn eval_options(hyper: &HyperArgs, random_seed: u64, omit_timing: bool) -> EvalOptions {
    EvalOptions {
        hyper: hyper.hyper(),
        cache_enabled: !hyper.no_cache,
        random_seed,
        omit_timing,
    }
}

fn write_outputs(
    out: &PathBuf,
    csv: &Option<PathBuf>,
    reports: &[LabeledReport],
) -> anyhow::Result<()> {
    save_reports_json(out, reports)?;
    if let Some(csv_path) = csv {
        write_reports_csv(csv_path, reports)?;
    }
    Ok(())
}

fn print_report_lines(reports: &[LabeledReport]) {
    for lr in reports {
        let r = &lr.report;
        let mean = r
            .mean_oracle_bottleneck_ms
            .map_or("-".to_string(), |m| format!("{m:.3} ms"));
        println!(
            "{}: success {}/{} ({:.1}%), mean oracle bottleneck {}",
            lr.label,
            r.successes,
            r.tasks,
            100.0 * r.success_rate,
            mean
        );
    }
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let tasks = load_tasks(&args.tasks)?;
    let algorithms = parse_algorithms(&args.algorithms)?;
    let params = args.oracle.load()?;
    let models = args
        .models
        .as_ref()
        .map(|dir| CostModelBundle::load_dir(dir))
        .transpose()?;
    let opts = eval_options(&args.hyper, args.random_seed, args.omit_timing);
    let reports = compare(&tasks, &algorithms, &params, models.as_ref(), &opts)?;
    let labeled: Vec<LabeledReport> = reports
        .into_iter()
        .map(|report| LabeledReport {
            label: report.algorithm.name().into(),
            report,
        })
        .collect();
    write_outputs(&args.out, &args.csv, &labeled)?;
    print_report_lines(&labeled);
    let common = common_success_means(
        &labeled.iter().map(|l| l.report.clone()).collect::<Vec<_>>(),
    );
    for (lr, mean) in labeled.iter().zip(common) {
        if let Some(m) = mean {
            println!("{}: common-subset mean {m:.3} ms", lr.label);
        }
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> anyhow::Result<()> {
    let tasks = load_tasks(&args.tasks)?;
    let params = args.oracle.load()?;
    let models = CostModelBundle::load_dir(&args.models)?;
    let opts = eval_options(&args.hyper, 0, args.omit_timing);
    let reports = ablate(&tasks, &params, &models, &opts)?;
    write_outputs(&args.out, &args.csv, &reports)?;
    print_report_lines(&reports);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let tasks = load_tasks(&args.tasks)?;
    let params = args.oracle.load()?;
    let models = CostModelBundle::load_dir(&args.models)?;
    let param: SweepParam = args.param.parse()?;
    let opts = eval_options(&args.hyper, 0, args.omit_timing);
    let reports = sweep(&tasks, &params, &models, &opts, param, &args.values)?;
    write_outputs(&args.out, &args.csv, &reports)?;
    print_report_lines(&reports);
    Ok(())
}
