use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use iocc::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use iocc::ieot::{mm_solve, PlanFile, ProblemFile, SolverOptions};
use iocc::model::{read_checkpoint, write_checkpoint};
use iocc::trainer::{evaluate, train_with_hook, TrainConfig, TrainState};
use iocc::{gradcheck, parallel};
use rand::SeedableRng;

/// Few-shot clustering of fixed embeddings.
#[derive(Parser)]
#[command(name = "iocc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-cluster dataset.
    Generate(GenerateArgs),
    /// Train a head on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Solve a standalone transport problem.
    SolveOt(SolveArgs),
    /// Compare analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Distance of each cluster mean from the origin.
    #[arg(long)]
    sep: f64,
    /// Within-cluster standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Largest-to-smallest cluster size ratio.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long)]
    seed: u64,
    /// Output path; `.jsonl` selects the text format.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON or TOML config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Directory for metrics, checkpoints and the resolved config.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Config selecting the evaluation mode and solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem JSON with P0, eps1, eps2, eps3, T1, T2 and seed.
    #[arg(long)]
    problem: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Random instances per gradient.
    #[arg(long, default_value_t = 50)]
    instances: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    parallel::configure_from_env();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err.chain().any(|e| e.downcast_ref::<iocc::Error>().is_some_and(|e| e.is_usage()));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::SolveOt(args) => solve_ot(args),
        Command::GradCheck(args) => grad_check(args),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|err| match err.downcast_ref::<GradCheckFailed>() {
        Some(_) => Ok(ExitCode::from(1)),
        None => Err(err),
    })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        k: args.k,
        n: args.n,
        d: args.d,
        center_separation: args.sep,
        noise_sigma: args.sigma,
        imbalance_ratio: args.ratio,
        seed: args.seed,
    };
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    println!("n = {}, d = {}, K = {}", ds.n(), ds.dim(), ds.k);
    println!("cluster sizes: {:?}", ds.cluster_sizes().unwrap_or_default());
    println!("labeled samples: {}", ds.labeled_idx.len());
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let cfg = match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => TrainConfig::default(),
    };
    Ok(cfg)
}

fn write_state_checkpoint(state: &TrainState, path: &Path) -> iocc::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, &state.params, &state.adam, Some(&state.bank))?;
    w.flush()?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let ds = load_dataset(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let resolved = config.resolved(&ds);
    fs::write(args.out.join("config.resolved.json"), serde_json::to_string_pretty(&resolved)?)?;

    let mut metrics = BufWriter::new(File::create(args.out.join("metrics.jsonl"))?);
    let mut losses = BufWriter::new(File::create(args.out.join("losses.jsonl"))?);
    let (mut metrics_done, mut losses_done) = (0, 0);
    let state = train_with_hook(&resolved, &ds, |state| {
        for m in &state.metrics_log[metrics_done..] {
            serde_json::to_writer(&mut metrics, m)?;
            metrics.write_all(b"\n")?;
        }
        metrics_done = state.metrics_log.len();
        for l in &state.loss_log[losses_done..] {
            serde_json::to_writer(&mut losses, l)?;
            losses.write_all(b"\n")?;
        }
        losses_done = state.loss_log.len();
        metrics.flush()?;
        if state.iter == resolved.e_first {
            write_state_checkpoint(state, &args.out.join("checkpoint_first.ckpt"))?;
        }
        if state.iter == resolved.e_total {
            write_state_checkpoint(state, &args.out.join("checkpoint_final.ckpt"))?;
        }
        Ok(())
    })?;
    losses.flush()?;
    if let Some(last) = state.metrics_log.last() {
        println!("{}", serde_json::to_string(last)?);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let file = File::open(&args.checkpoint).with_context(|| format!("opening {}", args.checkpoint.display()))?;
    let ckpt = read_checkpoint(std::io::BufReader::new(file))?;
    let ds = load_dataset(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let record = evaluate(&ckpt.params, &ds, &config, ckpt.adam.t as usize)?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(())
}

fn solve_ot(args: SolveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(iocc::Error::from)?;
    let problem = file.problem()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(file.seed);
    let plan = mm_solve(&problem, &SolverOptions::default(), &mut rng)?;
    let out = serde_json::to_string_pretty(&PlanFile::from(&plan))?;
    fs::write(&args.output, out).with_context(|| format!("writing {}", args.output.display()))?;
    println!("row marginal residual: {:.3e}", plan.row_residual(problem.a.view()));
    println!("column marginal residual: {:.3e}", plan.col_residual());
    if let Some(last) = plan.objective_trace.last() {
        println!("objective: {last:.12}");
    }
    Ok(())
}

#[derive(Debug)]
struct GradCheckFailed;

impl std::fmt::Display for GradCheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("gradient check failed")
    }
}

impl std::error::Error for GradCheckFailed {}

fn grad_check(args: GradCheckArgs) -> Result<()> {
    let rows = gradcheck::run_suite(args.seed, args.instances, args.tolerance);
    println!("{:<18} {:>16}  result", "gradient", "max rel. error");
    for row in &rows {
        let verdict = if row.passed { "pass" } else { "FAIL" };
        println!("{:<18} {:>16.3e}  {verdict}", row.name, row.max_rel_error);
    }
    if rows.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(GradCheckFailed.into())
    }
}
