//! `lookahead`: parameter sweeps, optimizer queries, Monte Carlo validation
//! runs, and pipeline executions over the core library, with CSV/JSON output.

mod table;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use lookahead_core::analytics::{
    combined_speedup_h, hybrid_conditions_sync, optimal_allocation, step_speedup_async,
    step_speedup_sync, token_optimum_gamma, token_speedup_g, GConvention, Mode, Regime,
    SpecParams, TheoremReport, DEFAULT_GAMMA_MAX,
};
use lookahead_core::engine::{
    make_mock_backends, run_async_pipeline, run_autoregressive_baseline, run_sync_pipeline,
    split_steps, EngineError, PipelineConfig, TokenSdConfig, Trace, Verifier,
};
use lookahead_core::stochastics::{mc_async_speedup, mc_sync_speedup, RngSeed};

use table::{Cell, OutputFormat, Table};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<lookahead_core::Error> for CliError {
    fn from(e: lookahead_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Numeric(_) => {
                CliError::Validation(e.to_string())
            }
            EngineError::Transport { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "lookahead", version, about = "Step-level speculation toolkit")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the closed-form speedups over a (k1, k2) grid.
    Analyze(AnalyzeArgs),
    /// Best integer (k1, k2) under a parallelism budget.
    Optimize(OptimizeArgs),
    /// Closed forms against their Monte Carlo estimators, with z-scores.
    Simulate(SimulateArgs),
    /// Run the speculation engine on a step corpus.
    Pipeline(PipelineArgs),
    /// Speedup-vs-gamma curves for step-level, token-level, and combined
    /// speculation.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Default)]
struct ModelFlags {
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    k1_min: Option<u32>,
    #[arg(long)]
    k1_max: Option<u32>,
    #[arg(long)]
    k2_min: Option<u32>,
    #[arg(long)]
    k2_max: Option<u32>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Parallelism budget M.
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    k1_min: Option<u32>,
    #[arg(long)]
    k1_max: Option<u32>,
    /// Monte Carlo replications per grid point.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    width: Option<u32>,
    /// exact | ngram:N:THRESHOLD | random:P | score:THRESHOLD
    #[arg(long)]
    verifier: Option<String>,
    /// Step corpus file; steps separated by blank lines.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    compare_baseline: bool,
    /// Enable nested token speculation with this k2.
    #[arg(long, value_name = "K2")]
    token_sd: Option<u32>,
    #[arg(long)]
    corruption: Option<f64>,
    #[arg(long)]
    draft_cost: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    gamma_max: Option<u32>,
    /// Fixed token depth for the combined curve; defaults to the token-level
    /// optimum.
    #[arg(long)]
    k2: Option<u32>,
    #[arg(long)]
    mode: Option<String>,
}

/// Structured experiment file. Unknown keys are rejected so typos surface
/// instead of silently falling back to defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    budget: Option<u32>,
    mode: Option<String>,
    k1_min: Option<u32>,
    k1_max: Option<u32>,
    k2_min: Option<u32>,
    k2_max: Option<u32>,
    k2: Option<u32>,
    gamma: Option<u32>,
    gamma_max: Option<u32>,
    width: Option<u32>,
    n: Option<u64>,
    seed: Option<u64>,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<String>,
    corruption: Option<f64>,
    draft_cost: Option<f64>,
    verifier: Option<String>,
    max_steps: Option<usize>,
}

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
        }
    }
}

fn parse_mode(flag: Option<&String>, file: Option<&String>) -> Result<Mode, CliError> {
    match flag.or(file).map(String::as_str) {
        None | Some("sync") => Ok(Mode::Sync),
        Some("async") => Ok(Mode::Async),
        Some(other) => Err(CliError::Validation(format!(
            "mode must be sync or async, got {other}"
        ))),
    }
}

fn parse_format(
    flag: Option<OutputFormat>,
    file: Option<&String>,
) -> Result<OutputFormat, CliError> {
    if let Some(f) = flag {
        return Ok(f);
    }
    match file.map(String::as_str) {
        None | Some("csv") => Ok(OutputFormat::Csv),
        Some("json") => Ok(OutputFormat::Json),
        Some(other) => Err(CliError::Validation(format!(
            "format must be csv or json, got {other}"
        ))),
    }
}

fn parse_verifier(spec: Option<&String>) -> Result<Verifier, CliError> {
    let spec = spec.map(String::as_str).unwrap_or("exact");
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default();
    let params: Vec<&str> = parts.collect();
    let bad = |m: String| CliError::Validation(m);
    match (name, params.as_slice()) {
        ("exact", []) => Ok(Verifier::ExactMatch),
        ("ngram", []) => Ok(Verifier::NgramSimilarity { n: 1, threshold: 0.85 }),
        ("ngram", [n, t]) => Ok(Verifier::NgramSimilarity {
            n: n.parse().map_err(|e| bad(format!("ngram n: {e}")))?,
            threshold: t.parse().map_err(|e| bad(format!("ngram threshold: {e}")))?,
        }),
        ("random", [p]) => Ok(Verifier::RandomAccept {
            p: p.parse().map_err(|e| bad(format!("random p: {e}")))?,
            seed: 0,
        }),
        ("score", [t]) => Ok(Verifier::ScoreThreshold {
            scorer: lookahead_core::engine::jaccard_scorer(),
            threshold: t.parse().map_err(|e| bad(format!("score threshold: {e}")))?,
        }),
        _ => Err(bad(format!(
            "unknown verifier `{spec}`; expected exact, ngram[:N:THRESHOLD], random:P, or score:THRESHOLD"
        ))),
    }
}

fn spec_params(flags: &ModelFlags, file: &FileConfig) -> Result<SpecParams, CliError> {
    Ok(SpecParams::new(
        flags.alpha1.or(file.alpha1).unwrap_or(0.6),
        flags.alpha2.or(file.alpha2).unwrap_or(0.7),
        flags.c1.or(file.c1).unwrap_or(0.2),
        flags.c2.or(file.c2).unwrap_or(0.1),
    )?)
}

fn emit(table: &Table, format: OutputFormat, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        None => {
            let stdout = std::io::stdout();
            table.write(format, &mut stdout.lock())?;
        }
        Some(path) => {
            let mut file = fs::File::create(path)?;
            table.write(format, &mut file)?;
            file.flush()?;
        }
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, file: &FileConfig) -> Result<Table, CliError> {
    let params = spec_params(&args.model, file)?;
    let k1_lo = args.k1_min.or(file.k1_min).unwrap_or(1);
    let k1_hi = args.k1_max.or(file.k1_max).unwrap_or(8);
    let k2_lo = args.k2_min.or(file.k2_min).unwrap_or(1);
    let k2_hi = args.k2_max.or(file.k2_max).unwrap_or(1);

    let mut table = Table::new(vec![
        "alpha1", "alpha2", "c1", "c2", "k1", "k2", "f_sync", "f_async", "g_background",
        "g_appendix", "h_sync", "h_async",
    ]);
    table
        .comments
        .push("closed-form speedups; g columns use gamma2 = k2".to_string());
    for k1 in k1_lo..=k1_hi {
        for k2 in k2_lo..=k2_hi {
            table.push(vec![
                Cell::F64(params.alpha1),
                Cell::F64(params.alpha2),
                Cell::F64(params.c1),
                Cell::F64(params.c2),
                Cell::U64(u64::from(k1)),
                Cell::U64(u64::from(k2)),
                Cell::F64(step_speedup_sync(params.alpha1, params.c1, k1)?),
                Cell::F64(step_speedup_async(params.alpha1, params.c1, k1)?),
                Cell::F64(token_speedup_g(
                    params.alpha2,
                    params.c2,
                    k2,
                    GConvention::Background,
                )?),
                Cell::F64(token_speedup_g(
                    params.alpha2,
                    params.c2,
                    k2,
                    GConvention::Appendix,
                )?),
                Cell::F64(combined_speedup_h(&params, k1, k2, Mode::Sync)?),
                Cell::F64(combined_speedup_h(&params, k1, k2, Mode::Async)?),
            ]);
        }
    }
    Ok(table)
}

fn theorem_cells(report: Option<&TheoremReport>) -> Vec<Cell> {
    match report {
        Some(r) => vec![
            Cell::Bool(r.eq_step_level_holds),
            Cell::Bool(r.eq_token_level_holds),
            Cell::Bool(r.preconditions_met),
            Cell::Str(format!("{:?}", r.predicted_regime)),
        ],
        None => vec![Cell::Null, Cell::Null, Cell::Null, Cell::Null],
    }
}

fn cmd_optimize(args: &OptimizeArgs, file: &FileConfig) -> Result<Table, CliError> {
    let params = spec_params(&args.model, file)?;
    let budget = args.budget.or(file.budget).unwrap_or(16);
    let mode = parse_mode(args.mode.as_ref(), file.mode.as_ref())?;
    let allocation = optimal_allocation(&params, budget, mode)?;

    // The regime prediction is defined for even sync budgets >= 4; anywhere
    // else the report is synthesized as indeterminate rather than omitted.
    let theorem = match mode {
        Mode::Sync if budget >= 4 && budget % 2 == 0 => {
            Some(hybrid_conditions_sync(&params, budget)?)
        }
        Mode::Sync => Some(TheoremReport {
            eq_step_level_holds: false,
            eq_token_level_holds: false,
            preconditions_met: false,
            predicted_regime: Regime::Indeterminate,
        }),
        Mode::Async => None,
    };

    let mut table = Table::new(vec![
        "mode", "budget", "k1", "k2", "parallel_dim_f", "parallel_dim_g", "speedup",
        "eq_step_level_holds", "eq_token_level_holds", "preconditions_met", "predicted_regime",
    ]);
    let mut row = vec![
        Cell::Str(format!("{mode:?}").to_lowercase()),
        Cell::U64(u64::from(budget)),
        Cell::U64(u64::from(allocation.k1)),
        Cell::U64(u64::from(allocation.k2)),
        Cell::U64(u64::from(allocation.parallel_dim_f)),
        Cell::U64(u64::from(allocation.parallel_dim_g)),
        Cell::F64(allocation.speedup),
    ];
    row.extend(theorem_cells(theorem.as_ref()));
    table.push(row);
    Ok(table)
}

fn cmd_simulate(args: &SimulateArgs, file: &FileConfig, seed: u64) -> Result<Table, CliError> {
    let params = spec_params(&args.model, file)?;
    let k1_lo = args.k1_min.or(file.k1_min).unwrap_or(1);
    let k1_hi = args.k1_max.or(file.k1_max).unwrap_or(8);
    let n = args.n.or(file.n).unwrap_or(100_000);
    if n == 0 {
        return Err(CliError::Validation("n must be >= 1".to_string()));
    }
    let mode = parse_mode(args.mode.as_ref(), file.mode.as_ref())?;

    let mut table = Table::new(vec![
        "alpha1", "c1", "k1", "mode", "n", "seed", "analytic", "mc_mean", "mc_stderr", "z",
    ]);
    for k1 in k1_lo..=k1_hi {
        let (analytic, est) = match mode {
            Mode::Sync => (
                step_speedup_sync(params.alpha1, params.c1, k1)?,
                mc_sync_speedup(params.alpha1, params.c1, k1, n, RngSeed(seed))?,
            ),
            Mode::Async => (
                step_speedup_async(params.alpha1, params.c1, k1)?,
                mc_async_speedup(params.alpha1, params.c1, k1, n, RngSeed(seed))?,
            ),
        };
        let z = if est.stderr > 0.0 {
            (est.mean - analytic) / est.stderr
        } else {
            0.0
        };
        table.push(vec![
            Cell::F64(params.alpha1),
            Cell::F64(params.c1),
            Cell::U64(u64::from(k1)),
            Cell::Str(format!("{mode:?}").to_lowercase()),
            Cell::U64(n),
            Cell::U64(seed),
            Cell::F64(analytic),
            Cell::F64(est.mean),
            Cell::F64(est.stderr),
            Cell::F64(z),
        ]);
    }
    Ok(table)
}

fn cmd_pipeline(
    args: &PipelineArgs,
    file: &FileConfig,
    seed: u64,
    format: OutputFormat,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let corpus_path = args
        .corpus
        .as_ref()
        .or(file.corpus.as_ref())
        .ok_or_else(|| CliError::Validation("corpus path is required".to_string()))?;
    let text = fs::read_to_string(corpus_path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", corpus_path.display())))?;
    let steps = split_steps(&text);

    let mode = parse_mode(args.mode.as_ref(), file.mode.as_ref())?;
    let gamma = args.gamma.or(file.gamma).unwrap_or(4);
    let width = args.width.or(file.width).unwrap_or(1);
    let corruption = args.corruption.or(file.corruption).unwrap_or(0.3);
    let draft_cost = args.draft_cost.or(file.draft_cost).unwrap_or(0.2);
    let verifier = parse_verifier(args.verifier.as_ref().or(file.verifier.as_ref()))?;

    let mut config = PipelineConfig::new(gamma, mode)
        .with_width(width)
        .with_seed(seed);
    if let Some(max_steps) = args.max_steps.or(file.max_steps) {
        config = config.with_max_steps(max_steps);
    }
    if let Some(k2) = args.token_sd {
        let params = spec_params(&args.model, file)?;
        config = config.with_token_sd(TokenSdConfig::new(k2, params.alpha2, params.c2));
    }
    config.validate()?;

    let (target, draft) = make_mock_backends(steps, corruption, draft_cost, seed)?;
    log::info!("running {mode:?} pipeline, gamma={gamma} width={width} verifier={verifier:?}");
    let report = match mode {
        Mode::Sync => run_sync_pipeline(&config, &draft, &target, &verifier, &Trace::new())?,
        Mode::Async => run_async_pipeline(&config, &draft, &target, &verifier, &Trace::new())?,
    };

    let baseline = if args.compare_baseline {
        Some(run_autoregressive_baseline(&target, &Trace::new(), config.max_steps)?)
    } else {
        None
    };

    match format {
        OutputFormat::Json => {
            let value = serde_json::json!({
                "report": report,
                "baseline": baseline,
                "speedup_vs_baseline": baseline
                    .as_ref()
                    .map(|b| b.total_wall_time / report.total_wall_time),
            });
            let text = serde_json::to_string_pretty(&value).map_err(std::io::Error::from)?;
            match out {
                None => println!("{text}"),
                Some(path) => fs::write(path, text + "\n")?,
            }
        }
        OutputFormat::Csv => {
            let mut table = Table::new(vec![
                "mode", "gamma", "width", "cycles", "total_wall_time", "total_compute_units",
                "accept_rate", "measured_speedup", "baseline_wall_time", "speedup_vs_baseline",
            ]);
            let (b_wall, b_speedup) = match &baseline {
                Some(b) => (
                    Cell::F64(b.total_wall_time),
                    Cell::F64(b.total_wall_time / report.total_wall_time),
                ),
                None => (Cell::Null, Cell::Null),
            };
            table.push(vec![
                Cell::Str(format!("{mode:?}").to_lowercase()),
                Cell::U64(u64::from(gamma)),
                Cell::U64(u64::from(width)),
                Cell::U64(report.cycles.len() as u64),
                Cell::F64(report.total_wall_time),
                Cell::F64(report.total_compute_units),
                Cell::F64(report.accept_rate),
                Cell::F64(report.measured_speedup),
                b_wall,
                b_speedup,
            ]);
            emit(&table, format, out)?;
        }
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, file: &FileConfig) -> Result<Table, CliError> {
    let params = spec_params(&args.model, file)?;
    let gamma_max = args.gamma_max.or(file.gamma_max).unwrap_or(16);
    if gamma_max < 1 {
        return Err(CliError::Validation("gamma_max must be >= 1".to_string()));
    }
    let mode = parse_mode(args.mode.as_ref(), file.mode.as_ref())?;
    let k2_fixed = match args.k2.or(file.k2) {
        Some(k2) => k2,
        None => token_optimum_gamma(params.alpha2, params.c2, DEFAULT_GAMMA_MAX)?,
    };

    let mut table = Table::new(vec!["method", "gamma", "k1", "k2", "speedup"]);
    table.comments.push(
        "method: lr = step-level speculation alone, sd = token-level alone, \
         lr_sd = combined; gamma indexes the swept depth, k1/k2 are the \
         depths actually used; speedup is the analytic model value"
            .to_string(),
    );
    let step_speedup = |k1: u32| match mode {
        Mode::Sync => step_speedup_sync(params.alpha1, params.c1, k1),
        Mode::Async => step_speedup_async(params.alpha1, params.c1, k1),
    };
    for method in ["lr", "sd", "lr_sd"] {
        for gamma in 1..=gamma_max {
            let (k1, k2, speedup) = match method {
                "lr" => (gamma, 1, step_speedup(gamma)?),
                "sd" => (
                    1,
                    gamma,
                    token_speedup_g(params.alpha2, params.c2, gamma, GConvention::Appendix)?,
                ),
                _ => (
                    gamma,
                    k2_fixed,
                    combined_speedup_h(&params, gamma, k2_fixed, mode)?,
                ),
            };
            table.push(vec![
                Cell::Str(method.to_string()),
                Cell::U64(u64::from(gamma)),
                Cell::U64(u64::from(k1)),
                Cell::U64(u64::from(k2)),
                Cell::F64(speedup),
            ]);
        }
    }
    Ok(table)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = load_config(cli.config.as_ref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let format = parse_format(cli.format, file.format.as_ref())?;
    let out = cli.out.as_ref().or(file.out.as_ref());

    match &cli.command {
        Command::Analyze(args) => emit(&cmd_analyze(args, &file)?, format, out),
        Command::Optimize(args) => emit(&cmd_optimize(args, &file)?, format, out),
        Command::Simulate(args) => emit(&cmd_simulate(args, &file, seed)?, format, out),
        Command::Pipeline(args) => cmd_pipeline(args, &file, seed, format, out),
        Command::Sweep(args) => emit(&cmd_sweep(args, &file)?, format, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .parse_filters(&std::env::var("LOOKAHEAD_LOG").unwrap_or_else(|_| "warn".to_string()))
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Validation(_) => ExitCode::from(EXIT_VALIDATION),
                CliError::Runtime(_) => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}
