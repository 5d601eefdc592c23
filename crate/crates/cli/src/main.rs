//! `dpdlab` command-line driver.
//!
//! Exit codes: 0 on success, 2 when an LP solve fails during a run, 3 on a
//! configuration error.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dpdlab::baseline::{DualConfig, DualError, DualSubgradient};
use dpdlab::bench::{gen_basic, gen_pev, Experiment};
use dpdlab::blocksub::{lift, BlockError, BlockMethod, PairedRun};
use dpdlab::dpd::{AllocationState, Dpd, DpdConfig, DpdError, InitPreset, StepSchedule};
use dpdlab::lpsolve::LpSolver;
use dpdlab::model::ModelError;
use dpdlab::trace::{CsvTrace, RoundTrace, RunSummary, Stride, TraceSink};

const SEED_ENV: &str = "DPDLAB_SEED";
/// Auto-M never goes below this.
const AUTO_M_FLOOR: f64 = 1.0;

#[derive(Parser)]
#[command(name = "dpdlab", version, about = "Distributed primal decomposition simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an algorithm and write trace.csv and summary.json.
    Run(RunArgs),
    /// Print the penalty threshold of an instance and the auto-M choice.
    Mbound(MboundArgs),
    /// Write a generated instance bundle as JSON.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Generator {
    Basic,
    Pev,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    Dpd,
    Block,
    Dual,
    Paired,
}

#[derive(Args)]
struct Source {
    /// Generate the instance.
    #[arg(long = "gen", value_enum, conflicts_with = "instance", required_unless_present = "instance")]
    generator: Option<Generator>,
    /// Load an instance bundle written by `dpdlab gen`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Generator seed; DPDLAB_SEED takes precedence.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of vehicles for the PEV generator.
    #[arg(long = "N", default_value_t = 50)]
    n: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value = "dpd")]
    alg: Algorithm,
    /// const:a, pow:K,p or harm:K; defaults to the instance's schedule.
    #[arg(long)]
    sched: Option<StepSchedule>,
    /// Penalty, or `auto` for threshold × margin.
    #[arg(long = "M", allow_hyphen_values = true)]
    m: Option<String>,
    #[arg(long, default_value_t = 3.0)]
    margin: f64,
    /// zero or asym; defaults to the instance's preset.
    #[arg(long)]
    init: Option<InitPreset>,
    /// Number of rounds.
    #[arg(long = "T", default_value_t = 1000)]
    t_max: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write every round below this index, then every `--stride-every`.
    #[arg(long, default_value_t = Stride::default().dense_until)]
    stride_dense: u64,
    #[arg(long, default_value_t = Stride::default().every)]
    stride_every: u64,
    /// In paired runs, the primal decomposition step is the block step
    /// times this factor.
    #[arg(long, default_value_t = 2.0)]
    dpd_step_factor: f64,
}

#[derive(Args)]
struct MboundArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 3.0)]
    margin: f64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "gen", value_enum)]
    generator: Generator,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "N", default_value_t = 50)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Solver(anyhow::Error),
    Config(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Solver(e) | Failure::Config(e) => e,
        }
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

impl From<DpdError> for Failure {
    fn from(e: DpdError) -> Self {
        match e {
            DpdError::Local { .. } => Failure::Solver(e.into()),
            e => Failure::Config(e.into()),
        }
    }
}

impl From<BlockError> for Failure {
    fn from(e: BlockError) -> Self {
        match e {
            BlockError::Local { .. } => Failure::Solver(e.into()),
            BlockError::Dpd(inner) => inner.into(),
            e => Failure::Config(e.into()),
        }
    }
}

impl From<DualError> for Failure {
    fn from(e: DualError) -> Self {
        match e {
            DualError::Solver { .. } => Failure::Solver(e.into()),
            e => Failure::Config(e.into()),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SolverFailure(_) | ModelError::LocalMinFailed { .. } => Failure::Solver(e.into()),
            e => Failure::Config(e.into()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Mbound(args) => cmd_mbound(&args),
        Command::Gen(args) => cmd_gen(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn seed_override(seed: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config(anyhow!("{SEED_ENV}={v:?} is not a seed"))),
        Err(_) => Ok(seed),
    }
}

fn generate(generator: Generator, seed: u64, n: usize) -> Result<Experiment, Failure> {
    match generator {
        Generator::Basic => Ok(gen_basic(seed)),
        Generator::Pev => gen_pev(seed, n).map_err(config),
    }
}

fn load(source: &Source) -> Result<Experiment, Failure> {
    match (&source.instance, source.generator) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(config)
        }
        (None, Some(g)) => generate(g, seed_override(source.seed)?, source.n),
        (None, None) => Err(config(anyhow!("give --gen or --instance"))),
    }
}

/// `max(threshold × margin, 1)`
fn auto_m(threshold: f64, margin: f64) -> f64 {
    (threshold * margin).max(AUTO_M_FLOOR)
}

fn check_margin(margin: f64) -> Result<(), Failure> {
    if margin > 0.0 && margin.is_finite() {
        Ok(())
    } else {
        Err(config(anyhow!("margin must be positive, got {margin}")))
    }
}

fn cmd_mbound(args: &MboundArgs) -> Result<(), Failure> {
    check_margin(args.margin)?;
    let e = load(&args.source)?;
    let bound = e.problem.m_lower_bound(&e.slater, &LpSolver::default())?;
    println!("threshold {}", bound.threshold);
    println!("gamma {}", bound.gamma);
    println!("M {}", auto_m(bound.threshold, args.margin));
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let e = generate(args.generator, seed_override(args.seed)?, args.n)?;
    let text = serde_json::to_string_pretty(&e).map_err(config)?;
    fs::write(&args.out, text)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(config)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    check_margin(args.margin)?;
    if args.workers == 0 {
        return Err(config(anyhow!("--workers must be at least 1")));
    }
    let e = load(&args.source)?;
    let solver = LpSolver::default();
    let schedule = args.sched.unwrap_or(e.schedule);
    let (penalty, threshold) = match args.m.as_deref() {
        None => (e.penalty, None),
        Some("auto") => {
            let b = e.problem.m_lower_bound(&e.slater, &solver)?;
            (auto_m(b.threshold, args.margin), Some(b.threshold))
        }
        Some(v) => (v.parse::<f64>().map_err(|_| config(anyhow!("--M {v:?} is neither a number nor auto")))?, None),
    };
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(config(anyhow!("M must be positive, got {penalty}")));
    }
    let init = args.init.unwrap_or(e.init);
    let f_star = e.problem.centralized_reference(&solver)?.f_star;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(config)?;
    let csv_path = args.out.join("trace.csv");
    let file = fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))
        .map_err(config)?;
    let stride = Stride {
        dense_until: args.stride_dense,
        every: args.stride_every.max(1),
    };
    let mut csv = CsvTrace::new(BufWriter::new(file), f_star, stride);
    match args.alg {
        Algorithm::Paired => csv = csv.with_pz_gap(),
        Algorithm::Dual => csv = csv.with_label("dual"),
        _ => {}
    }
    let mut sinks = Tee {
        csv,
        summary: RunSummary::new(f_star),
    };

    let graph = &e.process.graph;
    let activation = &e.process.activation;
    let dpd_config = DpdConfig {
        penalty,
        schedule,
        solver,
        workers: args.workers,
    };
    let y0 = AllocationState::preset(init, &e.problem);
    match args.alg {
        Algorithm::Dpd => Dpd::new(&e.problem, graph, activation, dpd_config, y0)?.run(args.t_max, &mut sinks)?,
        Algorithm::Block => {
            let z0 = lift(&y0.y, graph)?;
            BlockMethod::new(&e.problem, graph, activation, dpd_config, z0)?.run(args.t_max, &mut sinks)?
        }
        Algorithm::Paired => {
            let z0 = lift(&y0.y, graph)?;
            PairedRun::new(&e.problem, graph, activation, dpd_config, z0, args.dpd_step_factor)?
                .run(args.t_max, &mut sinks)?
        }
        Algorithm::Dual => {
            let cfg = DualConfig {
                schedule,
                solver,
                workers: args.workers,
            };
            DualSubgradient::new(&e.problem, graph, activation, cfg)?.run(args.t_max, &mut sinks)?
        }
    }

    let summary = json!({
        "f_star": f_star,
        "rounds": sinks.summary.rounds,
        "final_cost": sinks.summary.final_cost,
        "final_cost_err": sinks.summary.final_cost_err,
        "final_max_coupling": sinks.summary.final_max_coupling,
        "f_best": sinks.summary.f_best,
        "first_feasible_round": sinks.summary.first_feasible_round,
        "first_rho_round": sinks.summary.first_rho_round,
        "max_sum_y": sinks.summary.max_sum_y,
        "max_mu_l1": sinks.summary.max_mu_l1,
        "max_pz_gap": sinks.summary.max_pz_gap,
        "config": {
            "generator": e.generator,
            "seed": e.seed,
            "instance": args.source.instance.as_deref().map(Path::to_string_lossy),
            "n_agents": e.problem.n_agents(),
            "alg": args.alg.to_possible_value().map(|v| v.get_name().to_string()),
            "schedule": schedule.to_string(),
            "M": penalty,
            "M_threshold": threshold,
            "margin": args.margin,
            "init": init,
            "T": args.t_max,
            "workers": args.workers,
            "stride": stride,
            "dpd_step_factor": (args.alg == Algorithm::Paired).then_some(args.dpd_step_factor),
            "parameters": e.parameters,
        },
    });
    let path = args.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(config)?;
    fs::write(&path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(config)
}

/// Sends every row to the CSV and the summary.
struct Tee<W: std::io::Write> {
    csv: CsvTrace<W>,
    summary: RunSummary,
}

impl<W: std::io::Write> TraceSink for Tee<W> {
    fn record(&mut self, row: &RoundTrace) -> std::io::Result<()> {
        self.summary.observe(row);
        self.csv.record(row)
    }

    fn finish(&mut self) -> std::io::Result<()> {
        self.csv.finish()
    }
}
