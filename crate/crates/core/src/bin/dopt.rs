use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dopt::harness::{
    cmd_consensus, cmd_optimize, cmd_scaling, selftest, ConsensusAlgorithm, ConsensusConfig,
    ExperimentConfig, GraphConfig, OptAlgorithm, OptimizeConfig, OutputPaths, ScalingConfig,
    ScalingVerdict, WORKERS_ENV,
};
use dopt::objectives::{LocalKind, ObjectiveConfig, ObjectiveSpec};
use dopt::Error;

#[derive(Parser)]
#[command(name = "dopt", version, about = "Decentralized averaging and optimization experiments")]
struct Cli {
    /// Worker threads for sweeps (rayon default when unset).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Linear averaging x^{k+1} = A^k x^k until the deviation shrinks by eps.
    Consensus(ConsensusArgs),
    /// Push-sum averaging over directed graphs.
    Pushsum(ConsensusArgs),
    /// Run one optimization algorithm and check its bounds.
    Optimize(OptimizeArgs),
    /// Median T(n, eps) over a size grid and its log-log slope.
    Scaling(ScalingArgs),
    /// Invariant suite with a pass/fail table.
    Selftest,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// static, regenerate, split, token-ring or token-ring-undirected.
    #[arg(long, default_value = "static")]
    sequence: String,
    #[arg(long, default_value_t = 1)]
    block: usize,
}

impl GraphArgs {
    fn config(&self, default_family: &str) -> GraphConfig {
        GraphConfig {
            family: self.family.clone().unwrap_or_else(|| default_family.into()),
            n: self.n,
            sequence: self.sequence.clone(),
            block: self.block,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "trace.csv")]
    trace: PathBuf,
    #[arg(long, default_value = "summary.json")]
    summary: PathBuf,
    /// Print the summary only.
    #[arg(long)]
    no_files: bool,
}

impl OutputArgs {
    fn paths(&self) -> OutputPaths {
        if self.no_files {
            OutputPaths::default()
        } else {
            OutputPaths {
                trace: Some(self.trace.clone()),
                summary: Some(self.summary.clone()),
            }
        }
    }
}

#[derive(Args)]
struct ConsensusArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// plain, accelerated or push-sum.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long, default_value = "lazy-metropolis")]
    weights: String,
    #[arg(long)]
    u_bound: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[command(flatten)]
    output: OutputArgs,
    /// JSON config; replaces all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// centralized, decentralized, projected, accelerated-subgradient, extra,
    /// diging or subgradient-push.
    #[arg(long, default_value = "decentralized")]
    algorithm: String,
    #[arg(long, default_value = "lazy-metropolis")]
    weights: String,
    /// Kind of random local objective: quadratic, absolute, huber or logistic.
    #[arg(long, default_value = "absolute")]
    objective: String,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value = "path")]
    family: String,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long)]
    accelerated: bool,
    #[arg(long, default_value_t = 1.0)]
    u_factor: f64,
    #[arg(long, default_value = "lazy-metropolis")]
    weights: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the plain-text table here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the full report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_json<T: serde::de::DeserializeOwned>(flag: &str, s: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| Error::Config {
        path: flag.into(),
        message: format!("unknown value {s:?}"),
    })
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
}

fn wrong_command(path: &Path, want: &str) -> Error {
    Error::Config {
        path: "command".into(),
        message: format!("{} does not hold a {want} config", path.display()),
    }
}

fn consensus(args: ConsensusArgs, push: bool) -> Result<ExitCode, Error> {
    let cfg = match &args.config {
        Some(p) => match load(p)? {
            ExperimentConfig::Consensus(c) => c,
            ExperimentConfig::Pushsum(c) => ConsensusConfig {
                algorithm: ConsensusAlgorithm::PushSum,
                ..c
            },
            _ => return Err(wrong_command(p, "consensus")),
        },
        None => {
            let algorithm = match &args.algorithm {
                Some(a) => parse_json("--algorithm", a)?,
                None if push => ConsensusAlgorithm::PushSum,
                None => ConsensusAlgorithm::Plain,
            };
            ConsensusConfig {
                graph: args.graph.config(if push { "directed-cycle" } else { "path" }),
                algorithm,
                weights: args.weights,
                u_bound: args.u_bound,
                eps: args.eps,
                cap: args.cap,
                seed: args.seed,
                x0: None,
                dim: args.dim,
                output: args.output.paths(),
            }
        }
    };
    let out = cmd_consensus(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn optimize(args: OptimizeArgs) -> Result<ExitCode, Error> {
    let cfg = match &args.config {
        Some(p) => match load(p)? {
            ExperimentConfig::Optimize(c) => c,
            _ => return Err(wrong_command(p, "optimize")),
        },
        None => {
            let algorithm: OptAlgorithm = parse_json("--algorithm", &args.algorithm)?;
            let local: LocalKind = parse_json("--objective", &args.objective)?;
            let objective = ObjectiveConfig {
                objective: ObjectiveSpec::Random {
                    local,
                    n: args.graph.n,
                    dim: args.dim,
                    seed: args.seed,
                    scale: 5.0,
                },
                constraints: Vec::new(),
            };
            let default_family = if algorithm == OptAlgorithm::SubgradientPush { "directed-cycle" } else { "path" };
            OptimizeConfig {
                graph: args.graph.config(default_family),
                algorithm,
                weights: args.weights,
                objective,
                schedule: None,
                alpha: args.alpha,
                u_bound: None,
                subgradient_point: Default::default(),
                steps: args.steps,
                tol: args.tol,
                record_every: args.record_every,
                seed: args.seed,
                x0: None,
                verdict_tol: 1e-2,
                output: args.output.paths(),
            }
        }
    };
    let out = cmd_optimize(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn scaling(args: ScalingArgs) -> Result<ExitCode, Error> {
    let cfg = match &args.config {
        Some(p) => match load(p)? {
            ExperimentConfig::Scaling(c) => c,
            _ => return Err(wrong_command(p, "scaling")),
        },
        None => ScalingConfig {
            family: args.family,
            n_list: args.n_list,
            eps: args.eps,
            reps: args.reps,
            accelerated: args.accelerated,
            u_factor: args.u_factor,
            weights: args.weights,
            seed: args.seed,
            report: args.report,
        },
    };
    let report = cmd_scaling(&cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = &args.json {
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(if report.verdict == ScalingVerdict::Incomplete {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        std::env::set_var(WORKERS_ENV, w.to_string());
    }
    let result = match cli.command {
        Command::Consensus(a) => consensus(a, false),
        Command::Pushsum(a) => consensus(a, true),
        Command::Optimize(a) => optimize(a),
        Command::Scaling(a) => scaling(a),
        Command::Selftest => {
            let report = selftest();
            print!("{}", report.to_table());
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    };
    match result {
        Ok(code) => code,
        Err(e @ Error::Config { .. }) => {
            eprintln!("dopt: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("dopt: {e}");
            ExitCode::FAILURE
        }
    }
}
