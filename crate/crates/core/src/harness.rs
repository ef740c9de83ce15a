//! Experiment configs, the batch commands behind the CLI, scaling-law fits
//! and the self-test.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    default_accelerated_cap, default_cap, run_accelerated, run_consensus, run_push_sum, RunTrace,
    StopReason,
};
use crate::error::{Error, Result};
use crate::graphs::{build_graph, make_sequence, stream_rng, Family, FamilySpec, GraphSequence, GraphSnapshot};
use crate::mixing::{spectral, MixingMatrix, MixingRule, Stochasticity, WeightRule};
use crate::objectives::{ObjectiveConfig, ObjectiveSet, Point};
use crate::optimize::{
    accelerated_distributed_subgradient, centralized_subgradient, decentralized_subgradient, diging,
    extra, projected_decentralized_subgradient, subgradient_push, BoundCheck, Diagnostics, Horizon,
    OptRow, OptTrace, StepSchedule, SubgradientPoint,
};
use crate::stats::{linear_fit, median, LinearFit};
use crate::NodeStates;

/// Environment variable holding the worker count for sweeps.
pub const WORKERS_ENV: &str = "DOPT_WORKERS";

/// Periodic sequences up to this period get a spectral `lambda` in summaries.
const SPECTRAL_MAX_PERIOD: usize = 64;
const INIT_STREAM: u64 = 0x1417;

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn one() -> usize {
    1
}

fn default_sequence() -> String {
    "static".into()
}

fn default_weights() -> String {
    "lazy-metropolis".into()
}

fn default_eps() -> f64 {
    1e-3
}

fn default_reps() -> usize {
    5
}

fn default_u_factor() -> f64 {
    1.0
}

fn default_verdict_tol() -> f64 {
    1e-2
}

/// Graph part of a config: a family (`path`, `erdos-renyi:1`, ...), a size
/// and how snapshots vary over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub family: String,
    pub n: usize,
    /// `static`, `regenerate`, `split`, `token-ring` or `token-ring-undirected`.
    #[serde(default = "default_sequence")]
    pub sequence: String,
    #[serde(default = "one")]
    pub block: usize,
}

impl GraphConfig {
    pub fn family(&self) -> Result<Family> {
        self.family
            .parse()
            .map_err(|e: Error| config_error("graph.family", e.to_string()))
    }

    pub fn build(&self, seed: u64) -> Result<GraphSequence> {
        if self.n == 0 {
            return Err(config_error("graph.n", "must be >= 1"));
        }
        if self.block == 0 {
            return Err(config_error("graph.block", "must be >= 1"));
        }
        let spec = FamilySpec::new(self.family()?, self.n);
        make_sequence(&self.sequence, spec, self.block, seed).map_err(|e| match e {
            Error::InvalidArgument(m) if m.contains("sequence mode") => config_error("graph.sequence", m),
            other => other,
        })
    }
}

/// Where to write outputs; unset paths are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

impl OutputPaths {
    fn write(&self, csv: &str, summary: &impl Serialize) -> Result<()> {
        if let Some(p) = &self.trace {
            std::fs::write(p, csv)?;
        }
        if let Some(p) = &self.summary {
            std::fs::write(p, serde_json::to_string_pretty(summary)? + "\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusAlgorithm {
    #[default]
    Plain,
    Accelerated,
    PushSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub graph: GraphConfig,
    #[serde(default)]
    pub algorithm: ConsensusAlgorithm,
    #[serde(default = "default_weights")]
    pub weights: String,
    /// `U >= n` for the accelerated iteration; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bound: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Initial values; uniform on `[-1, 1]` from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Point>>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptAlgorithm {
    Centralized,
    Decentralized,
    Projected,
    AcceleratedSubgradient,
    Extra,
    Diging,
    SubgradientPush,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub graph: GraphConfig,
    pub algorithm: OptAlgorithm,
    #[serde(default = "default_weights")]
    pub weights: String,
    pub objective: ObjectiveConfig,
    /// Step schedule of the subgradient methods; `1/sqrt(steps)` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    /// Constant step of EXTRA, DIGing and the accelerated subgradient method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bound: Option<usize>,
    #[serde(default)]
    pub subgradient_point: SubgradientPoint,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// Initial iterates; zeros (projected onto `X_i` for the projected
    /// method) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Point>>,
    /// Distance to the minimizer set accepted by the optimum verdict.
    #[serde(default = "default_verdict_tol")]
    pub verdict_tol: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub family: String,
    pub n_list: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub accelerated: bool,
    /// `U = ceil(u_factor * n)` for accelerated sweeps.
    #[serde(default = "default_u_factor")]
    pub u_factor: f64,
    #[serde(default = "default_weights")]
    pub weights: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Consensus(ConsensusConfig),
    Pushsum(ConsensusConfig),
    Optimize(OptimizeConfig),
    Scaling(ScalingConfig),
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_error(".", e.to_string()))?;
        let command = value
            .get("command")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| config_error("command", "missing or not a string"))?
            .to_string();
        Ok(match command.as_str() {
            "consensus" => ExperimentConfig::Consensus(from_value(value)?),
            "pushsum" => ExperimentConfig::Pushsum(from_value(value)?),
            "optimize" => ExperimentConfig::Optimize(from_value(value)?),
            "scaling" => ExperimentConfig::Scaling(from_value(value)?),
            other => return Err(config_error("command", format!("unknown command {other:?}"))),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn from_value<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        config_error(&path, e.into_inner().to_string())
    })
}

fn parse_rule(s: &str) -> Result<WeightRule> {
    s.parse()
        .map_err(|e: Error| config_error("weights", e.to_string()))
}

fn initial_states(x0: &Option<Vec<Point>>, n: usize, dim: usize, seed: u64, path: &str) -> Result<NodeStates> {
    match x0 {
        Some(points) => {
            if points.len() != n {
                return Err(config_error(path, format!("expected {n} initial values, got {}", points.len())));
            }
            let rows: Vec<Vec<f64>> = points.iter().map(Point::to_vec).collect();
            NodeStates::from_rows(&rows).map_err(|e| config_error(path, e.to_string()))
        }
        None => Ok(uniform_states(n, dim, seed)),
    }
}

/// `n x dim` states uniform on `[-1, 1]`.
pub fn uniform_states(n: usize, dim: usize, seed: u64) -> NodeStates {
    let mut rng = stream_rng(seed, INIT_STREAM);
    let mut x = NodeStates::zeros(n, dim);
    for v in x.as_mut_slice() {
        *v = rng.random_range(-1.0..=1.0);
    }
    x
}

/// `lambda` over the distinct matrices of a short periodic sequence.
fn sequence_lambda(seq: &GraphSequence, rule: &dyn MixingRule) -> Option<f64> {
    if rule.class() != Stochasticity::Doubly {
        return None;
    }
    let period = seq.period().filter(|&p| p <= SPECTRAL_MAX_PERIOD)?;
    let mats = (0..period)
        .map(|k| rule.build(&seq.snapshot(k)))
        .collect::<Result<Vec<MixingMatrix>>>()
        .ok()?;
    let refs: Vec<&MixingMatrix> = mats.iter().collect();
    spectral(&refs).ok().map(|r| r.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    #[serde(rename = "T_eps")]
    pub t_eps: Option<usize>,
    pub lambda: Option<f64>,
    pub stop_reason: StopReason,
    pub wall_time: f64,
    pub algorithm: ConsensusAlgorithm,
    pub weights: String,
    pub n: usize,
    pub steps: usize,
    pub initial_mean: Vec<f64>,
    pub final_mean: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub trace: RunTrace,
    pub summary: ConsensusSummary,
}

pub fn cmd_consensus(cfg: &ConsensusConfig) -> Result<ConsensusOutcome> {
    if !(cfg.eps > 0.0) {
        return Err(config_error("eps", "must be positive"));
    }
    if cfg.dim == 0 {
        return Err(config_error("dim", "must be >= 1"));
    }
    let seq = cfg.graph.build(cfg.seed)?;
    let n = seq.n();
    let x0 = initial_states(&cfg.x0, n, cfg.dim, cfg.seed, "x0")?;
    let mut notes = Vec::new();
    let start = Instant::now();
    let (trace, weights, lambda) = match cfg.algorithm {
        ConsensusAlgorithm::Plain => {
            let rule = parse_rule(&cfg.weights)?;
            if rule.class() == Stochasticity::Row {
                notes.push("row-stochastic weights: the limit is a consensus value, not necessarily the initial average".into());
            }
            let cap = cfg.cap.unwrap_or_else(|| default_cap(n, cfg.eps));
            let t = run_consensus(&seq, &rule, &x0, cfg.eps, cap)?;
            (t, rule.to_string(), sequence_lambda(&seq, &rule))
        }
        ConsensusAlgorithm::Accelerated => {
            if !seq.is_static() {
                return Err(config_error("graph.sequence", "the accelerated iteration needs a static graph"));
            }
            let u = cfg.u_bound.unwrap_or(n);
            let cap = cfg.cap.unwrap_or_else(|| default_accelerated_cap(u, cfg.eps));
            let t = run_accelerated(&seq.snapshot(0), u, &x0, cfg.eps, cap)?;
            (t, "accelerated-metropolis".into(), None)
        }
        ConsensusAlgorithm::PushSum => {
            let cap = cfg.cap.unwrap_or_else(|| default_cap(n, cfg.eps));
            (run_push_sum(&seq, &x0, cfg.eps, cap)?, "push-sum".into(), None)
        }
    };
    let summary = ConsensusSummary {
        t_eps: trace.t_eps,
        lambda,
        stop_reason: trace.stop_reason,
        wall_time: start.elapsed().as_secs_f64(),
        algorithm: cfg.algorithm,
        weights,
        n,
        steps: trace.rows.last().map_or(0, |r| r.k),
        initial_mean: x0.mean(),
        final_mean: trace.final_state.mean(),
        notes,
    };
    cfg.output.write(&trace.to_csv(), &summary)?;
    Ok(ConsensusOutcome { trace, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub algorithm: String,
    pub n: usize,
    pub dim: usize,
    pub steps: usize,
    pub f_star: f64,
    pub x_star: Vec<f64>,
    #[serde(rename = "final")]
    pub last: OptRow,
    pub converged_at: Option<usize>,
    pub bound_checks: Vec<BoundCheck>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
    pub verdicts: Vec<Verdict>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub trace: OptTrace,
    pub summary: OptimizeSummary,
}

pub fn cmd_optimize(cfg: &OptimizeConfig) -> Result<OptimizeOutcome> {
    let seq = cfg.graph.build(cfg.seed)?;
    let set = cfg
        .objective
        .build()
        .map_err(|e| config_error("objective", e.to_string()))?;
    let n = seq.n();
    if set.n() != n {
        return Err(config_error(
            "objective",
            format!("objective has {} nodes but the graph has {n}", set.n()),
        ));
    }
    let mut x0 = match &cfg.x0 {
        Some(_) => initial_states(&cfg.x0, n, set.dim(), cfg.seed, "x0")?,
        None => NodeStates::zeros(n, set.dim()),
    };
    if cfg.x0.is_none() && cfg.algorithm == OptAlgorithm::Projected {
        for i in 0..n {
            let p = set.constraint(i).project(x0.node(i));
            x0.node_mut(i).copy_from_slice(&p);
        }
    }
    let horizon = Horizon {
        steps: cfg.steps,
        tol: cfg.tol,
        record_every: cfg.record_every.max(1),
    };
    let schedule = cfg
        .schedule
        .unwrap_or(StepSchedule::OneOverSqrtT { horizon: cfg.steps.max(1) });
    let alpha = |what: &str| cfg.alpha.ok_or_else(|| config_error("alpha", format!("{what} needs a step size")));
    let static_graph = || -> Result<GraphSnapshot> {
        if seq.is_static() {
            Ok(seq.snapshot(0).into_owned())
        } else {
            Err(config_error("graph.sequence", "this algorithm needs a static graph"))
        }
    };
    let start = Instant::now();
    let trace = match cfg.algorithm {
        OptAlgorithm::Centralized => centralized_subgradient(&set, &x0.mean(), schedule, horizon)?,
        OptAlgorithm::Decentralized => {
            decentralized_subgradient(&seq, &parse_rule(&cfg.weights)?, &set, &x0, schedule, horizon)?
        }
        OptAlgorithm::Projected => projected_decentralized_subgradient(
            &seq,
            &parse_rule(&cfg.weights)?,
            &set,
            &x0,
            schedule,
            horizon,
            cfg.subgradient_point,
        )?,
        OptAlgorithm::AcceleratedSubgradient => accelerated_distributed_subgradient(
            &static_graph()?,
            cfg.u_bound.unwrap_or(n),
            &set,
            &x0,
            alpha("the accelerated subgradient method")?,
            horizon,
        )?,
        OptAlgorithm::Extra => extra(&static_graph()?, parse_rule(&cfg.weights)?, &set, &x0, cfg.alpha, horizon)?,
        OptAlgorithm::Diging => diging(&seq, &parse_rule(&cfg.weights)?, &set, &x0, alpha("DIGing")?, horizon)?,
        OptAlgorithm::SubgradientPush => subgradient_push(&seq, &set, &x0, schedule, horizon)?,
    };
    let wall_time = start.elapsed().as_secs_f64();
    let verdicts = verdicts(cfg, &set, &trace);
    let summary = OptimizeSummary {
        algorithm: trace.algorithm.clone(),
        n,
        dim: set.dim(),
        steps: cfg.steps,
        f_star: set.f_star(),
        x_star: set.x_star().to_vec(),
        last: *trace.last(),
        converged_at: trace.converged_at,
        bound_checks: trace.bound_checks.clone(),
        warnings: trace.warnings.clone(),
        diagnostics: trace.diagnostics.clone(),
        verdicts,
        wall_time,
    };
    cfg.output.write(&trace.to_csv(), &summary)?;
    Ok(OptimizeOutcome { trace, summary })
}

/// R² a log-error fit must reach for the geometric-rate verdict.
pub const GEOMETRIC_R2: f64 = 0.99;

fn verdicts(cfg: &OptimizeConfig, set: &ObjectiveSet, trace: &OptTrace) -> Vec<Verdict> {
    let mut out = Vec::new();
    for b in &trace.bound_checks {
        out.push(Verdict {
            name: format!("bound:{}", b.name),
            passed: b.satisfied,
            detail: format!(
                "{} violations in {} steps; last measured {:e} vs bound {:e}",
                b.violations, b.checked_steps, b.measured, b.theoretical_rhs
            ),
        });
    }
    if let Some(fit) = trace.diagnostics.rate_fit {
        out.push(Verdict {
            name: "geometric-rate".into(),
            passed: fit.r_squared >= GEOMETRIC_R2 && fit.slope < 0.0,
            detail: format!("log-error slope {:.4e}, R^2 {:.6}", fit.slope, fit.r_squared),
        });
    }
    // Per-node averages are what subgradient-push guarantees; the
    // subgradient methods are judged on the network running average and the
    // smooth methods on the last iterate.
    let points: Vec<Vec<f64>> = match cfg.algorithm {
        OptAlgorithm::SubgradientPush => trace
            .node_averages
            .as_ref()
            .map(|z| (0..z.n()).map(|i| z.node(i).to_vec()).collect())
            .unwrap_or_default(),
        OptAlgorithm::Extra | OptAlgorithm::Diging | OptAlgorithm::Projected => (0..trace.final_state.n())
            .map(|i| trace.final_state.node(i).to_vec())
            .collect(),
        _ => vec![trace.running_average.clone()],
    };
    let dist = points
        .iter()
        .map(|p| match set.distance_to_argmin(p.first().copied().unwrap_or(f64::NAN)) {
            Some(d) if p.len() == 1 => d,
            _ => crate::state::dist2(p, set.x_star()),
        })
        .fold(0.0, f64::max);
    out.push(Verdict {
        name: "optimum".into(),
        passed: dist <= cfg.verdict_tol,
        detail: format!("largest distance to the minimizer set {dist:.3e} (tolerance {:e})", cfg.verdict_tol),
    });
    if trace.diagnostics.tracking_max.is_some_and(|t| t > 1e-10) {
        out.push(Verdict {
            name: "gradient-tracking".into(),
            passed: false,
            detail: format!("tracking error {:e}", trace.diagnostics.tracking_max.unwrap_or(f64::NAN)),
        });
    }
    out
}

/// Expected growth of `T(n, eps)` in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExponent {
    pub exponent: f64,
    /// Accepted slope interval.
    pub lo: f64,
    pub hi: f64,
}

/// Reference exponent and accepted slope interval for a family: the bound's
/// power of `n` plus or minus 0.4, and `[-0.2, +0.4]` around it for bounds
/// carrying a `log n` factor.
pub fn reference_exponent(family: &Family, accelerated: bool) -> ReferenceExponent {
    let around = |e: f64| ReferenceExponent {
        exponent: e,
        lo: e - 0.4,
        hi: e + 0.4,
    };
    let log_factor = |e: f64| ReferenceExponent {
        exponent: e,
        lo: e - 0.2,
        hi: e + 0.4,
    };
    if accelerated {
        return ReferenceExponent {
            exponent: 1.0,
            lo: 0.7,
            hi: 1.4,
        };
    }
    match family {
        Family::Path | Family::Star | Family::TwoStar | Family::Cycle | Family::DirectedCycle => around(2.0),
        Family::Grid2d | Family::Geometric { .. } => log_factor(1.0),
        Family::GridK { k } => log_factor(1.0 / *k as f64),
        Family::Complete | Family::Expander | Family::ErdosRenyi { .. } => around(0.0),
        Family::RandomDirected { .. } => around(2.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingVerdict {
    Pass,
    Fail,
    /// A run hit its cap; the report covers the sizes that finished.
    Incomplete,
}

/// Largest ratio of median times across the grid accepted for families whose
/// reference exponent is 0.
pub const FLAT_RATIO: f64 = 3.0;
/// Median time accepted for complete graphs at every size.
pub const COMPLETE_MAX_T: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub family: String,
    pub weights: String,
    pub accelerated: bool,
    pub eps: f64,
    pub reps: usize,
    pub n_grid: Vec<usize>,
    /// `T(n, eps)` for each size and repetition.
    pub times: Vec<Vec<usize>>,
    pub median_t: Vec<f64>,
    pub fit: Option<LinearFit>,
    pub reference: ReferenceExponent,
    pub verdict: ScalingVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScalingReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "family {}  weights {}  accelerated {}  eps {:e}  reps {}",
            self.family, self.weights, self.accelerated, self.eps, self.reps
        );
        let _ = writeln!(s, "{:>8} {:>12} {:>12} {:>12}", "n", "median_T", "min_T", "max_T");
        for (i, n) in self.n_grid.iter().enumerate().take(self.median_t.len()) {
            let ts = &self.times[i];
            let _ = writeln!(
                s,
                "{:>8} {:>12} {:>12} {:>12}",
                n,
                self.median_t[i],
                ts.iter().min().copied().unwrap_or(0),
                ts.iter().max().copied().unwrap_or(0)
            );
        }
        match &self.fit {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "slope {:.3}  intercept {:.3}  R^2 {:.4}",
                    f.slope, f.intercept, f.r_squared
                );
            }
            None => {
                let _ = writeln!(s, "slope n/a");
            }
        }
        let _ = writeln!(
            s,
            "reference exponent {}  accepted [{}, {}]  verdict {:?}",
            self.reference.exponent, self.reference.lo, self.reference.hi, self.verdict
        );
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error: {e}");
        }
        s
    }
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`] when set, rayon's default
/// otherwise.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let k: usize = v
                .parse()
                .map_err(|_| config_error(WORKERS_ENV, format!("not a worker count: {v:?}")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

/// One `T(n, eps)` measurement.
pub fn scaling_cell(cfg: &ScalingConfig, family: &Family, n: usize, rep: usize) -> Result<usize> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let g = build_graph(&FamilySpec::new(*family, n), seed)?;
    let x0 = uniform_states(n, 1, seed.wrapping_mul(0x100_0193).wrapping_add(n as u64));
    let trace = if cfg.accelerated {
        let u = (cfg.u_factor * n as f64).ceil() as usize;
        run_accelerated(&g, u, &x0, cfg.eps, default_accelerated_cap(u, cfg.eps))?
    } else {
        let rule = parse_rule(&cfg.weights)?;
        run_consensus(&GraphSequence::fixed(g), &rule, &x0, cfg.eps, default_cap(n, cfg.eps))?
    };
    trace.t_eps.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "n = {n}, repetition {rep}: no convergence within {} steps",
            trace.rows.last().map_or(0, |r| r.k)
        ))
    })
}

pub fn cmd_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    let family: Family = cfg
        .family
        .parse()
        .map_err(|e: Error| config_error("family", e.to_string()))?;
    if cfg.n_list.len() < 4 {
        return Err(config_error("n_list", "a slope fit needs at least 4 sizes"));
    }
    if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error("n_list", "sizes must be strictly ascending"));
    }
    if cfg.reps == 0 || (family.is_random() && cfg.reps < 5) {
        return Err(config_error("reps", "need >= 1 repetition, >= 5 for random families"));
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(config_error("eps", "must lie in (0, 1)"));
    }
    if cfg.accelerated && cfg.u_factor < 1.0 {
        return Err(config_error("u_factor", "U must be >= n"));
    }
    let cells: Vec<(usize, usize)> = (0..cfg.n_list.len())
        .flat_map(|i| (0..cfg.reps).map(move |r| (i, r)))
        .collect();
    let results: Vec<Result<usize>> = with_workers(|| {
        cells
            .par_iter()
            .map(|&(i, r)| scaling_cell(cfg, &family, cfg.n_list[i], r))
            .collect()
    })?;
    let mut times = Vec::new();
    let mut error = None;
    for i in 0..cfg.n_list.len() {
        let row: Result<Vec<usize>> = results[i * cfg.reps..(i + 1) * cfg.reps].iter().cloned().collect();
        match row {
            Ok(ts) => times.push(ts),
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let median_t: Vec<f64> = times
        .iter()
        .map(|ts| median(&ts.iter().map(|&t| t as f64).collect::<Vec<_>>()))
        .collect();
    let reference = reference_exponent(&family, cfg.accelerated);
    let fit = if median_t.len() >= 4 && median_t.iter().all(|&t| t > 0.0) {
        let xs: Vec<f64> = cfg.n_list[..median_t.len()].iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = median_t.iter().map(|t| t.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let verdict = if error.is_some() {
        ScalingVerdict::Incomplete
    } else {
        let max = median_t.iter().copied().fold(0.0, f64::max);
        let min = median_t.iter().copied().fold(f64::INFINITY, f64::min);
        let ok = match (&family, cfg.accelerated) {
            (Family::Complete, false) => max <= COMPLETE_MAX_T,
            (Family::Expander | Family::ErdosRenyi { .. }, false) => max <= FLAT_RATIO * min,
            _ => fit.is_some_and(|f| f.slope >= reference.lo && f.slope <= reference.hi),
        };
        if ok {
            ScalingVerdict::Pass
        } else {
            ScalingVerdict::Fail
        }
    };
    let report = ScalingReport {
        family: family.to_string(),
        weights: if cfg.accelerated { "accelerated-metropolis".into() } else { cfg.weights.clone() },
        accelerated: cfg.accelerated,
        eps: cfg.eps,
        reps: cfg.reps,
        n_grid: cfg.n_list.clone(),
        times,
        median_t,
        fit,
        reference,
        verdict,
        error,
    };
    if let Some(p) = &cfg.report {
        std::fs::write(p, report.to_table())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<width$}  {}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        s
    }
}

/// Runs the invariant suite with the standard doubly stochastic rules.
pub fn selftest() -> SelftestReport {
    selftest_with(&[&WeightRule::Metropolis, &WeightRule::LazyMetropolis])
}

/// Runs the invariant suite, checking stochasticity of the given rules.
pub fn selftest_with(doubly: &[&dyn MixingRule]) -> SelftestReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, r: std::result::Result<String, String>| {
        let (passed, detail) = match r {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.push(SelftestCheck {
            name: name.into(),
            passed,
            detail,
        });
    };
    for rule in doubly {
        push(&format!("stochasticity:{}", rule.name()), check_doubly(*rule));
    }
    push("stochasticity:push-sum", check_column());
    push("spread-contraction", check_contraction());
    push("push-sum-conservation", check_conservation());
    push("gradient-tracking", check_tracking());
    push("product-positivity", check_positivity());
    push("reproducibility", check_reproducible());
    SelftestReport { checks }
}

type Check = std::result::Result<String, String>;

fn selftest_graphs() -> Vec<GraphSnapshot> {
    let mut out = Vec::new();
    let families = [
        Family::Path,
        Family::Star,
        Family::Grid2d,
        Family::Complete,
        Family::ErdosRenyi { eps: 1.0 },
        Family::Geometric { eps: 1.0 },
    ];
    for (i, f) in families.iter().enumerate() {
        for (j, n) in [9usize, 16, 25].into_iter().enumerate() {
            if let Ok(g) = build_graph(&FamilySpec::new(*f, n), (i * 3 + j) as u64) {
                out.push(g);
            }
        }
    }
    out
}

fn check_doubly(rule: &dyn MixingRule) -> Check {
    let graphs = selftest_graphs();
    for g in &graphs {
        let m = rule.build(g).map_err(|e| e.to_string())?;
        if m.class() != Stochasticity::Doubly {
            return Err(format!("rule reports a {} matrix", m.class()));
        }
        m.validate().map_err(|e| format!("n = {}: {e}", g.n()))?;
        let a = m.entries();
        if (a - a.transpose()).amax() > crate::mixing::STOCHASTIC_TOL {
            return Err(format!("n = {}: matrix is not symmetric", g.n()));
        }
    }
    Ok(format!("{} graphs", graphs.len()))
}

fn check_column() -> Check {
    for seed in 0..10 {
        let g = build_graph(&FamilySpec::new(Family::RandomDirected { p: 0.2 }, 12), seed).map_err(|e| e.to_string())?;
        WeightRule::PushSum
            .build(&g)
            .and_then(|m| m.validate())
            .map_err(|e| e.to_string())?;
    }
    Ok("10 directed graphs".into())
}

fn check_contraction() -> Check {
    let mut steps = 0;
    for (i, g) in selftest_graphs().into_iter().enumerate().step_by(3) {
        let n = g.n();
        let x0 = uniform_states(n, 1, i as u64);
        let seq = GraphSequence::fixed(g);
        for rule in [WeightRule::LazyMetropolis, WeightRule::EqualNeighbor] {
            let t = run_consensus(&seq, &rule, &x0, 1e-6, 2000).map_err(|e| e.to_string())?;
            for w in t.rows.windows(2) {
                if w[1].spread > w[0].spread * (1.0 + 1e-12) + 1e-15 {
                    return Err(format!("{rule} on n = {n}: spread rose at k = {}", w[1].k));
                }
                steps += 1;
            }
        }
    }
    Ok(format!("{steps} steps"))
}

fn check_conservation() -> Check {
    let seq = make_sequence("split", FamilySpec::new(Family::RandomDirected { p: 0.15 }, 10), 3, 4)
        .map_err(|e| e.to_string())?;
    let t = run_push_sum(&seq, &uniform_states(10, 1, 4), 1e-9, 100_000).map_err(|e| e.to_string())?;
    let m = t.mass.ok_or("no mass diagnostics")?;
    if m.max_x_drift > 1e-12 || m.max_y_drift > 1e-12 {
        return Err(format!("drift {:e} / {:e}", m.max_x_drift, m.max_y_drift));
    }
    Ok(format!("drift {:.1e}, min y {:.1e}", m.max_x_drift.max(m.max_y_drift), m.min_y))
}

fn check_tracking() -> Check {
    let seq = GraphSequence::fixed(build_graph(&FamilySpec::new(Family::Path, 8), 0).map_err(|e| e.to_string())?);
    let cfg: ObjectiveConfig =
        serde_json::from_str(r#"{"kind":"random","local":"quadratic","n":8,"seed":1}"#).map_err(|e| e.to_string())?;
    let set = cfg.build().map_err(|e| e.to_string())?;
    let t = diging(
        &seq,
        &WeightRule::LazyMetropolis,
        &set,
        &NodeStates::zeros(8, 1),
        0.05,
        Horizon::steps(500),
    )
    .map_err(|e| e.to_string())?;
    let tr = t.diagnostics.tracking_max.unwrap_or(f64::INFINITY);
    if tr > 1e-10 {
        return Err(format!("tracking error {tr:e}"));
    }
    Ok(format!("max tracking error {tr:.1e}"))
}

/// Products of `nB` consecutive push-sum matrices have every entry at least
/// `alpha^{nB}`, `alpha` the smallest positive entry.
fn check_positivity() -> Check {
    let mut products = 0;
    for n in 2..=4 {
        for b in 1..=2 {
            for seq in [
                GraphSequence::token_ring(n, b, true).map_err(|e| e.to_string())?,
                make_sequence("split", FamilySpec::new(Family::RandomDirected { p: 0.3 }, n), b, n as u64)
                    .map_err(|e| e.to_string())?,
            ] {
                let (ok, _) = product_positivity(&seq, &WeightRule::PushSum, 3).map_err(|e| e.to_string())?;
                if !ok {
                    return Err(format!("n = {n}, B = {b}: product has an entry below alpha^(nB)"));
                }
                products += 3;
            }
        }
    }
    Ok(format!("{products} products"))
}

/// Checks `A^{(l+n)B-1} ... A^{lB} >= alpha^{nB}` entrywise for
/// `l = 0, B, ..., (windows - 1) B`. Returns the verdict and the smallest
/// `min entry / alpha^{nB}` seen.
pub fn product_positivity(seq: &GraphSequence, rule: &dyn MixingRule, windows: usize) -> Result<(bool, f64)> {
    let n = seq.n();
    let b = seq.block();
    let nb = n * b;
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for w in 0..windows {
        let start = w * b;
        let mats = (start..start + nb)
            .map(|k| rule.build(&seq.snapshot(k)))
            .collect::<Result<Vec<_>>>()?;
        let alpha = mats.iter().map(MixingMatrix::min_positive).fold(f64::INFINITY, f64::min);
        let mut prod = nalgebra::DMatrix::<f64>::identity(n, n);
        for m in &mats {
            prod = m.entries() * prod;
        }
        let floor = alpha.powi(nb as i32);
        let min = prod.min();
        worst = worst.min(min / floor);
        if min < floor {
            ok = false;
        }
    }
    Ok((ok, worst))
}

fn check_reproducible() -> Check {
    let cfg = ConsensusConfig {
        graph: GraphConfig {
            family: "erdos-renyi:1".into(),
            n: 20,
            sequence: "regenerate".into(),
            block: 1,
        },
        algorithm: ConsensusAlgorithm::Plain,
        weights: "metropolis".into(),
        u_bound: None,
        eps: 1e-6,
        cap: None,
        seed: 11,
        x0: None,
        dim: 2,
        output: OutputPaths::default(),
    };
    let a = cmd_consensus(&cfg).map_err(|e| e.to_string())?.trace.to_csv();
    let b = cmd_consensus(&cfg).map_err(|e| e.to_string())?.trace.to_csv();
    if a != b {
        return Err("repeated run produced different CSV bytes".into());
    }
    Ok(format!("{} identical bytes", a.len()))
}
