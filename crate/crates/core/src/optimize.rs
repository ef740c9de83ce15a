//! Centralized and decentralized optimization of `f = (1/n) sum_i f_i`.
//!
//! Every algorithm returns an [`OptTrace`] whose rows are measured against
//! the ground truth carried by the [`ObjectiveSet`]. Step `k` of a schedule
//! is the step size used for the update from iterate `k` to `k + 1`.

use serde::{Deserialize, Serialize};

use crate::consensus::{momentum, MatrixSource, PushSumRule, MIN_MASS};
use crate::error::{Error, Result};
use crate::graphs::{GraphSequence, GraphSnapshot};
use crate::mixing::{lazy_metropolis, spectral, MixingMatrix, MixingRule, Stochasticity, WeightRule, GAP_FLOOR};
use crate::objectives::ObjectiveSet;
use crate::state::NodeStates;
use crate::stats::{linear_fit, LinearFit};

/// Consecutive error increases after which a smooth method is declared divergent.
pub const DIVERGENCE_WINDOW: usize = 100;
/// Growth over the initial error beyond which a rising error counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Tolerance for per-step feasibility of projected iterates.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `1/sqrt(T)` for a run of `horizon` steps.
    OneOverSqrtT { horizon: usize },
    /// `1/sqrt(k + 1)` at step `k`, i.e. `alpha^k = 1/sqrt(k)` counted from 1.
    OneOverSqrtK,
    /// `c/(k + 1)`: not summable, square summable.
    Diminishing { c: f64 },
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::OneOverSqrtT { horizon } => 1.0 / (horizon as f64).sqrt(),
            StepSchedule::OneOverSqrtK => 1.0 / ((k + 1) as f64).sqrt(),
            StepSchedule::Diminishing { c } => c / (k + 1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
            StepSchedule::OneOverSqrtT { horizon } => horizon > 0,
            StepSchedule::OneOverSqrtK => true,
            StepSchedule::Diminishing { c } => c > 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step schedule {self:?}")))
        }
    }

    /// `sum alpha = inf` and `sum alpha^2 < inf`.
    pub fn is_square_summable_only(&self) -> bool {
        matches!(self, StepSchedule::Diminishing { .. })
    }
}

/// Run length and recording options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    /// Early stop for the smooth methods once `||x - 1 x*|| <= tol`, and for
    /// the accelerated subgradient method once every node gap is `<= tol`.
    pub tol: Option<f64>,
    /// Keep every `record_every`-th row (the final row is always kept).
    pub record_every: usize,
}

impl Horizon {
    pub fn steps(steps: usize) -> Self {
        Horizon {
            steps,
            tol: None,
            record_every: 1,
        }
    }

    pub fn until(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn every(mut self, record_every: usize) -> Self {
        self.record_every = record_every.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptRow {
    pub k: usize,
    /// `f(mean_i x_i^k) - f*`.
    pub objective_gap: f64,
    /// Gap of the running average the algorithm's guarantee is stated for.
    pub running_avg_gap: f64,
    /// `||x^k - mean(x^k) 1||`.
    pub consensus_error: f64,
    /// `max_i f(x_i^k) - f*`.
    pub max_node_gap: f64,
    /// `||x^k - 1 x*||`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub theoretical_rhs: f64,
    pub satisfied: bool,
    /// Steps at which the bound was checked.
    pub checked_steps: usize,
    pub violations: usize,
}

impl BoundCheck {
    fn single(name: &str, measured: f64, rhs: f64) -> Self {
        let satisfied = measured <= rhs;
        BoundCheck {
            name: name.to_string(),
            measured,
            theoretical_rhs: rhs,
            satisfied,
            checked_steps: 1,
            violations: usize::from(!satisfied),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// DIGing: `max_k |mean(y^k) - mean(grad f(x^k))|`.
    pub tracking_max: Option<f64>,
    /// DIGing on a static graph: largest deviation from the eliminated
    /// two-step recursion.
    pub recursion_residual_max: Option<f64>,
    /// Doubly stochastic subgradient runs: largest deviation of the average
    /// from `ybar^{k+1} = ybar^k - alpha^k mean(g^k)`.
    pub average_dynamics_max: Option<f64>,
    /// Subgradient-push: largest relative drift of the `w` and `y` masses.
    pub mass_drift_max: Option<f64>,
    pub min_y: Option<f64>,
    /// Projected runs: node-steps outside their own set.
    pub infeasible_steps: Option<usize>,
    /// Fit of `ln ||x^k - 1 x*||` against `k` after the first 10% of steps,
    /// stopping at the roundoff floor.
    pub rate_fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub algorithm: String,
    pub rows: Vec<OptRow>,
    pub bound_checks: Vec<BoundCheck>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
    /// First step meeting the horizon tolerance.
    pub converged_at: Option<usize>,
    pub final_state: NodeStates,
    /// Network-level running average.
    pub running_average: Vec<f64>,
    /// Per-node running averages (`z̃` for subgradient-push).
    pub node_averages: Option<NodeStates>,
}

impl OptTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,objective_gap,running_avg_gap,consensus_error\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.k, r.objective_gap, r.running_avg_gap, r.consensus_error
            ));
        }
        s
    }

    pub fn last(&self) -> &OptRow {
        self.rows.last().expect("traces always hold the initial row")
    }

    pub fn bounds_hold(&self) -> bool {
        self.bound_checks.iter().all(|b| b.satisfied)
    }
}

/// Weighted running sum of points.
#[derive(Debug, Clone)]
struct RunningAverage {
    sum: Vec<f64>,
    weight: f64,
}

impl RunningAverage {
    fn new(dim: usize) -> Self {
        RunningAverage {
            sum: vec![0.0; dim],
            weight: 0.0,
        }
    }

    fn add(&mut self, p: &[f64], w: f64) {
        for (s, v) in self.sum.iter_mut().zip(p) {
            *s += w * v;
        }
        self.weight += w;
    }

    fn value(&self) -> Option<Vec<f64>> {
        (self.weight > 0.0).then(|| self.sum.iter().map(|s| s / self.weight).collect())
    }
}

struct Recorder<'a> {
    set: &'a ObjectiveSet,
    every: usize,
    rows: Vec<OptRow>,
}

impl<'a> Recorder<'a> {
    fn new(set: &'a ObjectiveSet, horizon: &Horizon) -> Self {
        Recorder {
            set,
            every: horizon.record_every.max(1),
            rows: Vec::new(),
        }
    }

    fn measure(&self, k: usize, x: &NodeStates, avg_point: &[f64]) -> OptRow {
        let mean = x.mean();
        let max_node_gap = (0..x.n())
            .map(|i| self.set.gap(x.node(i)))
            .fold(f64::NEG_INFINITY, f64::max);
        OptRow {
            k,
            objective_gap: self.set.gap(&mean),
            running_avg_gap: self.set.gap(avg_point),
            consensus_error: x.deviation_norm(&mean),
            max_node_gap,
            distance: x.deviation_norm(self.set.x_star()),
        }
    }

    /// Measures and, on the recording stride or when `force`d, stores the row.
    fn observe(&mut self, k: usize, x: &NodeStates, avg_point: &[f64], force: bool) -> OptRow {
        let row = self.measure(k, x, avg_point);
        if (force || k.is_multiple_of(self.every))
            && self.rows.last().map(|r| r.k) != Some(k) {
                self.rows.push(row);
            }
        row
    }
}

fn check_x0(set: &ObjectiveSet, n: usize, x0: &NodeStates) -> Result<()> {
    if x0.n() != n || set.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x0.n() != n { x0.n() } else { set.n() },
        });
    }
    if x0.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: x0.dim(),
        });
    }
    if !x0.all_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(())
}

fn require_doubly(rule: &dyn MixingRule) -> Result<()> {
    if rule.class() != Stochasticity::Doubly {
        return Err(Error::NotStochastic {
            expected: Stochasticity::Doubly.to_string(),
            detail: format!("rule {} is {}", rule.name(), rule.class()),
        });
    }
    Ok(())
}

fn local_gradients(set: &ObjectiveSet, x: &NodeStates, out: &mut NodeStates) {
    for i in 0..x.n() {
        let g = set.local(i).subgradient(x.node(i));
        out.node_mut(i).copy_from_slice(&g);
    }
}

fn identical_rows(x: &NodeStates) -> bool {
    (1..x.n()).all(|i| x.node(i) == x.node(0))
}

/// Largest second singular value over the distinct matrices of a periodic
/// sequence, if computable.
fn sequence_lambda(source: &mut MatrixSource<'_>) -> Result<Option<f64>> {
    match source.distinct()? {
        Some(ms) => {
            let refs: Vec<&MixingMatrix> = ms.iter().collect();
            Ok(Some(spectral(&refs)?.lambda))
        }
        None => Ok(None),
    }
}

fn price_of_decentralization(lambda: f64) -> f64 {
    if lambda >= 1.0 - GAP_FLOOR {
        f64::INFINITY
    } else {
        1.0 / (1.0 - lambda)
    }
}

/// Relative error below which iterates are in the roundoff floor and leave
/// the rate fit.
pub const RATE_FLOOR: f64 = 1e-12;

/// Fit over `[0.1 K, K]`, where `K` is the last step or the first step with
/// error at most [`RATE_FLOOR`] times the initial error.
fn rate_fit(rows: &[OptRow]) -> Option<LinearFit> {
    let first = rows.first()?.distance;
    let end = rows
        .iter()
        .find(|r| r.distance <= RATE_FLOOR * first)
        .unwrap_or(rows.last()?)
        .k;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.k as f64 >= 0.1 * end as f64 && r.k <= end && r.distance > 0.0)
        .map(|r| (r.k as f64, r.distance.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

/// `u^{k+1} = u^k - alpha^k g^k` with `g^k` a subgradient of `f` at `u^k`.
///
/// With the `1/sqrt(T)` schedule over exactly `T` steps and a bounded set,
/// the trace checks `f(mean_{k<T} u^k) - f* <= (||u^0 - u*||^2 + L^2) / (2 sqrt(T))`.
pub fn centralized_subgradient(
    set: &ObjectiveSet,
    u0: &[f64],
    schedule: StepSchedule,
    horizon: Horizon,
) -> Result<OptTrace> {
    schedule.validate()?;
    if u0.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: u0.len(),
        });
    }
    let mut u = NodeStates::replicated(1, u0);
    let mut avg = RunningAverage::new(set.dim());
    let mut rec = Recorder::new(set, &horizon);
    let t = horizon.steps;
    for k in 0..t {
        rec.observe(k, &u, &avg.value().unwrap_or_else(|| u0.to_vec()), false);
        let alpha = schedule.step(k);
        avg.add(u.node(0), alpha);
        let g = set.subgradient(u.node(0));
        for (v, gv) in u.node_mut(0).iter_mut().zip(&g) {
            *v -= alpha * gv;
        }
        if !u.all_finite() {
            return Err(Error::NonFinite(k + 1));
        }
    }
    let avg_point = avg.value().unwrap_or_else(|| u0.to_vec());
    rec.observe(t, &u, &avg_point, true);

    let mut bound_checks = Vec::new();
    let mut warnings = Vec::new();
    match (schedule, set.subgradient_bound()) {
        (StepSchedule::OneOverSqrtT { horizon: h }, Some(l)) if h == t && t > 0 => {
            let r0 = crate::state::dist2(u0, set.x_star());
            let rhs = (r0 * r0 + l * l) / (2.0 * (t as f64).sqrt());
            bound_checks.push(BoundCheck::single("centralized-subgradient", set.gap(&avg_point), rhs));
        }
        (StepSchedule::OneOverSqrtT { .. }, None) => {
            warnings.push("objective has no global subgradient bound; rate bound not checked".into())
        }
        _ => {}
    }
    Ok(OptTrace {
        algorithm: "centralized-subgradient".into(),
        rows: rec.rows,
        bound_checks,
        warnings,
        diagnostics: Diagnostics::default(),
        converged_at: None,
        final_state: u,
        running_average: avg_point,
        node_averages: None,
    })
}

/// Where the projected method evaluates the local subgradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubgradientPoint {
    /// At `x_i^k`.
    #[default]
    PastIterate,
    /// At `sum_j a_ij x_j^k`.
    PostMix,
}

/// `x_i^{k+1} = sum_j a_ij^k x_j^k - alpha^k g_i^k`, `g_i^k` a subgradient of
/// `f_i` at `x_i^k`.
///
/// The running average is `sum_l alpha^l ybar^l / sum_l alpha^l` with
/// `ybar^l = (1/n) sum_i x_i^l`. With the `1/sqrt(T)` schedule over `T`
/// steps, identical starts, a bounded set and scalar decisions, the trace
/// checks
/// `f(avg) - f* <= ((ybar^0 - x*)^2 + L^2)/(2 sqrt(T)) + L^2/(sqrt(T)(1 - lambda))`.
pub fn decentralized_subgradient(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    set: &ObjectiveSet,
    x0: &NodeStates,
    schedule: StepSchedule,
    horizon: Horizon,
) -> Result<OptTrace> {
    subgradient_core(seq, rule, set, x0, schedule, horizon, None)
}

/// `x_i^{k+1} = P_{X_i}[sum_j a_ij^k x_j^k - alpha^k g_i^k]` with the
/// subgradient taken at the point chosen by `at`. Feasibility of every
/// iterate is recorded.
pub fn projected_decentralized_subgradient(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    set: &ObjectiveSet,
    x0: &NodeStates,
    schedule: StepSchedule,
    horizon: Horizon,
    at: SubgradientPoint,
) -> Result<OptTrace> {
    if !set.has_constraints() {
        return Err(Error::InvalidArgument("projected method needs constraint sets".into()));
    }
    check_x0(set, seq.n(), x0)?;
    for i in 0..x0.n() {
        if !set.constraint(i).contains(x0.node(i), FEASIBILITY_TOL) {
            return Err(Error::InvalidArgument(format!("initial point of node {i} is outside its set")));
        }
    }
    subgradient_core(seq, rule, set, x0, schedule, horizon, Some(at))
}

fn subgradient_core(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    set: &ObjectiveSet,
    x0: &NodeStates,
    schedule: StepSchedule,
    horizon: Horizon,
    projected: Option<SubgradientPoint>,
) -> Result<OptTrace> {
    schedule.validate()?;
    require_doubly(rule)?;
    check_x0(set, seq.n(), x0)?;
    let n = seq.n();
    let t = horizon.steps;
    let mut source = MatrixSource::new(seq, rule);
    let mut x = x0.clone();
    let mut v = x0.clone();
    let mut g = x0.clone();
    let mut avg = RunningAverage::new(set.dim());
    let mut rec = Recorder::new(set, &horizon);
    let mut avg_dyn: f64 = 0.0;
    let mut infeasible = 0usize;
    let mean0 = x0.mean();

    for k in 0..t {
        let ybar = x.mean();
        rec.observe(k, &x, &avg.value().unwrap_or_else(|| ybar.clone()), false);
        let alpha = schedule.step(k);
        avg.add(&ybar, alpha);
        source.get(k)?.mix_into(&x, &mut v);
        match projected {
            Some(SubgradientPoint::PostMix) => local_gradients(set, &v, &mut g),
            _ => local_gradients(set, &x, &mut g),
        }
        for (xv, (vv, gv)) in x.as_mut_slice().iter_mut().zip(v.as_slice().iter().zip(g.as_slice())) {
            *xv = vv - alpha * gv;
        }
        if projected.is_some() {
            for i in 0..n {
                let p = set.constraint(i).project(x.node(i));
                x.node_mut(i).copy_from_slice(&p);
                if !set.constraint(i).contains(x.node(i), FEASIBILITY_TOL) {
                    infeasible += 1;
                }
            }
        } else {
            let gbar = g.mean();
            let next = x.mean();
            for c in 0..set.dim() {
                let predicted = ybar[c] - alpha * gbar[c];
                let scale = 1.0f64.max(ybar[c].abs());
                avg_dyn = avg_dyn.max((next[c] - predicted).abs() / scale);
            }
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(k + 1));
        }
    }
    let avg_point = avg.value().unwrap_or_else(|| x.mean());
    rec.observe(t, &x, &avg_point, true);

    let mut bound_checks = Vec::new();
    let mut warnings = Vec::new();
    if projected.is_none() {
        if let StepSchedule::OneOverSqrtT { horizon: h } = schedule {
            match (set.subgradient_bound(), set.dim(), identical_rows(x0)) {
                (_, _, false) => warnings.push(
                    "initial values differ across nodes; the decentralized rate bound assumes identical starts and was not checked".into(),
                ),
                (None, _, _) => warnings.push("objective has no global subgradient bound; rate bound not checked".into()),
                (_, d, _) if d != 1 => warnings.push("rate bound is checked for scalar decisions only".into()),
                (Some(_), _, _) if h != t || t == 0 => {
                    warnings.push("schedule horizon differs from the run length; rate bound not checked".into())
                }
                (Some(l), _, true) => match sequence_lambda(&mut source)? {
                    Some(lambda) => {
                        let st = (t as f64).sqrt();
                        let r0 = mean0[0] - set.x_star()[0];
                        let rhs = (r0 * r0 + l * l) / (2.0 * st) + l * l * price_of_decentralization(lambda) / st;
                        bound_checks.push(BoundCheck::single("decentralized-subgradient", set.gap(&avg_point), rhs));
                    }
                    None => warnings.push("aperiodic sequence: lambda unavailable, rate bound not checked".into()),
                },
            }
        }
    }
    let diagnostics = Diagnostics {
        average_dynamics_max: projected.is_none().then_some(avg_dyn),
        infeasible_steps: projected.is_some().then_some(infeasible),
        ..Diagnostics::default()
    };
    Ok(OptTrace {
        algorithm: if projected.is_some() {
            "projected-subgradient".into()
        } else {
            "decentralized-subgradient".into()
        },
        rows: rec.rows,
        bound_checks,
        warnings,
        diagnostics,
        converged_at: None,
        final_state: x,
        running_average: avg_point,
        node_averages: None,
    })
}

/// Accelerated distributed subgradient on a fixed undirected graph with
/// node-count bound `U`:
///
/// ```text
/// y^{k+1} = L x^k - beta g(y^k)
/// z^{k+1} = y^k   - beta g(y^k)
/// x^{k+1} = y^{k+1} + (1 - 2/(9U+1)) (y^{k+1} - z^{k+1}),   y^0 = x^0
/// ```
///
/// with `L` the lazy Metropolis matrix. Rows measure the `y` iterates and
/// the running average is the plain mean of `ybar^k`.
pub fn accelerated_distributed_subgradient(
    g: &GraphSnapshot,
    u_bound: usize,
    set: &ObjectiveSet,
    x0: &NodeStates,
    beta: f64,
    horizon: Horizon,
) -> Result<OptTrace> {
    check_x0(set, g.n(), x0)?;
    if u_bound < g.n() {
        return Err(Error::InvalidArgument(format!(
            "node-count bound U = {u_bound} is below n = {}",
            g.n()
        )));
    }
    if g.is_directed() {
        return Err(Error::DirectedGraph("accelerated distributed subgradient"));
    }
    if !g.is_strongly_connected() {
        return Err(Error::Disconnected);
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    let lazy = lazy_metropolis(g)?;
    let c = momentum(u_bound);
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut lx = x0.clone();
    let mut gy = x0.clone();
    let mut avg = RunningAverage::new(set.dim());
    let mut rec = Recorder::new(set, &horizon);
    let mut converged_at = None;
    let mut k = 0;
    loop {
        let ybar = y.mean();
        avg.add(&ybar, 1.0);
        let avg_point = avg.value().expect("weight added");
        let row = rec.observe(k, &y, &avg_point, false);
        if horizon.tol.is_some_and(|tol| row.max_node_gap <= tol) {
            converged_at = Some(k);
            rec.observe(k, &y, &avg_point, true);
            break;
        }
        if k == horizon.steps {
            rec.observe(k, &y, &avg_point, true);
            break;
        }
        local_gradients(set, &y, &mut gy);
        lazy.mix_into(&x, &mut lx);
        for (((xv, yv), lv), gv) in x
            .as_mut_slice()
            .iter_mut()
            .zip(y.as_mut_slice())
            .zip(lx.as_slice())
            .zip(gy.as_slice())
        {
            let y_next = lv - beta * gv;
            let z_next = *yv - beta * gv;
            *xv = y_next + c * (y_next - z_next);
            *yv = y_next;
        }
        if !y.all_finite() {
            return Err(Error::NonFinite(k + 1));
        }
        k += 1;
    }
    Ok(OptTrace {
        algorithm: "accelerated-subgradient".into(),
        rows: rec.rows,
        bound_checks: Vec::new(),
        warnings: Vec::new(),
        diagnostics: Diagnostics::default(),
        converged_at,
        final_state: y,
        running_average: avg.value().expect("weight added"),
        node_averages: None,
    })
}

fn require_smooth(set: &ObjectiveSet, algorithm: &'static str) -> Result<f64> {
    if set.has_constraints() {
        return Err(Error::UnsupportedObjective {
            kind: "constrained".into(),
            algorithm,
        });
    }
    set.smoothness().ok_or_else(|| Error::UnsupportedObjective {
        kind: set
            .locals()
            .iter()
            .find(|f| f.smoothness().is_none())
            .map_or("unknown", |f| f.kind())
            .into(),
        algorithm,
    })
}

/// Watches `||x - 1 x*||` for sustained growth: an error that rose at each
/// of the last [`DIVERGENCE_WINDOW`] steps, at least doubled over them, and
/// exceeds [`DIVERGENCE_FACTOR`] times the initial error (or `sqrt(eps)` when
/// the run starts at the optimum). Transients and ulp-level drift after
/// convergence stay below these thresholds.
struct DivergenceGuard {
    last: f64,
    rising: usize,
    streak_start: f64,
    floor: Option<f64>,
    algorithm: &'static str,
    step_size: f64,
}

impl DivergenceGuard {
    fn new(algorithm: &'static str, step_size: f64) -> Self {
        DivergenceGuard {
            last: f64::INFINITY,
            rising: 0,
            streak_start: f64::INFINITY,
            floor: None,
            algorithm,
            step_size,
        }
    }

    fn check(&mut self, k: usize, err: f64) -> Result<()> {
        if !err.is_finite() {
            return Err(self.error(k));
        }
        let floor = *self
            .floor
            .get_or_insert(if err > 0.0 { DIVERGENCE_FACTOR * err } else { f64::EPSILON.sqrt() });
        if err > self.last {
            if self.rising == 0 {
                self.streak_start = self.last;
            }
            self.rising += 1;
        } else {
            self.rising = 0;
        }
        self.last = err;
        if self.rising >= DIVERGENCE_WINDOW && err > 2.0 * self.streak_start && err > floor {
            return Err(self.error(k));
        }
        Ok(())
    }

    fn error(&self, step: usize) -> Error {
        Error::Diverged {
            algorithm: self.algorithm,
            step,
            step_size: self.step_size,
        }
    }
}

/// Default EXTRA step `1 / (2 max_i L_i)` with `L_i` the gradient Lipschitz
/// constant of `f_i`.
pub fn default_extra_step(set: &ObjectiveSet) -> Option<f64> {
    set.smoothness().map(|l| 1.0 / (2.0 * l))
}

/// EXTRA on a fixed undirected graph with `W` Metropolis or lazy Metropolis
/// and `W̃ = (I + W)/2`:
///
/// ```text
/// x^1     = W x^0 - alpha grad f(x^0)
/// x^{k+2} = (I + W) x^{k+1} - W̃ x^k - alpha (grad f(x^{k+1}) - grad f(x^k))
/// ```
pub fn extra(
    g: &GraphSnapshot,
    weights: WeightRule,
    set: &ObjectiveSet,
    x0: &NodeStates,
    alpha: Option<f64>,
    horizon: Horizon,
) -> Result<OptTrace> {
    check_x0(set, g.n(), x0)?;
    let smooth = require_smooth(set, "extra")?;
    if !matches!(weights, WeightRule::Metropolis | WeightRule::LazyMetropolis) {
        return Err(Error::InvalidArgument(format!(
            "EXTRA uses metropolis or lazy-metropolis weights, got {weights}"
        )));
    }
    let alpha = alpha.unwrap_or(1.0 / (2.0 * smooth));
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {alpha}")));
    }
    let w = weights.build(g)?;
    let mut guard = DivergenceGuard::new("extra", alpha);
    let mut rec = Recorder::new(set, &horizon);
    let mut avg = RunningAverage::new(set.dim());

    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut wx = x0.clone();
    let mut wx_prev = x0.clone();
    let mut grad = x0.clone();
    let mut grad_prev = x0.clone();
    let mut next = x0.clone();
    let mut converged_at = None;
    let mut k = 0;
    loop {
        avg.add(&x.mean(), 1.0);
        let avg_point = avg.value().expect("weight added");
        let row = rec.observe(k, &x, &avg_point, false);
        guard.check(k, row.distance)?;
        if horizon.tol.is_some_and(|tol| row.distance <= tol) {
            converged_at = Some(k);
            rec.observe(k, &x, &avg_point, true);
            break;
        }
        if k == horizon.steps {
            rec.observe(k, &x, &avg_point, true);
            break;
        }
        w.mix_into(&x, &mut wx);
        local_gradients(set, &x, &mut grad);
        let (xs, wxs, gs) = (x.as_slice(), wx.as_slice(), grad.as_slice());
        if k == 0 {
            for (i, v) in next.as_mut_slice().iter_mut().enumerate() {
                *v = wxs[i] - alpha * gs[i];
            }
        } else {
            let (xp, wxp, gp) = (x_prev.as_slice(), wx_prev.as_slice(), grad_prev.as_slice());
            for (i, v) in next.as_mut_slice().iter_mut().enumerate() {
                *v = xs[i] + wxs[i] - 0.5 * (xp[i] + wxp[i]) - alpha * (gs[i] - gp[i]);
            }
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut next);
        std::mem::swap(&mut wx_prev, &mut wx);
        std::mem::swap(&mut grad_prev, &mut grad);
        k += 1;
    }
    let avg_point = avg.value().expect("weight added");
    let final_state = x;
    let diagnostics = Diagnostics {
        rate_fit: rate_fit(&rec.rows),
        ..Diagnostics::default()
    };
    Ok(OptTrace {
        algorithm: "extra".into(),
        rows: rec.rows,
        bound_checks: Vec::new(),
        warnings: Vec::new(),
        diagnostics,
        converged_at,
        final_state,
        running_average: avg_point,
        node_averages: None,
    })
}

/// DIGing gradient tracking with doubly stochastic `W^k`:
///
/// ```text
/// x^{k+1} = W^k x^k - alpha y^k
/// y^{k+1} = W^k y^k + grad f(x^{k+1}) - grad f(x^k),   y^0 = grad f(x^0)
/// ```
///
/// Every step records the tracking identity `mean(y^k) = mean(grad f(x^k))`;
/// on static sequences the eliminated recursion
/// `x^{k+2} = 2W x^{k+1} - W^2 x^k - alpha (grad f(x^{k+1}) - grad f(x^k))`
/// is checked as well.
pub fn diging(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    set: &ObjectiveSet,
    x0: &NodeStates,
    alpha: f64,
    horizon: Horizon,
) -> Result<OptTrace> {
    require_doubly(rule)?;
    check_x0(set, seq.n(), x0)?;
    require_smooth(set, "diging")?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {alpha}")));
    }
    let is_static = seq.is_static();
    let mut source = MatrixSource::new(seq, rule);
    let mut guard = DivergenceGuard::new("diging", alpha);
    let mut rec = Recorder::new(set, &horizon);
    let mut avg = RunningAverage::new(set.dim());

    let mut x = x0.clone();
    let mut grad = x0.clone();
    local_gradients(set, &x, &mut grad);
    let mut y = grad.clone();
    let mut wx = x.clone();
    let mut wy = x.clone();
    let mut grad_next = x.clone();
    // Static-graph recursion check keeps (W x^{k-1}, grad^{k-1}).
    let mut history: Option<(NodeStates, NodeStates)> = None;
    let mut w_wx_prev = x.clone();
    let mut tracking: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut converged_at = None;
    let mut k = 0;
    loop {
        let ym = y.mean();
        let gm = grad.mean();
        for (a, b) in ym.iter().zip(&gm) {
            tracking = tracking.max((a - b).abs());
        }
        avg.add(&x.mean(), 1.0);
        let avg_point = avg.value().expect("weight added");
        let row = rec.observe(k, &x, &avg_point, false);
        guard.check(k, row.distance)?;
        if horizon.tol.is_some_and(|tol| row.distance <= tol) {
            converged_at = Some(k);
            rec.observe(k, &x, &avg_point, true);
            break;
        }
        if k == horizon.steps {
            rec.observe(k, &x, &avg_point, true);
            break;
        }
        let w = source.get(k)?;
        w.mix_into(&x, &mut wx);
        w.mix_into(&y, &mut wy);
        if is_static {
            if let Some((wxp, gp)) = &history {
                // x^{k+1} vs 2W x^k - W(W x^{k-1}) - alpha (grad^k - grad^{k-1})
                w.mix_into(wxp, &mut w_wx_prev);
                for i in 0..x.as_slice().len() {
                    let predicted = 2.0 * wx.as_slice()[i]
                        - w_wx_prev.as_slice()[i]
                        - alpha * (grad.as_slice()[i] - gp.as_slice()[i]);
                    let actual = wx.as_slice()[i] - alpha * y.as_slice()[i];
                    residual = residual.max((actual - predicted).abs());
                }
            }
        }
        for ((xv, wxv), yv) in x.as_mut_slice().iter_mut().zip(wx.as_slice()).zip(y.as_slice()) {
            *xv = wxv - alpha * yv;
        }
        local_gradients(set, &x, &mut grad_next);
        for (((yv, wyv), gn), g) in y
            .as_mut_slice()
            .iter_mut()
            .zip(wy.as_slice())
            .zip(grad_next.as_slice())
            .zip(grad.as_slice())
        {
            *yv = wyv + gn - g;
        }
        if is_static {
            history = Some((wx.clone(), grad.clone()));
        }
        std::mem::swap(&mut grad, &mut grad_next);
        k += 1;
    }
    let diagnostics = Diagnostics {
        tracking_max: Some(tracking),
        recursion_residual_max: is_static.then_some(residual),
        rate_fit: rate_fit(&rec.rows),
        ..Diagnostics::default()
    };
    Ok(OptTrace {
        algorithm: "diging".into(),
        rows: rec.rows,
        bound_checks: Vec::new(),
        warnings: Vec::new(),
        diagnostics,
        converged_at,
        final_state: x,
        running_average: avg.value().expect("weight added"),
        node_averages: None,
    })
}

/// `(delta, 1 - lambda)` from the conservative bounds `delta >= n^{-nB}`
/// and `lambda <= (1 - n^{-nB})^{1/(nB)}`.
pub fn push_constants(n: usize, block: usize) -> (f64, f64) {
    let nb = (n * block) as f64;
    let log_delta = -nb * (n as f64).ln();
    let delta = log_delta.exp();
    let one_minus_lambda = -((-delta).ln_1p() / nb).exp_m1();
    (delta, one_minus_lambda)
}

/// Right-hand side of the subgradient-push rate bound for `z̃^{k+1}`, `k >= 1`.
pub fn push_bound_rhs(n: usize, block: usize, l: f64, xbar0_err: f64, sum_abs_x0: f64, k: usize) -> f64 {
    let (delta, gap) = push_constants(n, block);
    let nf = n as f64;
    let kf = k as f64;
    let s = (kf + 1.0).sqrt();
    let dg = delta * gap;
    nf / 2.0 * xbar0_err / s
        + l * l * (1.0 + (kf + 1.0).ln()) / (2.0 * nf * s)
        + 24.0 * l * sum_abs_x0 / (dg * s)
        + 24.0 * l * l * (1.0 + kf.ln()) / (dg * s)
}

/// Subgradient-push over a directed sequence with push-sum weights:
///
/// ```text
/// w^{k+1} = A^k x^k,   y^{k+1} = A^k y^k,   z^{k+1} = w^{k+1} ./ y^{k+1}
/// x^{k+1} = w^{k+1} - alpha^{k+1} g(z^{k+1}),   y^0 = 1
/// ```
///
/// Each node keeps `z̃^{k+1} = (alpha^{k+1} z^{k+1} + S^k z̃^k) / S^{k+1}`
/// with `S^k = sum_{s<k} alpha^{s+1}`. Rows measure `z`; the running-average
/// column is `max_i f(z̃_i) - f*`. For scalar decisions with a bounded set
/// the rate bound with `delta = n^{-nB}` and
/// `lambda = (1 - n^{-nB})^{1/(nB)}` is checked at every `k >= 1`.
pub fn subgradient_push(
    seq: &GraphSequence,
    set: &ObjectiveSet,
    x0: &NodeStates,
    schedule: StepSchedule,
    horizon: Horizon,
) -> Result<OptTrace> {
    schedule.validate()?;
    check_x0(set, seq.n(), x0)?;
    let n = seq.n();
    let d = set.dim();
    let rule = PushSumRule;
    let mut source = MatrixSource::new(seq, &rule);
    let mut x = x0.clone();
    let mut y = NodeStates::replicated(n, &[1.0]);
    let mut w = x0.clone();
    let mut y_next = y.clone();
    let mut z = x0.clone();
    let mut z_avg = x0.clone();
    let mut g = x0.clone();
    let mut s_sum = 0.0;
    let mut mass_drift: f64 = 0.0;
    let mut min_y: f64 = 1.0;
    let mut rec = Recorder::new(set, &horizon);

    let check_bound = d == 1 && set.subgradient_bound().is_some();
    let l = set.subgradient_bound().unwrap_or(0.0);
    let xbar0_err = (x0.mean()[0] - set.x_star()[0]).abs();
    let sum_abs_x0: f64 = x0.as_slice().iter().map(|v| v.abs()).sum();
    let mut bound = BoundCheck {
        name: "subgradient-push".into(),
        measured: f64::NAN,
        theoretical_rhs: f64::NAN,
        satisfied: true,
        checked_steps: 0,
        violations: 0,
    };
    let max_avg_gap = |za: &NodeStates| {
        (0..n)
            .map(|i| set.gap(za.node(i)))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    for k in 0..horizon.steps {
        let row = rec.measure(k, &z, &z.mean());
        let avg_gap = if k == 0 { row.max_node_gap } else { max_avg_gap(&z_avg) };
        if k % rec.every == 0 {
            rec.rows.push(OptRow {
                running_avg_gap: avg_gap,
                ..row
            });
        }
        let a = source.get(k)?;
        a.mix_into(&x, &mut w);
        a.mix_into(&y, &mut y_next);
        std::mem::swap(&mut y, &mut y_next);

        let sx: f64 = x.as_slice().iter().sum();
        let sw: f64 = w.as_slice().iter().sum();
        let scale = x.as_slice().iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let sy: f64 = y.as_slice().iter().sum();
        mass_drift = mass_drift.max((sw - sx).abs() / scale).max((sy - n as f64).abs() / n as f64);
        for (i, &yi) in y.as_slice().iter().enumerate() {
            if !(yi >= MIN_MASS) {
                return Err(Error::MassUnderflow {
                    step: k + 1,
                    node: i,
                    value: yi,
                });
            }
            min_y = min_y.min(yi);
        }
        for i in 0..n {
            let yi = y.node(i)[0];
            for (zv, wv) in z.node_mut(i).iter_mut().zip(w.node(i)) {
                *zv = wv / yi;
            }
        }
        let alpha = schedule.step(k);
        local_gradients(set, &z, &mut g);
        for ((xv, wv), gv) in x.as_mut_slice().iter_mut().zip(w.as_slice()).zip(g.as_slice()) {
            *xv = wv - alpha * gv;
        }
        let s_next = s_sum + alpha;
        for (za, zv) in z_avg.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *za = (alpha * zv + s_sum * *za) / s_next;
        }
        s_sum = s_next;
        if !x.all_finite() {
            return Err(Error::NonFinite(k + 1));
        }
        if check_bound && k >= 1 {
            let measured = max_avg_gap(&z_avg);
            let rhs = push_bound_rhs(n, seq.block(), l, xbar0_err, sum_abs_x0, k);
            bound.checked_steps += 1;
            if measured > rhs {
                bound.violations += 1;
            }
            bound.measured = measured;
            bound.theoretical_rhs = rhs;
        }
    }
    let t = horizon.steps;
    let row = rec.measure(t, &z, &z.mean());
    let avg_gap = if t == 0 { row.max_node_gap } else { max_avg_gap(&z_avg) };
    if rec.rows.last().map(|r| r.k) != Some(t) {
        rec.rows.push(OptRow {
            running_avg_gap: avg_gap,
            ..row
        });
    }
    let mut warnings = Vec::new();
    let mut bound_checks = Vec::new();
    if check_bound {
        bound.satisfied = bound.violations == 0;
        bound_checks.push(bound);
    } else {
        warnings.push("rate bound is checked for scalar decisions with a subgradient bound only".into());
    }
    Ok(OptTrace {
        algorithm: "subgradient-push".into(),
        rows: rec.rows,
        bound_checks,
        warnings,
        diagnostics: Diagnostics {
            mass_drift_max: Some(mass_drift),
            min_y: Some(min_y),
            ..Diagnostics::default()
        },
        converged_at: None,
        final_state: z,
        running_average: z_avg.mean(),
        node_averages: Some(z_avg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_graph, Family, FamilySpec};
    use crate::objectives::LocalObjective;

    fn quad(a: f64, b: f64) -> LocalObjective {
        LocalObjective::Quadratic { a, b: vec![b] }
    }

    fn abs(b: f64) -> LocalObjective {
        LocalObjective::Absolute { b: vec![b] }
    }

    fn graph(f: Family, n: usize) -> GraphSnapshot {
        build_graph(&FamilySpec::new(f, n), 0).unwrap()
    }

    #[test]
    fn centralized_hand_iteration() {
        // f(x) = x^2 as a quadratic with a = 2, b = 0.
        let set = ObjectiveSet::new(vec![quad(2.0, 0.0)], vec![]).unwrap();
        let t = centralized_subgradient(&set, &[1.0], StepSchedule::Constant { alpha: 0.25 }, Horizon::steps(2)).unwrap();
        assert_eq!(t.final_state.as_slice(), &[0.25]);
        assert_eq!(t.rows.len(), 3);
    }

    #[test]
    fn centralized_stays_at_optimum() {
        let set = ObjectiveSet::new(vec![quad(1.0, -1.0), quad(1.0, 1.0)], vec![]).unwrap();
        let t = centralized_subgradient(&set, &[0.0], StepSchedule::Constant { alpha: 0.5 }, Horizon::steps(10)).unwrap();
        assert_eq!(t.final_state.as_slice(), &[0.0]);
    }

    #[test]
    fn decentralized_single_node_matches_centralized_bitwise() {
        let set = ObjectiveSet::new(vec![LocalObjective::Huber { b: vec![0.3], delta: 0.2 }], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Path, 1));
        let sched = StepSchedule::Diminishing { c: 0.7 };
        let c = centralized_subgradient(&set, &[2.0], sched, Horizon::steps(500)).unwrap();
        let d = decentralized_subgradient(&seq, &WeightRule::Metropolis, &set, &NodeStates::from_scalars(&[2.0]), sched, Horizon::steps(500)).unwrap();
        for (a, b) in c.rows.iter().zip(&d.rows) {
            assert_eq!(a.objective_gap.to_bits(), b.objective_gap.to_bits());
        }
        assert_eq!(c.final_state, d.final_state);
    }

    #[test]
    fn decentralized_rejects_row_stochastic_rules() {
        let set = ObjectiveSet::new(vec![abs(0.0), abs(1.0)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Complete, 2));
        let r = decentralized_subgradient(
            &seq,
            &WeightRule::EqualNeighbor,
            &set,
            &NodeStates::zeros(2, 1),
            StepSchedule::OneOverSqrtK,
            Horizon::steps(3),
        );
        assert!(matches!(r, Err(Error::NotStochastic { .. })));
    }

    #[test]
    fn mismatched_starts_skip_the_bound_with_a_warning() {
        let set = ObjectiveSet::new(vec![abs(0.0), abs(1.0)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Complete, 2));
        let t = decentralized_subgradient(
            &seq,
            &WeightRule::Metropolis,
            &set,
            &NodeStates::from_scalars(&[0.0, 1.0]),
            StepSchedule::OneOverSqrtT { horizon: 100 },
            Horizon::steps(100),
        )
        .unwrap();
        assert!(t.bound_checks.is_empty());
        assert!(t.warnings[0].contains("identical starts"));
    }

    #[test]
    fn two_node_quadratics_reach_zero() {
        let set = ObjectiveSet::new(vec![quad(1.0, -1.0), quad(1.0, 1.0)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Complete, 2));
        let t = decentralized_subgradient(
            &seq,
            &WeightRule::LazyMetropolis,
            &set,
            &NodeStates::from_scalars(&[3.0, -5.0]),
            StepSchedule::Diminishing { c: 1.0 },
            Horizon::steps(20_000),
        )
        .unwrap();
        for &v in t.final_state.as_slice() {
            assert!(v.abs() < 1e-3, "{v}");
        }
        assert!(t.diagnostics.average_dynamics_max.unwrap() < 1e-12);
    }

    #[test]
    fn projected_hits_the_box_boundary() {
        let bx = crate::objectives::Constraint::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        };
        let set = ObjectiveSet::new(vec![quad(1.0, 2.0), quad(1.0, 2.0), quad(1.0, 2.0)], vec![bx]).unwrap();
        assert_eq!(set.x_star(), &[1.0]);
        let seq = GraphSequence::fixed(graph(Family::Path, 3));
        let t = projected_decentralized_subgradient(
            &seq,
            &WeightRule::Metropolis,
            &set,
            &NodeStates::zeros(3, 1),
            StepSchedule::Diminishing { c: 1.0 },
            Horizon::steps(2000),
            SubgradientPoint::PastIterate,
        )
        .unwrap();
        assert_eq!(t.diagnostics.infeasible_steps, Some(0));
        for &v in t.final_state.as_slice() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn extra_single_node_is_gradient_descent_fixed_point() {
        let set = ObjectiveSet::new(vec![quad(2.0, 1.0)], vec![]).unwrap();
        let g = graph(Family::Path, 1);
        let t = extra(&g, WeightRule::Metropolis, &set, &NodeStates::from_scalars(&[1.0]), Some(0.1), Horizon::steps(50)).unwrap();
        assert_eq!(t.final_state.as_slice(), &[1.0]);
        let moved = extra(&g, WeightRule::Metropolis, &set, &NodeStates::from_scalars(&[4.0]), Some(0.1), Horizon::steps(400)).unwrap();
        assert!((moved.final_state.as_slice()[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn extra_rejects_nonsmooth() {
        let set = ObjectiveSet::new(vec![abs(0.0), abs(1.0)], vec![]).unwrap();
        let r = extra(&graph(Family::Path, 2), WeightRule::Metropolis, &set, &NodeStates::zeros(2, 1), None, Horizon::steps(5));
        assert!(matches!(r, Err(Error::UnsupportedObjective { .. })));
    }

    #[test]
    fn extra_path_four_converges_geometrically() {
        let set = ObjectiveSet::new(vec![quad(1.0, 0.0), quad(2.0, 3.0), quad(0.5, -1.0), quad(1.5, 2.0)], vec![]).unwrap();
        let t = extra(
            &graph(Family::Path, 4),
            WeightRule::Metropolis,
            &set,
            &NodeStates::zeros(4, 1),
            Some(0.1 / 2.0),
            Horizon::steps(5000).until(1e-8),
        )
        .unwrap();
        assert!(t.converged_at.is_some());
        assert!(t.diagnostics.rate_fit.unwrap().r_squared >= 0.99);
    }

    #[test]
    fn diging_two_node_hand_iteration() {
        let set = ObjectiveSet::new(vec![quad(1.0, 0.0), quad(1.0, 2.0)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Complete, 2));
        // Lazy Metropolis on two nodes is the all-1/2 matrix.
        let t = diging(&seq, &WeightRule::LazyMetropolis, &set, &NodeStates::zeros(2, 1), 0.1, Horizon::steps(1)).unwrap();
        assert!((t.final_state.as_slice()[0] - 0.0).abs() < 1e-15);
        assert!((t.final_state.as_slice()[1] - 0.2).abs() < 1e-15);
        assert!(t.diagnostics.tracking_max.unwrap() < 1e-15);
    }

    #[test]
    fn diging_rejects_divergent_steps() {
        let set = ObjectiveSet::new(vec![quad(1.0, 0.0), quad(1.0, 2.0), quad(1.0, -1.0)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Path, 3));
        let r = diging(&seq, &WeightRule::Metropolis, &set, &NodeStates::zeros(3, 1), 5.0, Horizon::steps(10_000));
        assert!(matches!(r, Err(Error::Diverged { algorithm: "diging", .. })));
    }

    #[test]
    fn push_single_node_matches_centralized() {
        let set = ObjectiveSet::new(vec![abs(1.5)], vec![]).unwrap();
        let seq = GraphSequence::fixed(graph(Family::Path, 1));
        let p = subgradient_push(&seq, &set, &NodeStates::from_scalars(&[-2.0]), StepSchedule::OneOverSqrtK, Horizon::steps(300)).unwrap();
        let c = centralized_subgradient(&set, &[-2.0], StepSchedule::OneOverSqrtK, Horizon::steps(300)).unwrap();
        // z^{k+1} = x^k when n = 1, so the push trajectory trails by one step.
        for k in 0..300 {
            assert_eq!(p.rows[k + 1].distance.to_bits(), c.rows[k].distance.to_bits());
        }
    }

    #[test]
    fn push_constants_are_stable() {
        let (delta, gap) = push_constants(5, 1);
        assert!((delta - 5f64.powi(-5)).abs() < 1e-18);
        let direct = 1.0 - (1.0 - delta).powf(0.2);
        assert!((gap - direct).abs() < 1e-15);
        let (tiny, tiny_gap) = push_constants(4, 4);
        assert!(tiny > 0.0 && tiny_gap > 0.0 && tiny_gap < tiny);
    }

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::OneOverSqrtK.step(3), 0.5);
        assert_eq!(StepSchedule::OneOverSqrtT { horizon: 100 }.step(7), 0.1);
        assert_eq!(StepSchedule::Diminishing { c: 2.0 }.step(1), 1.0);
        assert!(StepSchedule::Constant { alpha: -1.0 }.validate().is_err());
        assert!(StepSchedule::Diminishing { c: 1.0 }.is_square_summable_only());
    }
}
