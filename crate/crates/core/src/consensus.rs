//! Averaging iterations and convergence-time measurement.
//!
//! `T(n, eps)` is the first `k` with
//! `||x^k - mean(x^0) 1|| <= eps ||x^0 - mean(x^0) 1||` (2-norm, Frobenius
//! for vector states). A run whose initial deviation is zero has `T = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{GraphSequence, GraphSnapshot};
use crate::mixing::{lazy_metropolis, push_sum_matrix, MixingMatrix, MixingRule, Stochasticity};
use crate::state::NodeStates;

/// Mass variables below this abort push-sum.
pub const MIN_MASS: f64 = 1e-300;

/// Absolute slack (relative to the initial squared deviation) on the
/// accelerated-consensus envelope, covering rounding once both sides reach
/// machine precision.
pub const ENVELOPE_SLACK: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    CapReached,
    /// Ran for a fixed number of steps with no stopping rule.
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub consensus_error: f64,
    pub spread: f64,
    pub min_y: Option<f64>,
}

/// Per-step inequality check `lhs_k <= rhs_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub checked_steps: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
}

impl EnvelopeCheck {
    fn new() -> Self {
        EnvelopeCheck {
            checked_steps: 0,
            violations: 0,
            worst_ratio: 0.0,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.checked_steps += 1;
        if lhs > rhs + slack {
            self.violations += 1;
        }
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        }
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Push-sum conservation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    /// Largest `|sum x^k - sum x^0| / sum |x^0|` over steps and coordinates.
    pub max_x_drift: f64,
    /// Largest `|sum y^k - n| / n`.
    pub max_y_drift: f64,
    pub min_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub t_eps: Option<usize>,
    pub final_state: NodeStates,
    pub envelope: Option<EnvelopeCheck>,
    pub mass: Option<MassCheck>,
}

impl RunTrace {
    /// `k,consensus_error,spread,min_y`; `min_y` is empty outside push-sum.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,consensus_error,spread,min_y\n");
        for r in &self.rows {
            let min_y = r.min_y.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", r.k, r.consensus_error, r.spread, min_y));
        }
        s
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.consensus_error).collect()
    }
}

/// Default iteration cap for unaccelerated runs: `10 n^2 ln(1/eps)`.
pub fn default_cap(n: usize, eps: f64) -> usize {
    let c = 10.0 * (n * n) as f64 * (1.0 / eps).ln().max(1.0);
    (c.ceil() as usize).max(100)
}

/// Default iteration cap for accelerated runs: `100 U ln(1/eps)`.
pub fn default_accelerated_cap(u_bound: usize, eps: f64) -> usize {
    let c = 100.0 * u_bound as f64 * (1.0 / eps).ln().max(1.0);
    (c.ceil() as usize).max(100)
}

/// Weight matrices for a sequence, cached across repeats of periodic
/// sequences.
pub(crate) struct MatrixSource<'a> {
    seq: &'a GraphSequence,
    rule: &'a dyn MixingRule,
    cache: Vec<Option<MixingMatrix>>,
    scratch: Option<MixingMatrix>,
}

impl<'a> MatrixSource<'a> {
    pub(crate) fn new(seq: &'a GraphSequence, rule: &'a dyn MixingRule) -> Self {
        let slots = seq.period().filter(|&p| p <= 4096).unwrap_or(0);
        MatrixSource {
            seq,
            rule,
            cache: vec![None; slots],
            scratch: None,
        }
    }

    pub(crate) fn get(&mut self, k: usize) -> Result<&MixingMatrix> {
        if self.cache.is_empty() {
            self.scratch = Some(self.rule.build(&self.seq.snapshot(k))?);
            return Ok(self.scratch.as_ref().expect("just set"));
        }
        let slot = k % self.cache.len();
        if self.cache[slot].is_none() {
            self.cache[slot] = Some(self.rule.build(&self.seq.snapshot(k))?);
        }
        Ok(self.cache[slot].as_ref().expect("just set"))
    }

    /// Every distinct matrix of a periodic sequence (`None` if aperiodic).
    pub(crate) fn distinct(&mut self) -> Result<Option<Vec<MixingMatrix>>> {
        if self.cache.is_empty() {
            return Ok(None);
        }
        let p = self.cache.len();
        let mut out = Vec::with_capacity(p);
        for k in 0..p {
            out.push(self.get(k)?.clone());
        }
        Ok(Some(out))
    }
}

fn check_n(seq_n: usize, x: &NodeStates) -> Result<()> {
    if x.n() != seq_n {
        return Err(Error::DimensionMismatch {
            expected: seq_n,
            got: x.n(),
        });
    }
    if !x.all_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// `x^{k+1} = A^k x^k` until the relative deviation reaches `eps` or `cap`
/// steps have run.
pub fn run_consensus(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    x0: &NodeStates,
    eps: f64,
    cap: usize,
) -> Result<RunTrace> {
    check_n(seq.n(), x0)?;
    check_eps(eps)?;
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be >= 1".into()));
    }
    let mean0 = x0.mean();
    let e0 = x0.deviation_norm(&mean0);
    let mut x = x0.clone();
    let mut next = x0.clone();
    let mut rows = Vec::new();
    let mut source = MatrixSource::new(seq, rule);
    let mut k = 0;
    loop {
        let err = x.deviation_norm(&mean0);
        rows.push(TraceRow {
            k,
            consensus_error: err,
            spread: x.spread(),
            min_y: None,
        });
        if err <= eps * e0 {
            return Ok(RunTrace {
                rows,
                stop_reason: StopReason::Converged,
                t_eps: Some(k),
                final_state: x,
                envelope: None,
                mass: None,
            });
        }
        if k == cap {
            return Ok(RunTrace {
                rows,
                stop_reason: StopReason::CapReached,
                t_eps: None,
                final_state: x,
                envelope: None,
                mass: None,
            });
        }
        source.get(k)?.mix_into(&x, &mut next);
        std::mem::swap(&mut x, &mut next);
        if !x.all_finite() {
            return Err(Error::NonFinite(k + 1));
        }
        k += 1;
    }
}

/// `x^{k+1} = A^k x^k + Delta^k` for each supplied perturbation. The trace
/// records `||x^k - mean(x^k) 1||`, the deviation from the current mean.
pub fn run_perturbed_consensus(
    seq: &GraphSequence,
    rule: &dyn MixingRule,
    x0: &NodeStates,
    perturbations: &[NodeStates],
) -> Result<RunTrace> {
    check_n(seq.n(), x0)?;
    if rule.class() != Stochasticity::Doubly {
        return Err(Error::NotStochastic {
            expected: Stochasticity::Doubly.to_string(),
            detail: format!("rule {} is {}", rule.name(), rule.class()),
        });
    }
    for d in perturbations {
        x0.same_shape(d)?;
    }
    let mut x = x0.clone();
    let mut next = x0.clone();
    let mut source = MatrixSource::new(seq, rule);
    let mut rows = Vec::with_capacity(perturbations.len() + 1);
    for (k, delta) in perturbations.iter().enumerate() {
        rows.push(TraceRow {
            k,
            consensus_error: x.deviation_norm(&x.mean()),
            spread: x.spread(),
            min_y: None,
        });
        source.get(k)?.mix_into(&x, &mut next);
        for (v, d) in next.as_mut_slice().iter_mut().zip(delta.as_slice()) {
            *v += d;
        }
        std::mem::swap(&mut x, &mut next);
    }
    rows.push(TraceRow {
        k: perturbations.len(),
        consensus_error: x.deviation_norm(&x.mean()),
        spread: x.spread(),
        min_y: None,
    });
    Ok(RunTrace {
        rows,
        stop_reason: StopReason::Completed,
        t_eps: None,
        final_state: x,
        envelope: None,
        mass: None,
    })
}

/// Momentum coefficient `1 - 2/(9U + 1)`.
pub fn momentum(u_bound: usize) -> f64 {
    1.0 - 2.0 / (9.0 * u_bound as f64 + 1.0)
}

/// Accelerated averaging on a fixed connected undirected graph, given an
/// upper bound `u_bound >= n` on the node count:
///
/// ```text
/// w^{k+1} = L u^k            (L = lazy Metropolis)
/// u^{k+1} = w^{k+1} + (1 - 2/(9U+1)) (w^{k+1} - w^k),   u^0 = w^0
/// ```
///
/// The trace carries the per-step check of
/// `||w^k - w̄ 1||^2 <= 2 (1 - 1/(9U))^k ||w^0 - w̄ 1||^2`.
pub fn run_accelerated(
    g: &GraphSnapshot,
    u_bound: usize,
    w0: &NodeStates,
    eps: f64,
    cap: usize,
) -> Result<RunTrace> {
    check_n(g.n(), w0)?;
    check_eps(eps)?;
    if u_bound < g.n() {
        return Err(Error::InvalidArgument(format!(
            "node-count bound U = {u_bound} is below n = {}",
            g.n()
        )));
    }
    if g.is_directed() {
        return Err(Error::DirectedGraph("accelerated consensus"));
    }
    if !g.is_strongly_connected() {
        return Err(Error::Disconnected);
    }
    let lazy = lazy_metropolis(g)?;
    let beta = momentum(u_bound);
    let rate = 1.0 - 1.0 / (9.0 * u_bound as f64);
    let mean0 = w0.mean();
    let e0 = w0.deviation_norm(&mean0);
    let e0_sq = e0 * e0;
    let mut w = w0.clone();
    let mut u = w0.clone();
    let mut w_next = w0.clone();
    let mut envelope = EnvelopeCheck::new();
    let mut rows = Vec::new();
    let mut k = 0usize;
    loop {
        let err = w.deviation_norm(&mean0);
        envelope.record(err * err, 2.0 * rate.powi(k as i32) * e0_sq, ENVELOPE_SLACK * e0_sq);
        rows.push(TraceRow {
            k,
            consensus_error: err,
            spread: w.spread(),
            min_y: None,
        });
        let done = err <= eps * e0;
        if done || k == cap {
            return Ok(RunTrace {
                rows,
                stop_reason: if done { StopReason::Converged } else { StopReason::CapReached },
                t_eps: done.then_some(k),
                final_state: w,
                envelope: Some(envelope),
                mass: None,
            });
        }
        lazy.mix_into(&u, &mut w_next);
        for ((uv, wn), wv) in u
            .as_mut_slice()
            .iter_mut()
            .zip(w_next.as_slice())
            .zip(w.as_slice())
        {
            *uv = wn + beta * (wn - wv);
        }
        std::mem::swap(&mut w, &mut w_next);
        k += 1;
    }
}

/// Push-sum: `x^{k+1} = A^k x^k`, `y^{k+1} = A^k y^k` with column-stochastic
/// push-sum weights and `y^0 = 1`. The ratios `z = x ./ y` approach the
/// initial average. Stops once `max_i |z_i - mean(x^0)| <= eps * spread(x^0)`.
pub fn run_push_sum(seq: &GraphSequence, x0: &NodeStates, eps: f64, cap: usize) -> Result<RunTrace> {
    check_n(seq.n(), x0)?;
    check_eps(eps)?;
    let n = seq.n();
    let d = x0.dim();
    let target = x0.mean();
    let sum0 = x0.sum();
    let scale: Vec<f64> = (0..d)
        .map(|c| x0.column(c).iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE))
        .collect();
    let threshold = eps * x0.spread();

    let mut x = x0.clone();
    let mut y = NodeStates::replicated(n, &[1.0]);
    let mut x_next = x.clone();
    let mut y_next = y.clone();
    let mut z = x.clone();
    let rule = PushSumRule;
    let mut source = MatrixSource::new(seq, &rule);
    let mut mass = MassCheck {
        max_x_drift: 0.0,
        max_y_drift: 0.0,
        min_y: 1.0,
    };
    let mut rows = Vec::new();
    let mut k = 0usize;
    loop {
        let err = ratio_error(&z, &target);
        let min_y = y.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(TraceRow {
            k,
            consensus_error: err,
            spread: z.spread(),
            min_y: Some(min_y),
        });
        let done = err <= threshold;
        if done || k == cap {
            return Ok(RunTrace {
                rows,
                stop_reason: if done { StopReason::Converged } else { StopReason::CapReached },
                t_eps: done.then_some(k),
                final_state: z,
                envelope: None,
                mass: Some(mass),
            });
        }
        let a = source.get(k)?;
        a.mix_into(&x, &mut x_next);
        a.mix_into(&y, &mut y_next);
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut y, &mut y_next);
        k += 1;

        for (i, &yi) in y.as_slice().iter().enumerate() {
            if !(yi >= MIN_MASS) {
                return Err(Error::MassUnderflow {
                    step: k,
                    node: i,
                    value: yi,
                });
            }
            mass.min_y = mass.min_y.min(yi);
        }
        let sx = x.sum();
        for c in 0..d {
            mass.max_x_drift = mass.max_x_drift.max((sx[c] - sum0[c]).abs() / scale[c]);
        }
        let sy: f64 = y.as_slice().iter().sum();
        mass.max_y_drift = mass.max_y_drift.max((sy - n as f64).abs() / n as f64);
        for i in 0..n {
            let yi = y.node(i)[0];
            for (zv, xv) in z.node_mut(i).iter_mut().zip(x.node(i)) {
                *zv = xv / yi;
            }
        }
    }
}

fn ratio_error(z: &NodeStates, target: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..z.n() {
        for (v, t) in z.node(i).iter().zip(target) {
            worst = worst.max((v - t).abs());
        }
    }
    worst
}

pub(crate) struct PushSumRule;

impl MixingRule for PushSumRule {
    fn build(&self, g: &GraphSnapshot) -> Result<MixingMatrix> {
        push_sum_matrix(g)
    }

    fn class(&self) -> Stochasticity {
        Stochasticity::Column
    }

    fn name(&self) -> String {
        "push-sum".into()
    }
}
