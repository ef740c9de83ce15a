//! Local convex objectives `f_i`, per-node constraint sets `X_i`, and the
//! ground truth `(f*, x*)` of `f = (1/n) sum_i f_i` over `X = ∩ X_i`.
//!
//! Subgradient tie-break: at a kink the returned element is 0 when 0 is in
//! the subdifferential and the midpoint of the subdifferential otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{dist2, dot, norm2};

/// Ridge term added to every logistic objective.
pub const LOGISTIC_RIDGE: f64 = 1e-3;
/// First-order optimality tolerance for the ground-truth oracle.
pub const OPTIMALITY_TOL: f64 = 1e-10;

const MAX_LOGISTIC_POINTS: usize = 32;
const MAX_LOGISTIC_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LocalObjective {
    /// `(a/2) ||x - b||^2`
    Quadratic { a: f64, b: Vec<f64> },
    /// `||x - b||_2`
    Absolute { b: Vec<f64> },
    /// `h(||x - b||)` with `h(r) = r^2/(2 delta)` for `r <= delta`, else `r - delta/2`.
    Huber { b: Vec<f64>, delta: f64 },
    /// `(1/m) sum_j ln(1 + exp(-y_j a_j^T x)) + (ridge/2) ||x||^2`, labels `±1`.
    Logistic {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        ridge: f64,
    },
}

impl LocalObjective {
    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::Quadratic { b, .. }
            | LocalObjective::Absolute { b }
            | LocalObjective::Huber { b, .. } => b.len(),
            LocalObjective::Logistic { features, .. } => features.first().map_or(0, Vec::len),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LocalObjective::Quadratic { .. } => "quadratic",
            LocalObjective::Absolute { .. } => "absolute",
            LocalObjective::Huber { .. } => "huber",
            LocalObjective::Logistic { .. } => "logistic",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            LocalObjective::Quadratic { a, b } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return bad(format!("quadratic curvature must be positive and finite, got {a}"));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return bad("quadratic center must be finite".into());
                }
            }
            LocalObjective::Absolute { b } => {
                if b.iter().any(|v| !v.is_finite()) {
                    return bad("absolute center must be finite".into());
                }
            }
            LocalObjective::Huber { b, delta } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    return bad(format!("huber delta must be positive, got {delta}"));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return bad("huber center must be finite".into());
                }
            }
            LocalObjective::Logistic {
                features,
                labels,
                ridge,
            } => {
                if features.is_empty() || features.len() != labels.len() {
                    return bad("logistic data needs one label per feature row".into());
                }
                let d = features[0].len();
                if d == 0 || features.iter().any(|r| r.len() != d) {
                    return bad("logistic feature rows must share a positive dimension".into());
                }
                if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                    return bad("logistic labels must be +1 or -1".into());
                }
                if !(*ridge > 0.0) {
                    return bad("logistic ridge must be positive".into());
                }
            }
        }
        if self.dim() == 0 {
            return bad("objective dimension must be positive".into());
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LocalObjective::Quadratic { a, b } => {
                let r = dist2(x, b);
                0.5 * a * r * r
            }
            LocalObjective::Absolute { b } => dist2(x, b),
            LocalObjective::Huber { b, delta } => huber(dist2(x, b), *delta),
            LocalObjective::Logistic {
                features,
                labels,
                ridge,
            } => {
                let m = features.len() as f64;
                let loss: f64 = features
                    .iter()
                    .zip(labels)
                    .map(|(a, y)| softplus(-y * dot(a, x)))
                    .sum();
                let r = norm2(x);
                loss / m + 0.5 * ridge * r * r
            }
        }
    }

    /// A subgradient at `x`; the gradient wherever `f_i` is differentiable.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LocalObjective::Quadratic { a, b } => x.iter().zip(b).map(|(xv, bv)| a * (xv - bv)).collect(),
            LocalObjective::Absolute { b } => {
                let r = dist2(x, b);
                if r == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().zip(b).map(|(xv, bv)| (xv - bv) / r).collect()
                }
            }
            LocalObjective::Huber { b, delta } => {
                let r = dist2(x, b);
                let scale = if r <= *delta { 1.0 / delta } else { 1.0 / r };
                x.iter().zip(b).map(|(xv, bv)| (xv - bv) * scale).collect()
            }
            LocalObjective::Logistic {
                features,
                labels,
                ridge,
            } => {
                let m = features.len() as f64;
                let mut g: Vec<f64> = x.iter().map(|v| ridge * v).collect();
                for (a, y) in features.iter().zip(labels) {
                    let s = -y * sigmoid(-y * dot(a, x)) / m;
                    for (gv, av) in g.iter_mut().zip(a) {
                        *gv += s * av;
                    }
                }
                g
            }
        }
    }

    /// Global bound on subgradient norms, if one exists.
    pub fn subgradient_bound(&self) -> Option<f64> {
        match self {
            LocalObjective::Absolute { .. } | LocalObjective::Huber { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Lipschitz constant of the gradient for the smooth strongly convex kinds.
    pub fn smoothness(&self) -> Option<f64> {
        match self {
            LocalObjective::Quadratic { a, .. } => Some(*a),
            LocalObjective::Logistic { features, ridge, .. } => {
                let m = features.len() as f64;
                let s: f64 = features.iter().map(|a| dot(a, a)).sum();
                Some(0.25 * s / m + ridge)
            }
            _ => None,
        }
    }

    /// One-sided derivatives `(f'(x-), f'(x+))` of a scalar objective.
    pub(crate) fn one_sided(&self, x: f64) -> (f64, f64) {
        match self {
            LocalObjective::Absolute { b } => {
                let b = b[0];
                if x > b {
                    (1.0, 1.0)
                } else if x < b {
                    (-1.0, -1.0)
                } else {
                    (-1.0, 1.0)
                }
            }
            _ => {
                let g = self.subgradient(&[x])[0];
                (g, g)
            }
        }
    }

    /// Points where a scalar objective is not differentiable.
    fn kinks(&self) -> Option<f64> {
        match self {
            LocalObjective::Absolute { b } => Some(b[0]),
            _ => None,
        }
    }

    /// A minimizer of this objective alone, when it has a closed form.
    fn center(&self) -> Vec<f64> {
        match self {
            LocalObjective::Quadratic { b, .. }
            | LocalObjective::Absolute { b }
            | LocalObjective::Huber { b, .. } => b.clone(),
            LocalObjective::Logistic { .. } => vec![0.0; self.dim()],
        }
    }
}

fn huber(r: f64, delta: f64) -> f64 {
    if r <= delta {
        r * r / (2.0 * delta)
    } else {
        r - delta / 2.0
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Convex set `X_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum Constraint {
    #[default]
    None,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// `a^T x <= b`
    Halfspace { a: Vec<f64>, b: f64 },
}

impl Constraint {
    pub fn is_none(&self) -> bool {
        matches!(self, Constraint::None)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let mismatch = |got: usize| {
            Err(Error::DimensionMismatch {
                expected: dim,
                got,
            })
        };
        match self {
            Constraint::None => Ok(()),
            Constraint::Box { lo, hi } => {
                if lo.len() != dim {
                    return mismatch(lo.len());
                }
                if hi.len() != dim {
                    return mismatch(hi.len());
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidArgument("box needs lo <= hi".into()));
                }
                Ok(())
            }
            Constraint::Ball { center, radius } => {
                if center.len() != dim {
                    return mismatch(center.len());
                }
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidArgument("ball radius must be finite and nonnegative".into()));
                }
                Ok(())
            }
            Constraint::Halfspace { a, b } => {
                if a.len() != dim {
                    return mismatch(a.len());
                }
                if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("halfspace must be finite".into()));
                }
                if norm2(a) == 0.0 && *b < 0.0 {
                    return Err(Error::EmptyIntersection);
                }
                Ok(())
            }
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Constraint::None => x.to_vec(),
            Constraint::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            Constraint::Ball { center, radius } => {
                let r = dist2(x, center);
                if r <= *radius {
                    x.to_vec()
                } else {
                    center
                        .iter()
                        .zip(x)
                        .map(|(c, v)| c + radius * (v - c) / r)
                        .collect()
                }
            }
            Constraint::Halfspace { a, b } => {
                let excess = dot(a, x) - b;
                let aa = dot(a, a);
                if excess <= 0.0 || aa == 0.0 {
                    x.to_vec()
                } else {
                    x.iter().zip(a).map(|(v, av)| v - excess / aa * av).collect()
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Constraint::None => true,
            Constraint::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            Constraint::Ball { center, radius } => dist2(x, center) <= radius + tol,
            Constraint::Halfspace { a, b } => dot(a, x) <= b + tol * norm2(a).max(1.0),
        }
    }

    /// The set as a closed interval when `d = 1`.
    fn interval(&self) -> (f64, f64) {
        match self {
            Constraint::None => (f64::NEG_INFINITY, f64::INFINITY),
            Constraint::Box { lo, hi } => (lo[0], hi[0]),
            Constraint::Ball { center, radius } => (center[0] - radius, center[0] + radius),
            Constraint::Halfspace { a, b } => {
                let (a, b) = (a[0], *b);
                if a > 0.0 {
                    (f64::NEG_INFINITY, b / a)
                } else if a < 0.0 {
                    (b / a, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub f_star: f64,
    pub x_star: Vec<f64>,
}

/// `f = (1/n) sum_i f_i` over `X = ∩ X_i`, with ground truth computed at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSet {
    locals: Vec<LocalObjective>,
    constraints: Vec<Constraint>,
    dim: usize,
    optimum: Optimum,
}

impl ObjectiveSet {
    /// `constraints` is empty (unconstrained), a single set shared by every
    /// node, or one set per node.
    pub fn new(locals: Vec<LocalObjective>, constraints: Vec<Constraint>) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::InvalidArgument("objective set needs at least one node".into()));
        }
        let dim = locals[0].dim();
        for f in &locals {
            f.validate()?;
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: f.dim(),
                });
            }
        }
        let n = locals.len();
        let constraints = match constraints.len() {
            0 => Vec::new(),
            1 => vec![constraints[0].clone(); n],
            len if len == n => constraints,
            len => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                })
            }
        };
        for c in &constraints {
            c.validate(dim)?;
        }
        let constraints = if constraints.iter().all(Constraint::is_none) {
            Vec::new()
        } else {
            constraints
        };
        let mut set = ObjectiveSet {
            locals,
            constraints,
            dim,
            optimum: Optimum {
                f_star: f64::NAN,
                x_star: Vec::new(),
            },
        };
        set.optimum = aggregate_optimum(&set)?;
        Ok(set)
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn locals(&self) -> &[LocalObjective] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &LocalObjective {
        &self.locals[i]
    }

    pub fn has_constraints(&self) -> bool {
        !self.constraints.is_empty()
    }

    pub fn constraint(&self, i: usize) -> &Constraint {
        static NONE: Constraint = Constraint::None;
        self.constraints.get(i).unwrap_or(&NONE)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Common subgradient bound `L`, present only when every local has one.
    pub fn subgradient_bound(&self) -> Option<f64> {
        self.locals
            .iter()
            .map(LocalObjective::subgradient_bound)
            .try_fold(0.0f64, |acc, l| l.map(|l| acc.max(l)))
    }

    /// Largest gradient Lipschitz constant, present only for smooth kinds.
    pub fn smoothness(&self) -> Option<f64> {
        self.locals
            .iter()
            .map(LocalObjective::smoothness)
            .try_fold(0.0f64, |acc, l| l.map(|l| acc.max(l)))
    }

    pub fn f_star(&self) -> f64 {
        self.optimum.f_star
    }

    pub fn x_star(&self) -> &[f64] {
        &self.optimum.x_star
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    /// `f(x) = (1/n) sum_i f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.locals.iter().map(|f| f.value(x)).sum::<f64>() / self.n() as f64
    }

    /// `f(x) - f*`.
    pub fn gap(&self, x: &[f64]) -> f64 {
        self.value(x) - self.optimum.f_star
    }

    /// Subgradient of `f`, the average of the per-node subgradients.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for f in &self.locals {
            for (acc, v) in g.iter_mut().zip(f.subgradient(x)) {
                *acc += v;
            }
        }
        for v in &mut g {
            *v /= self.n() as f64;
        }
        g
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| c.contains(x, tol))
    }

    fn interval(&self) -> (f64, f64) {
        self.constraints.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), c| {
            let (l, h) = c.interval();
            (lo.max(l), hi.min(h))
        })
    }

    fn one_sided(&self, x: f64) -> (f64, f64) {
        let (mut l, mut r) = (0.0, 0.0);
        for f in &self.locals {
            let (a, b) = f.one_sided(x);
            l += a;
            r += b;
        }
        let n = self.n() as f64;
        (l / n, r / n)
    }

    /// The minimizer set `[lo, hi]` of a scalar problem (a single point
    /// unless `f` is flat at the bottom, e.g. absolutes with even `n`).
    /// `None` when `d > 1`.
    pub fn argmin_interval(&self) -> Option<(f64, f64)> {
        if self.dim != 1 {
            return None;
        }
        let x = self.optimum.x_star[0];
        let (lo_x, hi_x) = self.interval();
        let width = 1.0
            + self
                .locals
                .iter()
                .map(|f| (f.center()[0] - x).abs())
                .fold(0.0, f64::max);
        if self.locals.iter().any(|f| matches!(f, LocalObjective::Quadratic { .. } | LocalObjective::Logistic { .. })) {
            return Some((x, x));
        }
        let flat_left = |y: f64| self.one_sided(y).1 >= 0.0;
        let flat_right = |y: f64| self.one_sided(y).0 <= 0.0;
        let snap = |y: f64| {
            self.locals
                .iter()
                .filter_map(LocalObjective::kinks)
                .find(|k| (k - y).abs() <= 1e-9 * (1.0 + k.abs()))
                .unwrap_or(y)
        };
        let edge = |bound: f64, toward: f64, flat: &dyn Fn(f64) -> bool| {
            if flat(bound) {
                return bound;
            }
            // `toward` is flat, `far` is not.
            let (mut inner, mut far) = (toward, bound);
            for _ in 0..200 {
                let mid = 0.5 * (inner + far);
                if mid == inner || mid == far {
                    break;
                }
                if flat(mid) {
                    inner = mid;
                } else {
                    far = mid;
                }
            }
            snap(inner)
        };
        let lo = edge((x - width).max(lo_x), x, &flat_left);
        let hi = edge((x + width).min(hi_x), x, &flat_right);
        Some((lo.min(x), hi.max(x)))
    }

    /// Distance from a scalar point to [`Self::argmin_interval`].
    pub fn distance_to_argmin(&self, x: f64) -> Option<f64> {
        self.argmin_interval()
            .map(|(lo, hi)| if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 })
    }
}

/// Ground truth `(f*, x*)`.
///
/// Scalar sets use closed forms where available (weighted mean of
/// quadratics, median of absolutes) and bisection on the one-sided
/// derivatives over `X` otherwise. In higher dimension, quadratics use the
/// projection of the weighted mean onto `X` and logistic sets a long
/// gradient-descent run.
pub fn aggregate_optimum(set: &ObjectiveSet) -> Result<Optimum> {
    let x_star = if set.dim == 1 {
        scalar_optimum(set)?
    } else {
        vector_optimum(set)?
    };
    Ok(Optimum {
        f_star: set.value(&x_star),
        x_star,
    })
}

fn all_kind(set: &ObjectiveSet, kind: &str) -> bool {
    set.locals.iter().all(|f| f.kind() == kind)
}

fn weighted_center(set: &ObjectiveSet) -> Vec<f64> {
    let mut num = vec![0.0; set.dim];
    let mut den = 0.0;
    for f in &set.locals {
        if let LocalObjective::Quadratic { a, b } = f {
            for (acc, v) in num.iter_mut().zip(b) {
                *acc += a * v;
            }
            den += a;
        }
    }
    num.iter().map(|v| v / den).collect()
}

fn scalar_optimum(set: &ObjectiveSet) -> Result<Vec<f64>> {
    let (lo_x, hi_x) = set.interval();
    if lo_x > hi_x {
        return Err(Error::EmptyIntersection);
    }
    let candidate = if all_kind(set, "quadratic") {
        Some(weighted_center(set)[0].clamp(lo_x, hi_x))
    } else if all_kind(set, "absolute") {
        let b: Vec<f64> = set.locals.iter().map(|f| f.center()[0]).collect();
        Some(crate::stats::median(&b).clamp(lo_x, hi_x))
    } else {
        None
    };
    let x = match candidate {
        Some(x) if scalar_optimal(set, x, lo_x, hi_x) => x,
        _ => bisect(set, lo_x, hi_x)?,
    };
    if !scalar_optimal(set, x, lo_x, hi_x) {
        let (l, r) = set.one_sided(x);
        return Err(Error::Optimality(format!(
            "oracle point {x} has one-sided derivatives ({l}, {r}) on [{lo_x}, {hi_x}]"
        )));
    }
    Ok(vec![x])
}

fn scalar_optimal(set: &ObjectiveSet, x: f64, lo: f64, hi: f64) -> bool {
    let (l, r) = set.one_sided(x);
    (r >= -OPTIMALITY_TOL || x >= hi) && (l <= OPTIMALITY_TOL || x <= lo)
}

fn bisect(set: &ObjectiveSet, lo_x: f64, hi_x: f64) -> Result<f64> {
    let right = |x: f64| set.one_sided(x).1;
    if lo_x.is_finite() && right(lo_x) >= 0.0 {
        return Ok(lo_x);
    }
    if hi_x.is_finite() && set.one_sided(hi_x).0 <= 0.0 {
        return Ok(hi_x);
    }
    let centers: Vec<f64> = set.locals.iter().map(|f| f.center()[0]).collect();
    let guess = (centers.iter().sum::<f64>() / centers.len() as f64).clamp(lo_x, hi_x);
    let mut width = 1.0 + centers.iter().map(|c| (c - guess).abs()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (guess, guess);
    for _ in 0..200 {
        lo = (guess - width).max(lo_x);
        hi = (guess + width).min(hi_x);
        if right(lo) < 0.0 && right(hi) >= 0.0 {
            break;
        }
        width *= 2.0;
    }
    if !(right(lo) < 0.0 && right(hi) >= 0.0) {
        return Err(Error::Optimality("objective appears unbounded below on X".into()));
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if right(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The sign change may straddle a kink; land on it exactly if so.
    for k in set.locals.iter().filter_map(LocalObjective::kinks) {
        if (k - hi).abs() <= 1e-9 * (1.0 + k.abs()) && k >= lo_x && k <= hi_x && scalar_optimal(set, k, lo_x, hi_x) {
            return Ok(k);
        }
    }
    Ok(hi)
}

fn vector_optimum(set: &ObjectiveSet) -> Result<Vec<f64>> {
    if all_kind(set, "quadratic") {
        let center = weighted_center(set);
        if !set.has_constraints() {
            return Ok(center);
        }
        // f is isotropic around the weighted center, so x* is its
        // projection onto the intersection.
        let x = dykstra(&set.constraints, &center)?;
        return Ok(x);
    }
    if all_kind(set, "logistic") && !set.has_constraints() {
        return logistic_oracle(set);
    }
    let kind = set
        .locals
        .iter()
        .map(LocalObjective::kind)
        .find(|k| *k != "quadratic")
        .unwrap_or("constrained");
    Err(Error::UnsupportedObjective {
        kind: kind.to_string(),
        algorithm: "ground-truth oracle for d > 1",
    })
}

/// Projection onto `∩ X_i` by Dykstra's alternating projections.
fn dykstra(sets: &[Constraint], x0: &[f64]) -> Result<Vec<f64>> {
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut incr = vec![vec![0.0; d]; sets.len()];
    for _ in 0..100_000 {
        let prev = x.clone();
        for (c, p) in sets.iter().zip(incr.iter_mut()) {
            let shifted: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
            let y = c.project(&shifted);
            for ((pv, s), yv) in p.iter_mut().zip(&shifted).zip(&y) {
                *pv = s - yv;
            }
            x = y;
        }
        if dist2(&x, &prev) <= 1e-15 * (1.0 + norm2(&x)) && sets.iter().all(|c| c.contains(&x, 1e-10)) {
            return Ok(x);
        }
    }
    if sets.iter().all(|c| c.contains(&x, 1e-8)) {
        Ok(x)
    } else {
        Err(Error::EmptyIntersection)
    }
}

fn logistic_oracle(set: &ObjectiveSet) -> Result<Vec<f64>> {
    let step = 1.0 / set.smoothness().unwrap_or(1.0);
    let mut x = vec![0.0; set.dim];
    for _ in 0..5_000_000 {
        let g = set.subgradient(&x);
        if norm2(&g) <= 1e-12 {
            return Ok(x);
        }
        for (v, gv) in x.iter_mut().zip(&g) {
            *v -= step * gv;
        }
    }
    Err(Error::Optimality("logistic gradient descent did not reach tolerance".into()))
}

/// A per-node center given as a scalar or a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Point {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Point::Scalar(v) => vec![*v],
            Point::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalKind {
    Quadratic,
    Absolute,
    Huber,
    Logistic,
}

fn default_scale() -> f64 {
    5.0
}

fn default_delta() -> f64 {
    1.0
}

/// Config form of an objective set, e.g. `{"kind":"absolute","b":[1,2,5]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        b: Vec<Point>,
    },
    Absolute {
        b: Vec<Point>,
    },
    Huber {
        b: Vec<Point>,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Logistic {
        n: usize,
        dim: usize,
        points: usize,
        seed: u64,
    },
    /// Seeded random centers in `[-scale, scale]^dim` (and curvatures in
    /// `[0.5, 2]` for quadratics).
    Random {
        local: LocalKind,
        n: usize,
        #[serde(default = "one")]
        dim: usize,
        seed: u64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Explicit list of locals.
    Explicit {
        locals: Vec<LocalObjective>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    #[serde(flatten)]
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Constraint>,
}

impl ObjectiveConfig {
    pub fn build(&self) -> Result<ObjectiveSet> {
        ObjectiveSet::new(self.objective.locals()?, self.constraints.clone())
    }
}

impl ObjectiveSpec {
    pub fn locals(&self) -> Result<Vec<LocalObjective>> {
        Ok(match self {
            ObjectiveSpec::Quadratic { a, b } => {
                let a = a.clone().unwrap_or_else(|| vec![1.0; b.len()]);
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch {
                        expected: b.len(),
                        got: a.len(),
                    });
                }
                a.iter()
                    .zip(b)
                    .map(|(a, b)| LocalObjective::Quadratic { a: *a, b: b.to_vec() })
                    .collect()
            }
            ObjectiveSpec::Absolute { b } => b.iter().map(|b| LocalObjective::Absolute { b: b.to_vec() }).collect(),
            ObjectiveSpec::Huber { b, delta } => b
                .iter()
                .map(|b| LocalObjective::Huber {
                    b: b.to_vec(),
                    delta: *delta,
                })
                .collect(),
            ObjectiveSpec::Logistic { n, dim, points, seed } => logistic_locals(*n, *dim, *points, *seed)?,
            ObjectiveSpec::Random {
                local,
                n,
                dim,
                seed,
                scale,
            } => {
                if *local == LocalKind::Logistic {
                    logistic_locals(*n, *dim, 16, *seed)?
                } else {
                    random_locals(*local, *n, *dim, *seed, *scale)
                }
            }
            ObjectiveSpec::Explicit { locals } => locals.clone(),
        })
    }
}

fn random_locals(kind: LocalKind, n: usize, dim: usize, seed: u64, scale: f64) -> Vec<LocalObjective> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..=scale)).collect();
            match kind {
                LocalKind::Quadratic => LocalObjective::Quadratic {
                    a: rng.random_range(0.5..=2.0),
                    b,
                },
                LocalKind::Absolute => LocalObjective::Absolute { b },
                LocalKind::Huber => LocalObjective::Huber { b, delta: 1.0 },
                LocalKind::Logistic => unreachable!("handled by logistic_locals"),
            }
        })
        .collect()
}

/// Small synthetic classification problems, one per node, drawn around a
/// shared seeded separator with a few flipped labels.
pub fn logistic_locals(n: usize, dim: usize, points: usize, seed: u64) -> Result<Vec<LocalObjective>> {
    if dim == 0 || dim > MAX_LOGISTIC_DIM || points == 0 || points > MAX_LOGISTIC_POINTS {
        return Err(Error::InvalidArgument(format!(
            "logistic data is limited to 1..={MAX_LOGISTIC_POINTS} points in 1..={MAX_LOGISTIC_DIM} dimensions"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok((0..n)
        .map(|_| {
            let features: Vec<Vec<f64>> = (0..points)
                .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect();
            let labels = features
                .iter()
                .map(|a| {
                    let y = if dot(a, &w) >= 0.0 { 1.0 } else { -1.0 };
                    if rng.random_bool(0.1) {
                        -y
                    } else {
                        y
                    }
                })
                .collect();
            LocalObjective::Logistic {
                features,
                labels,
                ridge: LOGISTIC_RIDGE,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(a: f64, b: f64) -> LocalObjective {
        LocalObjective::Quadratic { a, b: vec![b] }
    }

    fn abs(b: f64) -> LocalObjective {
        LocalObjective::Absolute { b: vec![b] }
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(quad(2.0, 1.0).subgradient(&[3.0]), vec![4.0]);
        assert_eq!(abs(0.0).subgradient(&[0.0]), vec![0.0]);
        assert_eq!(abs(2.0).subgradient(&[5.0]), vec![1.0]);
    }

    #[test]
    fn projection_examples() {
        let bx = Constraint::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        };
        assert_eq!(bx.project(&[3.0]), vec![1.0]);
        let ball = Constraint::Ball {
            center: vec![0.0, 0.0],
            radius: 2.0,
        };
        assert_eq!(ball.project(&[0.5, -1.0]), vec![0.5, -1.0]);
        let h = Constraint::Halfspace { a: vec![1.0, 1.0], b: 1.0 };
        let p = h.project(&[2.0, 2.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_pair_optimum() {
        // f(x) = (1/2)[(x+1)^2/2 + (x-1)^2/2], minimized at 0 with value 1/2.
        let s = ObjectiveSet::new(vec![quad(1.0, -1.0), quad(1.0, 1.0)], vec![]).unwrap();
        assert_eq!(s.x_star(), &[0.0]);
        assert!((s.f_star() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absolutes_use_median() {
        let s = ObjectiveSet::new(vec![abs(1.0), abs(2.0), abs(5.0)], vec![]).unwrap();
        assert_eq!(s.x_star(), &[2.0]);
        assert!((s.f_star() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_objective_is_its_own_minimizer() {
        let s = ObjectiveSet::new(vec![quad(3.0, 1.7)], vec![]).unwrap();
        assert_eq!(s.x_star(), &[1.7]);
        let h = ObjectiveSet::new(vec![LocalObjective::Huber { b: vec![-0.4], delta: 0.5 }], vec![]).unwrap();
        assert!((h.x_star()[0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn constrained_minimizer_on_the_boundary() {
        let bx = Constraint::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        };
        let s = ObjectiveSet::new(vec![quad(1.0, 2.0), abs(2.0)], vec![bx]).unwrap();
        assert_eq!(s.x_star(), &[1.0]);
    }

    #[test]
    fn intersection_of_node_boxes() {
        let c = vec![
            Constraint::Box {
                lo: vec![0.0],
                hi: vec![2.0],
            },
            Constraint::Box {
                lo: vec![1.0],
                hi: vec![3.0],
            },
        ];
        let s = ObjectiveSet::new(vec![quad(1.0, 0.0), quad(1.0, 0.0)], c).unwrap();
        assert_eq!(s.x_star(), &[1.0]);
    }

    #[test]
    fn empty_intersection_rejected() {
        let c = vec![
            Constraint::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            },
            Constraint::Box {
                lo: vec![2.0],
                hi: vec![3.0],
            },
        ];
        assert_eq!(
            ObjectiveSet::new(vec![quad(1.0, 0.0), quad(1.0, 0.0)], c).unwrap_err(),
            Error::EmptyIntersection
        );
    }

    #[test]
    fn mixed_kinds_bisect_to_a_verified_point() {
        let s = ObjectiveSet::new(
            vec![quad(1.0, 0.0), abs(3.0), LocalObjective::Huber { b: vec![1.0], delta: 0.3 }],
            vec![],
        )
        .unwrap();
        let (l, r) = s.one_sided(s.x_star()[0]);
        assert!(l <= OPTIMALITY_TOL && r >= -OPTIMALITY_TOL);
        // Sanity: the value is no larger than at nearby points.
        let x = s.x_star()[0];
        assert!(s.value(&[x]) <= s.value(&[x + 1e-3]) && s.value(&[x]) <= s.value(&[x - 1e-3]));
    }

    #[test]
    fn bisection_lands_on_kinks() {
        // Median of the absolutes is 2 and the tiny quadratic pulls left by
        // less than the kink can absorb.
        let s = ObjectiveSet::new(vec![abs(1.0), abs(2.0), abs(5.0), quad(1e-3, 0.0)], vec![]).unwrap();
        assert_eq!(s.x_star(), &[2.0]);
    }

    #[test]
    fn halfspace_in_one_dimension() {
        let c = vec![Constraint::Halfspace { a: vec![-2.0], b: -3.0 }];
        let s = ObjectiveSet::new(vec![quad(1.0, 0.0)], c).unwrap();
        assert_eq!(s.x_star(), &[1.5]);
    }

    #[test]
    fn vector_quadratics_project_the_weighted_center() {
        let locals = vec![
            LocalObjective::Quadratic {
                a: 1.0,
                b: vec![2.0, 0.0],
            },
            LocalObjective::Quadratic {
                a: 3.0,
                b: vec![2.0, 4.0],
            },
        ];
        let free = ObjectiveSet::new(locals.clone(), vec![]).unwrap();
        assert_eq!(free.x_star(), &[2.0, 3.0]);
        let ball = Constraint::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let s = ObjectiveSet::new(locals, vec![ball]).unwrap();
        let r = 13f64.sqrt();
        assert!((s.x_star()[0] - 2.0 / r).abs() < 1e-12);
        assert!((s.x_star()[1] - 3.0 / r).abs() < 1e-12);
    }

    #[test]
    fn vector_absolutes_are_unsupported() {
        let locals = vec![LocalObjective::Absolute { b: vec![0.0, 1.0] }];
        assert!(matches!(
            ObjectiveSet::new(locals, vec![]),
            Err(Error::UnsupportedObjective { .. })
        ));
    }

    #[test]
    fn logistic_oracle_is_stationary() {
        let locals = logistic_locals(3, 2, 8, 11).unwrap();
        let s = ObjectiveSet::new(locals, vec![]).unwrap();
        assert!(norm2(&s.subgradient(s.x_star())) <= 1e-12);
    }

    #[test]
    fn malformed_quadratic_rejected() {
        assert!(ObjectiveSet::new(vec![quad(-1.0, 0.0)], vec![]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"kind":"absolute","b":[1.0,2.0,5.0]}"#;
        let cfg: ObjectiveConfig = serde_json::from_str(text).unwrap();
        assert_eq!(serde_json::to_string(&cfg).unwrap(), text);
        assert_eq!(cfg.build().unwrap().x_star(), &[2.0]);
        let boxed = r#"{"kind":"quadratic","a":[1.0,2.0],"b":[[0.0,1.0],[2.0,2.0]],"constraints":[{"set":"box","lo":[0.0,0.0],"hi":[1.0,1.0]}]}"#;
        let cfg: ObjectiveConfig = serde_json::from_str(boxed).unwrap();
        assert_eq!(serde_json::to_string(&cfg).unwrap(), boxed);
        let s = cfg.build().unwrap();
        assert_eq!(s.x_star(), &[1.0, 1.0]);
    }

    #[test]
    fn flat_bottom_is_an_interval() {
        let abs = |b: &[f64]| {
            let locals = b.iter().map(|&v| LocalObjective::Absolute { b: vec![v] }).collect();
            ObjectiveSet::new(locals, vec![]).unwrap()
        };
        assert_eq!(abs(&[4.0, 1.0, 3.0, 2.0]).argmin_interval(), Some((2.0, 3.0)));
        assert_eq!(abs(&[1.0, 5.0, 2.0]).argmin_interval(), Some((2.0, 2.0)));
        let s = abs(&[0.0, 1.0]);
        assert_eq!(s.distance_to_argmin(1.5), Some(0.5));
        assert_eq!(s.distance_to_argmin(0.3), Some(0.0));
        let q = ObjectiveSet::new(
            vec![
                LocalObjective::Quadratic { a: 1.0, b: vec![0.0] },
                LocalObjective::Quadratic { a: 1.0, b: vec![1.0] },
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(q.argmin_interval(), Some((0.5, 0.5)));
    }
}
