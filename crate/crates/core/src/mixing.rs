//! Weight matrices `A^k` built from graph snapshots.
//!
//! Entry `a_ij` is the weight node `i` puts on the value received from `j`,
//! so `a_ij > 0` requires the arc `j -> i`. Matrices are stored densely and
//! also as sparse rows, which is what the iterations multiply with.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::GraphSnapshot;
use crate::state::NodeStates;

/// Tolerance on row and column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest dimension handled by the exact SVD in [`second_singular_value`].
pub const DENSE_SVD_MAX_N: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stochasticity {
    Row,
    Doubly,
    Column,
}

impl fmt::Display for Stochasticity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stochasticity::Row => "row-stochastic",
            Stochasticity::Doubly => "doubly-stochastic",
            Stochasticity::Column => "column-stochastic",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    class: Stochasticity,
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Validates nonnegativity and the sums required by `class`.
    pub fn new(entries: DMatrix<f64>, class: Stochasticity) -> Result<Self> {
        let m = Self::new_unchecked(entries, class);
        m.validate()?;
        Ok(m)
    }

    /// Skips validation. Meant for fault injection and test doubles; the
    /// iterations will happily run on whatever this holds.
    pub fn new_unchecked(entries: DMatrix<f64>, class: Stochasticity) -> Self {
        let rows = (0..entries.nrows())
            .map(|i| {
                (0..entries.ncols())
                    .filter_map(|j| {
                        let a = entries[(i, j)];
                        (a != 0.0).then_some((j, a))
                    })
                    .collect()
            })
            .collect();
        MixingMatrix {
            entries,
            class,
            rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.entries.ncols() != n {
            return Err(Error::NotStochastic {
                expected: self.class.to_string(),
                detail: format!("matrix is {}x{}", n, self.entries.ncols()),
            });
        }
        if let Some(((i, j), a)) = self
            .entries
            .iter()
            .enumerate()
            .map(|(idx, a)| ((idx % n, idx / n), a))
            .find(|(_, a)| !(**a >= 0.0) || !a.is_finite())
        {
            return Err(Error::NotStochastic {
                expected: self.class.to_string(),
                detail: format!("entry ({i}, {j}) = {a}"),
            });
        }
        let check = |sums: Vec<f64>, what: &str| -> Result<()> {
            match sums.iter().enumerate().find(|(_, s)| (*s - 1.0).abs() > STOCHASTIC_TOL) {
                Some((i, s)) => Err(Error::NotStochastic {
                    expected: self.class.to_string(),
                    detail: format!("{what} {i} sums to {s}"),
                }),
                None => Ok(()),
            }
        };
        if matches!(self.class, Stochasticity::Row | Stochasticity::Doubly) {
            check(self.row_sums(), "row")?;
        }
        if matches!(self.class, Stochasticity::Column | Stochasticity::Doubly) {
            check(self.column_sums(), "column")?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn class(&self) -> Stochasticity {
        self.class
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|(_, a)| a).sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n()];
        for row in &self.rows {
            for &(j, a) in row {
                s[j] += a;
            }
        }
        s
    }

    /// Smallest positive entry.
    pub fn min_positive(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|&(_, a)| a)
            .filter(|&a| a > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// `out = A x`, one coordinate at a time.
    pub fn mix_into(&self, x: &NodeStates, out: &mut NodeStates) {
        let d = x.dim();
        let src = x.as_slice();
        let dst = out.as_mut_slice();
        for (i, row) in self.rows.iter().enumerate() {
            let o = &mut dst[i * d..(i + 1) * d];
            o.iter_mut().for_each(|v| *v = 0.0);
            for &(j, a) in row {
                for (ov, xv) in o.iter_mut().zip(&src[j * d..(j + 1) * d]) {
                    *ov += a * xv;
                }
            }
        }
    }

    pub fn mix(&self, x: &NodeStates) -> NodeStates {
        let mut out = NodeStates::zeros(x.n(), x.dim());
        self.mix_into(x, &mut out);
        out
    }

    /// The graph `G_A`: arc `j -> i` whenever `a_ij > 0`.
    pub fn graph(&self) -> GraphSnapshot {
        pattern_graph(&self.entries)
    }

    /// Row-major CSV with shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| format!("{}", self.entries[(i, j)])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, class: Stochasticity) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("matrix CSV is not square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]), class)
    }
}

fn pattern_graph(entries: &DMatrix<f64>) -> GraphSnapshot {
    let n = entries.nrows();
    let mut arcs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if entries[(i, j)] > 0.0 {
                arcs.push((j, i));
            }
        }
    }
    GraphSnapshot::from_edges(n, true, &arcs).expect("indices in range")
}

/// Anything that turns a snapshot into a weight matrix.
pub trait MixingRule: Sync {
    fn build(&self, g: &GraphSnapshot) -> Result<MixingMatrix>;
    fn class(&self) -> Stochasticity;
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum WeightRule {
    Metropolis,
    LazyMetropolis,
    EqualNeighbor,
    Epsilon { eps: f64 },
    PushSum,
}

impl MixingRule for WeightRule {
    fn build(&self, g: &GraphSnapshot) -> Result<MixingMatrix> {
        match *self {
            WeightRule::Metropolis => metropolis(g),
            WeightRule::LazyMetropolis => lazy_metropolis(g),
            WeightRule::EqualNeighbor => equal_neighbor(g),
            WeightRule::Epsilon { eps } => epsilon_weights(g, eps),
            WeightRule::PushSum => push_sum_matrix(g),
        }
    }

    fn class(&self) -> Stochasticity {
        match self {
            WeightRule::Metropolis | WeightRule::LazyMetropolis | WeightRule::Epsilon { .. } => {
                Stochasticity::Doubly
            }
            WeightRule::EqualNeighbor => Stochasticity::Row,
            WeightRule::PushSum => Stochasticity::Column,
        }
    }

    fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::Metropolis => write!(f, "metropolis"),
            WeightRule::LazyMetropolis => write!(f, "lazy-metropolis"),
            WeightRule::EqualNeighbor => write!(f, "equal-neighbor"),
            WeightRule::Epsilon { eps } => write!(f, "epsilon:{eps}"),
            WeightRule::PushSum => write!(f, "push-sum"),
        }
    }
}

impl FromStr for WeightRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.split_once(':') {
            Some(("epsilon", e)) => WeightRule::Epsilon {
                eps: e.parse().map_err(|_| Error::Parse(format!("bad epsilon {e:?}")))?,
            },
            _ => match s {
                "metropolis" => WeightRule::Metropolis,
                "lazy-metropolis" => WeightRule::LazyMetropolis,
                "equal-neighbor" => WeightRule::EqualNeighbor,
                "push-sum" => WeightRule::PushSum,
                other => return Err(Error::Parse(format!("unknown weight rule {other:?}"))),
            },
        })
    }
}

fn require_undirected(g: &GraphSnapshot, what: &'static str) -> Result<()> {
    if g.is_directed() {
        Err(Error::DirectedGraph(what))
    } else {
        Ok(())
    }
}

/// `a_ij = 1/max(d_i, d_j)` on edges, remainder on the diagonal. Degrees
/// exclude self-loops.
pub fn metropolis(g: &GraphSnapshot) -> Result<MixingMatrix> {
    require_undirected(g, "metropolis weights")?;
    let n = g.n();
    let deg: Vec<usize> = (0..n).map(|i| g.neighbor_count(i)).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &j in g.out_neighbors(i) {
            if j != i {
                let w = 1.0 / deg[i].max(deg[j]) as f64;
                a[(i, j)] = w;
                off += w;
            }
        }
        // The remainder is nonnegative exactly; rounding can push it to -ulp.
        a[(i, i)] = (1.0 - off).max(0.0);
    }
    MixingMatrix::new(a, Stochasticity::Doubly)
}

/// `(I + metropolis(g)) / 2`.
pub fn lazy_metropolis(g: &GraphSnapshot) -> Result<MixingMatrix> {
    let m = metropolis(g)?;
    let n = m.n();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let v = 0.5 * m.entries[(i, j)];
        if i == j {
            v + 0.5
        } else {
            v
        }
    });
    MixingMatrix::new(a, Stochasticity::Doubly)
}

/// `a_ij = 1/d_i^in` over the in-neighborhood (self included).
pub fn equal_neighbor(g: &GraphSnapshot) -> Result<MixingMatrix> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let ins = g.in_neighbors(i);
        if ins.is_empty() {
            return Err(Error::NoInNeighbors(i));
        }
        let w = 1.0 / ins.len() as f64;
        for &j in ins {
            a[(i, j)] = w;
        }
    }
    MixingMatrix::new(a, Stochasticity::Row)
}

/// `a_ij = eps` on edges, `a_ii = 1 - eps d_i`; needs `0 < eps < 1/max d_i`.
pub fn epsilon_weights(g: &GraphSnapshot, eps: f64) -> Result<MixingMatrix> {
    require_undirected(g, "epsilon weights")?;
    let max_deg = g.max_neighbor_count();
    let bound = if max_deg == 0 { f64::INFINITY } else { 1.0 / max_deg as f64 };
    if !(eps > 0.0 && eps < bound) {
        return Err(Error::EpsilonOutOfRange { eps, bound });
    }
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut d = 0;
        for &j in g.out_neighbors(i) {
            if j != i {
                a[(i, j)] = eps;
                d += 1;
            }
        }
        a[(i, i)] = 1.0 - eps * d as f64;
    }
    MixingMatrix::new(a, Stochasticity::Doubly)
}

/// Push-sum weights: `a_ij = 1/d_j^out` for `j` in the in-neighborhood of
/// `i`, out-degrees counting the self-loop.
pub fn push_sum_matrix(g: &GraphSnapshot) -> Result<MixingMatrix> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let d = g.out_degree(j);
        if d == 0 {
            return Err(Error::ZeroOutDegree(j));
        }
        for &i in g.out_neighbors(j) {
            a[(i, j)] = 1.0 / d as f64;
        }
    }
    MixingMatrix::new(a, Stochasticity::Column)
}

/// `[A]_alpha`: entries below `alpha` zeroed, no renormalization. Only the
/// support pattern is meaningful.
#[derive(Debug, Clone)]
pub struct ThresholdedMatrix {
    pub alpha: f64,
    pub entries: DMatrix<f64>,
}

impl ThresholdedMatrix {
    pub fn graph(&self) -> GraphSnapshot {
        pattern_graph(&self.entries)
    }
}

pub fn threshold(m: &MixingMatrix, alpha: f64) -> Result<ThresholdedMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {alpha}")));
    }
    Ok(ThresholdedMatrix {
        alpha,
        entries: m.entries.map(|a| if a < alpha { 0.0 } else { a }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Second-largest singular value of each input matrix.
    pub sigma2: Vec<f64>,
    /// Largest of `sigma2`.
    pub lambda: f64,
    /// `1/(1 - lambda)`; `None` when `lambda >= 1 - 1e-14`.
    pub gap_inverse: Option<f64>,
}

/// `lambda` at or above this is treated as no spectral gap.
pub const GAP_FLOOR: f64 = 1e-14;

pub fn spectral(matrices: &[&MixingMatrix]) -> Result<SpectralReport> {
    if matrices.is_empty() {
        return Err(Error::InvalidArgument("no matrices supplied".into()));
    }
    let mut sigma2 = Vec::with_capacity(matrices.len());
    for m in matrices {
        if m.class() != Stochasticity::Doubly {
            return Err(Error::NotStochastic {
                expected: Stochasticity::Doubly.to_string(),
                detail: format!("got a {} matrix", m.class()),
            });
        }
        m.validate()?;
        sigma2.push(second_singular_value(m));
    }
    let lambda = sigma2.iter().copied().fold(0.0, f64::max);
    let gap_inverse = (lambda < 1.0 - GAP_FLOOR).then(|| 1.0 / (1.0 - lambda));
    Ok(SpectralReport {
        sigma2,
        lambda,
        gap_inverse,
    })
}

/// `sigma_2(A)`: exact SVD up to [`DENSE_SVD_MAX_N`], deflated power
/// iteration beyond.
pub fn second_singular_value(m: &MixingMatrix) -> f64 {
    if m.n() <= DENSE_SVD_MAX_N {
        second_singular_value_svd(m.entries())
    } else {
        second_singular_value_power(m, 1e-12, 200_000)
    }
}

pub fn second_singular_value_svd(a: &DMatrix<f64>) -> f64 {
    if a.nrows() < 2 {
        return 0.0;
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s[1].clamp(0.0, f64::INFINITY)
}

/// Power iteration on `A^T A` restricted to the complement of the all-ones
/// vector, which for doubly stochastic `A` is invariant. Stops when the
/// Rayleigh quotient changes by less than `tol` (relative) or after
/// `max_iter` iterations.
pub fn second_singular_value_power(m: &MixingMatrix, tol: f64, max_iter: usize) -> f64 {
    let n = m.n();
    if n < 2 {
        return 0.0;
    }
    let a = m.entries();
    // Deterministic, non-symmetric start so no eigenvector is missed by symmetry.
    let mut v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5);
    let deflate = |v: &mut DVector<f64>| {
        let mean = v.mean();
        v.add_scalar_mut(-mean);
    };
    deflate(&mut v);
    let mut norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let at = a.transpose();
    let mut rho = 0.0;
    for _ in 0..max_iter {
        let mut w = &at * (a * &v);
        deflate(&mut w);
        let next = v.dot(&w);
        norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - rho).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            rho = next;
            break;
        }
        rho = next;
    }
    rho.max(0.0).sqrt()
}
