//! Communication graphs: deterministic and random families, time-varying
//! sequences, and the connectivity checks the convergence results rely on.
//!
//! Node ids are `0..n`. Every generator adds a self-loop at each node, so
//! degrees reported by [`GraphSnapshot::out_degree`] and
//! [`GraphSnapshot::in_degree`] include the node itself. Metropolis-style
//! weights use [`GraphSnapshot::neighbor_count`], which does not.

use std::borrow::Cow;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts allowed for a random family to come out connected.
pub const MAX_CONNECTIVITY_ATTEMPTS: usize = 100;

/// Degree of the random regular graphs used as expanders.
pub const EXPANDER_DEGREE: usize = 6;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One communication graph `G^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    n: usize,
    directed: bool,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl GraphSnapshot {
    /// Builds a graph from arcs `(i, j)` meaning `i` sends to `j`. For
    /// undirected graphs each pair is stored in both directions. Duplicate
    /// pairs collapse.
    pub fn from_edges(n: usize, directed: bool, edges: &[(usize, usize)]) -> Result<Self> {
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            out[i].insert(j);
            if !directed {
                out[j].insert(i);
            }
        }
        Ok(Self::from_sets(n, directed, out))
    }

    fn from_sets(n: usize, directed: bool, out: Vec<BTreeSet<usize>>) -> Self {
        let mut inn: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, set) in out.iter().enumerate() {
            for &j in set {
                inn[j].push(i);
            }
        }
        GraphSnapshot {
            n,
            directed,
            out: out.into_iter().map(|s| s.into_iter().collect()).collect(),
            inn,
        }
    }

    pub fn with_self_loops(self) -> Self {
        let n = self.n;
        let mut out: Vec<BTreeSet<usize>> = self
            .out
            .into_iter()
            .map(|v| v.into_iter().collect())
            .collect();
        for (i, set) in out.iter_mut().enumerate() {
            set.insert(i);
        }
        Self::from_sets(n, self.directed, out)
    }

    /// The undirected graph with an edge wherever either direction exists.
    pub fn undirected_skeleton(&self) -> Self {
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n];
        for (i, j) in self.arcs() {
            out[i].insert(j);
            out[j].insert(i);
        }
        Self::from_sets(self.n, false, out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Nodes that receive messages from `i` (sorted, may include `i`).
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// Nodes that `i` receives messages from (sorted, may include `i`).
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inn[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.inn[i].len()
    }

    /// Neighbors of `i` other than `i` itself (undirected view: out-neighbors).
    pub fn neighbor_count(&self, i: usize) -> usize {
        self.out[i].iter().filter(|&&j| j != i).count()
    }

    pub fn max_neighbor_count(&self) -> usize {
        (0..self.n).map(|i| self.neighbor_count(i)).max().unwrap_or(0)
    }

    /// Average number of non-self neighbors.
    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (0..self.n).map(|i| self.neighbor_count(i)).sum::<usize>() as f64 / self.n as f64
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.out[i].binary_search(&i).is_ok())
    }

    pub fn has_arc(&self, i: usize, j: usize) -> bool {
        self.out[i].binary_search(&j).is_ok()
    }

    /// All arcs `(i, j)`, both directions for undirected graphs.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
    }

    /// Undirected edges `i < j` (for undirected graphs) without self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.arcs()
            .filter(|&(i, j)| if self.directed { i != j } else { i < j })
            .collect()
    }

    /// Strong connectivity (plain connectivity for undirected graphs).
    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(self.n, |i| self.out[i].iter().copied(), |i| {
            self.inn[i].iter().copied()
        })
    }

    /// Text form: header `n directed` (directed is `0` or `1`), then one
    /// `i j` line per arc. Undirected edges are written once with `i <= j`.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{} {}\n", self.n, u8::from(self.directed));
        for (i, j) in self.arcs() {
            if self.directed || i <= j {
                s.push_str(&format!("{i} {j}\n"));
            }
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let mut h = header.split_whitespace();
        let n: usize = parse_field(h.next(), "node count")?;
        let directed = match h.next() {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(Error::Parse(format!(
                    "directed flag must be 0 or 1, got {other:?}"
                )))
            }
        };
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let i: usize = parse_field(it.next(), "source")?;
            let j: usize = parse_field(it.next(), "target")?;
            edges.push((i, j));
        }
        Self::from_edges(n, directed, &edges)
    }
}

fn parse_field<T: FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}")))
}

/// Kosaraju-style check: everything reachable from node 0 forwards and
/// backwards.
fn strongly_connected<F, G, I, J>(n: usize, out: F, inn: G) -> bool
where
    F: Fn(usize) -> I,
    G: Fn(usize) -> J,
    I: Iterator<Item = usize>,
    J: Iterator<Item = usize>,
{
    if n <= 1 {
        return true;
    }
    fn sweep<I: Iterator<Item = usize>>(n: usize, next: impl Fn(usize) -> I) -> usize {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in next(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }
    sweep(n, out) == n && sweep(n, inn) == n
}

/// Graph families. Random ones carry their density parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Path,
    Cycle,
    #[serde(rename = "grid2d")]
    Grid2d,
    #[serde(rename = "gridk")]
    GridK { k: u32 },
    Star,
    TwoStar,
    Complete,
    DirectedCycle,
    Expander,
    ErdosRenyi { eps: f64 },
    Geometric { eps: f64 },
    /// Directed cycle over a random node order plus each remaining arc
    /// with probability `p`. Always strongly connected.
    RandomDirected { p: f64 },
}

impl Family {
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            Family::Expander
                | Family::ErdosRenyi { .. }
                | Family::Geometric { .. }
                | Family::RandomDirected { .. }
        )
    }

    pub fn is_directed(&self) -> bool {
        matches!(self, Family::DirectedCycle | Family::RandomDirected { .. })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Path => write!(f, "path"),
            Family::Cycle => write!(f, "cycle"),
            Family::Grid2d => write!(f, "grid2d"),
            Family::GridK { k } => write!(f, "gridk:{k}"),
            Family::Star => write!(f, "star"),
            Family::TwoStar => write!(f, "two-star"),
            Family::Complete => write!(f, "complete"),
            Family::DirectedCycle => write!(f, "directed-cycle"),
            Family::Expander => write!(f, "expander"),
            Family::ErdosRenyi { eps } => write!(f, "erdos-renyi:{eps}"),
            Family::Geometric { eps } => write!(f, "geometric:{eps}"),
            Family::RandomDirected { p } => write!(f, "random-directed:{p}"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// Accepts `name` or `name:param`, e.g. `erdos-renyi:1`, `gridk:3`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            param.map_or(Ok(default), |p| {
                p.parse()
                    .map_err(|_| Error::Parse(format!("bad family parameter {p:?}")))
            })
        };
        Ok(match name {
            "path" => Family::Path,
            "cycle" => Family::Cycle,
            "grid2d" => Family::Grid2d,
            "gridk" => Family::GridK {
                k: num(3.0)? as u32,
            },
            "star" => Family::Star,
            "two-star" | "twostar" => Family::TwoStar,
            "complete" => Family::Complete,
            "directed-cycle" => Family::DirectedCycle,
            "expander" => Family::Expander,
            "erdos-renyi" | "er" => Family::ErdosRenyi { eps: num(1.0)? },
            "geometric" => Family::Geometric { eps: num(1.0)? },
            "random-directed" => Family::RandomDirected { p: num(0.1)? },
            other => return Err(Error::Parse(format!("unknown graph family {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
}

impl FamilySpec {
    pub fn new(family: Family, n: usize) -> Self {
        FamilySpec { family, n }
    }
}

fn invalid(spec: &FamilySpec, reason: impl Into<String>) -> Error {
    Error::InvalidNodeCount {
        family: spec.family.to_string(),
        n: spec.n,
        reason: reason.into(),
    }
}

fn exact_root(n: usize, k: u32) -> Option<usize> {
    let guess = (n as f64).powf(1.0 / k as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|s| s.checked_pow(k) == Some(n))
}

/// Generates the graph named by `spec`, self-loops included. Random families
/// are resampled (fresh RNG stream per attempt) until connected.
pub fn build_graph(spec: &FamilySpec, seed: u64) -> Result<GraphSnapshot> {
    let n = spec.n;
    if n == 0 {
        return Err(invalid(spec, "need at least one node"));
    }
    if n == 1 && spec.family.is_random() {
        return Err(invalid(spec, "random families need n >= 2"));
    }
    let g = match spec.family {
        Family::Path => {
            let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            GraphSnapshot::from_edges(n, false, &e)?
        }
        Family::Cycle => {
            let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            GraphSnapshot::from_edges(n, false, &e)?
        }
        Family::DirectedCycle => {
            let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            GraphSnapshot::from_edges(n, true, &e)?
        }
        Family::Grid2d => grid(spec, 2)?,
        Family::GridK { k } => {
            if k == 0 {
                return Err(invalid(spec, "grid dimension must be positive"));
            }
            grid(spec, k)?
        }
        Family::Star => {
            let e: Vec<_> = (1..n).map(|i| (0, i)).collect();
            GraphSnapshot::from_edges(n, false, &e)?
        }
        Family::TwoStar => {
            if !n.is_multiple_of(2) || n < 4 {
                return Err(invalid(spec, "two-star needs an even n >= 4"));
            }
            let h = n / 2;
            let mut e = vec![(0, h)];
            e.extend((1..h).map(|i| (0, i)));
            e.extend((h + 1..n).map(|i| (h, i)));
            GraphSnapshot::from_edges(n, false, &e)?
        }
        Family::Complete => {
            let mut e = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    e.push((i, j));
                }
            }
            GraphSnapshot::from_edges(n, false, &e)?
        }
        Family::Expander => {
            if n <= EXPANDER_DEGREE {
                return Err(invalid(
                    spec,
                    format!("random {EXPANDER_DEGREE}-regular graph needs n > {EXPANDER_DEGREE}"),
                ));
            }
            resample_until_connected(seed, |rng| random_regular(n, EXPANDER_DEGREE, rng))?
        }
        Family::ErdosRenyi { eps } => {
            if eps <= 0.0 {
                return Err(invalid(spec, "erdos-renyi needs eps > 0"));
            }
            let p = ((1.0 + eps) * (n as f64).ln() / n as f64).min(1.0);
            resample_until_connected(seed, |rng| {
                let mut e = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            e.push((i, j));
                        }
                    }
                }
                GraphSnapshot::from_edges(n, false, &e).ok()
            })?
        }
        Family::Geometric { eps } => {
            if eps <= 0.0 {
                return Err(invalid(spec, "geometric needs eps > 0"));
            }
            let r2 = (1.0 + eps) * (n as f64).ln() / n as f64;
            resample_until_connected(seed, |rng| {
                let pts: Vec<(f64, f64)> =
                    (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
                let mut e = Vec::new();
                for i in 0..n {
                    for j in i + 1..n {
                        let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                        if dx * dx + dy * dy <= r2 {
                            e.push((i, j));
                        }
                    }
                }
                GraphSnapshot::from_edges(n, false, &e).ok()
            })?
        }
        Family::RandomDirected { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(spec, "random-directed needs p in [0, 1]"));
            }
            let mut rng = stream_rng(seed, 0);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut e: Vec<_> = (0..n).map(|t| (order[t], order[(t + 1) % n])).collect();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < p {
                        e.push((i, j));
                    }
                }
            }
            GraphSnapshot::from_edges(n, true, &e)?
        }
    };
    Ok(g.with_self_loops())
}

fn grid(spec: &FamilySpec, k: u32) -> Result<GraphSnapshot> {
    let n = spec.n;
    let side = exact_root(n, k).ok_or_else(|| invalid(spec, format!("n must be a perfect {k}-th power")))?;
    let mut e = Vec::new();
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..k {
            let coord = (v / stride) % side;
            if coord + 1 < side {
                e.push((v, v + stride));
            }
            stride *= side;
        }
    }
    GraphSnapshot::from_edges(n, false, &e)
}

fn resample_until_connected<F>(seed: u64, mut attempt: F) -> Result<GraphSnapshot>
where
    F: FnMut(&mut ChaCha8Rng) -> Option<GraphSnapshot>,
{
    for a in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let mut rng = stream_rng(seed, a as u64);
        if let Some(g) = attempt(&mut rng) {
            if g.is_strongly_connected() {
                return Ok(g);
            }
        }
    }
    Err(Error::ConnectivityNotAchieved {
        attempts: MAX_CONNECTIVITY_ATTEMPTS,
    })
}

/// Configuration-model pairing that only accepts pairs keeping the graph
/// simple; restarts when it gets stuck. `None` after too many restarts.
fn random_regular(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<GraphSnapshot> {
    if !(n * d).is_multiple_of(2) {
        return None;
    }
    'restart: for _ in 0..200 {
        let mut points: Vec<usize> = (0..n * d).map(|p| p / d).collect();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        while !points.is_empty() {
            let mut placed = false;
            for _ in 0..100 {
                let a = rng.random_range(0..points.len());
                let b = rng.random_range(0..points.len());
                let (u, v) = (points[a], points[b]);
                if a == b || u == v || adj[u].contains(&v) {
                    continue;
                }
                adj[u].insert(v);
                adj[v].insert(u);
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                points.swap_remove(hi);
                points.swap_remove(lo);
                placed = true;
                break;
            }
            if !placed {
                continue 'restart;
            }
        }
        return Some(GraphSnapshot::from_sets(n, false, adj));
    }
    None
}

/// How the snapshots of a sequence are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SequenceMode {
    /// The same family graph at every step.
    Static { base: FamilySpec },
    /// Cycle through explicit snapshots (edge-list text).
    Periodic { graphs: Vec<String> },
    /// A fresh family graph at every step.
    Regenerate { base: FamilySpec },
    /// Cycle edges revealed a few at a time so that every block of `block`
    /// steps covers the whole cycle.
    TokenRing { n: usize, directed: bool },
    /// Arcs of one family graph dealt at random over `block` snapshots that
    /// then repeat, so every block's union is the family graph.
    Split { base: FamilySpec },
}

/// Regenerable description of a sequence: mode, block length `B`, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDescriptor {
    #[serde(flatten)]
    pub mode: SequenceMode,
    pub block: usize,
    pub seed: u64,
}

/// The sequence `G^0, G^1, ...`. Immutable once built.
#[derive(Debug, Clone)]
pub struct GraphSequence {
    descriptor: SequenceDescriptor,
    n: usize,
    fixed: Vec<GraphSnapshot>,
}

impl GraphSequence {
    pub fn from_descriptor(descriptor: SequenceDescriptor) -> Result<Self> {
        if descriptor.block == 0 {
            return Err(Error::InvalidArgument("block length B must be >= 1".into()));
        }
        let (n, fixed) = match &descriptor.mode {
            SequenceMode::Static { base } => {
                let g = build_graph(base, descriptor.seed)?;
                (g.n(), vec![g])
            }
            SequenceMode::Periodic { graphs } => {
                if graphs.is_empty() {
                    return Err(Error::InvalidArgument("periodic sequence needs a graph".into()));
                }
                let gs = graphs
                    .iter()
                    .map(|t| GraphSnapshot::from_edge_list(t).map(GraphSnapshot::with_self_loops))
                    .collect::<Result<Vec<_>>>()?;
                let n = gs[0].n();
                if gs.iter().any(|g| g.n() != n) {
                    return Err(Error::InvalidArgument("periodic graphs differ in n".into()));
                }
                (n, gs)
            }
            SequenceMode::Regenerate { base } => {
                // Fail early on an invalid family.
                build_graph(base, descriptor.seed)?;
                (base.n, Vec::new())
            }
            SequenceMode::TokenRing { n, .. } => {
                if *n == 0 {
                    return Err(Error::InvalidArgument("token ring needs n >= 1".into()));
                }
                (*n, Vec::new())
            }
            SequenceMode::Split { base } => {
                let g = build_graph(base, descriptor.seed)?;
                let n = g.n();
                let mut parts: Vec<Vec<BTreeSet<usize>>> =
                    vec![vec![BTreeSet::new(); n]; descriptor.block];
                let mut rng = stream_rng(descriptor.seed, 0x5e71);
                for (i, j) in g.edges() {
                    let b = rng.random_range(0..descriptor.block);
                    parts[b][i].insert(j);
                    if !g.is_directed() {
                        parts[b][j].insert(i);
                    }
                }
                let directed = g.is_directed();
                let gs = parts
                    .into_iter()
                    .map(|out| GraphSnapshot::from_sets(n, directed, out).with_self_loops())
                    .collect();
                (n, gs)
            }
        };
        Ok(GraphSequence {
            descriptor,
            n,
            fixed,
        })
    }

    /// A constant sequence of one explicit graph (self-loops added).
    pub fn fixed(g: GraphSnapshot) -> Self {
        let g = g.with_self_loops();
        GraphSequence {
            n: g.n(),
            descriptor: SequenceDescriptor {
                mode: SequenceMode::Periodic {
                    graphs: vec![g.to_edge_list()],
                },
                block: 1,
                seed: 0,
            },
            fixed: vec![g],
        }
    }

    pub fn periodic(graphs: Vec<GraphSnapshot>, block: usize) -> Result<Self> {
        Self::from_descriptor(SequenceDescriptor {
            mode: SequenceMode::Periodic {
                graphs: graphs.iter().map(GraphSnapshot::to_edge_list).collect(),
            },
            block,
            seed: 0,
        })
    }

    pub fn token_ring(n: usize, block: usize, directed: bool) -> Result<Self> {
        Self::from_descriptor(SequenceDescriptor {
            mode: SequenceMode::TokenRing { n, directed },
            block,
            seed: 0,
        })
    }

    pub fn descriptor(&self) -> &SequenceDescriptor {
        &self.descriptor
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block(&self) -> usize {
        self.descriptor.block
    }

    pub fn is_static(&self) -> bool {
        self.period() == Some(1)
    }

    pub fn is_directed(&self) -> bool {
        self.snapshot(0).is_directed()
    }

    /// Number of steps after which snapshots repeat, if they do.
    pub fn period(&self) -> Option<usize> {
        match &self.descriptor.mode {
            SequenceMode::Static { .. } => Some(1),
            SequenceMode::Periodic { .. } | SequenceMode::Split { .. } => Some(self.fixed.len()),
            SequenceMode::Regenerate { .. } => None,
            SequenceMode::TokenRing { n, .. } => Some(if *n <= 1 { 1 } else { *n }),
        }
    }

    /// `G^k`.
    pub fn snapshot(&self, k: usize) -> Cow<'_, GraphSnapshot> {
        match &self.descriptor.mode {
            SequenceMode::Static { .. } => Cow::Borrowed(&self.fixed[0]),
            SequenceMode::Periodic { .. } | SequenceMode::Split { .. } => {
                Cow::Borrowed(&self.fixed[k % self.fixed.len()])
            }
            SequenceMode::Regenerate { base } => {
                let sub = self
                    .descriptor
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(k as u64);
                // The family was validated at construction; a failure here can
                // only be a connectivity miss, which the caller cannot recover.
                Cow::Owned(build_graph(base, sub).expect("regenerated snapshot"))
            }
            SequenceMode::TokenRing { n, directed } => {
                Cow::Owned(token_ring_snapshot(*n, self.descriptor.block, *directed, k))
            }
        }
    }
}

/// Step `k` of the token ring reveals `ceil(n / B)` consecutive cycle arcs
/// starting at `(k * ceil(n / B)) mod n`.
fn token_ring_snapshot(n: usize, block: usize, directed: bool, k: usize) -> GraphSnapshot {
    let per_step = n.div_ceil(block).max(1);
    let start = (k % n) * per_step;
    let e: Vec<_> = if n <= 1 {
        Vec::new()
    } else {
        (0..per_step)
            .map(|t| {
                let i = (start + t) % n;
                (i, (i + 1) % n)
            })
            .collect()
    };
    GraphSnapshot::from_edges(n, directed, &e)
        .expect("token ring arcs in range")
        .with_self_loops()
}

/// Sequence constructor keyed by mode name, for configs and the CLI.
pub fn make_sequence(mode: &str, base: FamilySpec, block: usize, seed: u64) -> Result<GraphSequence> {
    let mode = match mode {
        "static" => SequenceMode::Static { base },
        "regenerate" => SequenceMode::Regenerate { base },
        "split" => SequenceMode::Split { base },
        "token-ring" => SequenceMode::TokenRing {
            n: base.n,
            directed: true,
        },
        "token-ring-undirected" => SequenceMode::TokenRing {
            n: base.n,
            directed: false,
        },
        other => return Err(Error::InvalidArgument(format!("unknown sequence mode {other:?}"))),
    };
    let block = match mode {
        SequenceMode::Static { .. } | SequenceMode::Regenerate { .. } => block.max(1),
        _ => block,
    };
    GraphSequence::from_descriptor(SequenceDescriptor { mode, block, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityCertificate {
    pub ok: bool,
    pub first_failing_block: Option<usize>,
}

/// Checks that the arc union over every block `[lB, (l+1)B - 1]` within the
/// horizon is strongly connected.
pub fn certify_b_connectivity(
    seq: &GraphSequence,
    block: usize,
    horizon: usize,
) -> Result<ConnectivityCertificate> {
    if block == 0 || !horizon.is_multiple_of(block) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be a positive multiple of B = {block}"
        )));
    }
    let n = seq.n();
    for l in 0..horizon / block {
        let mut out: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for k in l * block..(l + 1) * block {
            for (i, j) in seq.snapshot(k).arcs() {
                out[i].insert(j);
            }
        }
        let union = GraphSnapshot::from_sets(n, true, out);
        if !union.is_strongly_connected() {
            return Ok(ConnectivityCertificate {
                ok: false,
                first_failing_block: Some(l),
            });
        }
    }
    Ok(ConnectivityCertificate {
        ok: true,
        first_failing_block: None,
    })
}

/// Nodes reachable from `from` by a chain of arcs taken one per step at
/// steps `k_start, k_start + 1, ..., k_finish`.
pub fn reachable_set(
    seq: &GraphSequence,
    from: usize,
    k_start: usize,
    k_finish: usize,
) -> Result<Vec<usize>> {
    if k_start > k_finish {
        return Err(Error::InvalidArgument("k_start must not exceed k_finish".into()));
    }
    if from >= seq.n() {
        return Err(Error::InvalidArgument(format!("node {from} out of range")));
    }
    let mut current = vec![false; seq.n()];
    current[from] = true;
    for k in k_start..=k_finish {
        let g = seq.snapshot(k);
        let mut next = vec![false; seq.n()];
        for (i, _) in current.iter().enumerate().filter(|(_, &r)| r) {
            for &j in g.out_neighbors(i) {
                next[j] = true;
            }
        }
        current = next;
    }
    Ok(current
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| r.then_some(i))
        .collect())
}
