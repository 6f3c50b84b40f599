//! Polygonal curves through space points, line integrals, slack checks for
//! the upper-gradient inequalities, and curve-family enumeration on graphs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::BallCover;
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;
use crate::gradient::{s_k, t_k};
use crate::space::{strictly_below, MetricMeasureSpace};

/// Slack below which a curve counts as a violation.
pub const SLACK_TOL: f64 = 1e-9;

/// A polygonal chain; vertices are point indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    vertices: Vec<usize>,
    segment_lengths: Vec<f64>,
    length: f64,
}

impl Curve {
    pub fn new(space: &MetricMeasureSpace, vertices: Vec<usize>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(LabError::InvalidCurve("a curve needs at least two vertices".into()));
        }
        if let Some(&bad) = vertices.iter().find(|&&v| v >= space.len()) {
            return Err(LabError::IndexOutOfRange { index: bad, len: space.len() });
        }
        let segment_lengths: Vec<f64> = vertices.windows(2).map(|w| space.dist(w[0], w[1])).collect();
        if let Some(i) = segment_lengths.iter().position(|&l| l <= 0.0) {
            return Err(LabError::InvalidCurve(format!("segment {i} has zero length")));
        }
        let length = segment_lengths.iter().sum();
        Ok(Self { vertices, segment_lengths, length })
    }

    pub fn from_ids(space: &MetricMeasureSpace, ids: &[u64]) -> Result<Self> {
        let vertices = ids
            .iter()
            .map(|&id| space.index_of(id).ok_or_else(|| LabError::Parse(format!("unknown point id {id}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, vertices)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.segment_lengths
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.vertices[0], *self.vertices.last().unwrap())
    }

    pub fn reversed(&self) -> Self {
        let mut c = self.clone();
        c.vertices.reverse();
        c.segment_lengths.reverse();
        c
    }

    /// Joins `self` and `other` at a shared endpoint.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.endpoints().1 != other.endpoints().0 {
            return Err(LabError::InvalidCurve("curves do not share an endpoint".into()));
        }
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices[1..]);
        let mut segment_lengths = self.segment_lengths.clone();
        segment_lengths.extend_from_slice(&other.segment_lengths);
        Ok(Self { vertices, segment_lengths, length: self.length + other.length })
    }

    /// Trapezoid weights: `∫_γ ρ ds = Σ_v coef(v) ρ(v)`, with repeated
    /// vertices merged. Sorted by vertex index.
    pub fn trapezoid_coefficients(&self) -> Vec<(usize, f64)> {
        let mut c: Vec<(usize, f64)> = Vec::with_capacity(2 * self.segment_lengths.len());
        for (w, &l) in self.vertices.windows(2).zip(&self.segment_lengths) {
            c.push((w[0], l / 2.0));
            c.push((w[1], l / 2.0));
        }
        c.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for (v, a) in c {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => merged.push((v, a)),
            }
        }
        merged
    }

    pub fn to_ids(&self, space: &MetricMeasureSpace) -> Vec<u64> {
        self.vertices.iter().map(|&v| space.id(v)).collect()
    }
}

/// `Σ_segments len · (ρ(a) + ρ(b)) / 2`.
pub fn line_integral(curve: &Curve, rho: &[f64]) -> f64 {
    curve.vertices.windows(2).zip(&curve.segment_lengths).map(|(w, &l)| l * (rho[w[0]] + rho[w[1]]) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Explicit,
    AllSimplePaths,
    KShortest,
    GridRows,
    RandomWalks,
    Columns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFamily {
    pub curves: Vec<Curve>,
    pub generator: GeneratorKind,
    /// `(sources, sinks)` as point indices.
    pub terminals: Option<(Vec<usize>, Vec<usize>)>,
    /// Set when enumeration stopped at the curve cap.
    pub truncated: bool,
}

impl CurveFamily {
    pub fn explicit(curves: Vec<Curve>) -> Self {
        Self { curves, generator: GeneratorKind::Explicit, terminals: None, truncated: false }
    }

    pub fn empty() -> Self {
        Self::explicit(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Every edge of the space as a one-segment curve.
    pub fn edges(space: &MetricMeasureSpace) -> Result<Self> {
        if !space.has_edges() {
            return Err(LabError::NoEdges);
        }
        let curves = space.edges().iter().map(|e| Curve::new(space, vec![e.a, e.b])).collect::<Result<_>>()?;
        Ok(Self::explicit(curves))
    }

    /// Union of two families, keeping the generator of `self`.
    pub fn union(&self, other: &Self) -> Self {
        let mut curves = self.curves.clone();
        curves.extend(other.curves.iter().cloned());
        Self { curves, generator: self.generator.clone(), terminals: None, truncated: false }
    }

    /// Curves as point-id sequences.
    pub fn to_id_lists(&self, space: &MetricMeasureSpace) -> Vec<Vec<u64>> {
        self.curves.iter().map(|c| c.to_ids(space)).collect()
    }

    pub fn from_id_lists(space: &MetricMeasureSpace, lists: &[Vec<u64>]) -> Result<Self> {
        let curves = lists.iter().map(|l| Curve::from_ids(space, l)).collect::<Result<_>>()?;
        Ok(Self::explicit(curves))
    }

    pub fn save(&self, space: &MetricMeasureSpace, path: impl AsRef<Path>) -> Result<()> {
        crate::report::write_atomic(path.as_ref(), &serde_json::to_vec_pretty(&self.to_id_lists(space))?)
    }

    pub fn load(space: &MetricMeasureSpace, path: impl AsRef<Path>) -> Result<Self> {
        let lists: Vec<Vec<u64>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_id_lists(space, &lists)
    }
}

/// Default cap on the size of enumerated families.
pub const MAX_CURVES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum FamilySpec {
    Explicit {
        curves: Vec<Vec<u64>>,
    },
    /// Simple edge paths from a source to the first sink reached, never
    /// passing through another terminal, with at most `hop_limit` edges.
    AllSimplePaths {
        sources: Vec<u64>,
        sinks: Vec<u64>,
        hop_limit: usize,
    },
    /// The `count` shortest simple edge paths from any source to any sink.
    KShortest {
        sources: Vec<u64>,
        sinks: Vec<u64>,
        count: usize,
    },
    /// One curve per row of a coordinate lattice, ordered by first coordinate.
    GridRows,
    /// Seeded self-avoiding edge walks with `steps` edges each; with
    /// `monotone`, every step is coordinate-wise non-decreasing.
    RandomWalks {
        count: usize,
        steps: usize,
        monotone: bool,
        seed: u64,
    },
}

pub fn enumerate_family(space: &MetricMeasureSpace, spec: &FamilySpec) -> Result<CurveFamily> {
    enumerate_family_capped(space, spec, MAX_CURVES)
}

pub fn enumerate_family_capped(space: &MetricMeasureSpace, spec: &FamilySpec, cap: usize) -> Result<CurveFamily> {
    let idx = |ids: &[u64]| -> Result<Vec<usize>> {
        if ids.is_empty() {
            return Err(LabError::EmptyTerminals);
        }
        let mut v = ids
            .iter()
            .map(|&id| space.index_of(id).ok_or_else(|| LabError::Parse(format!("unknown point id {id}"))))
            .collect::<Result<Vec<_>>>()?;
        v.sort_unstable();
        v.dedup();
        Ok(v)
    };
    match spec {
        FamilySpec::Explicit { curves } => CurveFamily::from_id_lists(space, curves),
        FamilySpec::AllSimplePaths { sources, sinks, hop_limit } => {
            let (s, t) = (idx(sources)?, idx(sinks)?);
            if *hop_limit == 0 {
                return Err(LabError::ZeroHopLimit);
            }
            require_edges(space)?;
            let (paths, truncated) = all_simple_paths(space, &s, &t, *hop_limit, cap);
            let curves = paths.into_iter().map(|p| Curve::new(space, p)).collect::<Result<_>>()?;
            Ok(CurveFamily { curves, generator: GeneratorKind::AllSimplePaths, terminals: Some((s, t)), truncated })
        }
        FamilySpec::KShortest { sources, sinks, count } => {
            let (s, t) = (idx(sources)?, idx(sinks)?);
            require_edges(space)?;
            let paths = k_shortest_paths(space, &s, &t, (*count).min(cap));
            let curves = paths.into_iter().map(|p| Curve::new(space, p)).collect::<Result<_>>()?;
            Ok(CurveFamily { curves, generator: GeneratorKind::KShortest, terminals: Some((s, t)), truncated: false })
        }
        FamilySpec::GridRows => {
            let coords =
                space.coords().ok_or_else(|| LabError::InvalidParameter("grid rows need coordinates".into()))?;
            let mut order: Vec<usize> = (0..space.len()).collect();
            let row_key = |i: usize| coords[i].get(1).copied().unwrap_or(0.0);
            order.sort_by(|&a, &b| row_key(a).total_cmp(&row_key(b)).then(coords[a][0].total_cmp(&coords[b][0])));
            let mut curves = Vec::new();
            for row in order.chunk_by(|&a, &b| (row_key(a) - row_key(b)).abs() <= 1e-12) {
                if row.len() >= 2 && curves.len() < cap {
                    curves.push(Curve::new(space, row.to_vec())?);
                }
            }
            Ok(CurveFamily { curves, generator: GeneratorKind::GridRows, terminals: None, truncated: false })
        }
        FamilySpec::RandomWalks { count, steps, monotone, seed } => {
            require_edges(space)?;
            if *monotone && space.coords().is_none() {
                return Err(LabError::InvalidParameter("monotone walks need coordinates".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut curves = Vec::with_capacity(*count);
            let mut attempts = 0;
            while curves.len() < (*count).min(cap) && attempts < 100 * count.max(&1) {
                attempts += 1;
                let start = rng.random_range(0..space.len());
                let walk = random_walk(space, start, *steps, *monotone, &mut rng);
                if walk.len() >= 2 {
                    curves.push(Curve::new(space, walk)?);
                }
            }
            Ok(CurveFamily { curves, generator: GeneratorKind::RandomWalks, terminals: None, truncated: false })
        }
    }
}

fn require_edges(space: &MetricMeasureSpace) -> Result<()> {
    if space.has_edges() {
        Ok(())
    } else {
        Err(LabError::NoEdges)
    }
}

/// Self-avoiding edge walk of up to `steps` edges from `start`.
pub fn random_walk<R: Rng>(
    space: &MetricMeasureSpace,
    start: usize,
    steps: usize,
    monotone: bool,
    rng: &mut R,
) -> Vec<usize> {
    let mut path = vec![start];
    let mut seen = HashSet::from([start]);
    let ahead = |a: usize, b: usize| -> bool {
        let c = space.coords().unwrap();
        c[a].iter().zip(&c[b]).all(|(x, y)| y >= x)
    };
    for _ in 0..steps {
        let cur = *path.last().unwrap();
        let options: Vec<usize> = space
            .adjacent(cur)
            .iter()
            .copied()
            .filter(|v| !seen.contains(v) && (!monotone || ahead(cur, *v)))
            .collect();
        match options.choose(rng) {
            Some(&next) => {
                seen.insert(next);
                path.push(next);
            }
            None => break,
        }
    }
    path
}

fn all_simple_paths(
    space: &MetricMeasureSpace,
    sources: &[usize],
    sinks: &[usize],
    hop_limit: usize,
    cap: usize,
) -> (Vec<Vec<usize>>, bool) {
    let n = space.len();
    let mut is_sink = vec![false; n];
    let mut is_source = vec![false; n];
    sinks.iter().for_each(|&t| is_sink[t] = true);
    sources.iter().for_each(|&s| is_source[s] = true);
    let mut out = Vec::new();
    let mut on_path = vec![false; n];
    let mut truncated = false;

    // explicit stack of (vertex, next adjacency slot)
    for &s in sources {
        if is_sink[s] {
            continue;
        }
        let mut path = vec![s];
        let mut slots = vec![0usize];
        on_path[s] = true;
        while let Some(&v) = path.last() {
            let slot = slots.last_mut().unwrap();
            let adj = space.adjacent(v);
            if *slot >= adj.len() || path.len() > hop_limit {
                on_path[v] = false;
                path.pop();
                slots.pop();
                continue;
            }
            let w = adj[*slot];
            *slot += 1;
            if on_path[w] || is_source[w] {
                continue;
            }
            if is_sink[w] {
                if out.len() >= cap {
                    truncated = true;
                    break;
                }
                let mut p = path.clone();
                p.push(w);
                out.push(p);
                continue;
            }
            if path.len() < hop_limit {
                on_path[w] = true;
                path.push(w);
                slots.push(0);
            }
        }
        path.iter().for_each(|&v| on_path[v] = false);
        if truncated {
            break;
        }
    }
    (out, truncated)
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Yen's algorithm from the source set to the sink set, ties broken by the
/// lexicographic order of the vertex sequence. A virtual root vertex joined
/// to every source turns the multi-source problem into a single-source one.
fn k_shortest_paths(space: &MetricMeasureSpace, sources: &[usize], sinks: &[usize], count: usize) -> Vec<Vec<usize>> {
    let n = space.len();
    let root = n;
    let mut is_sink = vec![false; n + 1];
    sinks.iter().for_each(|&t| is_sink[t] = true);
    let sources: Vec<usize> = sources.iter().copied().filter(|&s| !is_sink[s]).collect();
    let graph = VirtualGraph { space, root, sources: &sources };
    let path_cost = |p: &[usize]| p.windows(2).map(|w| graph.cost(w[0], w[1])).sum::<f64>();

    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut candidates: BTreeSet<Candidate> = BTreeSet::new();
    if let Some(p) = graph.dijkstra(root, &is_sink, &HashSet::new(), &HashSet::new()) {
        candidates.insert(Candidate { cost: path_cost(&p), path: p });
    }
    while found.len() < count {
        let Some(best) = candidates.pop_first() else { break };
        let path = best.path;
        for i in 0..path.len() - 1 {
            let prefix = &path[..=i];
            let mut banned_edges = HashSet::new();
            for p in found.iter().chain(std::iter::once(&path)) {
                if p.len() > i + 1 && p[..=i] == *prefix {
                    banned_edges.insert((p[i], p[i + 1]));
                }
            }
            let banned_nodes: HashSet<usize> = prefix[..i].iter().copied().collect();
            if let Some(spur) = graph.dijkstra(path[i], &is_sink, &banned_nodes, &banned_edges) {
                let mut full = prefix[..i].to_vec();
                full.extend(spur);
                if !found.contains(&full) {
                    candidates.insert(Candidate { cost: path_cost(&full), path: full });
                }
            }
        }
        found.push(path);
    }
    found.into_iter().map(|p| p[1..].to_vec()).collect()
}

struct VirtualGraph<'a> {
    space: &'a MetricMeasureSpace,
    root: usize,
    sources: &'a [usize],
}

impl VirtualGraph<'_> {
    fn adjacent(&self, v: usize) -> &[usize] {
        if v == self.root {
            self.sources
        } else {
            self.space.adjacent(v)
        }
    }

    fn cost(&self, a: usize, b: usize) -> f64 {
        if a == self.root || b == self.root {
            0.0
        } else {
            self.space.dist(a, b)
        }
    }

    /// Shortest path from `start` to the first sink, avoiding banned nodes
    /// and directed edges; equal costs prefer lower vertex indices.
    fn dijkstra(
        &self,
        start: usize,
        is_sink: &[bool],
        banned_nodes: &HashSet<usize>,
        banned_edges: &HashSet<(usize, usize)>,
    ) -> Option<Vec<usize>> {
        let n = is_sink.len();
        let mut best = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        best[start] = 0.0;
        heap.push(Item { cost: 0.0, node: start });
        while let Some(Item { cost, node }) = heap.pop() {
            if cost > best[node] {
                continue;
            }
            if is_sink[node] {
                let mut path = vec![node];
                let mut cur = node;
                while prev[cur] != usize::MAX {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &next in self.adjacent(node) {
                if banned_nodes.contains(&next) || banned_edges.contains(&(node, next)) || next == self.root {
                    continue;
                }
                let nc = cost + self.cost(node, next);
                if nc < best[next] {
                    best[next] = nc;
                    prev[next] = node;
                    heap.push(Item { cost: nc, node: next });
                }
            }
        }
        None
    }
}

#[derive(PartialEq)]
struct Item {
    cost: f64,
    node: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveViolation {
    pub curve: usize,
    pub endpoints: (u64, u64),
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub check: String,
    pub tolerance: f64,
    pub evaluated: usize,
    /// Curves whose endpoints are closer than the generation scale.
    pub skipped: usize,
    pub min_slack: f64,
    pub violations: Vec<CurveViolation>,
    /// Per evaluated curve, in family order; `None` for skipped curves.
    pub slacks: Vec<Option<f64>>,
    pub pass: bool,
}

impl SlackReport {
    fn from_slacks(check: &str, space: &MetricMeasureSpace, family: &CurveFamily, slacks: Vec<Option<f64>>) -> Self {
        let violations: Vec<CurveViolation> = slacks
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.filter(|&s| s < -SLACK_TOL).map(|s| (i, s)))
            .map(|(i, slack)| {
                let (a, b) = family.curves[i].endpoints();
                CurveViolation { curve: i, endpoints: (space.id(a), space.id(b)), slack }
            })
            .collect();
        let evaluated = slacks.iter().filter(|s| s.is_some()).count();
        Self {
            check: check.into(),
            tolerance: SLACK_TOL,
            evaluated,
            skipped: slacks.len() - evaluated,
            min_slack: slacks.iter().flatten().copied().fold(f64::INFINITY, f64::min),
            pass: violations.is_empty(),
            violations,
            slacks,
        }
    }
}

/// Slack `∫_γ g ds − |u(first) − u(last)|` per curve.
pub fn check_upper_gradient(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    g: &DiscreteFunction,
    family: &CurveFamily,
) -> Result<SlackReport> {
    u.check_len(space.len())?;
    g.check_len(space.len())?;
    let slacks = family
        .curves
        .par_iter()
        .map(|c| {
            let (a, b) = c.endpoints();
            Some(line_integral(c, g.values()) - (u.get(a) - u.get(b)).abs())
        })
        .collect();
    Ok(SlackReport::from_slacks("upper-gradient", space, family, slacks))
}

/// Slack `4 ∫_γ |T_k u|_p ds − |S_k u(x) − S_k u(y)|` per curve whose
/// endpoints are at least `2^-k` apart.
pub fn check_s_k_inequality(
    space: &MetricMeasureSpace,
    cover: &BallCover,
    u: &DiscreteFunction,
    p: f64,
    family: &CurveFamily,
) -> Result<SlackReport> {
    let su = s_k(space, cover, u)?;
    let tk = t_k(space, cover, u, p)?;
    let slacks = family
        .curves
        .par_iter()
        .map(|c| {
            let (a, b) = c.endpoints();
            if strictly_below(space.dist(a, b), cover.radius) {
                return None;
            }
            Some(4.0 * line_integral(c, &tk.pointwise_norm) - (su.get(a) - su.get(b)).abs())
        })
        .collect();
    Ok(SlackReport::from_slacks("s-k-inequality", space, family, slacks))
}
