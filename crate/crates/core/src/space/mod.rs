//! Finite metric-measure spaces.
//!
//! A space is a finite set of points with a fully materialized distance
//! matrix and strictly positive point masses. Every integral in the crate
//! is a weighted sum over these atoms.

mod analysis;
mod generate;
mod io;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;

pub use analysis::{
    doubling_ratio, estimate_doubling, estimate_doubling_with_ladder, lip_estimate, maximal_function,
    maximal_function_with_ladder, maximal_lp_ratio, DoublingSample, DoublingStats, LipEstimate,
};
pub use generate::{generate_space, path_space, SpaceKind};
pub use io::{load_space, EdgeRecord, PointRecord, SpaceFile, SpaceFormat};

/// Relative tolerance applied to every radius comparison.
///
/// Lattice points that sit exactly on a sphere must land inside a closed
/// ball regardless of rounding in the coordinate arithmetic.
pub const RADIUS_REL_EPS: f64 = 1e-12;

/// Closed-ball membership test `d <= r` with lattice rounding slack.
#[inline]
pub fn within(d: f64, r: f64) -> bool {
    d <= r * (1.0 + RADIUS_REL_EPS)
}

/// Strict test `d < r`, consistent with [`within`].
#[inline]
pub fn strictly_below(d: f64, r: f64) -> bool {
    d < r * (1.0 - RADIUS_REL_EPS)
}

/// How pairwise distances are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    Euclidean,
    ExplicitMatrix,
    GraphShortestPath,
}

/// An undirected edge between two point indices.
///
/// In graph mode the edges define the metric. In the other modes they are an
/// adjacency structure only and their length is the metric distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub len: f64,
}

#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    ids: Vec<u64>,
    coords: Option<Vec<Vec<f64>>>,
    mode: MetricMode,
    weights: Vec<f64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<f64>,
    resolution: f64,
    diameter: f64,
}

impl MetricMeasureSpace {
    /// Builds and validates a space. `ids` must be strictly increasing; edges
    /// and the optional matrix use point indices.
    pub fn from_parts(
        ids: Vec<u64>,
        coords: Option<Vec<Vec<f64>>>,
        mode: MetricMode,
        weights: Vec<f64>,
        edges: Vec<Edge>,
        matrix: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(LabError::InvalidParameter("space has no points".into()));
        }
        if weights.len() != n {
            return Err(LabError::LengthMismatch { expected: n, got: weights.len() });
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Parse("point ids must be unique".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(LabError::NonPositiveWeight { id: ids[i], weight: w });
            }
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(LabError::LengthMismatch { expected: n, got: c.len() });
            }
            let dim = c[0].len();
            if c.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
                return Err(LabError::Parse("coordinates must be finite with a common dimension".into()));
            }
        }
        for e in &edges {
            if e.a >= n || e.b >= n {
                return Err(LabError::IndexOutOfRange { index: e.a.max(e.b), len: n });
            }
            if e.a == e.b {
                return Err(LabError::InvalidMetric(format!("self-loop at point {}", ids[e.a])));
            }
        }

        let dist = match mode {
            MetricMode::Euclidean => {
                let c = coords.as_ref().ok_or_else(|| LabError::Parse("euclidean mode requires coordinates".into()))?;
                let mut d = vec![0.0; n * n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        let dij = euclid(&c[i], &c[j]);
                        d[i * n + j] = dij;
                        d[j * n + i] = dij;
                    }
                }
                d
            }
            MetricMode::ExplicitMatrix => {
                let m = matrix.ok_or_else(|| LabError::Parse("explicit-matrix mode requires a matrix".into()))?;
                if m.len() != n * n {
                    return Err(LabError::LengthMismatch { expected: n * n, got: m.len() });
                }
                validate_matrix(&ids, &m)?;
                m
            }
            MetricMode::GraphShortestPath => {
                if edges.is_empty() && n > 1 {
                    return Err(LabError::NoEdges);
                }
                for e in &edges {
                    if !(e.len.is_finite() && e.len > 0.0) {
                        return Err(LabError::ZeroLengthEdge { a: ids[e.a], b: ids[e.b] });
                    }
                }
                all_pairs_shortest_paths(&ids, &edges)?
            }
        };

        for i in 0..n {
            for j in (i + 1)..n {
                if dist[i * n + j] <= 0.0 {
                    return Err(LabError::InvalidMetric(format!(
                        "distinct points {} and {} are at distance zero",
                        ids[i], ids[j]
                    )));
                }
            }
        }

        // Outside graph mode an edge is pure adjacency; its length is the metric distance.
        let edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| {
                let len = if mode == MetricMode::GraphShortestPath { e.len } else { dist[e.a * n + e.b] };
                Edge { a: e.a.min(e.b), b: e.a.max(e.b), len }
            })
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.a].push(e.b);
            adjacency[e.b].push(e.a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }

        let mut resolution: f64 = 0.0;
        let mut diameter: f64 = 0.0;
        for i in 0..n {
            let row = &dist[i * n..(i + 1) * n];
            let nearest =
                row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
            if nearest.is_finite() {
                resolution = resolution.max(nearest);
            }
            diameter = row.iter().copied().fold(diameter, f64::max);
        }

        Ok(Self { ids, coords, mode, weights, edges, adjacency, dist, resolution, diameter })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> u64 {
        self.ids[index]
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Sorted adjacent point indices of `i`.
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Row of distances from `i` to every point.
    pub fn dist_row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.dist[i * n..(i + 1) * n]
    }

    /// Largest nearest-neighbor distance: the mesh scale of the sample.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Closed ball `{y : d(center, y) <= radius}`, ascending indices.
    pub fn ball(&self, center: usize, radius: f64) -> Vec<usize> {
        self.dist_row(center).iter().enumerate().filter(|&(_, &d)| within(d, radius)).map(|(j, _)| j).collect()
    }

    /// Open ball `{y : d(center, y) < radius}`.
    pub fn open_ball(&self, center: usize, radius: f64) -> Vec<usize> {
        self.dist_row(center).iter().enumerate().filter(|&(_, &d)| strictly_below(d, radius)).map(|(j, _)| j).collect()
    }

    pub fn mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.weights[i]).sum()
    }

    /// Weighted mean of `u` over `set`.
    pub fn ball_average(&self, u: &DiscreteFunction, set: &[usize]) -> Result<f64> {
        u.check_len(self.len())?;
        average(&self.weights, u.values(), set)
    }

    /// Maximum pairwise distance inside `set` (zero for singletons).
    pub fn set_diameter(&self, set: &[usize]) -> f64 {
        let mut d: f64 = 0.0;
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                d = d.max(self.dist(i, j));
            }
        }
        d
    }

    /// `min` over point pairs of `d(x, y)` with `x` in `a`, `y` in `b`.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut d = f64::INFINITY;
        for &i in a {
            let row = self.dist_row(i);
            for &j in b {
                d = d.min(row[j]);
            }
        }
        d
    }

    /// Weighted `L^p` norm `(sum |v|^p w)^(1/p)`.
    pub fn lp_norm(&self, values: &[f64], p: f64) -> f64 {
        lp_norm(&self.weights, values, p)
    }

    /// Generations `k` whose scale `2^-k` lies in `[4 * resolution, diameter]`.
    ///
    /// Below four mesh widths the generation-k balls are nearly singletons
    /// and `T_k` degenerates. A single point admits only `k = 0`.
    pub fn admissible_window(&self) -> (i32, i32) {
        if self.len() < 2 {
            return (0, 0);
        }
        let lo = (-self.diameter.log2()).ceil() as i32;
        let hi = (-(4.0 * self.resolution).log2()).floor() as i32;
        let lo = (lo - 1..=lo + 1).find(|&k| within(2f64.powi(-k), self.diameter)).unwrap_or(lo);
        let hi = (hi - 1..=hi + 1).rev().find(|&k| 2f64.powi(-k) >= 4.0 * self.resolution).unwrap_or(hi);
        (lo, hi)
    }

    /// Intersects a requested window with [`Self::admissible_window`].
    pub fn clip_window(&self, lo: i32, hi: i32) -> Result<(i32, i32)> {
        let (adm_lo, adm_hi) = self.admissible_window();
        let (a, b) = (lo.max(adm_lo), hi.min(adm_hi));
        if a > b {
            return Err(LabError::EmptyWindow { lo, hi, adm_lo, adm_hi });
        }
        Ok((a, b))
    }

    /// Dyadic radii `2^-j`, ascending, from the resolution up to the first
    /// radius whose balls are the whole space.
    pub fn dyadic_ladder(&self) -> Vec<f64> {
        if self.len() < 2 {
            return Vec::new();
        }
        let lo = self.resolution.log2().ceil() as i32;
        let hi = self.diameter.log2().ceil() as i32;
        (lo..=hi).map(|j| 2f64.powi(j)).collect()
    }

    /// Weighted shortest path through the edge graph with per-edge cost
    /// `cost(a, b)`. Returns `(total cost, vertex path)` from the cheapest
    /// source to the first sink reached. Ties are broken towards lower indices.
    pub fn shortest_path_between<F>(&self, sources: &[usize], sinks: &[usize], cost: F) -> Option<(f64, Vec<usize>)>
    where
        F: Fn(usize, usize) -> f64,
    {
        let n = self.len();
        let mut is_sink = vec![false; n];
        for &t in sinks {
            is_sink[t] = true;
        }
        let mut best = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            best[s] = 0.0;
            heap.push(HeapItem { cost: 0.0, node: s });
        }
        while let Some(HeapItem { cost: c, node }) = heap.pop() {
            if c > best[node] {
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
                return Some((c, path));
            }
            for &next in &self.adjacency[node] {
                let nc = c + cost(node, next);
                if nc < best[next] {
                    best[next] = nc;
                    prev[next] = node;
                    heap.push(HeapItem { cost: nc, node: next });
                }
            }
        }
        None
    }

    /// Serializable file representation of this space.
    pub fn to_file(&self) -> SpaceFile {
        let n = self.len();
        let points = (0..n)
            .map(|i| PointRecord {
                id: self.ids[i],
                coord: self.coords.as_ref().map(|c| c[i].clone()),
                weight: self.weights[i],
            })
            .collect();
        let edges = self.edges.iter().map(|e| EdgeRecord { a: self.ids[e.a], b: self.ids[e.b], len: e.len }).collect();
        let matrix =
            (self.mode == MetricMode::ExplicitMatrix).then(|| (0..n).map(|i| self.dist_row(i).to_vec()).collect());
        SpaceFile { mode: self.mode, normalize_weights: false, points, edges, matrix }
    }

    /// Copy of the space with every distance and edge length multiplied by
    /// `factor` and every weight by `weight_factor`.
    pub fn dilated(&self, factor: f64, weight_factor: f64) -> Result<Self> {
        if !(factor > 0.0 && weight_factor > 0.0) {
            return Err(LabError::InvalidParameter("dilation factors must be positive".into()));
        }
        let coords = self.coords.as_ref().map(|c| c.iter().map(|v| v.iter().map(|x| x * factor).collect()).collect());
        let edges = self.edges.iter().map(|e| Edge { len: e.len * factor, ..*e }).collect();
        let matrix = (self.mode == MetricMode::ExplicitMatrix).then(|| self.dist.iter().map(|d| d * factor).collect());
        let weights = self.weights.iter().map(|w| w * weight_factor).collect();
        Self::from_parts(self.ids.clone(), coords, self.mode, weights, edges, matrix)
    }
}

pub(crate) fn average(weights: &[f64], values: &[f64], set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(LabError::EmptyBall);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &i in set {
        num += values[i] * weights[i];
        den += weights[i];
    }
    Ok(num / den)
}

pub(crate) fn lp_norm(weights: &[f64], values: &[f64], p: f64) -> f64 {
    let s: f64 = values.iter().zip(weights).map(|(v, w)| v.abs().powf(p) * w).sum();
    s.powf(1.0 / p)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const TRIANGLE_TOL: f64 = 1e-9;
const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 128;
const SAMPLED_TRIPLES: usize = 200_000;

fn validate_matrix(ids: &[u64], m: &[f64]) -> Result<()> {
    let n = ids.len();
    for i in 0..n {
        if m[i * n + i] != 0.0 {
            return Err(LabError::InvalidMetric(format!("nonzero diagonal at point {}", ids[i])));
        }
        for j in (i + 1)..n {
            let (dij, dji) = (m[i * n + j], m[j * n + i]);
            if !(dij.is_finite() && dji.is_finite()) {
                return Err(LabError::InvalidMetric("non-finite distance".into()));
            }
            if (dij - dji).abs() > 1e-12 * dij.abs().max(1.0) {
                return Err(LabError::Asymmetric { a: ids[i], b: ids[j], dab: dij, dba: dji });
            }
        }
    }
    let check = |a: usize, b: usize, c: usize| -> Result<()> {
        let excess = m[a * n + c] - m[a * n + b] - m[b * n + c];
        if excess > TRIANGLE_TOL {
            return Err(LabError::TriangleViolation { a: ids[a], b: ids[b], c: ids[c], excess });
        }
        Ok(())
    };
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    check(a, b, c)?;
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7472_6961);
        for _ in 0..SAMPLED_TRIPLES {
            check(rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n))?;
        }
    }
    Ok(())
}

#[derive(Debug, PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then on node index
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn all_pairs_shortest_paths(ids: &[u64], edges: &[Edge]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let n = ids.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in edges {
        adj[e.a].push((e.b, e.len));
        adj[e.b].push((e.a, e.len));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut best = vec![f64::INFINITY; n];
            best[s] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem { cost: 0.0, node: s });
            while let Some(HeapItem { cost, node }) = heap.pop() {
                if cost > best[node] {
                    continue;
                }
                for &(next, len) in &adj[node] {
                    let nc = cost + len;
                    if nc < best[next] {
                        best[next] = nc;
                        heap.push(HeapItem { cost: nc, node: next });
                    }
                }
            }
            best
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|d| !d.is_finite()) {
            return Err(LabError::Disconnected { a: ids[i], b: ids[j] });
        }
    }
    Ok(rows.concat())
}
