use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Edge, MetricMeasureSpace, MetricMode};
use crate::error::{LabError, Result};

/// Canonical test spaces. All carry an edge list so curve families and the
/// edge gradient oracle work on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceKind {
    /// `n` equispaced points on `[0, 1]`, weight `1/n`, path edges.
    Grid1d { n: usize },
    /// `nx * ny` lattice on `[0, 1]^2`, weight `1/(nx ny)`, 4-neighbor edges.
    Grid2d { nx: usize, ny: usize },
    /// `n` points on a circle with the geodesic (arc-length) metric.
    Circle { n: usize, radius: f64 },
    /// Seeded random geometric graph on the unit square.
    WeightedGraph { n: usize, seed: u64 },
}

impl SpaceKind {
    /// Parses `grid1d:N`, `grid2d:NX:NY`, `circle:N[:R]` or `graph:N[:SEED]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| LabError::Parse(format!("missing field {i} in '{s}'")))?
                .parse()
                .map_err(|_| LabError::Parse(format!("bad integer in '{s}'")))
        };
        match parts[0] {
            "grid1d" => Ok(Self::Grid1d { n: num(1)? }),
            "grid2d" => Ok(Self::Grid2d { nx: num(1)?, ny: num(2)? }),
            "circle" => {
                let radius = match parts.get(2) {
                    Some(r) => r.parse().map_err(|_| LabError::Parse(format!("bad radius in '{s}'")))?,
                    None => 1.0,
                };
                Ok(Self::Circle { n: num(1)?, radius })
            }
            "graph" | "weighted_graph" => {
                let seed = if parts.len() > 2 { num(2)? as u64 } else { 0 };
                Ok(Self::WeightedGraph { n: num(1)?, seed })
            }
            other => Err(LabError::Parse(format!("unknown space kind '{other}'"))),
        }
    }
}

pub fn generate_space(kind: &SpaceKind) -> Result<MetricMeasureSpace> {
    match *kind {
        SpaceKind::Grid1d { n } => {
            require(n >= 2, "grid1d needs n >= 2")?;
            let coords = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
            let edges = (0..n - 1).map(|i| Edge { a: i, b: i + 1, len: 0.0 }).collect();
            MetricMeasureSpace::from_parts(
                (0..n as u64).collect(),
                Some(coords),
                MetricMode::Euclidean,
                vec![1.0 / n as f64; n],
                edges,
                None,
            )
        }
        SpaceKind::Grid2d { nx, ny } => {
            require(nx >= 2 && ny >= 2, "grid2d needs nx, ny >= 2")?;
            let n = nx * ny;
            let mut coords = Vec::with_capacity(n);
            let mut edges = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    coords.push(vec![i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64]);
                    let idx = j * nx + i;
                    if i + 1 < nx {
                        edges.push(Edge { a: idx, b: idx + 1, len: 0.0 });
                    }
                    if j + 1 < ny {
                        edges.push(Edge { a: idx, b: idx + nx, len: 0.0 });
                    }
                }
            }
            MetricMeasureSpace::from_parts(
                (0..n as u64).collect(),
                Some(coords),
                MetricMode::Euclidean,
                vec![1.0 / n as f64; n],
                edges,
                None,
            )
        }
        SpaceKind::Circle { n, radius } => {
            require(n >= 3, "circle needs n >= 3")?;
            require(radius > 0.0 && radius.is_finite(), "circle radius must be positive")?;
            let step = 2.0 * PI * radius / n as f64;
            let coords = (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    vec![radius * t.cos(), radius * t.sin()]
                })
                .collect();
            let edges = (0..n).map(|i| Edge { a: i, b: (i + 1) % n, len: step }).collect();
            MetricMeasureSpace::from_parts(
                (0..n as u64).collect(),
                Some(coords),
                MetricMode::GraphShortestPath,
                vec![1.0 / n as f64; n],
                edges,
                None,
            )
        }
        SpaceKind::WeightedGraph { n, seed } => {
            require(n >= 2, "weighted_graph needs n >= 2")?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coords: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let weights: Vec<f64> = (0..n).map(|_| (0.5 + rng.random::<f64>()) / n as f64).collect();
            let d = |a: usize, b: usize| -> f64 {
                ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt()
            };
            let mut pairs = std::collections::BTreeSet::new();
            // chain in x order guarantees connectivity
            let mut by_x: Vec<usize> = (0..n).collect();
            by_x.sort_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]));
            for w in by_x.windows(2) {
                pairs.insert((w[0].min(w[1]), w[0].max(w[1])));
            }
            for a in 0..n {
                let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
                others.sort_by(|&x, &y| d(a, x).total_cmp(&d(a, y)));
                for &b in others.iter().take(3) {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            let edges = pairs.into_iter().map(|(a, b)| Edge { a, b, len: d(a, b) }).collect();
            MetricMeasureSpace::from_parts(
                (0..n as u64).collect(),
                Some(coords),
                MetricMode::GraphShortestPath,
                weights,
                edges,
                None,
            )
        }
    }
}

/// Path graph `0 - 1 - ... - (n-1)` with equal edge lengths.
///
/// With `arc_length_weights` each vertex carries the trapezoid share of the
/// adjacent edges (`len/2` at the ends, `len` inside), so that point masses
/// restricted to the path reproduce arc length. Otherwise all weights are 1.
pub fn path_space(n: usize, edge_len: f64, arc_length_weights: bool) -> Result<MetricMeasureSpace> {
    require(n >= 2, "path needs at least two vertices")?;
    require(edge_len > 0.0 && edge_len.is_finite(), "edge length must be positive")?;
    let weights = (0..n)
        .map(|i| {
            if !arc_length_weights {
                1.0
            } else if i == 0 || i == n - 1 {
                edge_len / 2.0
            } else {
                edge_len
            }
        })
        .collect();
    MetricMeasureSpace::from_parts(
        (0..n as u64).collect(),
        Some((0..n).map(|i| vec![i as f64 * edge_len]).collect()),
        MetricMode::GraphShortestPath,
        weights,
        (0..n - 1).map(|i| Edge { a: i, b: i + 1, len: edge_len }).collect(),
        None,
    )
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(LabError::InvalidParameter(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid1d_two_points() {
        let s = generate_space(&SpaceKind::Grid1d { n: 2 }).unwrap();
        assert_eq!(s.coords().unwrap(), &[vec![0.0], vec![1.0]]);
        assert_eq!(s.weights(), &[0.5, 0.5]);
        assert_eq!(s.ball(0, 2.0), vec![0, 1]);
    }

    #[test]
    fn grid1d_rejects_tiny_n() {
        assert!(generate_space(&SpaceKind::Grid1d { n: 1 }).is_err());
    }

    #[test]
    fn circle_distances_are_quarter_turns() {
        let s = generate_space(&SpaceKind::Circle { n: 4, radius: 1.0 }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let q = s.dist(i, j) / (PI / 2.0);
                assert!((q - q.round()).abs() < 1e-12);
            }
        }
        assert!((s.dist(0, 2) - PI).abs() < 1e-12);
    }

    #[test]
    fn grid2d_is_euclidean() {
        let s = generate_space(&SpaceKind::Grid2d { nx: 4, ny: 4 }).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(s.mode(), MetricMode::Euclidean);
        assert!((s.dist(0, 15) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.edges().len(), 24);
    }

    #[test]
    fn weighted_graph_is_deterministic_and_connected() {
        let a = generate_space(&SpaceKind::WeightedGraph { n: 30, seed: 9 }).unwrap();
        let b = generate_space(&SpaceKind::WeightedGraph { n: 30, seed: 9 }).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert!(a.diameter().is_finite());
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(SpaceKind::parse("grid2d:3:5").unwrap(), SpaceKind::Grid2d { nx: 3, ny: 5 });
        assert_eq!(SpaceKind::parse("circle:8").unwrap(), SpaceKind::Circle { n: 8, radius: 1.0 });
        assert!(SpaceKind::parse("torus:3").is_err());
    }
}
