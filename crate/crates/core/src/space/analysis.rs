//! Doubling statistics, the centered maximal operator and the lower
//! pointwise Lipschitz surrogate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{within, MetricMeasureSpace};
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;

/// Distances from one point, sorted ascending, with cumulative sums.
struct SortedRow {
    dist: Vec<f64>,
    mass: Vec<f64>,
    weighted: Vec<f64>,
}

impl SortedRow {
    fn new(space: &MetricMeasureSpace, x: usize, values: Option<&[f64]>) -> Self {
        let row = space.dist_row(x);
        let mut order: Vec<usize> = (0..space.len()).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let mut dist = Vec::with_capacity(order.len());
        let mut mass = Vec::with_capacity(order.len());
        let mut weighted = Vec::with_capacity(order.len());
        let (mut m, mut wsum) = (0.0, 0.0);
        for &j in &order {
            let w = space.weight(j);
            m += w;
            if let Some(v) = values {
                wsum += w * v[j];
            }
            dist.push(row[j]);
            mass.push(m);
            weighted.push(wsum);
        }
        Self { dist, mass, weighted }
    }

    /// Number of points in the closed ball of radius `r`.
    fn count(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| within(d, r))
    }

    fn ball_mass(&self, r: f64) -> f64 {
        self.mass[self.count(r) - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingSample {
    pub center: usize,
    pub radius: f64,
    pub ratio: f64,
}

/// Empirical doubling constant over a radius ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingStats {
    pub c_d_estimate: f64,
    pub exhaustive: bool,
    pub ladder: Vec<f64>,
    pub sample_log: Vec<DoublingSample>,
}

/// `mu(B(x, 2r)) / mu(B(x, r))`.
pub fn doubling_ratio(space: &MetricMeasureSpace, x: usize, r: f64) -> f64 {
    space.mass(&space.ball(x, 2.0 * r)) / space.mass(&space.ball(x, r))
}

/// Doubling estimate on the space's dyadic ladder.
pub fn estimate_doubling(space: &MetricMeasureSpace, sample_count: usize, seed: u64) -> DoublingStats {
    estimate_doubling_with_ladder(space, &space.dyadic_ladder(), sample_count, seed)
}

/// Maximum doubling ratio over `(center, radius)` pairs drawn from
/// `points x ladder`. When `sample_count` covers every pair the scan is
/// exhaustive; otherwise pairs are drawn with a seeded generator.
pub fn estimate_doubling_with_ladder(
    space: &MetricMeasureSpace,
    ladder: &[f64],
    sample_count: usize,
    seed: u64,
) -> DoublingStats {
    let n = space.len();
    let total = n * ladder.len();
    let exhaustive = sample_count >= total;
    let pairs: Vec<(usize, usize)> = if exhaustive {
        (0..n).flat_map(|x| (0..ladder.len()).map(move |r| (x, r))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<(usize, usize)> =
            (0..sample_count.max(1)).map(|_| (rng.random_range(0..n), rng.random_range(0..ladder.len()))).collect();
        v.sort_unstable();
        v
    };

    let mut by_center: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(x, r) in &pairs {
        by_center[x].push(r);
    }
    let per_center: Vec<Vec<DoublingSample>> = by_center
        .par_iter()
        .enumerate()
        .map(|(x, radii)| {
            if radii.is_empty() {
                return Vec::new();
            }
            let row = SortedRow::new(space, x, None);
            radii
                .iter()
                .map(|&ri| {
                    let r = ladder[ri];
                    DoublingSample { center: x, radius: r, ratio: row.ball_mass(2.0 * r) / row.ball_mass(r) }
                })
                .collect()
        })
        .collect();
    let sample_log: Vec<DoublingSample> = per_center.into_iter().flatten().collect();
    let c_d_estimate = sample_log.iter().map(|s| s.ratio).fold(1.0, f64::max);
    DoublingStats { c_d_estimate, exhaustive, ladder: ladder.to_vec(), sample_log }
}

/// Centered maximal function over the dyadic ladder plus the singleton ball.
pub fn maximal_function(space: &MetricMeasureSpace, g: &DiscreteFunction) -> Result<DiscreteFunction> {
    let mut ladder = vec![0.0];
    ladder.extend(space.dyadic_ladder());
    maximal_function_with_ladder(space, g, &ladder)
}

/// `(Mg)(x) = max_r mean_{B(x, r)} |g|` with `r` ranging over `ladder`.
pub fn maximal_function_with_ladder(
    space: &MetricMeasureSpace,
    g: &DiscreteFunction,
    ladder: &[f64],
) -> Result<DiscreteFunction> {
    g.check_len(space.len())?;
    if g.values().iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidParameter("maximal function needs a finite input".into()));
    }
    if ladder.iter().any(|&r| r.is_nan() || r < 0.0) {
        return Err(LabError::InvalidParameter("radii must be non-negative".into()));
    }
    let abs: Vec<f64> = g.values().iter().map(|v| v.abs()).collect();
    let values: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = SortedRow::new(space, x, Some(&abs));
            ladder
                .iter()
                .map(|&r| {
                    let c = row.count(r) - 1;
                    row.weighted[c] / row.mass[c]
                })
                .fold(abs[x], f64::max)
        })
        .collect();
    Ok(DiscreteFunction::new(values))
}

/// Largest `||Mg||_p / ||g||_p` over the supplied samples.
pub fn maximal_lp_ratio(space: &MetricMeasureSpace, samples: &[DiscreteFunction], p: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for g in samples {
        let denom = g.lp_norm(space, p);
        if denom == 0.0 {
            continue;
        }
        let mg = maximal_function(space, g)?;
        worst = worst.max(mg.lp_norm(space, p) / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipEstimate {
    pub values: DiscreteFunction,
    /// Points where some ladder ball was a singleton (ratio 0 by convention).
    pub degenerate: Vec<bool>,
}

/// Finite-ladder surrogate of `lip u(x) = liminf_{r -> 0} sup_{B(x, r)} |u(x) - u(y)| / r`.
///
/// For each ladder radius the sup is divided by the effective radius of the
/// sampled ball, i.e. its largest distance from `x`; the discrete ball is the
/// same set for every radius between that value and `r`. The ladder minimum
/// stands in for the liminf.
pub fn lip_estimate(space: &MetricMeasureSpace, u: &DiscreteFunction, ladder: &[f64]) -> Result<LipEstimate> {
    u.check_len(space.len())?;
    if ladder.is_empty() {
        return Err(LabError::InvalidParameter("radius ladder is empty".into()));
    }
    if ladder.iter().any(|&r| r.is_nan() || r <= 0.0) || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidParameter("radius ladder must be positive and strictly decreasing".into()));
    }
    let vals = u.values();
    let out: Vec<(f64, bool)> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = space.dist_row(x);
            let mut best = f64::INFINITY;
            let mut degenerate = false;
            for &r in ladder {
                let mut sup: f64 = 0.0;
                let mut reach: f64 = 0.0;
                for (y, &d) in row.iter().enumerate() {
                    if y != x && within(d, r) {
                        sup = sup.max((vals[x] - vals[y]).abs());
                        reach = reach.max(d);
                    }
                }
                let ratio = if reach > 0.0 {
                    sup / reach
                } else {
                    degenerate = true;
                    0.0
                };
                best = best.min(ratio);
            }
            (best, degenerate)
        })
        .collect();
    Ok(LipEstimate {
        values: DiscreteFunction::new(out.iter().map(|o| o.0).collect()),
        degenerate: out.iter().map(|o| o.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, MetricMode, SpaceKind};

    fn two_points() -> MetricMeasureSpace {
        MetricMeasureSpace::from_parts(
            vec![0, 1],
            Some(vec![vec![0.0], vec![1.0]]),
            MetricMode::Euclidean,
            vec![1.0, 1.0],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn doubling_single_point_is_one() {
        let s = MetricMeasureSpace::from_parts(
            vec![7],
            Some(vec![vec![0.0]]),
            MetricMode::Euclidean,
            vec![2.0],
            vec![],
            None,
        )
        .unwrap();
        assert_eq!(estimate_doubling(&s, 100, 1).c_d_estimate, 1.0);
    }

    #[test]
    fn doubling_two_points_direct_count() {
        let s = two_points();
        assert_eq!(doubling_ratio(&s, 0, 0.6), 2.0);
    }

    #[test]
    fn doubling_grid1d_256_at_most_four() {
        let s = generate_space(&SpaceKind::Grid1d { n: 256 }).unwrap();
        let stats = estimate_doubling(&s, usize::MAX, 0);
        assert!(stats.exhaustive);
        // independent exhaustive scan with direct ball enumeration
        let mut oracle: f64 = 1.0;
        for x in 0..s.len() {
            for &r in &stats.ladder {
                oracle = oracle.max(doubling_ratio(&s, x, r));
            }
        }
        assert_eq!(stats.c_d_estimate, oracle);
        assert!(stats.c_d_estimate <= 4.0, "{}", stats.c_d_estimate);
    }

    #[test]
    fn sampled_doubling_is_deterministic() {
        let s = generate_space(&SpaceKind::Grid2d { nx: 6, ny: 5 }).unwrap();
        let a = estimate_doubling(&s, 20, 42);
        let b = estimate_doubling(&s, 20, 42);
        assert!(!a.exhaustive);
        assert_eq!(a, b);
    }

    #[test]
    fn maximal_of_constant_is_abs_constant() {
        let s = generate_space(&SpaceKind::Grid1d { n: 16 }).unwrap();
        let g = DiscreteFunction::constant(16, -3.0);
        let mg = maximal_function(&s, &g).unwrap();
        assert!(mg.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn maximal_of_indicator_matches_ladder_scan() {
        let s = generate_space(&SpaceKind::Grid1d { n: 4 }).unwrap();
        let mut vals = vec![0.0; 4];
        vals[1] = 1.0;
        let g = DiscreteFunction::new(vals);
        let mg = maximal_function(&s, &g).unwrap();
        let mut ladder = vec![0.0];
        ladder.extend(s.dyadic_ladder());
        for x in 0..4 {
            let mut best: f64 = 0.0;
            for &r in &ladder {
                let b = s.ball(x, r);
                let hit = if b.contains(&1) { s.weight(1) } else { 0.0 };
                best = best.max(hit / s.mass(&b));
            }
            assert!((mg.values()[x] - best).abs() < 1e-15);
        }
        assert_eq!(mg.values()[1], 1.0);
    }

    #[test]
    fn lip_of_constant_is_zero() {
        let s = generate_space(&SpaceKind::Grid1d { n: 32 }).unwrap();
        let u = DiscreteFunction::constant(32, 4.0);
        let l = lip_estimate(&s, &u, &[0.25, 0.125]).unwrap();
        assert!(l.values.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lip_of_identity_on_grid1d_256() {
        let s = generate_space(&SpaceKind::Grid1d { n: 256 }).unwrap();
        let u = DiscreteFunction::new(s.coords().unwrap().iter().map(|c| c[0]).collect());
        let ladder: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
        let l = lip_estimate(&s, &u, &ladder).unwrap();
        assert!(l.values.values().iter().all(|&v| (0.9..=1.1).contains(&v)));
        assert!(l.degenerate.iter().all(|&d| !d));
    }

    #[test]
    fn lip_flags_sub_resolution_ladder() {
        let s = generate_space(&SpaceKind::Grid1d { n: 8 }).unwrap();
        let u = DiscreteFunction::new((0..8).map(|i| i as f64).collect());
        let l = lip_estimate(&s, &u, &[0.5, 0.01]).unwrap();
        assert!(l.degenerate.iter().all(|&d| d));
        assert!(l.values.values().iter().all(|&v| v == 0.0));
        assert!(lip_estimate(&s, &u, &[0.01, 0.5]).is_err());
    }
}
