use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pair_seed, Verdict};
use crate::covering::{build_cover, BallCover};
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;
use crate::gradient::t_k;
use crate::space::MetricMeasureSpace;

/// Allowed excess of `Φ(u+v)/2` over `1 − δ_p(ε)`.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Modulus of convexity of an `L^p` space.
///
/// For `p ≥ 2` this is `1 − (1 − (ε/2)^p)^{1/p}`; for `1 < p < 2` it solves
/// `(1 − δ + ε/2)^p + |1 − δ − ε/2|^p = 2`. It is zero at `p = 1`.
pub fn lp_modulus(p: f64, epsilon: f64) -> f64 {
    let e = epsilon.clamp(0.0, 2.0);
    if p <= 1.0 || e == 0.0 {
        return 0.0;
    }
    if p >= 2.0 {
        return 1.0 - (1.0 - (e / 2.0).powf(p)).max(0.0).powf(1.0 / p);
    }
    // the left side decreases in δ on [0, 1]
    let f = |d: f64| (1.0 - d + e / 2.0).powf(p) + (1.0 - d - e / 2.0).abs().powf(p) - 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Linear embedding `u ↦ (u, T_k u)` into a weighted `ℓ^p`; `Φ` is the
/// weighted `p`-norm of the image.
pub struct ProductEmbedding<'a> {
    space: &'a MetricMeasureSpace,
    cover: BallCover,
    p: f64,
}

impl<'a> ProductEmbedding<'a> {
    pub fn new(space: &'a MetricMeasureSpace, k: i32, p: f64) -> Self {
        Self { space, cover: build_cover(space, k), p }
    }

    pub fn embed(&self, u: &DiscreteFunction) -> Result<Vec<f64>> {
        let field = t_k(self.space, &self.cover, u, self.p)?;
        let mut out = u.values().to_vec();
        for v in &field.vectors {
            out.extend_from_slice(v);
        }
        Ok(out)
    }

    /// Φ of an embedded vector.
    pub fn phi(&self, e: &[f64]) -> f64 {
        let n = self.space.len();
        let m = self.cover.n_k;
        let w = self.space.weights();
        let mut s: f64 = (0..n).map(|x| w[x] * e[x].abs().powf(self.p)).sum();
        for (x, wx) in w.iter().enumerate() {
            let start = n + x * m;
            s += wx * e[start..start + m].iter().map(|c| c.abs().powf(self.p)).sum::<f64>();
        }
        s.powf(1.0 / self.p)
    }
}

fn add(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub delta_analytic: f64,
    /// Pairs with `Φ(u − v) > ε`.
    pub pairs: usize,
    pub max_half_sum: Option<f64>,
    /// `1 − max Φ(u+v)/2` over those pairs.
    pub delta_observed: Option<f64>,
    pub counterexamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub pair: usize,
    pub epsilon: f64,
    pub distance: f64,
    pub half_sum: f64,
    pub bound: f64,
}

/// Two unit functions at the farthest points from point 0 and from each
/// other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointWitness {
    pub points: (u64, u64),
    /// Whether the embedded images have disjoint supports.
    pub disjoint_images: bool,
    pub distance: f64,
    pub half_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub p: f64,
    pub k: i32,
    pub sample_count: usize,
    pub seed: u64,
    pub slack: f64,
    pub per_epsilon: Vec<EpsilonRow>,
    pub total_counterexamples: usize,
    /// First counterexamples found, at most 50.
    pub counterexamples: Vec<Counterexample>,
    pub witness: Option<DisjointWitness>,
    /// For `p > 1`: no counterexamples. For `p = 1`: the witness reaches
    /// `Φ(u+v)/2 ≥ 1 − 1e-12`.
    pub pass: Verdict,
}

fn disjoint_witness(space: &MetricMeasureSpace, emb: &ProductEmbedding) -> Result<Option<DisjointWitness>> {
    if space.len() < 2 {
        return Ok(None);
    }
    let far = |x: usize| (0..space.len()).max_by(|&a, &b| space.dist(x, a).total_cmp(&space.dist(x, b))).unwrap();
    let a = far(0);
    let b = far(a);
    let unit = |i: usize| -> Result<Vec<f64>> {
        let mut v = vec![0.0; space.len()];
        v[i] = 1.0;
        let e = emb.embed(&DiscreteFunction::new(v))?;
        let n = emb.phi(&e);
        Ok(e.iter().map(|x| x / n).collect())
    };
    let (eu, ev) = (unit(a)?, unit(b)?);
    let disjoint = eu.iter().zip(&ev).all(|(x, y)| *x == 0.0 || *y == 0.0);
    Ok(Some(DisjointWitness {
        points: (space.id(a), space.id(b)),
        disjoint_images: disjoint,
        distance: emb.phi(&add(&eu, &ev, -1.0)),
        half_sum: emb.phi(&add(&eu, &ev, 1.0)) / 2.0,
    }))
}

/// Samples pairs on the unit sphere of the generation-`k` product norm and
/// compares `Φ(u+v)/2` against `1 − δ_p(ε)` whenever `Φ(u − v) > ε`.
pub fn convexity_probe(
    space: &MetricMeasureSpace,
    p: f64,
    k: i32,
    sample_count: usize,
    epsilon_grid: &[f64],
    seed: u64,
) -> Result<ConvexityReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(LabError::InvalidParameter(format!("p = {p} must be in [1, inf)")));
    }
    if epsilon_grid.iter().any(|e| !(*e > 0.0 && *e <= 2.0)) {
        return Err(LabError::InvalidParameter("epsilons must lie in (0, 2]".into()));
    }
    let emb = ProductEmbedding::new(space, k, p);
    let n = space.len();
    let unit = |v: Vec<f64>| -> Result<Option<Vec<f64>>> {
        let e = emb.embed(&DiscreteFunction::new(v))?;
        let norm = emb.phi(&e);
        Ok((norm > 0.0).then(|| e.iter().map(|x| x / norm).collect()))
    };
    let samples: Vec<Option<(f64, f64)>> = (0..sample_count)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, f64)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, i as u64));
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = match i % 3 {
                0 => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                1 => {
                    let t = 10f64.powf(-rng.random_range(0.0..2.0));
                    u.iter().map(|x| x + t * rng.random_range(-1.0..1.0)).collect()
                }
                _ => u.iter().map(|x| if rng.random::<bool>() { -x } else { *x }).collect(),
            };
            let (Some(eu), Some(ev)) = (unit(u)?, unit(v)?) else { return Ok(None) };
            Ok(Some((emb.phi(&add(&eu, &ev, -1.0)), emb.phi(&add(&eu, &ev, 1.0)) / 2.0)))
        })
        .collect::<Result<_>>()?;

    let mut per_epsilon = Vec::new();
    let mut counterexamples = Vec::new();
    let mut total = 0;
    for &eps in epsilon_grid {
        let delta = lp_modulus(p, eps);
        let bound = 1.0 - delta;
        let mut row = EpsilonRow {
            epsilon: eps,
            delta_analytic: delta,
            pairs: 0,
            max_half_sum: None,
            delta_observed: None,
            counterexamples: 0,
        };
        for (i, s) in samples.iter().enumerate() {
            let Some((dist, half)) = *s else { continue };
            if dist <= eps {
                continue;
            }
            row.pairs += 1;
            row.max_half_sum = Some(row.max_half_sum.map_or(half, |m: f64| m.max(half)));
            if p > 1.0 && half > bound + CONVEXITY_SLACK {
                row.counterexamples += 1;
                total += 1;
                if counterexamples.len() < 50 {
                    counterexamples.push(Counterexample {
                        pair: i,
                        epsilon: eps,
                        distance: dist,
                        half_sum: half,
                        bound,
                    });
                }
            }
        }
        row.delta_observed = row.max_half_sum.map(|m| 1.0 - m);
        per_epsilon.push(row);
    }
    let witness = disjoint_witness(space, &emb)?;
    let pass = if p > 1.0 {
        Verdict::from_bool(total == 0)
    } else {
        match &witness {
            Some(w) => Verdict::from_bool(w.half_sum >= 1.0 - 1e-12),
            None => Verdict::Indeterminate,
        }
    };
    Ok(ConvexityReport {
        p,
        k,
        sample_count,
        seed,
        slack: CONVEXITY_SLACK,
        per_epsilon,
        total_counterexamples: total,
        counterexamples,
        witness,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, MetricMode, SpaceKind};

    fn two_points() -> MetricMeasureSpace {
        MetricMeasureSpace::from_parts(
            vec![0, 1],
            Some(vec![vec![0.0], vec![3.0]]),
            MetricMode::Euclidean,
            vec![0.5, 0.5],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn modulus_values() {
        // orthogonal unit vectors in l2: |u - v| = sqrt 2, |u + v|/2 = sqrt(2)/2
        let d = lp_modulus(2.0, 2f64.sqrt());
        assert!((d - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.2929).abs() < 1e-4);
        assert_eq!(lp_modulus(1.0, 1.0), 0.0);
        assert!((lp_modulus(3.0, 2.0) - 1.0).abs() < 1e-12);
        // Hanner branch meets the p >= 2 formula at p = 2
        let a = lp_modulus(1.999999, 1.0);
        let b = lp_modulus(2.0, 1.0);
        assert!((a - b).abs() < 1e-5, "{a} {b}");
        // and is increasing in epsilon
        assert!(lp_modulus(1.5, 0.5) < lp_modulus(1.5, 1.0));
    }

    #[test]
    fn orthogonal_pair_on_two_points() {
        let s = two_points();
        let emb = ProductEmbedding::new(&s, 0, 2.0);
        let u = emb.embed(&DiscreteFunction::new(vec![2f64.sqrt(), 0.0])).unwrap();
        let v = emb.embed(&DiscreteFunction::new(vec![0.0, 2f64.sqrt()])).unwrap();
        assert!((emb.phi(&u) - 1.0).abs() < 1e-12);
        assert!((emb.phi(&add(&u, &v, 1.0)) / 2.0 - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((emb.phi(&add(&u, &v, -1.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn equal_pair_never_counts() {
        let s = generate_space(&SpaceKind::Grid1d { n: 16 }).unwrap();
        let emb = ProductEmbedding::new(&s, 2, 2.0);
        let u = emb.embed(&DiscreteFunction::new((0..16).map(|i| (i as f64).sin()).collect())).unwrap();
        assert_eq!(emb.phi(&add(&u, &u, -1.0)), 0.0);
    }

    #[test]
    fn p1_witness_is_exact() {
        let r = convexity_probe(&two_points(), 1.0, 0, 10, &[1.0], 7).unwrap();
        let w = r.witness.unwrap();
        assert!(w.disjoint_images);
        assert_eq!(w.half_sum, 1.0);
        assert_eq!(r.pass, Verdict::Pass);
    }

    #[test]
    fn p2_probe_has_no_counterexamples() {
        let s = generate_space(&SpaceKind::Grid1d { n: 32 }).unwrap();
        let r = convexity_probe(&s, 2.0, 3, 600, &[0.25, 0.5, 1.0, 1.5], 1).unwrap();
        assert_eq!(r.pass, Verdict::Pass);
        assert!(r.per_epsilon.iter().all(|row| row.pairs > 0));
        let r15 = convexity_probe(&s, 1.5, 3, 300, &[0.5, 1.0], 1).unwrap();
        assert_eq!(r15.total_counterexamples, 0);
    }
}
