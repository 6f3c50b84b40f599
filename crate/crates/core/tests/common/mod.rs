//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use newtonian_lab::curves::{Curve, CurveFamily};
use newtonian_lab::space::Edge;
use newtonian_lab::{MetricMeasureSpace, MetricMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random Euclidean point cloud in the unit square with a path edge list
/// through the points in index order. Points closer than `1e-3` are nudged.
pub fn random_cloud(n: usize, seed: u64) -> MetricMeasureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<Vec<f64>> = Vec::new();
    while coords.len() < n {
        let c = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        if coords.iter().all(|o| ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2)).sqrt() > 1e-3) {
            coords.push(c);
        }
    }
    let weights = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let edges = (1..n).map(|i| Edge { a: i - 1, b: i, len: 0.0 }).collect();
    MetricMeasureSpace::from_parts((0..n as u64).collect(), Some(coords), MetricMode::Euclidean, weights, edges, None)
        .unwrap()
}

/// Path graph `0 - 1 - ... - (n-1)` with the given edge lengths and weights.
pub fn weighted_path(lengths: &[f64], weights: &[f64]) -> MetricMeasureSpace {
    let n = weights.len();
    assert_eq!(lengths.len() + 1, n);
    let edges = lengths.iter().enumerate().map(|(i, &l)| Edge { a: i, b: i + 1, len: l }).collect();
    MetricMeasureSpace::from_parts(
        (0..n as u64).collect(),
        None,
        MetricMode::GraphShortestPath,
        weights.to_vec(),
        edges,
        None,
    )
    .unwrap()
}

/// Trapezoid integral written out segment by segment.
pub fn trapezoid(space: &MetricMeasureSpace, vertices: &[usize], rho: &[f64]) -> f64 {
    vertices.windows(2).map(|w| space.dist(w[0], w[1]) * 0.5 * (rho[w[0]] + rho[w[1]])).sum()
}

/// `Σ w ρ^p / (min_γ ∫_γ ρ)^p`, the modulus objective along the ray through
/// `ρ`; infinite when some curve has zero integral.
fn ray_value(space: &MetricMeasureSpace, curves: &[Vec<usize>], rho: &[f64], p: f64) -> f64 {
    let m = curves.iter().map(|c| trapezoid(space, c, rho)).fold(f64::INFINITY, f64::min);
    if m <= 0.0 {
        return f64::INFINITY;
    }
    let mass: f64 = rho.iter().zip(space.weights()).map(|(r, w)| w * r.powf(p)).sum();
    mass / m.powf(p)
}

/// Modulus by direct search over densities, for spaces of at most six
/// points. The objective is scale invariant along rays, so the search runs
/// over the simplex `Σ ρ = 1`: a lattice scan followed by a pattern search
/// whose step halves whenever no coordinate move improves.
pub fn brute_force_modulus(space: &MetricMeasureSpace, curves: &[Vec<usize>], p: f64) -> f64 {
    let n = space.len();
    assert!(n <= 6, "grid search is for tiny spaces");
    if curves.is_empty() {
        return 0.0;
    }
    let steps = 10usize;
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let mut counts = vec![0usize; n];
    fn visit(i: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i + 1 == counts.len() {
            counts[i] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            visit(i + 1, left - c, counts, f);
        }
    }
    visit(0, steps, &mut counts, &mut |c: &[usize]| {
        let rho: Vec<f64> = c.iter().map(|&v| v as f64 / steps as f64).collect();
        let v = ray_value(space, curves, &rho, p);
        if v < best.0 {
            best = (v, rho);
        }
    });
    let (mut val, mut rho) = best;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut h = 0.5 / steps as f64;
    while h > 1e-12 {
        // coordinate moves, transfers between two coordinates, and random
        // directions, which together slide along the kinks of the min
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut d = vec![0.0; n];
                d[i] += 1.0;
                if j != i {
                    d[j] -= 1.0;
                }
                dirs.push(d);
            }
        }
        for _ in 0..8 * n {
            dirs.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        let mut improved = false;
        for d in &dirs {
            for s in [-1.0, 1.0] {
                let cand: Vec<f64> = rho.iter().zip(d).map(|(r, di)| (r + s * h * di).max(0.0)).collect();
                let v = ray_value(space, curves, &cand, p);
                if v < val - 1e-15 * val {
                    val = v;
                    rho = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    val
}

/// Modulus from the multiplier side, for families of at most four curves.
///
/// For `λ` in the simplex over curves and `z = Σ_γ λ_γ a_γ` (trapezoid
/// coefficients), Hölder gives `Mod_p ≥ (Σ_i w_i^{1-q} z_i^q)^{-p/q}` with
/// `q = p/(p-1)`, and `Mod_1 ≥ 1 / max_i (z_i / w_i)`; the best `λ` attains
/// the modulus. For `p > 1` the bound is smooth and convex in `λ`, so a
/// lattice scan plus a shrinking full stencil finds its optimum. For `p = 1`
/// it is piecewise linear and the search can stall on a kink, so the linear
/// program `max Σλ` subject to `Σ_γ λ_γ a_γ ≤ w`, `λ ≥ 0` is solved by
/// enumerating every vertex.
pub fn grid_search_modulus(space: &MetricMeasureSpace, curves: &[Vec<usize>], p: f64) -> f64 {
    let m = curves.len();
    assert!((1..=4).contains(&m));
    let n = space.len();
    let coef: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| {
            let mut a = vec![0.0; n];
            for w in c.windows(2) {
                let l = space.dist(w[0], w[1]);
                a[w[0]] += l / 2.0;
                a[w[1]] += l / 2.0;
            }
            a
        })
        .collect();
    let w = space.weights();
    if p == 1.0 {
        return vertex_enumeration(&coef, w);
    }
    // value to minimize; the modulus is its reciprocal power
    let phi = |lam: &[f64]| -> f64 {
        let total: f64 = lam.iter().sum();
        let z: Vec<f64> = (0..n).map(|i| (0..m).map(|g| lam[g] * coef[g][i]).sum::<f64>() / total).collect();
        if p == 1.0 {
            (0..n).map(|i| z[i] / w[i]).fold(0.0, f64::max)
        } else {
            let q = p / (p - 1.0);
            (0..n).map(|i| w[i].powf(1.0 - q) * z[i].powf(q)).sum::<f64>().powf(1.0 / q)
        }
    };
    let steps = 24usize;
    let mut best = (f64::INFINITY, vec![1.0; m]);
    let mut counts = vec![0usize; m];
    fn visit(i: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i + 1 == counts.len() {
            counts[i] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            visit(i + 1, left - c, counts, f);
        }
    }
    visit(0, steps, &mut counts, &mut |c: &[usize]| {
        let lam: Vec<f64> = c.iter().map(|&v| v as f64 / steps as f64).collect();
        let v = phi(&lam);
        if v < best.0 {
            best = (v, lam);
        }
    });
    let (mut val, mut lam) = best;
    let mut h = 1.0 / steps as f64;
    let stencil: Vec<Vec<f64>> = (0..3usize.pow(m as u32))
        .map(|mut code| {
            (0..m)
                .map(|_| {
                    let d = (code % 3) as f64 - 1.0;
                    code /= 3;
                    d
                })
                .collect()
        })
        .collect();
    while h > 1e-13 {
        let mut improved = false;
        for d in &stencil {
            let cand: Vec<f64> = lam.iter().zip(d).map(|(l, di)| (l + h * di).max(0.0)).collect();
            if cand.iter().sum::<f64>() <= 0.0 {
                continue;
            }
            let v = phi(&cand);
            if v < val * (1.0 - 1e-15) {
                val = v;
                lam = cand;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    val.powf(-p)
}

fn vertex_enumeration(coef: &[Vec<f64>], w: &[f64]) -> f64 {
    let m = coef.len();
    // constraint rows `r · λ ≤ b`, including `-λ_g ≤ 0`
    let mut rows: Vec<(Vec<f64>, f64)> = (0..w.len()).map(|i| (coef.iter().map(|a| a[i]).collect(), w[i])).collect();
    for g in 0..m {
        let mut r = vec![0.0; m];
        r[g] = -1.0;
        rows.push((r, 0.0));
    }
    let mut best = 0.0f64;
    let mut pick = Vec::new();
    fn choose(start: usize, need: usize, total: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if need == 0 {
            f(pick);
            return;
        }
        for i in start..total {
            pick.push(i);
            choose(i + 1, need - 1, total, pick, f);
            pick.pop();
        }
    }
    choose(0, m, rows.len(), &mut pick, &mut |sel: &[usize]| {
        let mut a: Vec<Vec<f64>> = sel
            .iter()
            .map(|&i| {
                let mut r = rows[i].0.clone();
                r.push(rows[i].1);
                r
            })
            .collect();
        // Gauss-Jordan with partial pivoting
        for c in 0..m {
            let piv = (c..m).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            if a[piv][c].abs() < 1e-12 {
                return;
            }
            a.swap(c, piv);
            let pivot_row = a[c].clone();
            for (r, row) in a.iter_mut().enumerate() {
                if r != c {
                    let f = row[c] / pivot_row[c];
                    for (x, y) in row.iter_mut().zip(&pivot_row).skip(c) {
                        *x -= f * y;
                    }
                }
            }
        }
        let lam: Vec<f64> = (0..m).map(|c| a[c][m] / a[c][c]).collect();
        let feasible = rows
            .iter()
            .all(|(r, b)| r.iter().zip(&lam).map(|(x, l)| x * l).sum::<f64>() <= b + 1e-12 * (1.0 + b.abs()));
        if feasible {
            best = best.max(lam.iter().sum());
        }
    });
    best
}

pub fn family(space: &MetricMeasureSpace, curves: &[Vec<usize>]) -> CurveFamily {
    CurveFamily::explicit(curves.iter().map(|c| Curve::new(space, c.clone()).unwrap()).collect())
}

/// Random simple edge path of length at least one edge, or `None` when the
/// start has no neighbors.
pub fn random_edge_path(space: &MetricMeasureSpace, rng: &mut ChaCha8Rng, max_steps: usize) -> Option<Vec<usize>> {
    let mut path = vec![rng.random_range(0..space.len())];
    for _ in 0..rng.random_range(1..=max_steps) {
        let last = *path.last().unwrap();
        let next: Vec<usize> = space.adjacent(last).iter().copied().filter(|v| !path.contains(v)).collect();
        if next.is_empty() {
            break;
        }
        path.push(next[rng.random_range(0..next.len())]);
    }
    (path.len() >= 2).then_some(path)
}

/// Ball averages and `|T_k u(x)|_p` recomputed from the definition: the cell
/// ball is the first ball containing `x` and neighbors are balls whose point
/// sets come closer than `2^-k`, padded with the cell ball.
pub fn t_k_reference(space: &MetricMeasureSpace, centers: &[usize], k: i32, u: &[f64], p: f64) -> Vec<f64> {
    let h = 2f64.powi(-k);
    let n = space.len();
    let balls: Vec<Vec<usize>> =
        centers.iter().map(|&c| (0..n).filter(|&y| space.dist(c, y) <= h * (1.0 + 1e-12)).collect()).collect();
    let avg: Vec<f64> = balls
        .iter()
        .map(|b| {
            let m: f64 = b.iter().map(|&y| space.weight(y)).sum();
            b.iter().map(|&y| space.weight(y) * u[y]).sum::<f64>() / m
        })
        .collect();
    let set_dist = |a: &[usize], b: &[usize]| {
        a.iter()
            .flat_map(|&x| b.iter().map(move |&y| (x, y)))
            .map(|(x, y)| space.dist(x, y))
            .fold(f64::INFINITY, f64::min)
    };
    let nbrs: Vec<Vec<usize>> = (0..balls.len())
        .map(|i| (0..balls.len()).filter(|&j| j != i && set_dist(&balls[i], &balls[j]) < h).collect())
        .collect();
    (0..n)
        .map(|x| {
            let i = (0..balls.len()).find(|&i| balls[i].contains(&x)).unwrap();
            let s: f64 = nbrs[i].iter().map(|&j| (2f64.powi(k) * (avg[i] - avg[j])).abs().powf(p)).sum();
            s.powf(1.0 / p)
        })
        .collect()
}
