use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pair_seed, Verdict};
use crate::covering::{build_covers, neighbor_cap, validate_cover, CoverReport};
use crate::curves::{check_s_k_inequality, random_walk, Curve, CurveFamily, SLACK_TOL};
use crate::error::{LabError, Result};
use crate::function::{DiscreteFunction, TestFunction};
use crate::gradient::{norm_star_with, NormStarOptions, PLATEAU_TOL};
use crate::space::{strictly_below, MetricMeasureSpace};

use super::comparison::doubling_constant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverGeneration {
    pub k: i32,
    pub balls: usize,
    #[serde(rename = "N_k")]
    pub n_k: usize,
    pub checks: CoverReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverValidityReport {
    pub window: (i32, i32),
    pub per_k: Vec<CoverGeneration>,
    pub c_d: f64,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    /// `floor(C_d^5) − 1`.
    pub n_cap: usize,
    pub bounded: bool,
    pub pass: bool,
}

/// Runs every cover check at each admissible generation and compares the
/// largest neighbor count with the doubling cap.
pub fn cover_validity(space: &MetricMeasureSpace) -> CoverValidityReport {
    let (lo, hi) = space.admissible_window();
    let per_k: Vec<CoverGeneration> = build_covers(space, lo, hi, 0)
        .par_iter()
        .map(|c| {
            let checks = validate_cover(space, c);
            CoverGeneration { k: c.k, balls: c.len(), n_k: c.n_k, pass: checks.all_pass(), checks }
        })
        .collect();
    let c_d = doubling_constant(space);
    let n_max = per_k.iter().map(|g| g.n_k).max().unwrap_or(0);
    let n_cap = neighbor_cap(c_d);
    let bounded = n_max <= n_cap;
    CoverValidityReport {
        window: (lo, hi),
        pass: bounded && per_k.iter().all(|g| g.pass),
        per_k,
        c_d,
        n_max,
        n_cap,
        bounded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCoverRun {
    pub seed: u64,
    pub start: u64,
    pub limsup_estimate: f64,
    pub xi_observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCoverReport {
    pub p: f64,
    pub window: (i32, i32),
    pub trailing: usize,
    pub runs: Vec<CrossCoverRun>,
    /// `(max − min) / max` of the limsup estimates; 0 when all vanish.
    pub relative_spread: f64,
    pub xi_observed: f64,
    pub tolerance: f64,
    /// `xi_observed − 1 + tolerance`.
    pub bound: f64,
    pub pass: bool,
}

/// Recomputes the trailing-window limsup with the cover traversal started at
/// a seed-chosen point and reports how much it moves.
pub fn cross_cover_experiment(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    p: f64,
    window: (i32, i32),
    trailing: usize,
    seeds: &[u64],
) -> Result<CrossCoverReport> {
    if seeds.len() < 2 {
        return Err(LabError::InvalidParameter(format!("need at least 2 seeds, got {}", seeds.len())));
    }
    let runs: Vec<(CrossCoverRun, (i32, i32))> = seeds
        .par_iter()
        .map(|&seed| {
            let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..space.len());
            let opts = NormStarOptions { start, ..NormStarOptions::default() };
            let r = norm_star_with(space, u, p, window, trailing, opts)?;
            Ok((
                CrossCoverRun {
                    seed,
                    start: space.id(start),
                    limsup_estimate: r.limsup_estimate,
                    xi_observed: r.xi_observed,
                },
                r.window,
            ))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.0.limsup_estimate).collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
    let xi = runs.iter().map(|r| r.0.xi_observed).fold(1.0, f64::max);
    let bound = xi - 1.0 + PLATEAU_TOL;
    Ok(CrossCoverReport {
        p,
        window: runs[0].1,
        trailing,
        runs: runs.into_iter().map(|r| r.0).collect(),
        relative_spread: spread,
        xi_observed: xi,
        tolerance: PLATEAU_TOL,
        bound,
        pass: spread <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostUgTrial {
    pub trial: usize,
    pub k: i32,
    pub endpoints: (u64, u64),
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostUgReport {
    pub p: f64,
    pub window: (i32, i32),
    pub seed: u64,
    pub requested: usize,
    /// Trials with a walk whose endpoints are at least `2^-k` apart.
    pub evaluated: usize,
    pub skipped: usize,
    pub tolerance: f64,
    pub min_slack: f64,
    pub total_violations: usize,
    /// First violating trials, at most 50.
    pub violations: Vec<AlmostUgTrial>,
    pub pass: Verdict,
}

/// Random `(u, curve, k)` trials of `|S_k u(x) − S_k u(y)| ≤ 4 ∫_γ |T_k u|_p`.
///
/// Each trial draws `k` from the window, a random function (uniform values,
/// a random Lipschitz function or a sinusoid) and a self-avoiding edge walk
/// long enough to leave the scale `2^-k`. Walks that end too close are
/// retried a few times before the trial counts as skipped.
pub fn almostug_experiment(
    space: &MetricMeasureSpace,
    p: f64,
    window: (i32, i32),
    trials: usize,
    seed: u64,
) -> Result<AlmostUgReport> {
    if !space.has_edges() {
        return Err(LabError::NoEdges);
    }
    let (lo, hi) = space.clip_window(window.0, window.1)?;
    let covers = build_covers(space, lo, hi, 0);
    let n = space.len();
    let min_edge = space.edges().iter().map(|e| e.len).fold(f64::INFINITY, f64::min);
    let outcomes: Vec<Option<AlmostUgTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Option<AlmostUgTrial>> {
            let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, t as u64));
            let cover = &covers[rng.random_range(0..covers.len())];
            let u = match t % 3 {
                0 => DiscreteFunction::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()),
                1 => TestFunction::RandomLip { lip: rng.random_range(0.1..10.0), anchors: 16, seed: rng.random() }
                    .evaluate(space),
                _ => TestFunction::Sine { freq: rng.random_range(0.5..8.0) }.evaluate(space),
            };
            let base = (cover.radius / min_edge).ceil() as usize;
            for _ in 0..8 {
                let steps = rng.random_range(base.max(1)..=4 * base.max(1));
                let walk = random_walk(space, rng.random_range(0..n), steps, rng.random::<bool>(), &mut rng);
                if walk.len() < 2 || strictly_below(space.dist(walk[0], walk[walk.len() - 1]), cover.radius) {
                    continue;
                }
                let curve = Curve::new(space, walk)?;
                let (a, b) = curve.endpoints();
                let r = check_s_k_inequality(space, cover, &u, p, &CurveFamily::explicit(vec![curve]))?;
                return Ok(Some(AlmostUgTrial {
                    trial: t,
                    k: cover.k,
                    endpoints: (space.id(a), space.id(b)),
                    slack: r.min_slack,
                }));
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let done: Vec<&AlmostUgTrial> = outcomes.iter().flatten().collect();
    let bad: Vec<AlmostUgTrial> = done.iter().filter(|t| t.slack < -SLACK_TOL).map(|t| (*t).clone()).collect();
    let evaluated = done.len();
    Ok(AlmostUgReport {
        p,
        window: (lo, hi),
        seed,
        requested: trials,
        evaluated,
        skipped: trials - evaluated,
        tolerance: SLACK_TOL,
        min_slack: done.iter().map(|t| t.slack).fold(f64::INFINITY, f64::min),
        total_violations: bad.len(),
        violations: bad.into_iter().take(50).collect(),
        pass: if evaluated == 0 {
            Verdict::Indeterminate
        } else {
            Verdict::from_bool(done.iter().all(|t| t.slack >= -SLACK_TOL))
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, SpaceKind};

    #[test]
    fn cover_validity_on_small_spaces() {
        for kind in
            [SpaceKind::Grid1d { n: 64 }, SpaceKind::Grid2d { nx: 8, ny: 8 }, SpaceKind::Circle { n: 64, radius: 1.0 }]
        {
            let s = generate_space(&kind).unwrap();
            let r = cover_validity(&s);
            assert!(r.pass, "{kind:?}: {r:?}");
        }
    }

    #[test]
    fn cross_cover_constant_and_single_point() {
        let s = generate_space(&SpaceKind::Grid1d { n: 64 }).unwrap();
        let r = cross_cover_experiment(&s, &DiscreteFunction::constant(64, 3.0), 2.0, (0, 10), 2, &[1, 2, 3]).unwrap();
        assert_eq!(r.relative_spread, 0.0);
        assert!(r.pass);
        assert!(cross_cover_experiment(&s, &DiscreteFunction::constant(64, 3.0), 2.0, (0, 10), 2, &[1]).is_err());
        let one = MetricMeasureSpace::from_parts(
            vec![0],
            Some(vec![vec![0.0]]),
            crate::MetricMode::Euclidean,
            vec![1.0],
            vec![],
            None,
        )
        .unwrap();
        let r = cross_cover_experiment(&one, &DiscreteFunction::new(vec![1.0]), 2.0, (0, 0), 1, &[1, 2]).unwrap();
        assert_eq!(r.relative_spread, 0.0);
    }

    #[test]
    fn almostug_small_run() {
        let s = generate_space(&SpaceKind::Grid2d { nx: 8, ny: 8 }).unwrap();
        let r = almostug_experiment(&s, 2.0, (0, 10), 300, 5).unwrap();
        assert_eq!(r.pass, Verdict::Pass, "{r:?}");
        assert!(r.evaluated > 250);
    }
}
