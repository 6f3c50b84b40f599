//! The averaging operator `S_k`, the discrete gradient `T_k` and the norm
//! built from the `T_k` over a window of generations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{build_cover_from, BallCover};
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;
use crate::space::{average, MetricMeasureSpace};

/// Average of `u` over every ball of the cover.
pub fn ball_averages(space: &MetricMeasureSpace, cover: &BallCover, u: &DiscreteFunction) -> Result<Vec<f64>> {
    u.check_len(space.len())?;
    cover.members.iter().map(|b| average(space.weights(), u.values(), b)).collect()
}

/// `S_k u(x) = u_{B[x]}`.
pub fn s_k(space: &MetricMeasureSpace, cover: &BallCover, u: &DiscreteFunction) -> Result<DiscreteFunction> {
    let avg = ball_averages(space, cover, u)?;
    Ok(DiscreteFunction::new(cover.cell_of.iter().map(|&i| avg[i]).collect()))
}

/// `T_k u` with its pointwise `l^p` norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TkField {
    pub k: i32,
    pub p: f64,
    #[serde(rename = "N_k")]
    pub n_k: usize,
    /// Per point, the `N_k` components `2^k (u_{B[x]} - u_{B[x,j]})`.
    pub vectors: Vec<Vec<f64>>,
    pub pointwise_norm: Vec<f64>,
}

impl TkField {
    /// `|T_k u(x)|_q` for another exponent `q`.
    pub fn pointwise_lq(&self, q: f64) -> Vec<f64> {
        self.vectors.iter().map(|v| lq(v, q)).collect()
    }

    /// `|| |T_k u|_p ||_{L^p}`.
    pub fn lp_norm(&self, space: &MetricMeasureSpace) -> f64 {
        space.lp_norm(&self.pointwise_norm, self.p)
    }
}

pub(crate) fn lq(v: &[f64], q: f64) -> f64 {
    v.iter().map(|c| c.abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

pub fn t_k(space: &MetricMeasureSpace, cover: &BallCover, u: &DiscreteFunction, p: f64) -> Result<TkField> {
    check_p(p)?;
    let avg = ball_averages(space, cover, u)?;
    let scale = 2f64.powi(cover.k);
    let vectors: Vec<Vec<f64>> = (0..space.len())
        .map(|x| {
            let (i, list) = cover.lookup(x);
            list.iter().map(|&j| scale * (avg[i] - avg[j])).collect()
        })
        .collect();
    let pointwise_norm = vectors.iter().map(|v| lq(v, p)).collect();
    Ok(TkField { k: cover.k, p, n_k: cover.n_k, vectors, pointwise_norm })
}

/// `|T_k u|_p` per ball from the unpadded neighbor lists.
pub fn t_k_norm_unpadded(
    space: &MetricMeasureSpace,
    cover: &BallCover,
    u: &DiscreteFunction,
    p: f64,
) -> Result<Vec<f64>> {
    let avg = ball_averages(space, cover, u)?;
    let scale = 2f64.powi(cover.k);
    Ok(cover
        .neighbors
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let v: Vec<f64> = list.iter().map(|&j| scale * (avg[i] - avg[j])).collect();
            lq(&v, p)
        })
        .collect())
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(LabError::InvalidParameter(format!("exponent p = {p} must be finite and >= 1")));
    }
    Ok(())
}

/// Default relative tolerance for the plateau detector.
pub const PLATEAU_TOL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStarOptions {
    pub plateau_tol: f64,
    /// Point index where the farthest-point traversal starts.
    pub start: usize,
}

impl Default for NormStarOptions {
    fn default() -> Self {
        Self { plateau_tol: PLATEAU_TOL, start: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStarReport {
    pub p: f64,
    pub requested_window: (i32, i32),
    pub window: (i32, i32),
    pub trailing: usize,
    pub per_k: Vec<(i32, f64)>,
    pub u_lp_norm: f64,
    pub limsup_estimate: f64,
    pub liminf_estimate: f64,
    pub xi_observed: f64,
    pub norm_star: f64,
    /// Longest run of generations whose successive values change by at most
    /// `plateau_tol` relative; `None` when no two neighbors agree.
    pub plateau_window: Option<(i32, i32)>,
    pub plateau_tol: f64,
    pub surrogate: String,
}

pub const SURROGATE_NOTE: &str =
    "limsup/liminf over k replaced by max/min over the trailing generations of the clipped window";

pub fn norm_star(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    p: f64,
    window: (i32, i32),
    trailing: usize,
) -> Result<NormStarReport> {
    norm_star_with(space, u, p, window, trailing, NormStarOptions::default())
}

pub fn norm_star_with(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    p: f64,
    window: (i32, i32),
    trailing: usize,
    opts: NormStarOptions,
) -> Result<NormStarReport> {
    check_p(p)?;
    u.check_len(space.len())?;
    u.check_finite()?;
    let (lo, hi) = space.clip_window(window.0, window.1)?;
    let len = (hi - lo + 1) as usize;
    if trailing == 0 || trailing > len {
        return Err(LabError::InvalidParameter(format!(
            "trailing = {trailing} must be in 1..={len} for window {lo}:{hi}"
        )));
    }
    let per_k: Vec<(i32, f64)> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let cover = build_cover_from(space, k, opts.start);
            t_k(space, &cover, u, p).map(|f| (k, f.lp_norm(space)))
        })
        .collect::<Result<_>>()?;
    let tail = &per_k[len - trailing..];
    let limsup = tail.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let liminf = tail.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let xi = if limsup == 0.0 { 1.0 } else { limsup / liminf };
    let u_norm = u.lp_norm(space, p);
    Ok(NormStarReport {
        p,
        requested_window: window,
        window: (lo, hi),
        trailing,
        u_lp_norm: u_norm,
        limsup_estimate: limsup,
        liminf_estimate: liminf,
        xi_observed: xi,
        norm_star: (u_norm.powf(p) + limsup.powf(p)).powf(1.0 / p),
        plateau_window: plateau(&per_k, opts.plateau_tol),
        plateau_tol: opts.plateau_tol,
        per_k,
        surrogate: SURROGATE_NOTE.into(),
    })
}

/// Longest run where each value is within `tol` (relative) of its
/// predecessor. Ties go to the finer generations.
pub fn plateau(per_k: &[(i32, f64)], tol: f64) -> Option<(i32, i32)> {
    let close = |a: f64, b: f64| (b - a).abs() <= tol * a.abs();
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    for i in 1..=per_k.len() {
        if i == per_k.len() || !close(per_k[i - 1].1, per_k[i].1) {
            if i - start >= 2 && best.is_none_or(|(a, b)| i - start > b - a) {
                best = Some((start, i - 1));
            }
            start = i;
        }
    }
    best.map(|(a, b)| (per_k[a].0, per_k[b].0))
}

/// Writes the `(k, value)` series as CSV.
pub fn write_per_k_csv<W: std::io::Write>(report: &NormStarReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| LabError::Parse(e.to_string());
    w.write_record(["k", "value"]).map_err(err)?;
    for (k, v) in &report.per_k {
        w.write_record([k.to_string(), format!("{v:.17e}")]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::build_cover;
    use crate::space::{generate_space, MetricMode, SpaceKind};
    use crate::TestFunction;

    fn line3() -> MetricMeasureSpace {
        MetricMeasureSpace::from_parts(
            vec![0, 1, 2],
            Some(vec![vec![0.0], vec![0.6], vec![1.2]]),
            MetricMode::Euclidean,
            vec![1.0; 3],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn s0_on_three_point_line() {
        let s = line3();
        let c = build_cover(&s, 0);
        let u = DiscreteFunction::new(vec![0.0, 0.6, 1.2]);
        let avg = ball_averages(&s, &c, &u).unwrap();
        // hand averages: (0 + 0.6)/2, (0 + 0.6 + 1.2)/3, (0.6 + 1.2)/2
        for (a, e) in avg.iter().zip([0.3, 0.6, 0.9]) {
            assert!((a - e).abs() < 1e-15);
        }
        let su = s_k(&s, &c, &u).unwrap();
        assert!((su.get(0) - 0.3).abs() < 1e-15 && (su.get(1) - 0.3).abs() < 1e-15);
        assert!((su.get(2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn t0_on_three_point_line() {
        let s = line3();
        let c = build_cover(&s, 0);
        let u = DiscreteFunction::new(vec![0.0, 0.6, 1.2]);
        let f = t_k(&s, &c, &u, 1.0).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&f.vectors[0], &[-0.3, -0.6]));
        assert!(close(&f.vectors[1], &[-0.3, -0.6]));
        assert!(close(&f.vectors[2], &[0.3, -0.3]));
        assert!(close(&f.pointwise_norm, &[0.9, 0.9, 0.6]));
    }

    #[test]
    fn constant_has_zero_gradient() {
        let s = generate_space(&SpaceKind::Grid1d { n: 64 }).unwrap();
        let u = DiscreteFunction::constant(64, 2.5);
        for k in 0..=3 {
            let c = build_cover(&s, k);
            let su = s_k(&s, &c, &u).unwrap();
            assert!(su.values().iter().all(|&v| (v - 2.5).abs() < 1e-14));
            let f = t_k(&s, &c, &u, 2.0).unwrap();
            assert!(f.pointwise_norm.iter().all(|&v| v < 1e-12));
        }
        let r = norm_star(&s, &u, 2.0, (0, 10), 2).unwrap();
        assert!((r.norm_star - 2.5).abs() < 1e-9);
    }

    #[test]
    fn s_k_converges_for_lipschitz_u() {
        let s = generate_space(&SpaceKind::Grid1d { n: 256 }).unwrap();
        let u = TestFunction::Sine { freq: 1.0 }.evaluate(&s);
        let lip = 2.0 * std::f64::consts::PI;
        let mut last = f64::INFINITY;
        for k in 0..=5 {
            let su = s_k(&s, &build_cover(&s, k), &u).unwrap();
            let err = su.combine(1.0, &u, -1.0).max_abs();
            assert!(err <= lip * 2f64.powi(-k + 1), "k={k} err={err}");
            last = last.min(err);
        }
        assert!(last < 0.2);
    }

    #[test]
    fn window_clipping_and_errors() {
        let s = generate_space(&SpaceKind::Grid1d { n: 1024 }).unwrap();
        let u = TestFunction::Linear { slope: 1.0 }.evaluate(&s);
        let r = norm_star(&s, &u, 2.0, (2, 8), 3).unwrap();
        assert_eq!(r.window, (2, 7));
        assert_eq!(r.per_k.len(), 6);
        assert!(r.limsup_estimate >= r.liminf_estimate && r.xi_observed >= 1.0);
        let lhs = r.norm_star.powi(2);
        let rhs = r.u_lp_norm.powi(2) + r.limsup_estimate.powi(2);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        let (a, b) = r.plateau_window.unwrap();
        assert!(b - a + 1 >= 3);
        assert!(norm_star(&s, &u, 2.0, (20, 30), 1).is_err());
        assert!(norm_star(&s, &u, 2.0, (2, 8), 7).is_err());
    }

    #[test]
    fn plateau_detector() {
        let v = [(0, 1.0), (1, 3.0), (2, 3.3), (3, 3.5), (4, 9.0)];
        assert_eq!(plateau(&v, 0.2), Some((1, 3)));
        assert_eq!(plateau(&[(0, 1.0), (1, 5.0)], 0.2), None);
        assert_eq!(plateau(&[(0, 0.0), (1, 0.0)], 0.2), Some((0, 1)));
    }

    #[test]
    fn per_k_csv() {
        let s = generate_space(&SpaceKind::Grid1d { n: 64 }).unwrap();
        let u = TestFunction::Linear { slope: 1.0 }.evaluate(&s);
        let r = norm_star(&s, &u, 2.0, (0, 3), 1).unwrap();
        let mut buf = Vec::new();
        write_per_k_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,value\n0,"));
        assert_eq!(text.lines().count(), 5);
    }
}
