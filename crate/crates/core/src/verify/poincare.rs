use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::build_cover;
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;
use crate::gradient::check_p;
use crate::space::{average, MetricMeasureSpace};

/// Which balls a Poincaré sweep visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BallSampler {
    /// Every point as a center at each of the given radii.
    Exhaustive { radii: Vec<f64> },
    /// Every point at every radius of the space's dyadic ladder.
    Dyadic,
    /// The centers of each generation-k cover in the window, with radius
    /// `dilation * 2^-k`.
    CoverBalls { window: (i32, i32), dilation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareBall {
    pub center: u64,
    pub radius: f64,
    pub lhs: f64,
    pub rhs_without_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub p: f64,
    pub lambda: f64,
    pub per_ball: Vec<PoincareBall>,
    /// Largest `lhs / rhs` over balls with `rhs > 0`; infinite when some
    /// ball has `rhs = 0 < lhs`.
    pub c_pi_estimate: f64,
    /// Largest ratio per radius, ascending radii.
    pub per_radius: Vec<(f64, f64)>,
    /// Balls with `lhs = rhs = 0`.
    pub balls_skipped: usize,
    /// Balls with `rhs = 0 < lhs`.
    pub unbounded_balls: usize,
}

/// `lhs = ⨍_B |u − u_B|`, `rhs = diam(B) (⨍_{λB} g^p)^{1/p}` over the balls
/// chosen by `sampler`; `diam(B)` is the diameter of the ball's point set.
pub fn poincare_sweep(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    g: &DiscreteFunction,
    p: f64,
    lambda: f64,
    sampler: &BallSampler,
) -> Result<PoincareReport> {
    check_p(p)?;
    u.check_len(space.len())?;
    g.check_len(space.len())?;
    if lambda.is_nan() || lambda < 1.0 {
        return Err(LabError::InvalidParameter(format!("lambda = {lambda} must be >= 1")));
    }
    let balls: Vec<(usize, f64)> = match sampler {
        BallSampler::Exhaustive { radii } => {
            (0..space.len()).flat_map(|c| radii.iter().map(move |&r| (c, r))).collect()
        }
        BallSampler::Dyadic => {
            let ladder = space.dyadic_ladder();
            (0..space.len()).flat_map(|c| ladder.iter().map(move |&r| (c, r))).collect()
        }
        BallSampler::CoverBalls { window, dilation } => {
            let (lo, hi) = space.clip_window(window.0, window.1)?;
            (lo..=hi)
                .flat_map(|k| {
                    let r = dilation * 2f64.powi(-k);
                    build_cover(space, k).centers.into_iter().map(move |c| (c, r))
                })
                .collect()
        }
    };
    if balls.is_empty() {
        return Err(LabError::InvalidParameter("no admissible balls".into()));
    }
    let gp: Vec<f64> = g.values().iter().map(|v| v.abs().powf(p)).collect();
    let w = space.weights();
    let per_ball: Vec<PoincareBall> = balls
        .par_iter()
        .map(|&(c, r)| {
            let ball = space.ball(c, r);
            let ub = average(w, u.values(), &ball).expect("balls contain their center");
            let dev: Vec<f64> = ball.iter().map(|&y| (u.get(y) - ub).abs()).collect();
            let lhs = ball.iter().zip(&dev).map(|(&y, d)| d * w[y]).sum::<f64>() / space.mass(&ball);
            let big = space.ball(c, lambda * r);
            let gavg = average(w, &gp, &big).expect("balls contain their center");
            PoincareBall {
                center: space.id(c),
                radius: r,
                lhs,
                rhs_without_c: space.set_diameter(&ball) * gavg.powf(1.0 / p),
            }
        })
        .collect();

    let mut c_pi: f64 = 0.0;
    let mut skipped = 0;
    let mut unbounded = 0;
    let mut per_radius: Vec<(f64, f64)> = Vec::new();
    for b in &per_ball {
        let ratio = if b.rhs_without_c > 0.0 {
            b.lhs / b.rhs_without_c
        } else if b.lhs > 0.0 {
            unbounded += 1;
            f64::INFINITY
        } else {
            skipped += 1;
            continue;
        };
        c_pi = c_pi.max(ratio);
        match per_radius.iter_mut().find(|(r, _)| *r == b.radius) {
            Some(entry) => entry.1 = entry.1.max(ratio),
            None => per_radius.push((b.radius, ratio)),
        }
    }
    per_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PoincareReport {
        p,
        lambda,
        per_ball,
        c_pi_estimate: c_pi,
        per_radius,
        balls_skipped: skipped,
        unbounded_balls: unbounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, SpaceKind};
    use crate::TestFunction;

    #[test]
    fn constant_u_gives_zero() {
        let s = generate_space(&SpaceKind::Grid1d { n: 32 }).unwrap();
        let u = DiscreteFunction::constant(32, 1.0);
        let r = poincare_sweep(&s, &u, &DiscreteFunction::constant(32, 1.0), 2.0, 1.0, &BallSampler::Dyadic).unwrap();
        assert_eq!(r.c_pi_estimate, 0.0);
        assert!(r.per_ball.iter().all(|b| b.lhs == 0.0));
    }

    #[test]
    fn identity_on_grid1d_is_stable_across_radii() {
        let s = generate_space(&SpaceKind::Grid1d { n: 256 }).unwrap();
        let u = TestFunction::Linear { slope: 1.0 }.evaluate(&s);
        let g = DiscreteFunction::constant(256, 1.0);
        let radii: Vec<f64> = (1..=5).map(|k| 2f64.powi(-k)).collect();
        let r = poincare_sweep(&s, &u, &g, 2.0, 2.0, &BallSampler::Exhaustive { radii }).unwrap();
        assert!(r.c_pi_estimate.is_finite() && r.c_pi_estimate > 0.0);
        let lo = r.per_radius.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        let hi = r.per_radius.iter().map(|t| t.1).fold(0.0, f64::max);
        assert!(hi <= 1.2 * lo && lo >= 0.8 * hi, "{:?}", r.per_radius);
    }

    #[test]
    fn zero_gradient_is_unbounded() {
        let s = generate_space(&SpaceKind::Grid1d { n: 32 }).unwrap();
        let u = TestFunction::Linear { slope: 1.0 }.evaluate(&s);
        let r = poincare_sweep(&s, &u, &DiscreteFunction::zeros(32), 2.0, 1.0, &BallSampler::Dyadic).unwrap();
        assert!(r.c_pi_estimate.is_infinite());
        assert!(r.unbounded_balls > 0);
    }
}
