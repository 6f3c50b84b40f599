//! Dense primal simplex on the dual of `min wᵀx  s.t.  A x ≥ b, x ≥ 0`:
//! `max bᵀλ  s.t.  Aᵀλ ≤ w, λ ≥ 0`. The slack basis is feasible because
//! `w > 0`, and Bland's rule rules out cycling. The primal `x` is read off
//! the reduced costs of the slack columns.

pub(crate) struct LpResult {
    pub x: Vec<f64>,
    pub dual: f64,
    pub pivots: usize,
    pub optimal: bool,
}

const EPS: f64 = 1e-12;

pub(crate) fn solve(rows: &[Vec<(usize, f64)>], b: &[f64], w: &[f64], max_pivots: usize) -> LpResult {
    let n = w.len();
    let m = rows.len();
    let width = m + n + 1;
    // tableau rows are the n dual constraints; columns are λ, slacks, rhs
    let mut t = vec![0.0; n * width];
    for (r, row) in rows.iter().enumerate() {
        for &(i, a) in row {
            t[i * width + r] += a;
        }
    }
    for i in 0..n {
        t[i * width + m + i] = 1.0;
        t[i * width + m + n] = w[i];
    }
    let mut cost: Vec<f64> = b.iter().map(|v| -v).chain(std::iter::repeat_n(0.0, n + 1)).collect();
    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut pivots = 0;
    let mut optimal = false;
    while pivots < max_pivots {
        let Some(enter) = (0..m + n).find(|&j| cost[j] < -EPS) else {
            optimal = true;
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            let a = t[i * width + enter];
            if a > EPS {
                let ratio = t[i * width + m + n] / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // unbounded dual: cannot happen for rows with positive coefficients
        let Some((row, _)) = leave else { break };
        let piv = t[row * width + enter];
        for v in &mut t[row * width..(row + 1) * width] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
        for i in 0..n {
            if i != row {
                let f = t[i * width + enter];
                if f != 0.0 {
                    for (v, p) in t[i * width..(i + 1) * width].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        let f = cost[enter];
        for (c, p) in cost.iter_mut().zip(&pivot_row) {
            *c -= f * p;
        }
        basis[row] = enter;
        pivots += 1;
    }
    let x: Vec<f64> = (0..n).map(|i| cost[m + i].max(0.0)).collect();
    LpResult { dual: cost[m + n], x, pivots, optimal }
}
