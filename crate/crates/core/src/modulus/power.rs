//! `min Σ w_i x_i^p  s.t.  A x ≥ b, x ≥ 0` for `p > 1` with nonnegative `A`.
//!
//! The dual function is `D(λ) = bᵀλ − ((p−1)/p) Σ z_i x_i(z_i)` with
//! `z = Aᵀλ` and `x_i(z) = (z / (p w_i))^{1/(p−1)}`. It is maximized over
//! `λ ≥ 0` by exact coordinate ascent, then refined by Newton steps on the
//! rows with positive multipliers. A feasible primal point is the dual
//! minimizer rescaled so the tightest row holds with equality.

use nalgebra::{DMatrix, DVector};

use super::SolverOptions;

pub(crate) struct PowerResult {
    pub x: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct State<'a> {
    rows: &'a [Vec<(usize, f64)>],
    cols: Vec<Vec<(usize, f64)>>,
    b: &'a [f64],
    w: &'a [f64],
    p: f64,
    lambda: Vec<f64>,
    z: Vec<f64>,
}

impl State<'_> {
    #[inline]
    fn x_of(&self, i: usize, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            (z / (self.p * self.w[i])).powf(1.0 / (self.p - 1.0))
        }
    }

    /// `dx/dz = x / ((p − 1) z)`.
    #[inline]
    fn dx_of(&self, i: usize, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            self.x_of(i, z) / ((self.p - 1.0) * z)
        }
    }

    fn xs(&self) -> Vec<f64> {
        self.z.iter().enumerate().map(|(i, &z)| self.x_of(i, z)).collect()
    }

    fn dual(&self) -> f64 {
        let lin: f64 = self.b.iter().zip(&self.lambda).map(|(b, l)| b * l).sum();
        let curv: f64 = self.z.iter().enumerate().map(|(i, &z)| z * self.x_of(i, z)).sum();
        lin - (self.p - 1.0) / self.p * curv
    }

    fn activity(&self, x: &[f64], r: usize) -> f64 {
        self.rows[r].iter().map(|&(i, a)| a * x[i]).sum()
    }

    /// Sets `λ_r` to the maximizer of `D` along coordinate `r`.
    fn coordinate_step(&mut self, r: usize) {
        let rows = self.rows;
        let row = &rows[r];
        let old = self.lambda[r];
        let base: Vec<f64> = row.iter().map(|&(i, a)| (self.z[i] - old * a).max(0.0)).collect();
        let phi = |t: f64| -> (f64, f64) {
            let mut v = 0.0;
            let mut dv = 0.0;
            for (k, &(i, a)) in row.iter().enumerate() {
                let z = base[k] + t * a;
                v += a * self.x_of(i, z);
                dv += a * a * self.dx_of(i, z);
            }
            (v, dv)
        };
        let target = self.b[r];
        let t = if phi(0.0).0 >= target {
            0.0
        } else {
            // with every other multiplier at zero the root is explicit and
            // bounds the true root from above
            let c: f64 = row.iter().map(|&(i, a)| a * (a / (self.p * self.w[i])).powf(1.0 / (self.p - 1.0))).sum();
            let mut lo = 0.0;
            let mut hi = old.max((target / c).powf(self.p - 1.0)).max(f64::MIN_POSITIVE);
            while phi(hi).0 < target {
                lo = hi;
                hi *= 2.0;
                if !hi.is_finite() {
                    break;
                }
            }
            let mut t = if old > lo && old < hi { old } else { 0.5 * (lo + hi) };
            for _ in 0..200 {
                let (v, dv) = phi(t);
                let f = v - target;
                if f.abs() <= 1e-15 * target {
                    break;
                }
                if f < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let newton = if dv > 0.0 { t - f / dv } else { f64::NAN };
                t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            t
        };
        for (k, &(i, _)) in row.iter().enumerate() {
            self.z[i] = base[k] + t * row[k].1;
        }
        self.lambda[r] = t;
    }

    /// Newton ascent on the rows with positive multipliers.
    fn newton_polish(&mut self, steps: usize) {
        for _ in 0..steps {
            let active: Vec<usize> = (0..self.rows.len()).filter(|&r| self.lambda[r] > 0.0).collect();
            if active.is_empty() {
                return;
            }
            let x = self.xs();
            let resid: Vec<f64> = active.iter().map(|&r| self.b[r] - self.activity(&x, r)).collect();
            let scale = active.iter().map(|&r| self.b[r]).fold(0.0, f64::max);
            if resid.iter().all(|e| e.abs() <= 1e-14 * scale) {
                return;
            }
            let m = active.len();
            let d: Vec<f64> = self.z.iter().enumerate().map(|(i, &z)| self.dx_of(i, z)).collect();
            let mut jac = DMatrix::<f64>::zeros(m, m);
            // J = A_S diag(d) A_Sᵀ via column lists restricted to S
            let mut pos = vec![usize::MAX; self.rows.len()];
            for (k, &r) in active.iter().enumerate() {
                pos[r] = k;
            }
            for (i, col) in self.cols.iter().enumerate() {
                if d[i] == 0.0 {
                    continue;
                }
                let entries: Vec<(usize, f64)> =
                    col.iter().filter(|(r, _)| pos[*r] != usize::MAX).map(|&(r, a)| (pos[r], a)).collect();
                for &(ka, a) in &entries {
                    for &(kb, bb) in &entries {
                        jac[(ka, kb)] += a * bb * d[i];
                    }
                }
            }
            let rhs = DVector::from_vec(resid);
            let svd = jac.svd(true, true);
            let tol = 1e-13 * svd.singular_values.max();
            let Ok(delta) = svd.solve(&rhs, tol) else { return };
            let before = self.dual();
            let (saved_l, saved_z) = (self.lambda.clone(), self.z.clone());
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                for (k, &r) in active.iter().enumerate() {
                    self.lambda[r] = (saved_l[r] + alpha * delta[k]).max(0.0);
                }
                self.recompute_z();
                if self.dual() >= before {
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                self.lambda = saved_l;
                self.z = saved_z;
                return;
            }
        }
    }

    fn recompute_z(&mut self) {
        self.z.iter_mut().for_each(|z| *z = 0.0);
        for (r, row) in self.rows.iter().enumerate() {
            let l = self.lambda[r];
            if l > 0.0 {
                for &(i, a) in row {
                    self.z[i] += l * a;
                }
            }
        }
    }

    /// Feasible primal point `t x(λ)` and its objective.
    fn primal(&self) -> (Vec<f64>, f64) {
        let x = self.xs();
        let t = (0..self.rows.len())
            .map(|r| {
                let act = self.activity(&x, r);
                if act > 0.0 {
                    self.b[r] / act
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        if !t.is_finite() {
            return (x, f64::INFINITY);
        }
        let x: Vec<f64> = x.iter().map(|v| v * t).collect();
        let val = x.iter().zip(self.w).map(|(v, w)| w * v.powf(self.p)).sum();
        (x, val)
    }
}

pub(crate) fn solve(rows: &[Vec<(usize, f64)>], b: &[f64], w: &[f64], p: f64, opts: &SolverOptions) -> PowerResult {
    let n = w.len();
    let mut cols = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &(i, a) in row {
            cols[i].push((r, a));
        }
    }
    let mut st = State { rows, cols, b, w, p, lambda: vec![0.0; rows.len()], z: vec![0.0; n] };
    let mut iterations = 0;
    let mut best = (vec![0.0; n], f64::INFINITY);
    let mut best_dual = f64::NEG_INFINITY;
    let mut converged = false;
    let mut sweep = 0usize;
    while iterations < opts.max_iterations {
        for r in 0..rows.len() {
            st.coordinate_step(r);
        }
        iterations += rows.len().max(1);
        sweep += 1;
        if sweep % 4 == 1 {
            st.newton_polish(30);
            for r in 0..rows.len() {
                st.coordinate_step(r);
            }
        }
        let dual = st.dual();
        let (x, val) = st.primal();
        if val < best.1 {
            best = (x, val);
        }
        best_dual = best_dual.max(dual);
        if best.1 - best_dual <= opts.gap_tol * best.1.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    PowerResult { x: best.0, primal: best.1, dual: best_dual, iterations, converged }
}
