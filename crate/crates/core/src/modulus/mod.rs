//! p-modulus of curve families and minimal upper gradients as convex
//! programs over vertex densities with trapezoid curve integrals.

mod power;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::curves::{line_integral, Curve, CurveFamily, FamilySpec, GeneratorKind};
use crate::error::{LabError, Result};
use crate::function::DiscreteFunction;
use crate::gradient::check_p;
use crate::space::MetricMeasureSpace;

/// Admissibility tolerance on curve integrals.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Cap on single-row updates (p > 1) or simplex pivots (p = 1).
    pub max_iterations: usize,
    /// Relative primal-dual gap at which the p > 1 solver stops.
    pub gap_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 100_000, gap_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    /// Feasible primal value minus the best dual value.
    DualGap { dual_value: f64, gap: f64 },
    /// Simplex on the dual LP; at optimality the two values agree.
    Lp { dual_value: f64, pivots: usize, optimal: bool },
    /// No constraint is active.
    Trivial,
    /// The terminal sets are not joined by any path.
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusSolution {
    pub p: f64,
    pub value: f64,
    pub density: DiscreteFunction,
    /// `None` for the empty family.
    pub min_curve_integral: Option<f64>,
    pub iterations: usize,
    pub dual_gap: Option<f64>,
    pub certificate: Certificate,
    /// Family indices of curves whose integral is 1 at the optimum.
    pub active_constraints: Vec<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    EdgeOracle,
    VertexOptimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSolution {
    pub mode: GradientMode,
    pub p: f64,
    /// Vertex values of the gradient.
    pub g: DiscreteFunction,
    /// Per-edge values in space edge order (edge oracle only).
    pub edge_values: Option<Vec<f64>>,
    /// `||g||_{L^p}` of the vertex values.
    pub objective: f64,
    pub binding_constraints: Vec<usize>,
    pub converged: bool,
}

/// Outcome of the shared solver for `min Σ w x^p  s.t.  A x ≥ b, x ≥ 0`.
struct Outcome {
    x: Vec<f64>,
    iterations: usize,
    certificate: Certificate,
    converged: bool,
}

/// Builds the constraint rows from curve trapezoid coefficients, drops rows
/// with `b ≤ 0` (always satisfied by `x ≥ 0`) and solves on the vertices that
/// occur in some curve.
fn solve_program(space: &MetricMeasureSpace, family: &CurveFamily, b: &[f64], p: f64, opts: &SolverOptions) -> Outcome {
    let n = space.len();
    let kept: Vec<usize> = (0..family.len()).filter(|&r| b[r] > 0.0).collect();
    let mut local = vec![usize::MAX; n];
    let mut support = Vec::new();
    let mut rows = Vec::with_capacity(kept.len());
    for &r in &kept {
        let row: Vec<(usize, f64)> = family.curves[r]
            .trapezoid_coefficients()
            .into_iter()
            .map(|(v, a)| {
                if local[v] == usize::MAX {
                    local[v] = support.len();
                    support.push(v);
                }
                (local[v], a)
            })
            .collect();
        rows.push(row);
    }
    let bk: Vec<f64> = kept.iter().map(|&r| b[r]).collect();
    let w: Vec<f64> = support.iter().map(|&v| space.weight(v)).collect();
    let mut x = vec![0.0; n];
    if rows.is_empty() {
        return Outcome { x, iterations: 0, certificate: Certificate::Trivial, converged: true };
    }
    let (xl, iterations, certificate, converged) = if p == 1.0 {
        let r = simplex::solve(&rows, &bk, &w, opts.max_iterations);
        (r.x, r.pivots, Certificate::Lp { dual_value: r.dual, pivots: r.pivots, optimal: r.optimal }, r.optimal)
    } else {
        let r = power::solve(&rows, &bk, &w, p, opts);
        let gap = r.primal - r.dual;
        (r.x, r.iterations, Certificate::DualGap { dual_value: r.dual, gap }, r.converged)
    };
    for (k, &v) in support.iter().enumerate() {
        x[v] = xl[k];
    }
    // lift any rounding shortfall so every row holds
    let worst = kept.iter().map(|&r| b[r] / line_integral(&family.curves[r], &x)).fold(0.0, f64::max);
    if worst > 1.0 && worst.is_finite() {
        x.iter_mut().for_each(|v| *v *= worst);
    }
    Outcome { x, iterations, certificate, converged }
}

fn objective(space: &MetricMeasureSpace, x: &[f64], p: f64) -> f64 {
    x.iter().zip(space.weights()).map(|(v, w)| w * v.powf(p)).sum()
}

fn tight_rows(family: &CurveFamily, x: &[f64], b: &[f64]) -> Vec<usize> {
    (0..family.len()).filter(|&r| b[r] > 0.0 && line_integral(&family.curves[r], x) <= b[r] * (1.0 + 1e-7)).collect()
}

/// `Mod_p(Γ) = min Σ ρ^p w` over densities with `∫_γ ρ ds ≥ 1` on `Γ`.
pub fn p_modulus(
    space: &MetricMeasureSpace,
    family: &CurveFamily,
    p: f64,
    opts: &SolverOptions,
) -> Result<ModulusSolution> {
    check_p(p)?;
    let b = vec![1.0; family.len()];
    let out = solve_program(space, family, &b, p, opts);
    let value = objective(space, &out.x, p);
    let min_curve_integral = family.curves.iter().map(|c| line_integral(c, &out.x)).reduce(f64::min);
    let dual_gap = match &out.certificate {
        Certificate::DualGap { gap, .. } => Some(*gap),
        Certificate::Lp { dual_value, .. } => Some(value - dual_value),
        _ => None,
    };
    Ok(ModulusSolution {
        p,
        value,
        active_constraints: tight_rows(family, &out.x, &b),
        density: DiscreteFunction::new(out.x),
        min_curve_integral,
        iterations: out.iterations,
        dual_gap,
        certificate: out.certificate,
        converged: out.converged,
    })
}

/// Per-edge `|u(a) − u(b)| / d(a, b)`, lifted to vertices by the maximum over
/// incident edges. The lift is an upper gradient along every edge path under
/// the trapezoid rule, since its edge average dominates the edge value.
pub fn minimal_upper_gradient_edge(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    p: f64,
) -> Result<GradientSolution> {
    check_p(p)?;
    u.check_len(space.len())?;
    if !space.has_edges() {
        return Err(LabError::NoEdges);
    }
    let mut lift = vec![0.0f64; space.len()];
    let mut edge_values = Vec::with_capacity(space.edges().len());
    for e in space.edges() {
        let len = space.dist(e.a, e.b);
        if len <= 0.0 {
            return Err(LabError::ZeroLengthEdge { a: space.id(e.a), b: space.id(e.b) });
        }
        let g = (u.get(e.a) - u.get(e.b)).abs() / len;
        lift[e.a] = lift[e.a].max(g);
        lift[e.b] = lift[e.b].max(g);
        edge_values.push(g);
    }
    let g = DiscreteFunction::new(lift);
    Ok(GradientSolution {
        mode: GradientMode::EdgeOracle,
        p,
        objective: g.lp_norm(space, p),
        g,
        binding_constraints: Vec::new(),
        edge_values: Some(edge_values),
        converged: true,
    })
}

/// Smallest `||g||_{L^p}` over vertex functions `g ≥ 0` with
/// `|u(x_γ) − u(y_γ)| ≤ ∫_γ g ds` for every curve of the family.
pub fn minimal_upper_gradient_vertex(
    space: &MetricMeasureSpace,
    u: &DiscreteFunction,
    p: f64,
    family: &CurveFamily,
    opts: &SolverOptions,
) -> Result<GradientSolution> {
    check_p(p)?;
    u.check_len(space.len())?;
    u.check_finite()?;
    let b: Vec<f64> = family
        .curves
        .iter()
        .map(|c| {
            let (a, e) = c.endpoints();
            (u.get(a) - u.get(e)).abs()
        })
        .collect();
    let out = solve_program(space, family, &b, p, opts);
    let binding = tight_rows(family, &out.x, &b);
    let g = DiscreteFunction::new(out.x);
    Ok(GradientSolution {
        mode: GradientMode::VertexOptimized,
        p,
        objective: g.lp_norm(space, p),
        g,
        edge_values: None,
        binding_constraints: binding,
        converged: out.converged,
    })
}

/// All edges plus up to `per_pair` shortest paths between `pairs` sampled
/// point pairs: the default finite stand-in for "all curves".
pub fn default_gradient_family(
    space: &MetricMeasureSpace,
    pairs: usize,
    per_pair: usize,
    seed: u64,
) -> Result<CurveFamily> {
    use rand::{Rng, SeedableRng};
    let mut family = CurveFamily::edges(space)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let a = rng.random_range(0..space.len());
        let b = rng.random_range(0..space.len());
        if a == b {
            continue;
        }
        let spec = FamilySpec::KShortest { sources: vec![space.id(a)], sinks: vec![space.id(b)], count: per_pair };
        let more = crate::curves::enumerate_family(space, &spec)?;
        family.curves.extend(more.curves);
    }
    Ok(family)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub curve: Curve,
    pub integral: f64,
    /// `integral ≥ 1 − 1e-8`: then every terminal-connecting edge path is
    /// admissible for `ρ`.
    pub admissible: bool,
}

/// The `ρ`-shortest edge path between the terminal sets (indices), with
/// edge cost `d(a, b) (ρ(a) + ρ(b)) / 2`.
pub fn separation_oracle(
    space: &MetricMeasureSpace,
    rho: &DiscreteFunction,
    sources: &[usize],
    sinks: &[usize],
) -> Result<Separation> {
    rho.check_len(space.len())?;
    if sources.is_empty() || sinks.is_empty() {
        return Err(LabError::EmptyTerminals);
    }
    if !space.has_edges() {
        return Err(LabError::NoEdges);
    }
    if sources.iter().any(|s| sinks.contains(s)) {
        return Err(LabError::InvalidParameter("terminal sets overlap".into()));
    }
    if rho.values().iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(LabError::InvalidParameter("density must be finite and nonnegative".into()));
    }
    let r = rho.values();
    let (_, path) = space
        .shortest_path_between(sources, sinks, |a, b| space.dist(a, b) * (r[a] + r[b]) / 2.0)
        .ok_or(LabError::DisconnectedTerminals)?;
    let curve = Curve::new(space, path)?;
    let integral = line_integral(&curve, r);
    Ok(Separation { admissible: integral >= 1.0 - FEASIBILITY_TOL, curve, integral })
}

/// Modulus of all edge paths joining two terminal sets, by column
/// generation with [`separation_oracle`]. Disconnected terminals give the
/// zero certificate with an empty family.
pub fn p_modulus_connecting(
    space: &MetricMeasureSpace,
    sources: &[usize],
    sinks: &[usize],
    p: f64,
    opts: &SolverOptions,
) -> Result<(ModulusSolution, CurveFamily)> {
    check_p(p)?;
    let ones = DiscreteFunction::constant(space.len(), 1.0);
    let first = match separation_oracle(space, &ones, sources, sinks) {
        Ok(s) => s.curve,
        Err(LabError::DisconnectedTerminals) => {
            let sol = ModulusSolution {
                p,
                value: 0.0,
                density: DiscreteFunction::zeros(space.len()),
                min_curve_integral: None,
                iterations: 0,
                dual_gap: None,
                certificate: Certificate::Disconnected,
                active_constraints: Vec::new(),
                converged: true,
            };
            return Ok((sol, CurveFamily::empty()));
        }
        Err(e) => return Err(e),
    };
    let mut family = CurveFamily {
        curves: vec![first],
        generator: GeneratorKind::Columns,
        terminals: Some((sources.to_vec(), sinks.to_vec())),
        truncated: false,
    };
    let mut iterations = 0;
    loop {
        let mut sol = p_modulus(space, &family, p, opts)?;
        iterations += sol.iterations;
        let sep = separation_oracle(space, &sol.density, sources, sinks)?;
        let repeated = family.curves.iter().any(|c| c.vertices() == sep.curve.vertices());
        if sep.integral >= 1.0 - 1e-9 || repeated || family.len() >= crate::curves::MAX_CURVES {
            sol.iterations = iterations;
            sol.converged &= sep.admissible;
            return Ok((sol, family));
        }
        family.curves.push(sep.curve);
    }
}
