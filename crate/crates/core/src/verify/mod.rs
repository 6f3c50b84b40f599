//! Experiments that check the comparison, convexity and cover statements on
//! concrete spaces and return serializable reports.

mod comparison;
mod convexity;
mod experiments;
mod poincare;

use serde::{Deserialize, Serialize};

pub use comparison::{
    chaining_constant, doubling_constant, equivalence_experiment, pointwise_experiment, tk_poincare_bound_check,
    ComponentNorm, Domination, EquivalenceReport, MeasuredConstants, PointwiseOptions, PointwiseReport, Quantiles,
    TkBoundGeneration, TkBoundReport, TkBoundViolation, LOWER_CONSTANT, LOWER_TOL, POINTWISE_C, POINTWISE_SHARE,
};
pub use convexity::{
    convexity_probe, lp_modulus, ConvexityReport, Counterexample, DisjointWitness, EpsilonRow, ProductEmbedding,
    CONVEXITY_SLACK,
};
pub use experiments::{
    almostug_experiment, cover_validity, cross_cover_experiment, AlmostUgReport, AlmostUgTrial, CoverGeneration,
    CoverValidityReport, CrossCoverReport, CrossCoverRun,
};
pub use poincare::{poincare_sweep, BallSampler, PoincareBall, PoincareReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail dominates, then indeterminate.
    pub fn and(self, other: Self) -> Self {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Indeterminate, _) | (_, Indeterminate) => Indeterminate,
            _ => Pass,
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Per-item RNG seed, independent of thread scheduling.
pub(crate) fn pair_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(17)
}
