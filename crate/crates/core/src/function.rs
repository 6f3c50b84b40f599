//! Real-valued functions on the points of a space, plus a small library of
//! named test functions.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::space::MetricMeasureSpace;

/// Values indexed like the points of the space they live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteFunction {
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(LabError::LengthMismatch { expected: n, got: self.values.len() });
        }
        Ok(())
    }

    /// Rejects NaN and infinite values.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(LabError::InvalidParameter(format!("function value at index {i} is not finite"))),
            None => Ok(()),
        }
    }

    pub fn lp_norm(&self, space: &MetricMeasureSpace, p: f64) -> f64 {
        space.lp_norm(&self.values, p)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.len(), other.len(), "combining functions of different length");
        Self { values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Reads a JSON array of values.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Named test functions evaluated on the first coordinate of each point, or
/// on the distance to the first point when the space has no coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `slope * x`
    Linear {
        slope: f64,
    },
    /// `|x - offset|`
    AbsOffset {
        offset: f64,
    },
    /// `sin(2 pi freq x)`
    Sine {
        freq: f64,
    },
    /// Indicator of `x > at`.
    Jump {
        at: f64,
    },
    /// McShane extension `min_i (c_i + lip * d(x, a_i))` from random anchors.
    RandomLip {
        lip: f64,
        anchors: usize,
        seed: u64,
    },
}

impl TestFunction {
    /// Parses `const:C`, `linear[:S]`, `abs[:O]`, `sin[:F]`, `jump[:T]` or
    /// `random-lip[:L[:ANCHORS[:SEED]]]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let arg = |i: usize, default: f64| -> Result<f64> {
            match parts.get(i) {
                Some(t) => t.parse().map_err(|_| LabError::Parse(format!("bad number in '{s}'"))),
                None => Ok(default),
            }
        };
        match parts[0] {
            "const" | "constant" => Ok(Self::Constant { value: arg(1, 1.0)? }),
            "linear" | "x" => Ok(Self::Linear { slope: arg(1, 1.0)? }),
            "abs" => Ok(Self::AbsOffset { offset: arg(1, 0.5)? }),
            "sin" => Ok(Self::Sine { freq: arg(1, 1.0)? }),
            "jump" => Ok(Self::Jump { at: arg(1, 0.5)? }),
            "random-lip" => {
                Ok(Self::RandomLip { lip: arg(1, 1.0)?, anchors: arg(2, 8.0)? as usize, seed: arg(3, 0.0)? as u64 })
            }
            other => Err(LabError::Parse(format!("unknown test function '{other}'"))),
        }
    }

    /// Lipschitz constant with respect to the first coordinate, when finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Self::Constant { .. } => Some(0.0),
            Self::Linear { slope } => Some(slope.abs()),
            Self::AbsOffset { .. } => Some(1.0),
            Self::Sine { freq } => Some(2.0 * PI * freq.abs()),
            Self::Jump { .. } => None,
            Self::RandomLip { lip, .. } => Some(lip.abs()),
        }
    }

    pub fn evaluate(&self, space: &MetricMeasureSpace) -> DiscreteFunction {
        let n = space.len();
        let x: Vec<f64> = match space.coords() {
            Some(c) => c.iter().map(|v| v[0]).collect(),
            None => space.dist_row(0).to_vec(),
        };
        let values = match *self {
            Self::Constant { value } => vec![value; n],
            Self::Linear { slope } => x.iter().map(|t| slope * t).collect(),
            Self::AbsOffset { offset } => x.iter().map(|t| (t - offset).abs()).collect(),
            Self::Sine { freq } => x.iter().map(|t| (2.0 * PI * freq * t).sin()).collect(),
            Self::Jump { at } => x.iter().map(|&t| if t > at { 1.0 } else { 0.0 }).collect(),
            Self::RandomLip { lip, anchors, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let anchors: Vec<(usize, f64)> =
                    (0..anchors.max(1)).map(|_| (rng.random_range(0..n), rng.random::<f64>())).collect();
                (0..n)
                    .map(|i| anchors.iter().map(|&(a, c)| c + lip * space.dist(i, a)).fold(f64::INFINITY, f64::min))
                    .collect()
            }
        };
        DiscreteFunction::new(values)
    }
}
