//! Dyadic ball covers, the discrete gradient `T_k`, curve modulus and
//! upper-gradient tools on finite metric-measure spaces.

pub mod covering;
pub mod curves;
pub mod error;
pub mod function;
pub mod gradient;
pub mod modulus;
pub mod report;
pub mod space;
pub mod verify;

pub use error::{LabError, Result};
pub use function::{DiscreteFunction, TestFunction};
pub use space::{MetricMeasureSpace, MetricMode};
