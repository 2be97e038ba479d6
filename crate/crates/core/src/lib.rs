//! Vertical symbolic regression through control-variable experiments.
//!
//! The engine discovers a closed-form expression for a black-box function by
//! freeing one input variable per round. Each round runs a regressor (genetic
//! programming or Monte Carlo tree search) against a data oracle that holds the
//! remaining variables fixed, then freezes whatever structure and constants the
//! control-variable trials confirm.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the command line
//! tool and the benchmark harness use.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod bench;
pub mod datasets;
pub mod expr;
pub mod gp;
pub mod mcts;
pub mod metrics;
pub mod optimize;
pub mod oracle;
pub mod primitives;
pub mod rng;
pub mod vsr;

/// Floating point type the engine computes in.
///
/// `Display` must print the shortest decimal string that parses back to the
/// same value; both primitive floats do.
pub trait Scalar:
    Float
    + FromPrimitive
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`, used for sampled values and literals.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Tree = expr::Tree<f64>;
pub type TreeF32 = expr::Tree<f32>;
pub type EquationSpec = oracle::EquationSpec<f64>;
pub type EquationSpecF32 = oracle::EquationSpec<f32>;
pub type Oracle = oracle::Oracle<f64>;
pub type OracleF32 = oracle::Oracle<f32>;
pub type FitResult = optimize::FitResult<f64>;
pub type ExperimentOutcome = optimize::ExperimentOutcome<f64>;
pub type MetricReport = metrics::MetricReport<f64>;
pub type Individual = gp::Individual<f64>;
pub type VsrOutcome = vsr::VsrOutcome<f64>;

pub use expr::{ConstClass, ExprError, Operator, PreorderRecord, TokenKind};
pub use metrics::{accuracy_at, compute_metrics, MetricsError};
pub use oracle::{ControlSpec, OracleConfig, OracleError};
pub use optimize::{FitOptions, OptimizerKind};
