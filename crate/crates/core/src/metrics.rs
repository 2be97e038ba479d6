//! Goodness-of-fit metrics.
//!
//! The output spread uses the population form
//! `sigma_y = sqrt(1/n * sum (y_i - mean)^2)`.
//!
//! Non-finite predictions produce an invalid report whose errors are `+inf`,
//! whose `r2` is `-inf` and whose inverse scores are zero, so it ranks worst
//! under every metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {truth} targets vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("targets have zero variance; normalized metrics are undefined")]
    DegenerateVariance,
    #[error("empty report list")]
    Empty,
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub mse: T,
    pub nmse: T,
    pub rmse: T,
    pub nrmse: T,
    pub inv_nmse: T,
    pub inv_nrmse: T,
    pub r2: T,
    /// False when any prediction was non-finite.
    pub valid: bool,
}

impl<T: Scalar> MetricReport<T> {
    fn invalid() -> Self {
        MetricReport {
            mse: T::infinity(),
            nmse: T::infinity(),
            rmse: T::infinity(),
            nrmse: T::infinity(),
            inv_nmse: T::zero(),
            inv_nrmse: T::zero(),
            r2: T::neg_infinity(),
            valid: false,
        }
    }

    pub fn cast<U: Scalar>(&self) -> MetricReport<U> {
        let c = |v: T| U::of(v.as_f64());
        MetricReport {
            mse: c(self.mse),
            nmse: c(self.nmse),
            rmse: c(self.rmse),
            nrmse: c(self.nrmse),
            inv_nmse: c(self.inv_nmse),
            inv_nrmse: c(self.inv_nrmse),
            r2: c(self.r2),
            valid: self.valid,
        }
    }
}

/// Mean squared error; `+inf` if any prediction is non-finite.
pub fn mse<T: Scalar>(y_true: &[T], y_pred: &[T]) -> T {
    debug_assert_eq!(y_true.len(), y_pred.len());
    if y_true.is_empty() {
        return T::infinity();
    }
    let mut acc = T::zero();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if !p.is_finite() {
            return T::infinity();
        }
        let d = t - p;
        acc = acc + d * d;
    }
    let out = acc / T::of(y_true.len() as f64);
    if out.is_finite() {
        out
    } else {
        T::infinity()
    }
}

/// Population variance `1/n * sum (y - mean)^2`.
pub fn population_variance<T: Scalar>(y: &[T]) -> T {
    let n = T::of(y.len() as f64);
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n
}

pub fn compute_metrics<T: Scalar>(
    y_true: &[T],
    y_pred: &[T],
) -> Result<MetricReport<T>, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if y_true.len() < 2 {
        return Err(MetricsError::TooFewSamples(y_true.len()));
    }
    let var = population_variance(y_true);
    if var <= T::zero() {
        return Err(MetricsError::DegenerateVariance);
    }
    let mse = mse(y_true, y_pred);
    if !mse.is_finite() {
        return Ok(MetricReport::invalid());
    }
    let one = T::one();
    let nmse = mse / var;
    let rmse = mse.sqrt();
    let nrmse = rmse / var.sqrt();
    Ok(MetricReport {
        mse,
        nmse,
        rmse,
        nrmse,
        inv_nmse: one / (one + nmse),
        inv_nrmse: one / (one + nrmse),
        r2: one - nmse,
        valid: true,
    })
}

/// Fraction of reports with `r2 >= tau`.
pub fn accuracy_at<T: Scalar>(reports: &[MetricReport<T>], tau: f64) -> Result<f64, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(MetricsError::BadThreshold(tau));
    }
    let hits = reports.iter().filter(|r| r.r2.as_f64() >= tau).count();
    Ok(hits as f64 / reports.len() as f64)
}

pub const RECOVERY_R2: f64 = 0.999;
