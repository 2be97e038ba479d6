//! Constant fitting and K-trial control-variable experiments.

mod loss;
pub mod minimize;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use loss::LossEvaluator;
use minimize::{bfgs, nelder_mead, BfgsSettings};

use crate::expr::{ExprError, Tree};
use crate::oracle::{ControlSpec, Oracle, OracleError, Trial};
use crate::rng::SearchRng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    NelderMead,
    #[default]
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: OptimizerKind,
    pub max_iter: usize,
    /// Extra attempts from uniform[-1, 1] starts after the warm start.
    pub restarts: usize,
    /// Restarts stop once the best fitness is at or below this.
    pub good_enough: f64,
    /// A single local run stops once the loss is at or below this.
    pub f_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optimizer: OptimizerKind::Bfgs,
            max_iter: 500,
            restarts: 3,
            good_enough: 1e-24,
            f_tol: 1e-24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// Batch MSE, lower is better; `+inf` for non-finite fits.
    pub fitness: T,
    /// Fitted values of the open slots in preorder.
    pub constants: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Final fitness of every attempt, warm start first.
    pub attempts: Vec<T>,
}

fn initial_guess<T: Scalar>(tree: &Tree<T>, rng: &mut SearchRng) -> Vec<T> {
    tree.open_constant_values()
        .into_iter()
        .map(|v| match v {
            Some(v) if v.is_finite() => v,
            _ => T::of(rng.random_range(-1.0..=1.0)),
        })
        .collect()
}

fn run_once<T: Scalar>(
    ev: &mut LossEvaluator<'_, T>,
    x0: &[T],
    opts: &FitOptions,
) -> minimize::Minimum<T> {
    let target = T::of(opts.f_tol);
    match opts.optimizer {
        OptimizerKind::NelderMead => nelder_mead(|c: &[T]| ev.loss(c), x0, opts.max_iter, target),
        OptimizerKind::Bfgs => {
            let f0 = ev.loss(x0);
            let settings = BfgsSettings {
                max_iter: opts.max_iter,
                gtol: T::of(1e-12),
                f_target: target,
            };
            let m = bfgs(ev, x0, &settings);
            if m.f < f0 || m.f <= target {
                return m;
            }
            let nm = nelder_mead(|c: &[T]| ev.loss(c), x0, opts.max_iter, target);
            if nm.f < m.f {
                minimize::Minimum {
                    iterations: m.iterations + nm.iterations,
                    ..nm
                }
            } else {
                m
            }
        }
    }
}

/// Fits the open constants of `tree` to `(x, y)` by minimizing the batch
/// MSE, writing the best values back into the tree.
///
/// The first attempt starts from the tree's current values (unfitted slots
/// draw from uniform[-1, 1]); up to `opts.restarts` further attempts start
/// from uniform[-1, 1].
pub fn fit_constants<T: Scalar>(
    tree: &mut Tree<T>,
    x: ArrayView2<'_, T>,
    y: &[T],
    opts: &FitOptions,
    rng: &mut SearchRng,
) -> Result<FitResult<T>, ExprError> {
    let mut ev = LossEvaluator::new(tree, x, y)?;
    let l = ev.num_params();
    if l == 0 {
        let fitness = ev.loss(&[]);
        return Ok(FitResult {
            fitness,
            constants: Vec::new(),
            converged: fitness.is_finite(),
            iterations: 0,
            attempts: vec![fitness],
        });
    }
    let good = T::of(opts.good_enough);
    let mut best: Option<minimize::Minimum<T>> = None;
    let mut attempts = Vec::with_capacity(opts.restarts + 1);
    let mut iterations = 0;
    for attempt in 0..=opts.restarts {
        let x0: Vec<T> = if attempt == 0 {
            initial_guess(tree, rng)
        } else {
            (0..l).map(|_| T::of(rng.random_range(-1.0..=1.0))).collect()
        };
        let m = run_once(&mut ev, &x0, opts);
        iterations += m.iterations;
        attempts.push(m.f);
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
        if best.as_ref().is_some_and(|b| b.f <= good) {
            break;
        }
    }
    let best = best.expect("at least one attempt runs");
    let converged = best.f.is_finite() && (best.converged || best.f <= good);
    if best.f.is_finite() {
        tree.set_open_constants(&best.x);
    }
    Ok(FitResult {
        fitness: best.f,
        constants: best.x,
        converged,
        iterations,
        attempts,
    })
}

/// Outcome `<o, C, phi>` of a K-trial control-variable experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T> {
    /// Fitness score of each trial.
    pub scores: Vec<T>,
    /// Row k holds the fitted open constants of trial k.
    pub constants_matrix: Array2<T>,
    pub fitted: Vec<Tree<T>>,
    pub converged: Vec<bool>,
}

impl<T: Scalar> ExperimentOutcome<T> {
    pub fn num_trials(&self) -> usize {
        self.scores.len()
    }
}

/// Fits a fresh copy of `tree` to each trial batch.
pub fn cv_experiment_with_trials<T: Scalar>(
    tree: &Tree<T>,
    trials: &[Trial<T>],
    opts: &FitOptions,
    rng: &mut SearchRng,
) -> Result<ExperimentOutcome<T>, ExprError> {
    let l = tree.count_open_constants();
    let k = trials.len();
    let mut scores = Vec::with_capacity(k);
    let mut constants_matrix = Array2::<T>::zeros((k, l));
    let mut fitted = Vec::with_capacity(k);
    let mut converged = Vec::with_capacity(k);
    for (row, trial) in trials.iter().enumerate() {
        let mut copy = tree.clone();
        let y = trial.y.as_slice().expect("trial targets are contiguous");
        let res = fit_constants(&mut copy, trial.x.view(), y, opts, rng)?;
        for (j, &c) in res.constants.iter().enumerate() {
            constants_matrix[[row, j]] = c;
        }
        if !res.fitness.is_finite() {
            constants_matrix.row_mut(row).fill(T::nan());
        }
        scores.push(res.fitness);
        converged.push(res.converged);
        fitted.push(copy);
    }
    Ok(ExperimentOutcome {
        scores,
        constants_matrix,
        fitted,
        converged,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("need at least one trial")]
    NoTrials,
}

/// Samples `k` control-variable trials from `oracle` and fits `tree` to each.
pub fn cv_experiment<T: Scalar>(
    tree: &Tree<T>,
    ctrl: &ControlSpec,
    oracle: &mut Oracle<T>,
    k: usize,
    batch: usize,
    opts: &FitOptions,
    rng: &mut SearchRng,
) -> Result<ExperimentOutcome<T>, ExperimentError> {
    if k == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let trials = (0..k)
        .map(|_| oracle.sample_trial(ctrl, batch))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cv_experiment_with_trials(tree, &trials, opts, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_infix;
    use crate::rng::seeded;
    use ndarray::Array2;

    #[test]
    fn linear_coefficient_matches_least_squares() {
        let mut t: Tree<f64> = parse_infix("C*x1").unwrap();
        let xs: Vec<f64> = (0..30).map(|i| -2.0 + i as f64 * 0.13).collect();
        let y: Vec<f64> = xs.iter().map(|v| 3.0 * v).collect();
        let x = Array2::from_shape_vec((30, 1), xs.clone()).unwrap();
        let exact = xs.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
            / xs.iter().map(|a| a * a).sum::<f64>();
        let r = fit_constants(&mut t, x.view(), &y, &FitOptions::default(), &mut seeded(1)).unwrap();
        assert!((r.constants[0] - exact).abs() < 1e-8);
        assert!(r.converged);
        assert_eq!(t.open_constant_values(), vec![Some(r.constants[0])]);
    }

    #[test]
    fn zero_constants_reports_mse() {
        let mut t: Tree<f64> = parse_infix("x1 + 1").unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        let r = fit_constants(&mut t, x.view(), &[1.0, 3.0], &FitOptions::default(), &mut seeded(0)).unwrap();
        assert_eq!(r.fitness, 0.5);
        assert_eq!(r.iterations, 0);
        assert!(r.constants.is_empty());
    }

    #[test]
    fn best_of_attempts_is_minimum() {
        let mut t: Tree<f64> = parse_infix("sin(C*x1)").unwrap();
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = xs.iter().map(|v| (2.7 * v).sin()).collect();
        let x = Array2::from_shape_vec((40, 1), xs).unwrap();
        let opts = FitOptions { good_enough: 0.0, ..FitOptions::default() };
        let r = fit_constants(&mut t, x.view(), &y, &opts, &mut seeded(5)).unwrap();
        assert_eq!(r.attempts.len(), 4);
        assert!(r.attempts.iter().all(|&a| r.fitness <= a));
    }

    #[test]
    fn non_finite_fit_ranks_worst() {
        let mut t: Tree<f64> = parse_infix("C/x1").unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        let r = fit_constants(&mut t, x.view(), &[1.0, 2.0], &FitOptions::default(), &mut seeded(0)).unwrap();
        assert_eq!(r.fitness, f64::INFINITY);
        assert!(!r.converged);
    }

    #[test]
    fn deterministic_given_seed() {
        let t: Tree<f64> = parse_infix("C*x1*x1 + cos(C*x1)").unwrap();
        let xs: Vec<f64> = (0..25).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = xs.iter().map(|v| 0.4 * v * v + (1.7 * v).cos()).collect();
        let x = Array2::from_shape_vec((25, 1), xs).unwrap();
        let fit = |seed| {
            let mut c = t.clone();
            fit_constants(&mut c, x.view(), &y, &FitOptions::default(), &mut seeded(seed)).unwrap()
        };
        assert_eq!(fit(9), fit(9));
    }
}
