//! The vertical loop: free one variable per round, search with a regressor
//! under control-variable data, freeze what the trials confirm, and keep the
//! best expressions found on fully free data.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ConstClass, NodeKind, Operator, Tree};
use crate::gp::{run_gp, GpConfig};
use crate::mcts::{run_mcts, MctsConfig};
use crate::optimize::{fit_constants, ExperimentOutcome, FitOptions};
use crate::oracle::{ControlSpec, Oracle, OracleError, Trial};
use crate::primitives::PrimitiveSet;
use crate::rng::{derive_seed, seeded, tag_of, SearchRng};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum VsrError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegressorConfig {
    Gp(GpConfig),
    Mcts(MctsConfig),
}

impl RegressorConfig {
    fn with_seed(&self, seed: u64) -> Self {
        match self {
            RegressorConfig::Gp(c) => RegressorConfig::Gp(GpConfig { seed, ..c.clone() }),
            RegressorConfig::Mcts(c) => RegressorConfig::Mcts(MctsConfig { seed, ..c.clone() }),
        }
    }

    /// The same regressor with its generation or episode budget multiplied.
    pub fn scaled_budget(&self, factor: usize) -> Self {
        match self {
            RegressorConfig::Gp(c) => RegressorConfig::Gp(GpConfig {
                generations: c.generations * factor,
                ..c.clone()
            }),
            RegressorConfig::Mcts(c) => RegressorConfig::Mcts(MctsConfig {
                episodes: c.episodes * factor,
                ..c.clone()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsrConfig {
    pub regressor: RegressorConfig,
    /// Trials per control-variable experiment.
    pub trials: usize,
    /// A trial fits when its MSE is at or below this.
    pub zero_threshold: f64,
    /// A constant is stand-alone when its variance across trials is at or
    /// below this.
    pub variance_threshold: f64,
    pub q_capacity: usize,
    pub batch_size: usize,
    /// Fitting used by the freeze experiments and the global refit.
    pub fit: FitOptions,
    pub seed: u64,
}

impl Default for VsrConfig {
    fn default() -> Self {
        VsrConfig {
            regressor: RegressorConfig::Gp(GpConfig::default()),
            trials: 5,
            zero_threshold: 1e-10,
            variance_threshold: 1e-3,
            q_capacity: 50,
            batch_size: 256,
            fit: FitOptions {
                restarts: 3,
                good_enough: 1e-10,
                ..FitOptions::default()
            },
            seed: 0,
        }
    }
}

impl VsrConfig {
    pub fn validate(&self) -> Result<(), VsrError> {
        let bad = |m: &str| Err(VsrError::Config(m.to_string()));
        if self.trials < 2 {
            return bad("at least 2 trials are needed to measure constant variance");
        }
        if !(self.zero_threshold > 0.0 && self.variance_threshold > 0.0) {
            return bad("thresholds must be positive");
        }
        if self.q_capacity == 0 || self.batch_size == 0 {
            return bad("capacity and batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeDecision {
    pub structure_frozen: bool,
    /// Class assigned to each open slot, in preorder; empty unless frozen.
    pub classes: Vec<ConstClass>,
}

/// Freezes `tree` when every trial fit is at or below `zero_threshold`.
///
/// On a freeze, operators and variables become non-editable and each open
/// constant is classified by the population variance of its fitted values.
/// A constant is stand-alone, fixed at its mean, when that variance is at
/// most `variance_threshold` both absolutely and relative to the squared
/// mean; the rest become editable summary constants. Otherwise the tree is
/// returned unchanged.
pub fn freeze_equation<T: Scalar>(
    tree: &Tree<T>,
    outcome: &ExperimentOutcome<T>,
    zero_threshold: f64,
    variance_threshold: f64,
) -> (Tree<T>, FreezeDecision) {
    let eps = T::of(zero_threshold);
    let fits = !outcome.scores.is_empty() && outcome.scores.iter().all(|&s| s.is_finite() && s <= eps);
    if !fits {
        return (
            tree.clone(),
            FreezeDecision {
                structure_frozen: false,
                classes: Vec::new(),
            },
        );
    }
    let mut out = tree.clone();
    let slots = tree.open_constant_slots();
    let k = T::of(outcome.num_trials() as f64);
    let mut classes = Vec::with_capacity(slots.len());
    for (l, &slot) in slots.iter().enumerate() {
        let col = outcome.constants_matrix.column(l);
        let mean = col.iter().fold(T::zero(), |a, &v| a + v) / k;
        let var = col.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / k;
        // small summary constants can have a tiny absolute spread
        let limit = T::of(variance_threshold) * (mean * mean).min(T::one());
        let class = if var <= limit {
            ConstClass::StandAlone
        } else {
            ConstClass::Summary
        };
        let c = out.const_at_mut(slot).expect("slot is a constant");
        c.class = class;
        c.value = Some(mean);
        classes.push(class);
    }
    for i in 0..out.len() {
        let editable = match out.node(i).kind {
            NodeKind::Const(c) => c.class == ConstClass::Summary,
            _ => false,
        };
        out.set_editable(i, editable);
    }
    (
        out,
        FreezeDecision {
            structure_frozen: true,
            classes,
        },
    )
}

/// Runs the experiment trial by trial from randomly perturbed constants,
/// giving up at the first trial whose fit misses `zero_threshold`. Returns
/// the outcome (only when every trial fits) and the number of fits made.
pub fn screened_experiment<T: Scalar>(
    tree: &Tree<T>,
    trials: &[Trial<T>],
    opts: &FitOptions,
    zero_threshold: f64,
    rng: &mut SearchRng,
) -> (Option<ExperimentOutcome<T>>, u64) {
    let eps = T::of(zero_threshold);
    let l = tree.count_open_constants();
    let mut outcome = ExperimentOutcome {
        scores: Vec::with_capacity(trials.len()),
        constants_matrix: ndarray::Array2::zeros((trials.len(), l)),
        fitted: Vec::with_capacity(trials.len()),
        converged: Vec::with_capacity(trials.len()),
    };
    let mut fits = 0;
    for (row, trial) in trials.iter().enumerate() {
        // jittered starts: a constant that only looks stable because every
        // trial began from the same values would otherwise pass as
        // stand-alone
        let mut copy = tree.clone();
        for slot in copy.open_constant_slots() {
            let c = copy.const_at_mut(slot).expect("slot is a constant");
            c.value = c.value.map(|v| {
                v * T::of(1.0 + rng.random_range(-0.5..0.5)) + T::of(rng.random_range(-0.1..0.1))
            });
        }
        let y = trial.y.as_slice().expect("trial targets are contiguous");
        fits += 1;
        let Ok(res) = fit_constants(&mut copy, trial.x.view(), y, opts, rng) else {
            return (None, fits);
        };
        if !(res.fitness <= eps) {
            return (None, fits);
        }
        for (j, &c) in res.constants.iter().enumerate() {
            outcome.constants_matrix[[row, j]] = c;
        }
        outcome.scores.push(res.fitness);
        outcome.converged.push(res.converged);
        outcome.fitted.push(copy);
    }
    (Some(outcome), fits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 0-based index of the variable freed this round.
    pub variable: usize,
    pub candidates: usize,
    pub frozen: usize,
    /// Constant fits spent by the regressor.
    pub search_evaluations: u64,
    /// Constant fits spent on freeze experiments and the global refit.
    pub bookkeeping_evaluations: u64,
    pub best_global_fitness: f64,
    pub best_expression: String,
}

#[derive(Debug, Clone)]
pub struct VsrOutcome<T> {
    pub best: Tree<T>,
    /// MSE of `best` on the fully free batch it was last fitted to.
    pub best_fitness: T,
    /// Best-set, ranked by global fitness.
    pub q: Vec<(Tree<T>, T)>,
    pub rounds: Vec<RoundReport>,
    /// Every constant fit performed.
    pub evaluations: u64,
}

fn q_order<T: Scalar>(a: &(Tree<T>, T), b: &(Tree<T>, T)) -> Ordering {
    let key = |f: T| if f.is_nan() { T::infinity() } else { f };
    key(a.1)
        .partial_cmp(&key(b.1))
        .unwrap_or(Ordering::Equal)
        .then(a.0.len().cmp(&b.0.len()))
}

/// Refits copies of `candidates` (non-frozen constants only) on one fully
/// free batch and merges them into `q`, keeping the best `capacity`.
fn update_q<T: Scalar>(
    q: &mut Vec<(Tree<T>, T)>,
    candidates: &[Tree<T>],
    global: &Trial<T>,
    opts: &FitOptions,
    capacity: usize,
    rng: &mut SearchRng,
) -> u64 {
    let y = global.y.as_slice().expect("trial targets are contiguous");
    for c in candidates {
        let mut t = c.clone();
        let f = fit_constants(&mut t, global.x.view(), y, opts, rng)
            .map(|r| r.fitness)
            .unwrap_or(T::infinity());
        q.push((t, f));
    }
    q.sort_by(q_order);
    q.truncate(capacity);
    candidates.len() as u64
}

struct Search<'a> {
    regressor: &'a RegressorConfig,
}

impl Search<'_> {
    fn run<T: Scalar>(
        &self,
        pool: Vec<Tree<T>>,
        oracle: &mut Oracle<T>,
        ctrl: &ControlSpec,
        prims: &PrimitiveSet,
    ) -> Result<(Vec<Tree<T>>, u64), OracleError> {
        match self.regressor {
            RegressorConfig::Gp(cfg) => {
                let out = run_gp(pool, oracle, ctrl, prims, cfg)?;
                Ok((out.pool.into_iter().map(|i| i.tree).collect(), out.evaluations))
            }
            RegressorConfig::Mcts(cfg) => {
                let out = run_mcts(&pool, oracle, ctrl, prims, cfg)?;
                Ok((out.candidates.into_iter().map(|(t, _)| t).collect(), out.evaluations))
            }
        }
    }
}

/// Vertical symbolic regression: variables are freed in index order, one per
/// round.
pub fn run_vsr<T: Scalar>(
    oracle: &mut Oracle<T>,
    ops: &[Operator],
    config: &VsrConfig,
) -> Result<VsrOutcome<T>, VsrError> {
    config.validate()?;
    let m = oracle.get_nvars();
    let mut rng = seeded(derive_seed(config.seed, tag_of("vsr")));
    let mut pool: Vec<Tree<T>> = Vec::new();
    let mut q: Vec<(Tree<T>, T)> = Vec::new();
    let mut rounds = Vec::with_capacity(m);
    let mut evaluations = 0u64;

    for i in 0..m {
        let ctrl = ControlSpec::first_free(i + 1, m);
        let prims = PrimitiveSet::new(ops.to_vec(), vec![i]);
        let regressor = config.regressor.with_seed(derive_seed(config.seed, i as u64));
        let (candidates, search_evals) = Search { regressor: &regressor }.run(pool, oracle, &ctrl, &prims)?;

        let trials = (0..config.trials)
            .map(|_| oracle.sample_trial(&ctrl, config.batch_size))
            .collect::<Result<Vec<_>, _>>()?;
        let mut book = 0u64;
        let mut frozen = 0;
        let mut next = Vec::with_capacity(candidates.len());
        let mut confirmed = Vec::new();
        for c in &candidates {
            let (outcome, fits) = screened_experiment(c, &trials, &config.fit, config.zero_threshold, &mut rng);
            book += fits;
            match outcome {
                Some(o) => {
                    let (t, _) = freeze_equation(c, &o, config.zero_threshold, config.variance_threshold);
                    frozen += 1;
                    confirmed.push(t.clone());
                    next.push(t);
                }
                None => next.push(c.clone()),
            }
        }
        let global = oracle.sample(config.batch_size)?;
        book += update_q(&mut q, &next, &global, &config.fit, config.q_capacity, &mut rng);
        evaluations += search_evals + book;
        rounds.push(RoundReport {
            variable: i,
            candidates: candidates.len(),
            frozen,
            search_evaluations: search_evals,
            bookkeeping_evaluations: book,
            best_global_fitness: q[0].1.as_f64(),
            best_expression: q[0].0.to_string(),
        });
        // only the shortest confirmed reduced forms seed the next round;
        // unconfirmed candidates carry over when nothing was confirmed
        pool = if confirmed.is_empty() {
            next
        } else {
            let shortest = confirmed.iter().map(Tree::len).min().unwrap_or(0);
            confirmed.retain(|t| t.len() == shortest);
            confirmed
        };
    }
    let (best, best_fitness) = q[0].clone();
    Ok(VsrOutcome {
        best,
        best_fitness,
        q,
        rounds,
        evaluations,
    })
}

/// The horizontal baseline: one regressor run over all variables with
/// nothing controlled, at `budget_factor` times the per-round budget,
/// followed by the same global refit as the vertical loop.
pub fn run_classic<T: Scalar>(
    oracle: &mut Oracle<T>,
    ops: &[Operator],
    config: &VsrConfig,
    budget_factor: usize,
) -> Result<VsrOutcome<T>, VsrError> {
    config.validate()?;
    let m = oracle.get_nvars();
    let mut rng = seeded(derive_seed(config.seed, tag_of("classic")));
    let ctrl = ControlSpec::all_free(m);
    let prims = PrimitiveSet::all_vars(ops.to_vec(), m);
    let regressor = config
        .regressor
        .scaled_budget(budget_factor)
        .with_seed(derive_seed(config.seed, 0));
    let (candidates, search_evals) = Search { regressor: &regressor }.run(Vec::new(), oracle, &ctrl, &prims)?;
    let global = oracle.sample(config.batch_size)?;
    let mut q = Vec::new();
    let book = update_q(&mut q, &candidates, &global, &config.fit, config.q_capacity, &mut rng);
    let (best, best_fitness) = q[0].clone();
    Ok(VsrOutcome {
        rounds: vec![RoundReport {
            variable: m.saturating_sub(1),
            candidates: candidates.len(),
            frozen: 0,
            search_evaluations: search_evals,
            bookkeeping_evaluations: book,
            best_global_fitness: best_fitness.as_f64(),
            best_expression: best.to_string(),
        }],
        best,
        best_fitness,
        q,
        evaluations: search_evals + book,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_infix;
    use ndarray::array;

    fn outcome(scores: Vec<f64>, c: ndarray::Array2<f64>) -> ExperimentOutcome<f64> {
        ExperimentOutcome {
            fitted: Vec::new(),
            converged: vec![true; scores.len()],
            scores,
            constants_matrix: c,
        }
    }

    #[test]
    fn figure_outcome_gives_two_summary_constants() {
        let t: Tree<f64> = parse_infix("C*x1 - C").unwrap();
        let o = outcome(vec![1e-14, 1e-15], array![[0.1, 0.35], [0.8, 0.06]]);
        let (f, d) = freeze_equation(&t, &o, 1e-10, 1e-3);
        assert!(d.structure_frozen);
        assert_eq!(d.classes, vec![ConstClass::Summary, ConstClass::Summary]);
        assert_eq!(f.editable_nodes(), f.constant_slots());
    }

    #[test]
    fn stable_constant_is_stand_alone() {
        let t: Tree<f64> = parse_infix("C*x1 + C").unwrap();
        let o = outcome(vec![0.0; 3], array![[3.7, 1.0], [3.7, 2.0], [3.7000001, 3.0]]);
        let (f, d) = freeze_equation(&t, &o, 1e-10, 1e-3);
        assert_eq!(d.classes, vec![ConstClass::StandAlone, ConstClass::Summary]);
        let c = f.const_at(f.constant_slots()[0]).unwrap();
        assert!(!f.node(f.constant_slots()[0]).editable);
        assert!((c.value.unwrap() - 3.7).abs() < 1e-6);
    }

    #[test]
    fn failed_trial_freezes_nothing() {
        let t: Tree<f64> = parse_infix("C*x1").unwrap();
        let o = outcome(vec![0.0, 1e-3], array![[1.0], [1.0]]);
        let (f, d) = freeze_equation(&t, &o, 1e-10, 1e-3);
        assert!(!d.structure_frozen);
        assert_eq!(f, t);
        assert_eq!(f.editable_nodes().len(), f.len());
    }

    #[test]
    fn config_validation() {
        let mut c = VsrConfig::default();
        assert!(c.validate().is_ok());
        c.trials = 1;
        assert!(c.validate().is_err());
    }
}
