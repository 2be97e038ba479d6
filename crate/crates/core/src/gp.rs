//! Genetic programming regressor.
//!
//! Classic GP and the control-variable variant run through the same code:
//! mutation and crossover only touch editable nodes, and every generation
//! fits constants on a fresh batch drawn from the oracle under the given
//! control spec. Classic GP is simply a fully editable pool with every
//! variable free.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{NodeKind, Tree};
use crate::optimize::{fit_constants, FitOptions};
use crate::oracle::{ControlSpec, Oracle, OracleError};
use crate::primitives::PrimitiveSet;
use crate::rng::{seeded, SearchRng};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub pool_size: usize,
    pub generations: usize,
    pub p_mutate: f64,
    pub p_crossover: f64,
    /// Fraction of the ranked pool that survives selection.
    pub keep_fraction: f64,
    /// Extra survivors drawn at random from below the cut.
    pub random_survivors: usize,
    /// Fresh random subtrees grown into survivors each generation.
    pub random_injections: usize,
    /// Offspring larger than this are discarded.
    pub max_nodes: usize,
    pub init_depth: usize,
    pub leaf_prob: f64,
    /// Depth limit of subtrees introduced by mutation.
    pub mutation_depth: usize,
    pub batch_size: usize,
    pub fit: FitOptions,
    /// Fits at or below this count as exact: their fitness is recorded as
    /// zero, so shorter exact trees rank first, and the run stops
    /// `patience` generations after the first one.
    pub stop_below: Option<f64>,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            pool_size: 100,
            generations: 200,
            p_mutate: 0.8,
            p_crossover: 0.8,
            keep_fraction: 0.5,
            random_survivors: 10,
            random_injections: 10,
            max_nodes: 30,
            init_depth: 4,
            leaf_prob: 0.4,
            mutation_depth: 2,
            batch_size: 256,
            fit: FitOptions {
                restarts: 1,
                good_enough: 1e-10,
                ..FitOptions::default()
            },
            stop_below: Some(1e-10),
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    pub tree: Tree<T>,
    /// Batch MSE from the latest evaluation; `+inf` before the first.
    pub fitness: T,
    /// Insertion order, used as the last tie-breaker.
    pub id: u64,
}

impl<T: Scalar> Individual<T> {
    fn rank_key(&self) -> (T, usize, u64) {
        let f = if self.fitness.is_nan() {
            T::infinity()
        } else {
            self.fitness
        };
        (f, self.tree.len(), self.id)
    }
}

/// Orders by fitness, then smaller trees, then insertion order.
pub fn rank_order<T: Scalar>(a: &Individual<T>, b: &Individual<T>) -> Ordering {
    let (fa, la, ia) = a.rank_key();
    let (fb, lb, ib) = b.rank_key();
    fa.partial_cmp(&fb)
        .unwrap_or(Ordering::Equal)
        .then(la.cmp(&lb))
        .then(ia.cmp(&ib))
}

/// Keeps the top `keep_fraction` of the pool plus `random_survivors` drawn
/// uniformly from the rest. The result is ranked best first.
pub fn select<T: Scalar>(
    mut pool: Vec<Individual<T>>,
    keep_fraction: f64,
    random_survivors: usize,
    rng: &mut SearchRng,
) -> Vec<Individual<T>> {
    pool.sort_by(rank_order);
    if pool.len() <= 1 {
        return pool;
    }
    let keep = ((pool.len() as f64 * keep_fraction).ceil() as usize).clamp(1, pool.len());
    let mut rest = pool.split_off(keep);
    rest.shuffle(rng);
    rest.truncate(random_survivors);
    rest.sort_by(rank_order);
    pool.extend(rest);
    pool
}

/// Replaces one editable site chosen uniformly at random: a leaf by another
/// leaf, an operator by another of the same arity, or a wholly editable
/// subtree by a random subtree of depth at most `max_depth`.
pub fn mutate<T: Scalar>(
    tree: &Tree<T>,
    prims: &PrimitiveSet,
    max_depth: usize,
    rng: &mut SearchRng,
) -> Tree<T> {
    let mut out = tree.clone();
    let editable = tree.editable_nodes();
    if editable.is_empty() {
        return out;
    }
    let site = editable[rng.random_range(0..editable.len())];
    let subtree_ok = tree.editable_subtree_roots().contains(&site);
    let kind = tree.node(site).kind;
    let arity = kind.arity();
    let swaps: Vec<_> = match kind {
        NodeKind::Op(op) => prims.ops_of_arity(arity).filter(|&o| o != op).collect(),
        _ => Vec::new(),
    };
    let can_swap = arity == 0 || !swaps.is_empty();
    let regrow = match (can_swap, subtree_ok) {
        (false, false) => return out,
        (true, false) => false,
        (false, true) => true,
        (true, true) => rng.random_bool(0.5),
    };
    if regrow {
        out.replace_subtree(site, prims.grow(max_depth, 0.4, rng));
    } else if arity == 0 {
        let mut leaf: Tree<T> = prims.random_leaf(rng);
        for _ in 0..4 {
            if leaf.node(0).kind != kind {
                break;
            }
            leaf = prims.random_leaf(rng);
        }
        out.replace_subtree(site, leaf);
    } else {
        let op = swaps[rng.random_range(0..swaps.len())];
        out.set_kind(site, NodeKind::Op(op));
    }
    out
}

/// Swaps one wholly editable subtree of `a` with one of `b`. Returns the
/// parents unchanged when either has none.
pub fn crossover<T: Scalar>(a: &Tree<T>, b: &Tree<T>, rng: &mut SearchRng) -> (Tree<T>, Tree<T>) {
    let ra = a.editable_subtree_roots();
    let rb = b.editable_subtree_roots();
    if ra.is_empty() || rb.is_empty() {
        return (a.clone(), b.clone());
    }
    let ia = ra[rng.random_range(0..ra.len())];
    let ib = rb[rng.random_range(0..rb.len())];
    let (mut ca, mut cb) = (a.clone(), b.clone());
    ca.replace_subtree(ia, b.subtree(ib));
    cb.replace_subtree(ib, a.subtree(ia));
    (ca, cb)
}

#[derive(Debug, Clone)]
pub struct GpOutcome<T> {
    /// Top `pool_size` individuals, best first, scored on the final batch.
    pub pool: Vec<Individual<T>>,
    /// Best individual ever scored, with the fitness it had then.
    pub hall_of_fame: Individual<T>,
    /// Best fitness of each scored generation.
    pub history: Vec<T>,
    pub generations_run: usize,
    /// Number of constant fits performed.
    pub evaluations: u64,
}

struct Breeder<'a> {
    prims: &'a PrimitiveSet,
    config: &'a GpConfig,
    next_id: u64,
}

impl Breeder<'_> {
    fn individual<T: Scalar>(&mut self, tree: Tree<T>) -> Individual<T> {
        self.next_id += 1;
        Individual {
            tree,
            fitness: T::infinity(),
            id: self.next_id - 1,
        }
    }

    fn fits<T: Scalar>(&self, t: &Tree<T>) -> bool {
        t.len() <= self.config.max_nodes
    }

    fn next_generation<T: Scalar>(
        &mut self,
        survivors: Vec<Individual<T>>,
        rng: &mut SearchRng,
    ) -> Vec<Individual<T>> {
        let target = self.config.pool_size;
        let parents: Vec<Tree<T>> = survivors.iter().map(|i| i.tree.clone()).collect();
        let mut next = survivors;
        let breed_until = target.saturating_sub(self.config.random_injections).max(next.len());
        while next.len() < breed_until {
            let a = &parents[rng.random_range(0..parents.len())];
            let mut kids = if rng.random_bool(self.config.p_crossover) {
                let b = &parents[rng.random_range(0..parents.len())];
                let (x, y) = crossover(a, b, rng);
                vec![x, y]
            } else {
                vec![a.clone()]
            };
            for kid in &mut kids {
                if rng.random_bool(self.config.p_mutate) {
                    *kid = mutate(kid, self.prims, self.config.mutation_depth, rng);
                }
            }
            for (kid, parent) in kids.into_iter().zip([a, a]) {
                if next.len() < breed_until {
                    let kid = if self.fits(&kid) { kid } else { parent.clone() };
                    next.push(self.individual(kid));
                }
            }
        }
        while next.len() < target {
            let base = &parents[rng.random_range(0..parents.len())];
            let roots = base.editable_subtree_roots();
            let tree = if roots.is_empty() {
                self.prims.grow(self.config.init_depth, self.config.leaf_prob, rng)
            } else {
                let mut t = base.clone();
                let r = roots[rng.random_range(0..roots.len())];
                t.replace_subtree(r, self.prims.grow(self.config.init_depth - 1, self.config.leaf_prob, rng));
                t
            };
            let tree = if self.fits(&tree) { tree } else { base.clone() };
            next.push(self.individual(tree));
        }
        next
    }
}

/// Runs GP for `config.generations` generations starting from `pool_init`
/// (grown at random when empty).
pub fn run_gp<T: Scalar>(
    pool_init: Vec<Tree<T>>,
    oracle: &mut Oracle<T>,
    ctrl: &ControlSpec,
    prims: &PrimitiveSet,
    config: &GpConfig,
) -> Result<GpOutcome<T>, OracleError> {
    let mut rng = seeded(config.seed);
    let mut breeder = Breeder {
        prims,
        config,
        next_id: 0,
    };
    let mut pool: Vec<Individual<T>> = if pool_init.is_empty() {
        (0..config.pool_size.max(1))
            .map(|_| {
                let t = prims.grow(config.init_depth, config.leaf_prob, &mut rng);
                breeder.individual(t)
            })
            .collect()
    } else {
        pool_init.into_iter().map(|t| breeder.individual(t)).collect()
    };
    let mut history = Vec::new();
    let mut evaluations = 0u64;
    let mut hall_of_fame: Option<Individual<T>> = None;
    let mut generations_run = 0;
    let stop = config.stop_below.map(T::of);
    let mut exact_since: Option<usize> = None;

    loop {
        let batch = oracle.sample_trial(ctrl, config.batch_size)?;
        let y = batch.y.as_slice().expect("trial targets are contiguous");
        for ind in pool.iter_mut() {
            ind.fitness = match fit_constants(&mut ind.tree, batch.x.view(), y, &config.fit, &mut rng) {
                Ok(r) if stop.is_some_and(|s| r.fitness <= s) => T::zero(),
                Ok(r) => r.fitness,
                Err(_) => T::infinity(),
            };
            evaluations += 1;
        }
        pool.sort_by(rank_order);
        let best = &pool[0];
        history.push(best.fitness);
        if hall_of_fame
            .as_ref()
            .is_none_or(|h| rank_order(best, h) == Ordering::Less)
        {
            hall_of_fame = Some(best.clone());
        }
        if stop.is_some_and(|s| best.fitness <= s) {
            exact_since.get_or_insert(generations_run);
        }
        let done = exact_since.is_some_and(|g| generations_run - g >= config.patience);
        if generations_run == config.generations || done {
            break;
        }
        generations_run += 1;
        let survivors = select(pool, config.keep_fraction, config.random_survivors, &mut rng);
        pool = breeder.next_generation(survivors, &mut rng);
    }
    pool.truncate(config.pool_size.max(1));
    Ok(GpOutcome {
        pool,
        hall_of_fame: hall_of_fame.expect("at least one generation is scored"),
        history,
        generations_run,
        evaluations,
    })
}
