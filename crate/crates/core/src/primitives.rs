//! The operator and terminal alphabet a regressor may build from.

use rand::Rng;

use crate::expr::{Operator, Tree};
use crate::rng::SearchRng;
use crate::Scalar;

/// Operators plus the variables a search may place at leaves. The constant
/// terminal is always available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimitiveSet {
    pub ops: Vec<Operator>,
    /// 0-based variable indices.
    pub vars: Vec<usize>,
}

impl PrimitiveSet {
    pub fn new(ops: Vec<Operator>, vars: Vec<usize>) -> Self {
        PrimitiveSet { ops, vars }
    }

    /// Every variable `0..m`, as classic search uses.
    pub fn all_vars(ops: Vec<Operator>, m: usize) -> Self {
        PrimitiveSet {
            ops,
            vars: (0..m).collect(),
        }
    }

    pub fn ops_of_arity(&self, arity: usize) -> impl Iterator<Item = Operator> + '_ {
        self.ops.iter().copied().filter(move |op| op.arity() == arity)
    }

    /// A leaf drawn uniformly from the variables and the constant symbol.
    pub fn random_leaf<T: Scalar>(&self, rng: &mut SearchRng) -> Tree<T> {
        let k = rng.random_range(0..=self.vars.len());
        match self.vars.get(k) {
            Some(&v) => Tree::var(v),
            None => Tree::open_constant(),
        }
    }

    /// Grow-method random tree of at most `max_depth` levels: above the last
    /// level each position becomes a leaf with probability `leaf_prob`,
    /// otherwise a random operator.
    pub fn grow<T: Scalar>(&self, max_depth: usize, leaf_prob: f64, rng: &mut SearchRng) -> Tree<T> {
        if max_depth <= 1 || self.ops.is_empty() || rng.random::<f64>() < leaf_prob {
            return self.random_leaf(rng);
        }
        let op = self.ops[rng.random_range(0..self.ops.len())];
        if op.arity() == 1 {
            Tree::unary(op, self.grow(max_depth - 1, leaf_prob, rng))
        } else {
            let left = self.grow(max_depth - 1, leaf_prob, rng);
            let right = self.grow(max_depth - 1, leaf_prob, rng);
            Tree::binary(op, left, right)
        }
    }
}
