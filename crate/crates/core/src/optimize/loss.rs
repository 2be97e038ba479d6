//! Allocation-free MSE evaluation of a tree as a function of its open
//! constants.
//!
//! Subtrees that contain no fittable constant do not depend on the
//! parameters, so they are evaluated once up front and replayed from a cache.

use ndarray::ArrayView2;

use super::minimize::Objective;
use crate::expr::{ExprError, NodeKind, Operator, Tree};
use crate::Scalar;

/// One step of the tape. Operands are indices of earlier steps.
#[derive(Debug, Clone, Copy)]
enum Instr {
    Cached,
    Param(usize),
    Unary(Operator, usize),
    Binary(Operator, usize, usize),
}

pub struct LossEvaluator<'y, T> {
    prog: Vec<Instr>,
    /// Output column of every step; cached steps are filled once.
    vals: Vec<Vec<T>>,
    adj: Vec<Vec<T>>,
    y: &'y [T],
    params: usize,
}

impl<'y, T: Scalar> LossEvaluator<'y, T> {
    /// Compiles `tree` against the batch. Parameters are the fittable
    /// constant slots in preorder.
    pub fn new(tree: &Tree<T>, x: ArrayView2<'_, T>, y: &'y [T]) -> Result<Self, ExprError> {
        let len = tree.len();
        let mut param_of = vec![usize::MAX; len];
        for (k, slot) in tree.open_constant_slots().into_iter().enumerate() {
            param_of[slot] = k;
        }
        let params = param_of.iter().filter(|&&p| p != usize::MAX).count();
        let mut has_param = vec![false; len];
        for i in (0..len).rev() {
            has_param[i] =
                param_of[i] != usize::MAX || tree.children(i).iter().any(|&c| has_param[c]);
        }
        let mut ev = LossEvaluator {
            prog: Vec::with_capacity(len),
            vals: Vec::with_capacity(len),
            adj: Vec::new(),
            y,
            params,
        };
        ev.emit(tree, 0, x, &param_of, &has_param)?;
        ev.adj = vec![vec![T::zero(); y.len()]; ev.prog.len()];
        Ok(ev)
    }

    fn emit(
        &mut self,
        tree: &Tree<T>,
        i: usize,
        x: ArrayView2<'_, T>,
        param_of: &[usize],
        has_param: &[bool],
    ) -> Result<usize, ExprError> {
        let n = self.y.len();
        let instr = if !has_param[i] {
            self.vals.push(tree.subtree(i).evaluate(x)?.to_vec());
            self.prog.push(Instr::Cached);
            return Ok(self.prog.len() - 1);
        } else {
            match tree.node(i).kind {
                NodeKind::Const(_) => Instr::Param(param_of[i]),
                NodeKind::Op(op) => {
                    let children = tree.children(i);
                    let a = self.emit(tree, children[0], x, param_of, has_param)?;
                    if op.arity() == 2 {
                        let b = self.emit(tree, children[1], x, param_of, has_param)?;
                        Instr::Binary(op, a, b)
                    } else {
                        Instr::Unary(op, a)
                    }
                }
                NodeKind::Var(_) => unreachable!("variables carry no parameters"),
            }
        };
        self.vals.push(vec![T::zero(); n]);
        self.prog.push(instr);
        Ok(self.prog.len() - 1)
    }

    pub fn num_params(&self) -> usize {
        self.params
    }

    /// Predictions for parameter vector `c`.
    pub fn predict(&mut self, c: &[T]) -> &[T] {
        debug_assert_eq!(c.len(), self.params);
        for k in 0..self.prog.len() {
            let (done, rest) = self.vals.split_at_mut(k);
            let out = &mut rest[0];
            match self.prog[k] {
                Instr::Cached => {}
                Instr::Param(p) => out.iter_mut().for_each(|v| *v = c[p]),
                Instr::Unary(op, a) => {
                    for (o, &v) in out.iter_mut().zip(&done[a]) {
                        *o = op.apply_unary(v);
                    }
                }
                Instr::Binary(op, a, b) => {
                    for ((o, &l), &r) in out.iter_mut().zip(&done[a]).zip(&done[b]) {
                        *o = op.apply_binary(l, r);
                    }
                }
            }
        }
        self.vals.last().expect("tree is nonempty")
    }

    /// Batch MSE; `+inf` when any prediction or the sum is non-finite.
    pub fn loss(&mut self, c: &[T]) -> T {
        let n = self.y.len();
        if n == 0 {
            return T::infinity();
        }
        let y = self.y;
        let pred = self.predict(c);
        let mut acc = T::zero();
        for (&p, &t) in pred.iter().zip(y) {
            let d = p - t;
            acc = acc + d * d;
        }
        let out = acc / T::of(n as f64);
        if out.is_finite() {
            out
        } else {
            T::infinity()
        }
    }

    /// Batch MSE and its exact gradient by reverse accumulation over the
    /// tape. The gradient is zeroed when the loss or any component is not
    /// finite.
    pub fn loss_and_gradient(&mut self, c: &[T], grad: &mut [T]) -> T {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let f = self.loss(c);
        if !f.is_finite() {
            return f;
        }
        let n = self.y.len();
        let last = self.prog.len() - 1;
        let scale = T::of(2.0 / n as f64);
        for a in self.adj.iter_mut() {
            a.iter_mut().for_each(|v| *v = T::zero());
        }
        for ((g, &p), &t) in self.adj[last].iter_mut().zip(&self.vals[last]).zip(self.y) {
            *g = scale * (p - t);
        }
        for k in (0..=last).rev() {
            let (lower, upper) = self.adj.split_at_mut(k);
            let up = &upper[0];
            match self.prog[k] {
                Instr::Cached => {}
                Instr::Param(p) => grad[p] = grad[p] + up.iter().fold(T::zero(), |s, &v| s + v),
                Instr::Unary(op, a) => {
                    let (arg, out) = (&self.vals[a], &self.vals[k]);
                    for i in 0..n {
                        let d = unary_derivative(op, arg[i], out[i]);
                        lower[a][i] = lower[a][i] + up[i] * d;
                    }
                }
                Instr::Binary(op, a, b) => {
                    let (l, r, out) = (&self.vals[a], &self.vals[b], &self.vals[k]);
                    for i in 0..n {
                        let g = up[i];
                        let (dl, dr) = match op {
                            Operator::Add => (g, g),
                            Operator::Sub => (g, -g),
                            Operator::Mul => (g * r[i], g * l[i]),
                            Operator::Div => (g / r[i], -g * out[i] / r[i]),
                            _ => unreachable!("{} is unary", op.token()),
                        };
                        lower[a][i] = lower[a][i] + dl;
                        lower[b][i] = lower[b][i] + dr;
                    }
                }
            }
        }
        if !grad.iter().all(|g| g.is_finite()) {
            grad.iter_mut().for_each(|g| *g = T::zero());
        }
        f
    }
}

/// d out / d arg for a unary operator, given the argument and the output.
fn unary_derivative<T: Scalar>(op: Operator, arg: T, out: T) -> T {
    match op {
        Operator::Inv => -out * out,
        Operator::Sin => arg.cos(),
        Operator::Cos => -arg.sin(),
        Operator::Exp => out,
        Operator::Log => arg.recip(),
        Operator::Sqrt => T::of(0.5) / out,
        _ => unreachable!("{} is binary", op.token()),
    }
}

impl<T: Scalar> Objective<T> for LossEvaluator<'_, T> {
    fn value(&mut self, x: &[T]) -> T {
        self.loss(x)
    }

    fn value_and_gradient(&mut self, x: &[T], g: &mut [T]) -> T {
        self.loss_and_gradient(x, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_infix;
    use crate::metrics::mse;
    use ndarray::Array2;

    #[test]
    fn matches_tree_evaluation() {
        let mut t: Tree<f64> = parse_infix("C*sin(x1) + x2/(C - x1) + 2.5*x2").unwrap();
        let x = Array2::from_shape_fn((20, 2), |(i, j)| 0.3 + i as f64 * 0.17 - j as f64 * 0.4);
        let y: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let c = [1.3, -0.7];
        let mut ev = LossEvaluator::new(&t, x.view(), &y).unwrap();
        assert_eq!(ev.num_params(), 2);
        let pred = ev.predict(&c).to_vec();
        t.set_open_constants(&c);
        let direct = t.evaluate(x.view()).unwrap();
        assert_eq!(pred, direct.to_vec());
        assert_eq!(ev.loss(&c), mse(&y, direct.as_slice().unwrap()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t: Tree<f64> = parse_infix("C*sin(x1) + x2/(C - x1) + exp(C*x2) - sqrt(x1*C) + log(C+x2)*inv(C)").unwrap();
        let x = Array2::from_shape_fn((15, 2), |(i, j)| 0.2 + i as f64 * 0.11 + j as f64 * 0.3);
        let y: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).cos()).collect();
        let c = [0.8, 2.9, 0.4, 1.3, 1.7, 0.6];
        let mut ev = LossEvaluator::new(&t, x.view(), &y).unwrap();
        let mut g = vec![0.0; 6];
        let f = ev.loss_and_gradient(&c, &mut g);
        assert_eq!(f, ev.loss(&c));
        let fd = crate::optimize::minimize::fd_gradient(&mut |p: &[f64]| ev.loss(p), &c);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn no_parameters() {
        let t: Tree<f64> = parse_infix("x1*x1").unwrap();
        let x = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let y = [1.0, 4.0, 10.0];
        let mut ev = LossEvaluator::new(&t, x.view(), &y).unwrap();
        assert_eq!(ev.num_params(), 0);
        assert!((ev.loss(&[]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_loss() {
        let t: Tree<f64> = parse_infix("C/x1").unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        let mut ev = LossEvaluator::new(&t, x.view(), &[1.0, 1.0]).unwrap();
        assert_eq!(ev.loss(&[1.0]), f64::INFINITY);
    }
}
