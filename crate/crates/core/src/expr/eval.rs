use ndarray::{Array1, ArrayView2};

use super::{ExprError, NodeKind, Tree};
use crate::Scalar;

impl<T: Scalar> Tree<T> {
    /// Evaluates the tree on every row of `inputs` (n rows, m columns).
    ///
    /// Division by zero and domain errors propagate as IEEE infinities/NaN.
    pub fn evaluate(&self, inputs: ArrayView2<'_, T>) -> Result<Array1<T>, ExprError> {
        let n = inputs.nrows();
        let m = inputs.ncols();
        // postfix walk over the reversed preorder; the top of the stack is
        // always the leftmost pending operand
        let mut stack: Vec<Vec<T>> = Vec::with_capacity(8);
        let mut spare: Vec<Vec<T>> = Vec::new();
        for (pos, node) in self.nodes().iter().enumerate().rev() {
            match &node.kind {
                NodeKind::Var(i) => {
                    if *i >= m {
                        return Err(ExprError::VariableOutOfRange {
                            index: *i,
                            available: m,
                        });
                    }
                    let mut buf = spare.pop().unwrap_or_default();
                    buf.clear();
                    buf.extend(inputs.column(*i).iter().copied());
                    stack.push(buf);
                }
                NodeKind::Const(c) => {
                    let v = c.value.ok_or(ExprError::UnfittedConstant(pos))?;
                    let mut buf = spare.pop().unwrap_or_default();
                    buf.clear();
                    buf.resize(n, v);
                    stack.push(buf);
                }
                NodeKind::Op(op) if op.arity() == 1 => {
                    let a = stack.last_mut().expect("arity checked at construction");
                    for v in a.iter_mut() {
                        *v = op.apply_unary(*v);
                    }
                }
                NodeKind::Op(op) => {
                    let left = stack.pop().expect("arity checked at construction");
                    let right = stack.last_mut().expect("arity checked at construction");
                    for (r, &l) in right.iter_mut().zip(&left) {
                        *r = op.apply_binary(l, *r);
                    }
                    spare.push(left);
                }
            }
        }
        Ok(Array1::from_vec(stack.pop().unwrap_or_default()))
    }

    /// Evaluates the tree at a single point.
    pub fn evaluate_point(&self, x: &[T]) -> Result<T, ExprError> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .expect("a slice is always a valid 1-row view");
        Ok(self.evaluate(view)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_infix;
    use super::*;
    use ndarray::array;

    #[test]
    fn ideal_gas_row() {
        let t: Tree<f64> = parse_infix("8.31*x1*(x2/x3)").unwrap();
        let y = t.evaluate(array![[1.0, 10.0, 2.0]].view()).unwrap();
        assert!((y[0] - 41.55).abs() < 1e-12);
    }

    #[test]
    fn identity() {
        let t: Tree<f64> = Tree::var(0);
        assert_eq!(t.evaluate_point(&[7.0]).unwrap(), 7.0);
    }

    #[test]
    fn division_by_zero_propagates() {
        let t: Tree<f64> = parse_infix("inv(x1) + x2/x1").unwrap();
        let y = t.evaluate(array![[0.0, 1.0], [0.0, 0.0]].view()).unwrap();
        assert!(y[0].is_infinite());
        assert!(y[1].is_nan());
    }

    #[test]
    fn unfitted_constant_is_an_error() {
        let t: Tree<f64> = parse_infix("C*x1").unwrap();
        assert_eq!(
            t.evaluate_point(&[1.0]),
            Err(ExprError::UnfittedConstant(1))
        );
    }

    #[test]
    fn variable_out_of_range() {
        let t: Tree<f64> = Tree::var(2);
        assert!(matches!(
            t.evaluate_point(&[1.0, 2.0]),
            Err(ExprError::VariableOutOfRange { index: 2, available: 2 })
        ));
    }

    #[test]
    fn works_in_f32() {
        let t: Tree<f32> = parse_infix("x1*x1 - 0.5").unwrap();
        assert_eq!(t.evaluate_point(&[2.0f32]).unwrap(), 3.5f32);
    }
}
