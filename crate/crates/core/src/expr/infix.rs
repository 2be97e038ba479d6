//! Infix expression parser.
//!
//! Accepts `+ - * / ^`, parentheses, numeric literals (fixed constants), variables `x1..xm`,
//! the open-constant placeholder `C`, and the unary functions `inv sin cos exp
//! log sqrt`. A power must have a literal exponent: positive integers expand
//! to repeated multiplication, `0.5` and `0.25` to nested square roots, and a
//! negative integer to `inv` of the positive power. Unary minus on a literal
//! yields a negative constant; on anything else it multiplies by `-1`.

use super::preorder::parse_var_token;
use super::{ExprError, Operator, Tree};
use crate::Scalar;

pub fn parse_infix<T: Scalar>(src: &str) -> Result<Tree<T>, ExprError> {
    let mut p = Parser { src, pos: 0 };
    let t = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr<T: Scalar>(&mut self) -> Result<Tree<T>, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Tree::binary(Operator::Add, lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = Tree::binary(Operator::Sub, lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term<T: Scalar>(&mut self) -> Result<Tree<T>, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Tree::binary(Operator::Mul, lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = Tree::binary(Operator::Div, lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary<T: Scalar>(&mut self) -> Result<Tree<T>, ExprError> {
        if self.eat(b'-') {
            self.skip_ws();
            if self.peek().is_some_and(|c| c.is_ascii_digit() || c == b'.') {
                let v: f64 = self.number()?;
                let base = Tree::fixed_constant(T::of(-v));
                return self.power_suffix(base);
            }
            let operand = self.unary()?;
            return Ok(Tree::binary(Operator::Mul, Tree::fixed_constant(T::of(-1.0)), operand));
        }
        let base = self.atom()?;
        self.power_suffix(base)
    }

    fn power_suffix<T: Scalar>(&mut self, base: Tree<T>) -> Result<Tree<T>, ExprError> {
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let negative = self.eat(b'-');
        self.skip_ws();
        let e = self.number()?;
        let sqrt = |t| Tree::unary(Operator::Sqrt, t);
        let positive = if e == 0.5 {
            sqrt(base)
        } else if e == 0.25 {
            sqrt(sqrt(base))
        } else if e >= 1.0 && e.fract() == 0.0 && e <= 16.0 {
            let mut acc = base.clone();
            for _ in 1..(e as usize) {
                acc = Tree::binary(Operator::Mul, acc, base.clone());
            }
            acc
        } else {
            return Err(self.err("unsupported exponent"));
        };
        Ok(if negative {
            Tree::unary(Operator::Inv, positive)
        } else {
            positive
        })
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'-' || bytes[self.pos] == b'+') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: "bad number".into(),
            })
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn atom<T: Scalar>(&mut self) -> Result<Tree<T>, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let t = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(t)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Tree::fixed_constant(T::of(self.number()?))),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let name = self.ident();
                if name == "C" {
                    return Ok(Tree::open_constant());
                }
                if let Some(v) = parse_var_token(name) {
                    return Ok(Tree::var(v));
                }
                match Operator::from_token(name) {
                    Some(op) if op.arity() == 1 => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected `(` after function name"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.err("expected `)`"));
                        }
                        Ok(Tree::unary(op, arg))
                    }
                    _ => Err(ExprError::Syntax {
                        pos: start,
                        msg: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            _ => Err(self.err("expected operand")),
        }
    }
}
