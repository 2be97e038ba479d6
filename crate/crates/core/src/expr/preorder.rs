//! Extended preorder traversal: a list of `[token, kind]` pairs.
//!
//! ```text
//! [["mul","binary"], ["mul","binary"], ["8.31","const"], ["x1","var"],
//!  ["div","binary"], ["x2","var"], ["x3","var"]]
//! ```
//!
//! Variables are written 1-based (`x1..xm`), constants as the shortest decimal
//! string that round-trips. An open constant without a value is written `C`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{check_arity, ConstClass, Constant, ExprError, Node, NodeKind, Operator, Tree};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Binary,
    Unary,
    Const,
    Var,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Binary => "binary",
            TokenKind::Unary => "unary",
            TokenKind::Const => "const",
            TokenKind::Var => "var",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreorderRecord(pub Vec<(String, TokenKind)>);

impl PreorderRecord {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Plain token list, e.g. `['mul', 'mul', '8.31', 'x1', ...]`.
    pub fn tokens(&self) -> Vec<&str> {
        self.0.iter().map(|(t, _)| t.as_str()).collect()
    }
}

impl fmt::Display for PreorderRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens().join(" "))
    }
}

pub(crate) fn parse_var_token(token: &str) -> Option<usize> {
    let digits = token.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let one_based: usize = digits.parse().ok()?;
    one_based.checked_sub(1)
}

fn actual_kind(token: &str) -> Option<TokenKind> {
    if let Some(op) = Operator::from_token(token) {
        return Some(if op.arity() == 2 {
            TokenKind::Binary
        } else {
            TokenKind::Unary
        });
    }
    if parse_var_token(token).is_some() {
        return Some(TokenKind::Var);
    }
    None
}

impl<T: Scalar> Tree<T> {
    pub fn to_preorder(&self) -> PreorderRecord {
        PreorderRecord(
            self.nodes()
                .iter()
                .map(|n| {
                    let token = match &n.kind {
                        NodeKind::Op(op) => op.token().to_string(),
                        NodeKind::Var(i) => format!("x{}", i + 1),
                        NodeKind::Const(c) => match c.value {
                            Some(v) => v.to_string(),
                            None => "C".to_string(),
                        },
                    };
                    (token, n.kind.token_kind())
                })
                .collect(),
        )
    }

    pub fn from_preorder(record: &PreorderRecord) -> Result<Self, ExprError> {
        let mut nodes = Vec::with_capacity(record.len());
        for (token, kind) in &record.0 {
            let node_kind = match kind {
                TokenKind::Const => {
                    if token == "C" {
                        NodeKind::Const(Constant::open())
                    } else {
                        let v: T = token
                            .trim()
                            .parse()
                            .map_err(|_| ExprError::UnknownToken(token.clone()))?;
                        NodeKind::Const(Constant {
                            value: Some(v),
                            class: ConstClass::StandAlone,
                        })
                    }
                }
                declared => {
                    let actual =
                        actual_kind(token).ok_or_else(|| ExprError::UnknownToken(token.clone()))?;
                    if actual != *declared {
                        return Err(ExprError::KindMismatch {
                            token: token.clone(),
                            declared: *declared,
                            actual,
                        });
                    }
                    match Operator::from_token(token) {
                        Some(op) => NodeKind::Op(op),
                        None => NodeKind::Var(parse_var_token(token).expect("kind checked")),
                    }
                }
            };
            nodes.push(Node::new(node_kind));
        }
        check_arity(nodes.iter().map(|n| n.kind.arity()))?;
        Tree::from_nodes(nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(items: &[(&str, TokenKind)]) -> PreorderRecord {
        PreorderRecord(items.iter().map(|(t, k)| (t.to_string(), *k)).collect())
    }

    #[test]
    fn tuple_style_example_parses() {
        use TokenKind::*;
        let r = record(&[
            ("mul", Binary),
            ("mul", Binary),
            ("8.31", Const),
            ("x1", Var),
            ("div", Binary),
            ("x2", Var),
            ("x3", Var),
        ]);
        let t: Tree<f64> = Tree::from_preorder(&r).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.to_string(), "((8.31 * x1) * (x2 / x3))");
        assert_eq!(t.to_preorder(), r);
    }

    #[test]
    fn single_leaf() {
        let t: Tree<f64> = Tree::from_preorder(&record(&[("x1", TokenKind::Var)])).unwrap();
        assert_eq!(t, Tree::var(0));
    }

    #[test]
    fn json_shape_is_pairs() {
        let t: Tree<f64> = Tree::binary(Operator::Add, Tree::var(0), Tree::constant(0.5));
        let json = serde_json::to_string(&t.to_preorder()).unwrap();
        assert_eq!(json, r#"[["add","binary"],["x1","var"],["0.5","const"]]"#);
    }

    #[test]
    fn leftover_and_missing_tokens() {
        use TokenKind::*;
        let leftover = record(&[("x1", Var), ("x2", Var)]);
        assert!(matches!(
            Tree::<f64>::from_preorder(&leftover),
            Err(ExprError::Malformed(_))
        ));
        let missing = record(&[("add", Binary), ("x2", Var)]);
        assert!(matches!(
            Tree::<f64>::from_preorder(&missing),
            Err(ExprError::Malformed(_))
        ));
    }

    #[test]
    fn unknown_and_mismatched_tokens() {
        use TokenKind::*;
        assert!(matches!(
            Tree::<f64>::from_preorder(&record(&[("tanh", Unary), ("x1", Var)])),
            Err(ExprError::UnknownToken(_))
        ));
        assert!(matches!(
            Tree::<f64>::from_preorder(&record(&[("x0", Var)])),
            Err(ExprError::UnknownToken(_))
        ));
        assert!(matches!(
            Tree::<f64>::from_preorder(&record(&[("sin", Binary), ("x1", Var), ("x1", Var)])),
            Err(ExprError::KindMismatch { .. })
        ));
        assert!(matches!(
            Tree::<f64>::from_preorder(&record(&[("abc", Const)])),
            Err(ExprError::UnknownToken(_))
        ));
    }

    #[test]
    fn open_constant_placeholder() {
        let t: Tree<f64> = super::super::parse_infix("C*x2").unwrap();
        let r = t.to_preorder();
        assert_eq!(r.tokens(), vec!["mul", "C", "x2"]);
        assert_eq!(Tree::<f64>::from_preorder(&r).unwrap(), t);
    }
}
