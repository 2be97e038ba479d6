//! Expression trees.
//!
//! A [`Tree`] stores its nodes as a flat preorder sequence. Every subtree is a
//! contiguous range of that sequence, which makes constant-slot ordering,
//! subtree replacement and serialization straightforward. Each node carries an
//! `editable` flag; search operators must leave non-editable nodes untouched.

mod enumerate;
mod eval;
mod infix;
mod preorder;

use std::fmt;

use thiserror::Error;

use crate::Scalar;

pub use enumerate::{catalan, enumerate_trees, for_each_tree, lemma_count, EnumToken};
pub use infix::parse_infix;
pub use preorder::{PreorderRecord, TokenKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("token `{token}` declared as {declared} but is {actual}")]
    KindMismatch {
        token: String,
        declared: TokenKind,
        actual: TokenKind,
    },
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("constant slot {0} has no value")]
    UnfittedConstant(usize),
    #[error("variable x{} referenced but input has {available} columns", index + 1)]
    VariableOutOfRange { index: usize, available: usize },
    #[error("infix parse error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("enumeration guard: {0}")]
    Guard(String),
}

/// Mathematical operators. `const` and `var` are leaf kinds, see [`NodeKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
    Inv,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::Div,
        Operator::Inv,
        Operator::Sin,
        Operator::Cos,
        Operator::Exp,
        Operator::Log,
        Operator::Sqrt,
    ];

    pub fn arity(self) -> usize {
        match self {
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Div => 2,
            _ => 1,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Sub => "sub",
            Operator::Mul => "mul",
            Operator::Div => "div",
            Operator::Inv => "inv",
            Operator::Sin => "sin",
            Operator::Cos => "cos",
            Operator::Exp => "exp",
            Operator::Log => "log",
            Operator::Sqrt => "sqrt",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.token() == token)
    }

    /// Parses a comma separated operator list such as `inv,add,sub,mul`.
    /// The `const` token is accepted and ignored.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, ExprError> {
        list.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty() && *t != "const")
            .map(|t| Self::from_token(t).ok_or_else(|| ExprError::UnknownToken(t.to_string())))
            .collect()
    }

    #[inline]
    pub fn apply_unary<T: Scalar>(self, a: T) -> T {
        match self {
            Operator::Inv => a.recip(),
            Operator::Sin => a.sin(),
            Operator::Cos => a.cos(),
            Operator::Exp => a.exp(),
            Operator::Log => a.ln(),
            Operator::Sqrt => a.sqrt(),
            _ => unreachable!("{} is binary", self.token()),
        }
    }

    #[inline]
    pub fn apply_binary<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            Operator::Add => a + b,
            Operator::Sub => a - b,
            Operator::Mul => a * b,
            Operator::Div => a / b,
            _ => unreachable!("{} is unary", self.token()),
        }
    }

    pub fn symbol(self) -> Option<&'static str> {
        match self {
            Operator::Add => Some("+"),
            Operator::Sub => Some("-"),
            Operator::Mul => Some("*"),
            Operator::Div => Some("/"),
            _ => None,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Role of a constant slot with respect to control-variable experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstClass {
    /// Not yet classified; refit by the optimizer.
    #[default]
    Open,
    /// Stable across trials: a genuine constant of the target. Frozen.
    StandAlone,
    /// Varies across trials: stands in for a sub-expression of controlled
    /// variables. Refit by the optimizer and expanded by later rounds.
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Constant<T> {
    pub value: Option<T>,
    pub class: ConstClass,
}

impl<T: Scalar> Constant<T> {
    pub fn open() -> Self {
        Constant {
            value: None,
            class: ConstClass::Open,
        }
    }

    pub fn with_value(v: T) -> Self {
        Constant {
            value: Some(v),
            class: ConstClass::Open,
        }
    }

    /// Whether the optimizer may change this slot.
    pub fn is_fittable(&self) -> bool {
        self.class != ConstClass::StandAlone
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind<T> {
    Op(Operator),
    /// 0-based variable index; rendered as `x{index+1}`.
    Var(usize),
    Const(Constant<T>),
}

impl<T> NodeKind<T> {
    pub fn arity(&self) -> usize {
        match self {
            NodeKind::Op(op) => op.arity(),
            _ => 0,
        }
    }

    pub fn token_kind(&self) -> TokenKind {
        match self {
            NodeKind::Op(op) if op.arity() == 2 => TokenKind::Binary,
            NodeKind::Op(_) => TokenKind::Unary,
            NodeKind::Var(_) => TokenKind::Var,
            NodeKind::Const(_) => TokenKind::Const,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node<T> {
    pub kind: NodeKind<T>,
    pub editable: bool,
}

impl<T> Node<T> {
    pub fn new(kind: NodeKind<T>) -> Self {
        Node {
            kind,
            editable: true,
        }
    }
}

/// An expression tree in flat preorder.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    /// Builds a tree from preorder nodes, checking that the arities consume
    /// the sequence exactly.
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self, ExprError> {
        check_arity(nodes.iter().map(|n| n.kind.arity()))?;
        Ok(Tree { nodes })
    }

    pub fn var(index: usize) -> Self {
        Tree {
            nodes: vec![Node::new(NodeKind::Var(index))],
        }
    }

    pub fn constant(value: T) -> Self {
        Tree {
            nodes: vec![Node::new(NodeKind::Const(Constant::with_value(value)))],
        }
    }

    /// A literal that the optimizer never changes.
    pub fn fixed_constant(value: T) -> Self {
        Tree {
            nodes: vec![Node::new(NodeKind::Const(Constant {
                value: Some(value),
                class: ConstClass::StandAlone,
            }))],
        }
    }

    /// A constant slot without a value, to be filled by fitting.
    pub fn open_constant() -> Self {
        Tree {
            nodes: vec![Node::new(NodeKind::Const(Constant::open()))],
        }
    }

    pub fn unary(op: Operator, child: Tree<T>) -> Self {
        assert_eq!(op.arity(), 1, "{op} is not unary");
        let mut nodes = Vec::with_capacity(child.len() + 1);
        nodes.push(Node::new(NodeKind::Op(op)));
        nodes.extend(child.nodes);
        Tree { nodes }
    }

    pub fn binary(op: Operator, left: Tree<T>, right: Tree<T>) -> Self {
        assert_eq!(op.arity(), 2, "{op} is not binary");
        let mut nodes = Vec::with_capacity(left.len() + right.len() + 1);
        nodes.push(Node::new(NodeKind::Op(op)));
        nodes.extend(left.nodes);
        nodes.extend(right.nodes);
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &Node<T> {
        &self.nodes[i]
    }

    /// One past the last node of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        let mut need = 1usize;
        let mut i = start;
        while need > 0 {
            need = need - 1 + self.nodes[i].kind.arity();
            i += 1;
        }
        i
    }

    /// Indices of the direct children of node `i`.
    pub fn children(&self, i: usize) -> Vec<usize> {
        let arity = self.nodes[i].kind.arity();
        let mut out = Vec::with_capacity(arity);
        let mut c = i + 1;
        for _ in 0..arity {
            out.push(c);
            c = self.subtree_end(c);
        }
        out
    }

    pub fn subtree(&self, start: usize) -> Tree<T> {
        Tree {
            nodes: self.nodes[start..self.subtree_end(start)].to_vec(),
        }
    }

    /// Replaces the subtree rooted at `start` with `replacement`.
    pub fn replace_subtree(&mut self, start: usize, replacement: Tree<T>) {
        let end = self.subtree_end(start);
        self.nodes.splice(start..end, replacement.nodes);
    }

    /// Overwrites the kind of one node with a kind of the same arity.
    pub fn set_kind(&mut self, i: usize, kind: NodeKind<T>) {
        assert_eq!(
            self.nodes[i].kind.arity(),
            kind.arity(),
            "in-place node change must keep arity"
        );
        self.nodes[i].kind = kind;
    }

    pub fn set_editable(&mut self, i: usize, editable: bool) {
        self.nodes[i].editable = editable;
    }

    pub fn set_all_editable(&mut self, editable: bool) {
        for n in &mut self.nodes {
            n.editable = editable;
        }
    }

    pub fn depth(&self) -> usize {
        let mut stack: Vec<usize> = Vec::new();
        for node in self.nodes.iter().rev() {
            let a = node.kind.arity();
            let d = 1 + (0..a).map(|_| stack.pop().unwrap_or(0)).max().unwrap_or(0);
            stack.push(d);
        }
        stack.pop().unwrap_or(0)
    }

    /// Preorder indices of all constant slots; this order defines the
    /// columns of a constants matrix.
    pub fn constant_slots(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Const(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Constant slots the optimizer may change (everything but stand-alone).
    pub fn open_constant_slots(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Const(c) if c.is_fittable()))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_open_constants(&self) -> usize {
        self.open_constant_slots().len()
    }

    pub fn const_at(&self, i: usize) -> Option<&Constant<T>> {
        match &self.nodes[i].kind {
            NodeKind::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn const_at_mut(&mut self, i: usize) -> Option<&mut Constant<T>> {
        match &mut self.nodes[i].kind {
            NodeKind::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Current values of the open slots, `None` where unfitted.
    pub fn open_constant_values(&self) -> Vec<Option<T>> {
        self.open_constant_slots()
            .into_iter()
            .map(|i| self.const_at(i).and_then(|c| c.value))
            .collect()
    }

    /// Writes `values` into the open slots in preorder.
    pub fn set_open_constants(&mut self, values: &[T]) {
        let slots = self.open_constant_slots();
        assert_eq!(slots.len(), values.len(), "constant count mismatch");
        for (slot, &v) in slots.into_iter().zip(values) {
            if let Some(c) = self.const_at_mut(slot) {
                c.value = Some(v);
            }
        }
    }

    /// Sorted, deduplicated 0-based variable indices used by the tree.
    pub fn variables(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Var(i) => Some(i),
                _ => None,
            })
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    pub fn editable_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].editable)
            .collect()
    }

    /// Roots of subtrees that consist only of editable nodes.
    pub fn editable_subtree_roots(&self) -> Vec<usize> {
        let mut all_editable = vec![false; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            all_editable[i] =
                self.nodes[i].editable && self.children(i).iter().all(|&c| all_editable[c]);
        }
        (0..self.nodes.len()).filter(|&i| all_editable[i]).collect()
    }

    /// Structural equality ignoring editability and constant classes.
    pub fn same_structure(&self, other: &Tree<T>) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| match (&a.kind, &b.kind) {
                    (NodeKind::Const(x), NodeKind::Const(y)) => x.value == y.value,
                    (x, y) => x == y,
                })
    }

    /// Converts the constants to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tree<U> {
        Tree {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    editable: n.editable,
                    kind: match n.kind {
                        NodeKind::Op(op) => NodeKind::Op(op),
                        NodeKind::Var(i) => NodeKind::Var(i),
                        NodeKind::Const(c) => NodeKind::Const(Constant {
                            value: c.value.map(|v| U::of(v.as_f64())),
                            class: c.class,
                        }),
                    },
                })
                .collect(),
        }
    }
}

pub(crate) fn check_arity(arities: impl Iterator<Item = usize>) -> Result<(), ExprError> {
    let mut need = 1usize;
    let mut count = 0usize;
    for a in arities {
        if need == 0 {
            return Err(ExprError::Malformed(format!(
                "leftover tokens after position {count}"
            )));
        }
        need = need - 1 + a;
        count += 1;
    }
    if count == 0 {
        return Err(ExprError::Malformed("empty expression".into()));
    }
    if need != 0 {
        return Err(ExprError::Malformed(format!(
            "missing {need} operand(s) after {count} tokens"
        )));
    }
    Ok(())
}

impl<T: Scalar> fmt::Display for Tree<T> {
    /// Fully parenthesized infix; parses back with [`parse_infix`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go<T: Scalar>(t: &Tree<T>, i: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match &t.nodes[i].kind {
                NodeKind::Var(v) => write!(f, "x{}", v + 1),
                NodeKind::Const(c) => match c.value {
                    Some(v) if v < T::zero() => write!(f, "({v})"),
                    Some(v) => write!(f, "{v}"),
                    None => f.write_str("C"),
                },
                NodeKind::Op(op) => {
                    let ch = t.children(i);
                    match op.symbol() {
                        Some(sym) => {
                            f.write_str("(")?;
                            go(t, ch[0], f)?;
                            write!(f, " {sym} ")?;
                            go(t, ch[1], f)?;
                            f.write_str(")")
                        }
                        None => {
                            write!(f, "{}(", op.token())?;
                            go(t, ch[0], f)?;
                            f.write_str(")")
                        }
                    }
                }
            }
        }
        go(self, 0, f)
    }
}
