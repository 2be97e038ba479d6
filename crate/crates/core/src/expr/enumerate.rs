//! Brute-force enumeration of binary expression trees and the closed-form
//! count it is checked against.
//!
//! Trees with exactly `l` nodes are built from `o` binary operators and
//! `m + 1` leaf symbols (`m` variables plus one constant symbol). Preorder
//! sequences and trees are in bijection, so enumerating every valid preorder
//! sequence enumerates every distinct tree exactly once.

use super::ExprError;

/// Largest tree size the enumerator will walk.
pub const MAX_ENUM_NODES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnumToken {
    Op(u8),
    Var(u8),
    Const,
}

fn guard(l: usize, m: usize, o: usize) -> Result<(), ExprError> {
    if l % 2 == 0 {
        return Err(ExprError::Guard(format!("node count {l} must be odd")));
    }
    if l > MAX_ENUM_NODES {
        return Err(ExprError::Guard(format!(
            "node count {l} exceeds enumeration limit {MAX_ENUM_NODES}"
        )));
    }
    if m > u8::MAX as usize || o > u8::MAX as usize {
        return Err(ExprError::Guard("symbol alphabet too large".into()));
    }
    Ok(())
}

/// Calls `visit` with the preorder sequence of every tree of exactly `l`
/// nodes. Returns the number of trees visited.
pub fn for_each_tree<F: FnMut(&[EnumToken])>(
    l: usize,
    m: usize,
    o: usize,
    mut visit: F,
) -> Result<u128, ExprError> {
    guard(l, m, o)?;
    let mut buf = Vec::with_capacity(l);
    let mut count = 0u128;
    walk(l, m, o, 1, &mut buf, &mut count, &mut visit);
    Ok(count)
}

fn walk<F: FnMut(&[EnumToken])>(
    l: usize,
    m: usize,
    o: usize,
    open: usize,
    buf: &mut Vec<EnumToken>,
    count: &mut u128,
    visit: &mut F,
) {
    let remaining = l - buf.len();
    if open == 0 {
        if remaining == 0 {
            *count += 1;
            visit(buf);
        }
        return;
    }
    if remaining == 0 {
        return;
    }
    // a leaf closes one slot; an operator opens one more
    if open - 1 <= remaining - 1 && (open > 1 || remaining == 1) {
        for v in 0..m {
            buf.push(EnumToken::Var(v as u8));
            walk(l, m, o, open - 1, buf, count, visit);
            buf.pop();
        }
        buf.push(EnumToken::Const);
        walk(l, m, o, open - 1, buf, count, visit);
        buf.pop();
    }
    if open + 1 <= remaining - 1 {
        for op in 0..o {
            buf.push(EnumToken::Op(op as u8));
            walk(l, m, o, open + 1, buf, count, visit);
            buf.pop();
        }
    }
}

/// Number of distinct trees with exactly `l` nodes, by exhaustive walk.
pub fn enumerate_trees(l: usize, m: usize, o: usize) -> Result<u128, ExprError> {
    for_each_tree(l, m, o, |_| {})
}

pub fn catalan(k: u32) -> u128 {
    // C_k = binom(2k, k) / (k + 1), built incrementally to stay exact
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}

/// Closed form `C_{(l-1)/2} (m+1)^{(l+1)/2} o^{(l-1)/2}`. `None` on overflow
/// or even `l`.
pub fn lemma_count(l: usize, m: usize, o: usize) -> Option<u128> {
    if l % 2 == 0 {
        return None;
    }
    let k = ((l - 1) / 2) as u32;
    catalan(k)
        .checked_mul((m as u128 + 1).checked_pow(k + 1)?)?
        .checked_mul((o as u128).checked_pow(k)?)
}
