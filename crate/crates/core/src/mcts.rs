//! Monte Carlo tree search over a context-free expression grammar.
//!
//! The grammar has one nonterminal `A`. A sentential form is a preorder
//! sequence of terminals and `A` placeholders; rules always rewrite the
//! leftmost `A`. Classic search starts from the bare form `A` with a rule for
//! every variable; the control-variable variant starts from the previous
//! round's expression with its editable parts replaced by `A` and only the
//! newly freed variable available.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Constant, Node, NodeKind, Operator, Tree};
use crate::metrics::population_variance;
use crate::optimize::{fit_constants, FitOptions};
use crate::oracle::{ControlSpec, Oracle, OracleError};
use crate::primitives::PrimitiveSet;
use crate::rng::{seeded, SearchRng};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MctsError {
    #[error("form has no nonterminal to expand")]
    Terminal,
    #[error("empty grammar")]
    EmptyGrammar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Op(Operator),
    Var(usize),
    Const,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Op(op) if op.arity() == 2 => write!(f, "A -> A {} A", op.symbol().unwrap_or(op.token())),
            Rule::Op(op) => write!(f, "A -> {}(A)", op.token()),
            Rule::Var(i) => write!(f, "A -> x{}", i + 1),
            Rule::Const => write!(f, "A -> const"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub rules: Vec<Rule>,
}

/// One rule per operator, one per permitted variable, and `A -> const`.
pub fn build_grammar(prims: &PrimitiveSet) -> Grammar {
    let mut rules: Vec<Rule> = prims.ops.iter().map(|&op| Rule::Op(op)).collect();
    rules.extend(prims.vars.iter().map(|&v| Rule::Var(v)));
    rules.push(Rule::Const);
    Grammar { rules }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol<T> {
    NonTerminal,
    Terminal { kind: NodeKind<T>, frozen: bool },
}

impl<T> Symbol<T> {
    fn arity(&self) -> usize {
        match self {
            Symbol::NonTerminal => 0,
            Symbol::Terminal { kind, .. } => kind.arity(),
        }
    }
}

/// A sentential form in preorder.
#[derive(Debug, Clone, PartialEq)]
pub struct Form<T>(pub Vec<Symbol<T>>);

impl<T: Scalar> Form<T> {
    pub fn start() -> Self {
        Form(vec![Symbol::NonTerminal])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first_nonterminal(&self) -> Option<usize> {
        self.0.iter().position(|s| matches!(s, Symbol::NonTerminal))
    }

    pub fn is_terminal(&self) -> bool {
        self.first_nonterminal().is_none()
    }

    /// Rewrites the leftmost nonterminal with `rule`.
    pub fn apply(&self, rule: Rule) -> Result<Self, MctsError> {
        let at = self.first_nonterminal().ok_or(MctsError::Terminal)?;
        let fresh = |kind| Symbol::Terminal { kind, frozen: false };
        let replacement: Vec<Symbol<T>> = match rule {
            Rule::Op(op) => {
                let mut v = vec![fresh(NodeKind::Op(op))];
                v.extend(std::iter::repeat_n(Symbol::NonTerminal, op.arity()));
                v
            }
            Rule::Var(i) => vec![fresh(NodeKind::Var(i))],
            Rule::Const => vec![fresh(NodeKind::Const(Constant::open()))],
        };
        let mut out = self.0.clone();
        out.splice(at..at + 1, replacement);
        Ok(Form(out))
    }

    /// The completed expression; frozen terminals become non-editable
    /// nodes. `None` while nonterminals remain.
    pub fn to_tree(&self) -> Option<Tree<T>> {
        let nodes = self
            .0
            .iter()
            .map(|s| match s {
                Symbol::NonTerminal => None,
                Symbol::Terminal { kind, frozen } => Some(Node {
                    kind: *kind,
                    editable: !frozen,
                }),
            })
            .collect::<Option<Vec<_>>>()?;
        Tree::from_nodes(nodes).ok()
    }
}

impl<T: Scalar> fmt::Display for Form<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go<T: Scalar>(
            s: &[Symbol<T>],
            i: usize,
            f: &mut fmt::Formatter<'_>,
        ) -> Result<usize, fmt::Error> {
            match &s[i] {
                Symbol::NonTerminal => {
                    write!(f, "A")?;
                    Ok(i + 1)
                }
                Symbol::Terminal { kind, .. } => match kind {
                    NodeKind::Op(op) if op.arity() == 2 => {
                        write!(f, "(")?;
                        let next = go(s, i + 1, f)?;
                        write!(f, " {} ", op.symbol().unwrap_or(op.token()))?;
                        let next = go(s, next, f)?;
                        write!(f, ")")?;
                        Ok(next)
                    }
                    NodeKind::Op(op) => {
                        write!(f, "{}(", op.token())?;
                        let next = go(s, i + 1, f)?;
                        write!(f, ")")?;
                        Ok(next)
                    }
                    NodeKind::Var(v) => {
                        write!(f, "x{}", v + 1)?;
                        Ok(i + 1)
                    }
                    NodeKind::Const(c) => {
                        match c.value {
                            Some(v) if v < T::zero() => write!(f, "({v})")?,
                            Some(v) => write!(f, "{v}")?,
                            None => write!(f, "C")?,
                        }
                        Ok(i + 1)
                    }
                },
            }
        }
        if self.0.is_empty() {
            return Ok(());
        }
        go(&self.0, 0, f).map(|_| ())
    }
}

/// Root form for a search seeded with `prev`: every maximal wholly editable
/// subtree (for a frozen expression, its summary constants) becomes `A`;
/// all other nodes are copied as frozen terminals. With no previous
/// expression the root is the start symbol.
pub fn seed_root<T: Scalar>(prev: Option<&Tree<T>>) -> Form<T> {
    let Some(tree) = prev else {
        return Form::start();
    };
    let mut wholly = vec![false; tree.len()];
    for r in tree.editable_subtree_roots() {
        wholly[r] = true;
    }
    let mut out = Vec::with_capacity(tree.len());
    let mut i = 0;
    while i < tree.len() {
        if wholly[i] {
            out.push(Symbol::NonTerminal);
            i = tree.subtree_end(i);
        } else {
            let n = tree.node(i);
            out.push(Symbol::Terminal {
                kind: n.kind,
                frozen: !n.editable,
            });
            i += 1;
        }
    }
    debug_assert!(crate::expr::check_arity(out.iter().map(|s| s.arity())).is_ok());
    Form(out)
}

#[derive(Debug, Clone)]
pub struct SearchNode<T> {
    pub form: Form<T>,
    pub parent: Option<usize>,
    /// Rule that produced this node from its parent.
    pub rule: Option<Rule>,
    pub children: Vec<usize>,
    pub visits: u64,
    pub reward_sum: f64,
}

impl<T> SearchNode<T> {
    pub fn mean_reward(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.reward_sum / self.visits as f64
        }
    }
}

/// Arena of search nodes; index 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree<T> {
    pub nodes: Vec<SearchNode<T>>,
    pub exploration: f64,
}

impl<T: Scalar> SearchTree<T> {
    pub fn new(root: Form<T>, exploration: f64) -> Self {
        SearchTree {
            nodes: vec![SearchNode {
                form: root,
                parent: None,
                rule: None,
                children: Vec::new(),
                visits: 0,
                reward_sum: 0.0,
            }],
            exploration,
        }
    }

    /// `Reward(s, a) + c sqrt(ln N(s) / N(s, a))`; `+inf` for unvisited
    /// children.
    pub fn ucb(&self, child: usize) -> f64 {
        let node = &self.nodes[child];
        if node.visits == 0 {
            return f64::INFINITY;
        }
        let parent_visits = node
            .parent
            .map(|p| self.nodes[p].visits)
            .unwrap_or(node.visits) as f64;
        node.mean_reward() + self.exploration * (parent_visits.ln().max(0.0) / node.visits as f64).sqrt()
    }

    /// Follows the best UCB child from the root until a node without
    /// children. Ties go to the earliest child.
    pub fn select_best_leaf(&self) -> usize {
        let mut cur = 0;
        while !self.nodes[cur].children.is_empty() {
            let mut best = self.nodes[cur].children[0];
            let mut best_score = self.ucb(best);
            for &c in &self.nodes[cur].children[1..] {
                let s = self.ucb(c);
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            cur = best;
        }
        cur
    }

    /// Adds one child per rule, each rewriting the leftmost nonterminal.
    pub fn expand(&mut self, node: usize, grammar: &Grammar) -> Result<Vec<usize>, MctsError> {
        if grammar.rules.is_empty() {
            return Err(MctsError::EmptyGrammar);
        }
        let forms = grammar
            .rules
            .iter()
            .map(|&r| self.nodes[node].form.apply(r).map(|f| (r, f)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ids = Vec::with_capacity(forms.len());
        for (rule, form) in forms {
            self.nodes.push(SearchNode {
                form,
                parent: Some(node),
                rule: Some(rule),
                children: Vec::new(),
                visits: 0,
                reward_sum: 0.0,
            });
            ids.push(self.nodes.len() - 1);
        }
        self.nodes[node].children = ids.clone();
        Ok(ids)
    }

    /// Adds `count` reward signals totalling `sum` to `node` and every
    /// ancestor.
    pub fn backpropagate(&mut self, node: usize, count: u64, sum: f64) {
        let mut cur = Some(node);
        while let Some(i) = cur {
            self.nodes[i].visits += count;
            self.nodes[i].reward_sum += sum;
            cur = self.nodes[i].parent;
        }
    }
}

/// Completes `form` with random rules `n_sim` times. Each step picks a
/// terminal rule with probability `leaf_prob` (an operator otherwise), then a
/// rule uniformly within that group. A completion longer than `max_len`
/// symbols is discarded and retried up to `retries` times, then skipped.
#[allow(clippy::too_many_arguments)]
pub fn rollout<T: Scalar>(
    form: &Form<T>,
    grammar: &Grammar,
    n_sim: usize,
    leaf_prob: f64,
    max_len: usize,
    retries: usize,
    rng: &mut SearchRng,
) -> Vec<Tree<T>> {
    let mut out = Vec::with_capacity(n_sim);
    if form.is_terminal() {
        if let Some(t) = form.to_tree() {
            out.extend(std::iter::repeat_n(t, n_sim));
        }
        return out;
    }
    if grammar.rules.is_empty() {
        return out;
    }
    let (ops, leaves): (Vec<Rule>, Vec<Rule>) =
        grammar.rules.iter().partition(|r| matches!(r, Rule::Op(_)));
    for _ in 0..n_sim {
        'attempt: for _ in 0..=retries {
            let mut f = form.clone();
            while !f.is_terminal() {
                let group = if ops.is_empty() || (!leaves.is_empty() && rng.random::<f64>() < leaf_prob) {
                    &leaves
                } else {
                    &ops
                };
                let rule = group[rng.random_range(0..group.len())];
                f = f.apply(rule).expect("form has a nonterminal");
                if f.len() > max_len {
                    continue 'attempt;
                }
            }
            if let Some(t) = f.to_tree() {
                out.push(t);
            }
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub episodes: usize,
    pub n_sim: usize,
    /// Chance that a rollout step emits a terminal.
    pub leaf_prob: f64,
    pub max_len: usize,
    pub retries: usize,
    pub exploration: f64,
    pub batch_size: usize,
    pub fit: FitOptions,
    pub stop_below: Option<f64>,
    /// Episodes still run after the first fit at the stop level, giving
    /// shorter exact fits a chance to replace it.
    pub patience: usize,
    /// Distinct best expressions reported back.
    pub keep: usize,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            episodes: 200,
            n_sim: 10,
            leaf_prob: 0.6,
            max_len: 32,
            retries: 5,
            exploration: 1.4,
            batch_size: 256,
            fit: FitOptions {
                restarts: 1,
                good_enough: 1e-10,
                ..FitOptions::default()
            },
            stop_below: Some(1e-10),
            patience: 5,
            keep: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MctsOutcome<T> {
    /// Best fitted expression over every rollout.
    pub best: Tree<T>,
    /// Batch MSE of `best` on the batch it was fitted to.
    pub best_fitness: T,
    /// Up to `keep` distinct expressions, best first, `best` among them.
    pub candidates: Vec<(Tree<T>, T)>,
    pub episodes_run: usize,
    /// Number of constant fits performed.
    pub evaluations: u64,
    pub search_tree_size: usize,
}

/// Bounded reward `1 / (1 + NMSE)`; falls back to `1 / (1 + MSE)` when the
/// batch targets have zero variance.
pub fn reward<T: Scalar>(mse: T, target_variance: T) -> f64 {
    let mse = mse.as_f64();
    if !mse.is_finite() {
        return 0.0;
    }
    let var = target_variance.as_f64();
    let err = if var > 0.0 { mse / var } else { mse };
    1.0 / (1.0 + err)
}

/// The best few distinct expressions seen so far. Fits at or below the stop
/// level count as exact, so among them the shortest rank first.
struct Leaderboard<T> {
    entries: Vec<(T, Tree<T>, String)>,
    stop: Option<T>,
    capacity: usize,
}

impl<T: Scalar> Leaderboard<T> {
    fn key(&self, fitness: T, len: usize) -> (T, usize) {
        match self.stop {
            Some(s) if fitness <= s => (T::zero(), len),
            _ if fitness.is_nan() => (T::infinity(), len),
            _ => (fitness, len),
        }
    }

    fn offer(&mut self, fitness: T, tree: &Tree<T>, text: String) {
        if self.entries.iter().any(|e| e.2 == text) {
            return;
        }
        let k = self.key(fitness, tree.len());
        let pos = self
            .entries
            .iter()
            .position(|e| k < self.key(e.0, e.1.len()))
            .unwrap_or(self.entries.len());
        if pos < self.capacity {
            self.entries.insert(pos, (fitness, tree.clone(), text));
            self.entries.truncate(self.capacity);
        }
    }
}

/// Runs `config.episodes` select / expand / simulate / backpropagate
/// episodes. With several `seeds` the root gets one child per seeded form;
/// with none the search starts from the start symbol.
pub fn run_mcts<T: Scalar>(
    seeds: &[Tree<T>],
    oracle: &mut Oracle<T>,
    ctrl: &ControlSpec,
    prims: &PrimitiveSet,
    config: &MctsConfig,
) -> Result<MctsOutcome<T>, OracleError> {
    let mut rng = seeded(config.seed);
    let grammar = build_grammar(prims);
    let mut search = SearchTree::new(seed_root(seeds.first()), config.exploration);
    if seeds.len() > 1 {
        for t in seeds {
            search.nodes.push(SearchNode {
                form: seed_root(Some(t)),
                parent: Some(0),
                rule: None,
                children: Vec::new(),
                visits: 0,
                reward_sum: 0.0,
            });
            let id = search.nodes.len() - 1;
            search.nodes[0].children.push(id);
        }
    }
    let stop = config.stop_below.map(T::of);
    let mut board = Leaderboard {
        entries: Vec::new(),
        stop,
        capacity: config.keep.max(1),
    };
    let mut evaluations = 0u64;
    let mut episodes_run = 0;
    let mut exact_since: Option<usize> = None;

    for _ in 0..config.episodes.max(1) {
        episodes_run += 1;
        let batch = oracle.sample_trial(ctrl, config.batch_size)?;
        let y = batch.y.as_slice().expect("trial targets are contiguous");
        let var = population_variance(y);
        let leaf = search.select_best_leaf();
        let targets = if search.nodes[leaf].form.is_terminal() {
            vec![leaf]
        } else {
            search.expand(leaf, &grammar).expect("form has a nonterminal")
        };
        // identical completions within one episode share a fit
        let mut cache: HashMap<String, f64> = HashMap::new();
        let (mut total, mut total_sum) = (0u64, 0.0);
        for &s in &targets {
            let exprs = rollout(
                &search.nodes[s].form,
                &grammar,
                config.n_sim,
                config.leaf_prob,
                config.max_len,
                config.retries,
                &mut rng,
            );
            let mut sum = 0.0;
            for mut e in exprs.into_iter() {
                let key = e.to_string();
                let r = match cache.get(&key) {
                    Some(&r) => r,
                    None => {
                        let fitness = fit_constants(&mut e, batch.x.view(), y, &config.fit, &mut rng)
                            .map(|r| r.fitness)
                            .unwrap_or(T::infinity());
                        evaluations += 1;
                        let r = reward(fitness, var);
                        cache.insert(key.clone(), r);
                        board.offer(fitness, &e, key);
                        r
                    }
                };
                sum += r;
                if s != leaf {
                    search.nodes[s].visits += 1;
                    search.nodes[s].reward_sum += r;
                }
                total += 1;
            }
            total_sum += sum;
        }
        search.backpropagate(leaf, total, total_sum);
        if let (Some(s), Some((bf, _, _))) = (stop, board.entries.first()) {
            if *bf <= s {
                let since = *exact_since.get_or_insert(episodes_run);
                if episodes_run - since >= config.patience {
                    break;
                }
            }
        }
    }
    let mut candidates: Vec<(Tree<T>, T)> = board.entries.into_iter().map(|(f, t, _)| (t, f)).collect();
    if candidates.is_empty() {
        let fallback = seed_root(seeds.first()).to_tree().unwrap_or_else(Tree::open_constant);
        candidates.push((fallback, T::infinity()));
    }
    let (best, best_fitness) = candidates[0].clone();
    Ok(MctsOutcome {
        best,
        best_fitness,
        candidates,
        episodes_run,
        evaluations,
        search_tree_size: search.nodes.len(),
    })
}
