//! Benchmark equations: the random trigonometric family, bundled sample
//! equations, and equation files on disk laid out as `<root>/<group>/<id>.json`.

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use thiserror::Error;

use crate::expr::{parse_infix, NodeKind, Operator, Tree};
use crate::oracle::{EquationSpec, OracleError};
use crate::rng::seeded;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("infeasible generator config: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shape of a random trigonometric benchmark expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrigConfig {
    /// Number of input variables.
    pub l1: usize,
    /// Terms of the form `c * f(x_i)`.
    pub l2: usize,
    /// Terms of the form `c * f(x_i) * g(x_j)` with `i != j`.
    pub l3: usize,
    pub ops: Vec<Operator>,
    pub seed: u64,
}

impl TrigConfig {
    /// Compact label such as `2-1-1`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.l1, self.l2, self.l3)
    }
}

/// A variable, optionally wrapped in one unary operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Factor {
    var: usize,
    wrap: Option<Operator>,
}

impl Factor {
    fn tree<T: Scalar>(self) -> Tree<T> {
        match self.wrap {
            Some(op) => Tree::unary(op, Tree::var(self.var)),
            None => Tree::var(self.var),
        }
    }
}

fn coefficient(rng: &mut impl Rng) -> f64 {
    loop {
        let c = (rng.random_range(-1.0..=1.0f64) * 1000.0).round() / 1000.0;
        if c != 0.0 {
            return c;
        }
    }
}

/// Default sampling domain: `(0.1, 5)` when an operator has a pole or a
/// restricted domain near zero, else `(-5, 5)`.
pub fn default_domain(ops: &[Operator]) -> (f64, f64) {
    if ops
        .iter()
        .any(|op| matches!(op, Operator::Inv | Operator::Div | Operator::Log | Operator::Sqrt))
    {
        (0.1, 5.0)
    } else {
        (-5.0, 5.0)
    }
}

/// Draws `offset + sum of l2 singular terms + sum of l3 pairwise terms`.
/// Coefficients are uniform on [-1, 1], rounded to three decimals and never
/// zero. Terms are pairwise distinct. The result depends only on `config`.
pub fn gen_trig_expression<T: Scalar>(config: &TrigConfig) -> Result<EquationSpec<T>, DatasetError> {
    let infeasible = |msg: String| Err(DatasetError::Infeasible(msg));
    if config.l1 == 0 {
        return infeasible("need at least one variable".into());
    }
    let has = |op| config.ops.contains(&op);
    let joiner = if has(Operator::Add) {
        Operator::Add
    } else {
        Operator::Sub
    };
    if config.l2 + config.l3 > 0 && !(has(Operator::Mul) && (has(Operator::Add) || has(Operator::Sub))) {
        return infeasible("terms need mul and one of add or sub".into());
    }
    if config.l3 > 0 && config.l1 < 2 {
        return infeasible("pairwise terms need two distinct variables".into());
    }

    let wraps: Vec<Option<Operator>> = std::iter::once(None)
        .chain(config.ops.iter().filter(|op| op.arity() == 1).map(|&op| Some(op)))
        .collect();
    let factors: Vec<Factor> = (0..config.l1)
        .flat_map(|var| wraps.iter().map(move |&wrap| Factor { var, wrap }))
        .collect();
    let pairs: Vec<(Factor, Factor)> = factors
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| factors[i + 1..].iter().filter(move |b| b.var != a.var).map(move |&b| (a, b)))
        .collect();
    if config.l2 > factors.len() {
        return infeasible(format!("{} singular terms but only {} distinct factors", config.l2, factors.len()));
    }
    if config.l3 > pairs.len() {
        return infeasible(format!("{} pairwise terms but only {} distinct pairs", config.l3, pairs.len()));
    }

    let mut rng = seeded(config.seed);
    let mut tree = Tree::fixed_constant(T::of(coefficient(&mut rng)));
    let push = |tree: Tree<T>, body: Tree<T>, rng: &mut crate::rng::SearchRng| {
        let c = coefficient(rng);
        let c = if joiner == Operator::Sub { -c } else { c };
        let term = Tree::binary(Operator::Mul, Tree::fixed_constant(T::of(c)), body);
        Tree::binary(joiner, tree, term)
    };
    for f in factors.choose_multiple(&mut rng, config.l2).copied().collect::<Vec<_>>() {
        tree = push(tree, f.tree(), &mut rng);
    }
    for (a, b) in pairs.choose_multiple(&mut rng, config.l3).copied().collect::<Vec<_>>() {
        let (a, b) = if rng.random::<bool>() { (a, b) } else { (b, a) };
        tree = push(tree, Tree::binary(Operator::Mul, a.tree(), b.tree()), &mut rng);
    }

    let (lo, hi) = default_domain(&config.ops);
    let mut function_set: Vec<String> = Operator::ALL
        .iter()
        .filter(|op| config.ops.contains(op))
        .map(|op| op.token().to_string())
        .collect();
    function_set.push("const".into());
    Ok(EquationSpec::new(
        vec![(T::of(lo), T::of(hi)); config.l1],
        function_set,
        &tree,
    )?)
}

/// Terms found along the top-level `add`/`sub` chain of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TermCounts {
    pub constants: usize,
    pub singular: usize,
    pub pairwise: usize,
    pub other: usize,
}

/// Classifies the summands of `tree`: bare constants, `c * f(x)`, and
/// `c * f(x) * g(y)` over two different variables, where `f` and `g` are a
/// variable or one unary operator on it.
pub fn term_counts<T: Scalar>(tree: &Tree<T>) -> TermCounts {
    fn factor_var<T: Scalar>(t: &Tree<T>, i: usize) -> Option<usize> {
        match t.node(i).kind {
            NodeKind::Var(v) => Some(v),
            NodeKind::Op(op) if op.arity() == 1 => match t.node(i + 1).kind {
                NodeKind::Var(v) => Some(v),
                _ => None,
            },
            _ => None,
        }
    }
    fn visit<T: Scalar>(t: &Tree<T>, i: usize, out: &mut TermCounts) {
        match t.node(i).kind {
            NodeKind::Op(Operator::Add | Operator::Sub) => {
                for c in t.children(i) {
                    visit(t, c, out);
                }
            }
            NodeKind::Const(_) => out.constants += 1,
            NodeKind::Op(Operator::Mul) => {
                let ch = t.children(i);
                if !matches!(t.node(ch[0]).kind, NodeKind::Const(_)) {
                    out.other += 1;
                } else if factor_var(t, ch[1]).is_some() {
                    out.singular += 1;
                } else if matches!(t.node(ch[1]).kind, NodeKind::Op(Operator::Mul)) {
                    let inner = t.children(ch[1]);
                    match (factor_var(t, inner[0]), factor_var(t, inner[1])) {
                        (Some(a), Some(b)) if a != b => out.pairwise += 1,
                        _ => out.other += 1,
                    }
                } else {
                    out.other += 1;
                }
            }
            _ => out.other += 1,
        }
    }
    let mut out = TermCounts::default();
    visit(tree, 0, &mut out);
    out
}

pub fn load_equation<T: Scalar>(path: impl AsRef<Path>) -> Result<EquationSpec<T>, OracleError> {
    EquationSpec::load(path)
}

/// An equation shipped with the crate.
#[derive(Debug, Clone, Copy)]
pub struct BundledEquation {
    pub group: &'static str,
    pub id: &'static str,
    pub infix: &'static str,
    pub domains: &'static [(f64, f64)],
}

impl BundledEquation {
    pub fn spec<T: Scalar>(&self) -> Result<EquationSpec<T>, OracleError> {
        let tree: Tree<T> = parse_infix(self.infix)?;
        let mut ops: Vec<Operator> = vec![Operator::Add, Operator::Sub, Operator::Mul, Operator::Div];
        for node in tree.nodes() {
            if let NodeKind::Op(op) = node.kind {
                if !ops.contains(&op) {
                    ops.push(op);
                }
            }
        }
        let mut function_set: Vec<String> = Operator::ALL
            .iter()
            .filter(|op| ops.contains(op))
            .map(|op| op.token().to_string())
            .collect();
        function_set.push("const".into());
        let domains = self.domains.iter().map(|&(lo, hi)| (T::of(lo), T::of(hi))).collect();
        EquationSpec::new(domains, function_set, &tree)
    }
}

const LIVERMORE_DOMAIN: &[(f64, f64)] = &[(0.1, 5.0); 4];

macro_rules! livermore {
    ($($id:literal => $src:literal,)*) => {
        &[$(BundledEquation { group: "livermore2", id: $id, infix: $src, domains: LIVERMORE_DOMAIN },)*]
    };
}

const LIVERMORE2_VARS4: &[BundledEquation] = livermore! {
    "Vars4-1" => "x1 - x2*x3 - x2 - x4",
    "Vars4-2" => "x1*sqrt(x2)*x4/x3",
    "Vars4-3" => "2*x1 + x4 - 0.01 + x3/x2",
    "Vars4-4" => "x1 - x4 - (-x1 + sin(x1))^4/(x1^8*x2^2*x3^2)",
    "Vars4-5" => "x1 + sin(x2/(x1*x2^2*x4^2*(-3.22*x2*x4^2 + 13.91*x2*x4 + x3)/2 + x2))^2",
    "Vars4-6" => "(-x1 - 0.54*exp(x1*sqrt(x4 + cos(x2))*exp(-2*x1)))/x3",
    "Vars4-7" => "x1 + cos(x2/log(x2^2*x3 + x4))",
    "Vars4-8" => "x1*(x1 + x4 + sin((-x1*exp(exp(x3)) + x2)/(-4.47*x1^2*x3 + 8.31*x3^3 + 5.27*x3^2))) - x1",
    "Vars4-9" => "x1 - x4 + cos(x1*(x1 + x2)*(x1^2*x2 + x3) + x3)",
    "Vars4-10" => "x1 + (x1*(x4 + (sqrt(x2) - sin(x3))/x3))^0.25",
    "Vars4-11" => "2*x1 + x2*(x1 + sin(x2*x3)) + sin(2/x4)",
    "Vars4-12" => "x1*x2 + 16.97*x3 - x4",
    "Vars4-13" => "x4*(-x3 - sin(x1^2 - x1 + x2))",
    "Vars4-14" => "x1 + cos(x2^2*(-x2 + x3 + 3.23) + x4)",
    "Vars4-15" => "x1*(x2 + log(x3 + x4 + exp(x2^2) - 0.28/x1)) - x3 - x4/(2*x1*x3)",
    "Vars4-16" => "x3*(-x4 + 1.81/x3) + sqrt(x2*(-x1^2*exp(x2) - x2)) - 2.34*x4/x1",
    "Vars4-17" => "x1^2 - x2 - x3^2 - x4",
    "Vars4-18" => "x1 + sin(2*x2 + x3 - x4*exp(x1) + 2.96*sqrt(-0.36*x2^3 + x2*x3^2 + 0.94) + log((-x1 + x2)*log(x2)))",
    "Vars4-19" => "(x1^3*x2 - 2.86*x1 + x4)/x3",
    "Vars4-20" => "x1 + x2 + 6.21 + 1/(x3*x4 + x3 + 2.08)",
    "Vars4-21" => "x1*(x2 - x3 + x4) + x4",
    "Vars4-22" => "x1 - x2*x3 + x2*exp(x1) - x4",
    "Vars4-23" => "-x1/x2 - 2.23*x2*x3 + x2 - 2.23*x3/sqrt(x4) - 2.23*sqrt(x4) + log(x1)",
    "Vars4-24" => "-4.81*log(sqrt(x1*sqrt(log(x1*(x1*x2 + x1 + x4 + log(x3))))))",
    "Vars4-25" => "0.38 + (-x1/x4 + cos(2*x1*x3/(x4*(x1 + x2*x3)))/x4)/x2",
};

/// The ideal gas law `P = R n T / V`.
pub const IDEAL_GAS: BundledEquation = BundledEquation {
    group: "feynman",
    id: "I.39.22",
    infix: "8.31*x1*(x2/x3)",
    domains: &[(0.01, 1e4), (10.0, 1e3), (1e-3, 1e4)],
};

/// Every bundled equation: the ideal gas law and the 25 four-variable
/// Livermore2 equations.
pub fn bundled() -> Vec<BundledEquation> {
    std::iter::once(IDEAL_GAS).chain(LIVERMORE2_VARS4.iter().copied()).collect()
}

pub fn equation_path(root: &Path, group: &str, id: &str) -> PathBuf {
    root.join(group).join(format!("{id}.json"))
}

/// Saves `spec` to `<root>/<group>/<id>.json`, creating directories.
pub fn write_equation<T: Scalar>(
    root: &Path,
    group: &str,
    id: &str,
    spec: &EquationSpec<T>,
) -> Result<PathBuf, DatasetError> {
    let path = equation_path(root, group, id);
    let dir = path.parent().expect("equation path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    spec.save(&path)?;
    Ok(path)
}

/// Writes every bundled equation under `root`.
pub fn export_bundled(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    bundled()
        .iter()
        .map(|b| write_equation(root, b.group, b.id, &b.spec::<f64>()?))
        .collect()
}

/// Writes `count` trig equations for `config` as `<root>/trig-<label>/<k>.json`.
/// Equation `k` uses the seed derived from `config.seed` and `k`.
pub fn write_trig_suite(root: &Path, config: &TrigConfig, count: usize) -> Result<Vec<PathBuf>, DatasetError> {
    let group = format!("trig-{}", config.label());
    (0..count)
        .map(|k| {
            let cfg = TrigConfig {
                seed: crate::rng::derive_seed(config.seed, k as u64),
                ..config.clone()
            };
            let spec = gen_trig_expression::<f64>(&cfg)?;
            write_equation(root, &group, &format!("{k:03}"), &spec)
        })
        .collect()
}
