//! Data oracle.
//!
//! An [`Oracle`] hides a ground-truth expression and answers two kinds of
//! queries: plain evaluation of caller-chosen inputs, and control-variable
//! trials where a chosen subset of variables is held at one random value for
//! the whole batch while the others vary.
//!
//! One oracle owns one random stream. Workers that need their own stream
//! should [`Oracle::fork`] with a derived seed.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Operator, PreorderRecord, Tree};
use crate::rng::{seeded, SearchRng};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("input has {got} columns, oracle expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("schema violation at `{key}`: {msg}")]
    Schema { key: String, msg: String },
    #[error("malformed equation file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid equation: {0}")]
    Expr(#[from] ExprError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid control split: {0}")]
    Control(String),
    #[error("noise sigma must be finite and >= 0, got {0}")]
    Sigma(f64),
}

/// Contents of an equation file.
///
/// ```json
/// {
///   "num_vars": 3,
///   "var_domains": [[0, 1], [0, 1], [0, 1]],
///   "function_set": ["add", "sub", "mul", "div", "const"],
///   "equation": [["mul","binary"], ["mul","binary"], ["8.314","const"],
///                ["x1","var"], ["div","binary"], ["x2","var"], ["x3","var"]]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct EquationSpec<T> {
    pub num_vars: usize,
    pub var_domains: Vec<(T, T)>,
    pub function_set: Vec<String>,
    pub equation: PreorderRecord,
}

impl<T: Scalar> EquationSpec<T> {
    pub fn new(
        var_domains: Vec<(T, T)>,
        function_set: Vec<String>,
        tree: &Tree<T>,
    ) -> Result<Self, OracleError> {
        let spec = EquationSpec {
            num_vars: var_domains.len(),
            var_domains,
            function_set,
            equation: tree.to_preorder(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tree(&self) -> Result<Tree<T>, OracleError> {
        Tree::from_preorder(&self.equation).map_err(|e| OracleError::Schema {
            key: "equation".into(),
            msg: e.to_string(),
        })
    }

    /// Operators named in `function_set` (the `const` entry is skipped).
    pub fn operators(&self) -> Result<Vec<Operator>, OracleError> {
        Operator::parse_list(&self.function_set.join(",")).map_err(|e| OracleError::Schema {
            key: "function_set".into(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let schema = |key: &str, msg: String| OracleError::Schema {
            key: key.into(),
            msg,
        };
        if self.num_vars == 0 {
            return Err(schema("num_vars", "must be at least 1".into()));
        }
        if self.var_domains.len() != self.num_vars {
            return Err(schema(
                "var_domains",
                format!("{} domains for {} variables", self.var_domains.len(), self.num_vars),
            ));
        }
        for (i, (lo, hi)) in self.var_domains.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(schema("var_domains", format!("domain {i} is not a finite low < high interval")));
            }
        }
        let ops = self.operators()?;
        let tree = self.tree()?;
        for node in tree.nodes() {
            match node.kind {
                crate::expr::NodeKind::Var(i) if i >= self.num_vars => {
                    return Err(schema("equation", format!("x{} exceeds num_vars", i + 1)));
                }
                crate::expr::NodeKind::Op(op) if !ops.contains(&op) => {
                    return Err(schema(
                        "equation",
                        format!("operator `{op}` is not in function_set"),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Parses an equation file. Besides strict JSON this accepts the
    /// Python-literal spelling with single quotes and tuples.
    pub fn from_json_str(text: &str) -> Result<Self, OracleError> {
        let normalized = normalize_python_literal(text);
        let spec: EquationSpec<T> = serde_json::from_str(&normalized)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("spec always serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| OracleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OracleError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| OracleError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Rewrites `'str'` to `"str"` and `(`/`)` to `[`/`]` outside strings.
fn normalize_python_literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for ch in text.chars() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                    out.push(ch);
                } else if ch == '\\' {
                    escaped = true;
                    out.push(ch);
                } else if ch == q {
                    quote = None;
                    out.push('"');
                } else if ch == '"' {
                    out.push_str("\\\"");
                } else {
                    out.push(ch);
                }
            }
            None => match ch {
                '\'' | '"' => {
                    quote = Some(ch);
                    out.push('"');
                }
                '(' => out.push('['),
                ')' => out.push(']'),
                _ => out.push(ch),
            },
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Partition of the variables into controlled and free sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSpec {
    controlled: Vec<usize>,
    free: Vec<usize>,
}

impl ControlSpec {
    pub fn new(
        mut controlled: Vec<usize>,
        mut free: Vec<usize>,
        num_vars: usize,
    ) -> Result<Self, OracleError> {
        controlled.sort_unstable();
        free.sort_unstable();
        let mut all: Vec<usize> = controlled.iter().chain(&free).copied().collect();
        all.sort_unstable();
        if all != (0..num_vars).collect::<Vec<_>>() {
            return Err(OracleError::Control(format!(
                "controlled {controlled:?} and free {free:?} must partition 0..{num_vars}"
            )));
        }
        Ok(ControlSpec { controlled, free })
    }

    pub fn all_free(num_vars: usize) -> Self {
        ControlSpec {
            controlled: Vec::new(),
            free: (0..num_vars).collect(),
        }
    }

    /// The first `k` variables free, the rest controlled.
    pub fn first_free(k: usize, num_vars: usize) -> Self {
        let k = k.min(num_vars);
        ControlSpec {
            controlled: (k..num_vars).collect(),
            free: (0..k).collect(),
        }
    }

    pub fn controlled(&self) -> &[usize] {
        &self.controlled
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn num_vars(&self) -> usize {
        self.controlled.len() + self.free.len()
    }
}

/// One batch from a control-variable trial.
#[derive(Debug, Clone)]
pub struct Trial<T> {
    pub x: Array2<T>,
    pub y: Array1<T>,
    /// Value each controlled variable was held at.
    pub controlled_values: BTreeMap<usize, T>,
}

#[derive(Debug, Clone)]
pub struct Oracle<T> {
    spec: EquationSpec<T>,
    tree: Tree<T>,
    config: OracleConfig,
    noise: Option<Normal<f64>>,
    rng: SearchRng,
    rows_served: u64,
    calls: u64,
    out_of_domain: u64,
}

impl<T: Scalar> Oracle<T> {
    pub fn new(spec: EquationSpec<T>, config: OracleConfig) -> Result<Self, OracleError> {
        spec.validate()?;
        if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
            return Err(OracleError::Sigma(config.noise_sigma));
        }
        let noise = (config.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, config.noise_sigma).expect("sigma validated"));
        let tree = spec.tree()?;
        Ok(Oracle {
            spec,
            tree,
            config,
            noise,
            rng: seeded(config.seed),
            rows_served: 0,
            calls: 0,
            out_of_domain: 0,
        })
    }

    /// Same hidden equation and noise level, fresh stream and counters.
    pub fn fork(&self, seed: u64) -> Self {
        let mut o = self.clone();
        o.config.seed = seed;
        o.rng = seeded(seed);
        o.rows_served = 0;
        o.calls = 0;
        o.out_of_domain = 0;
        o
    }

    pub fn get_nvars(&self) -> usize {
        self.spec.num_vars
    }

    pub fn get_function_set(&self) -> &[String] {
        &self.spec.function_set
    }

    pub fn spec(&self) -> &EquationSpec<T> {
        &self.spec
    }

    pub fn config(&self) -> OracleConfig {
        self.config
    }

    pub fn domains(&self) -> &[(T, T)] {
        &self.spec.var_domains
    }

    /// Total number of rows evaluated so far.
    pub fn query_count(&self) -> u64 {
        self.rows_served
    }

    pub fn call_count(&self) -> u64 {
        self.calls
    }

    /// Rows whose inputs fell outside the declared domains.
    pub fn out_of_domain_count(&self) -> u64 {
        self.out_of_domain
    }

    /// Noisy ground-truth values at each row of `x`.
    pub fn evaluate(&mut self, x: ArrayView2<'_, T>) -> Result<Array1<T>, OracleError> {
        if x.ncols() != self.spec.num_vars {
            return Err(OracleError::Shape {
                expected: self.spec.num_vars,
                got: x.ncols(),
            });
        }
        for row in x.rows() {
            let outside = row
                .iter()
                .zip(&self.spec.var_domains)
                .any(|(v, (lo, hi))| v < lo || v > hi);
            if outside {
                self.out_of_domain += 1;
            }
        }
        let mut y = self.tree.evaluate(x)?;
        if let Some(noise) = &self.noise {
            for v in y.iter_mut() {
                *v = *v + T::of(noise.sample(&mut self.rng));
            }
        }
        self.calls += 1;
        self.rows_served += x.nrows() as u64;
        Ok(y)
    }

    fn uniform(&mut self, var: usize) -> T {
        let (lo, hi) = self.spec.var_domains[var];
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        T::of(lo + (hi - lo) * self.rng.random::<f64>())
    }

    /// Draws one value per controlled variable, then `batch` rows with the
    /// free variables i.i.d. uniform over their domains.
    pub fn sample_trial(&mut self, ctrl: &ControlSpec, batch: usize) -> Result<Trial<T>, OracleError> {
        self.check_control(ctrl)?;
        let values: BTreeMap<usize, T> = ctrl
            .controlled()
            .iter()
            .map(|&v| (v, self.uniform(v)))
            .collect();
        self.sample_trial_at(ctrl, batch, &values)
    }

    /// Like [`Oracle::sample_trial`] but with caller-chosen values for the
    /// controlled variables.
    pub fn sample_trial_at(
        &mut self,
        ctrl: &ControlSpec,
        batch: usize,
        values: &BTreeMap<usize, T>,
    ) -> Result<Trial<T>, OracleError> {
        self.check_control(ctrl)?;
        if let Some(v) = ctrl.controlled().iter().find(|v| !values.contains_key(v)) {
            return Err(OracleError::Control(format!("no value given for controlled x{}", v + 1)));
        }
        let controlled_values: BTreeMap<usize, T> =
            ctrl.controlled().iter().map(|v| (*v, values[v])).collect();
        let m = self.spec.num_vars;
        let mut x = Array2::<T>::zeros((batch, m));
        for mut row in x.rows_mut() {
            for j in 0..m {
                row[j] = match controlled_values.get(&j) {
                    Some(&v) => v,
                    None => self.uniform(j),
                };
            }
        }
        let y = self.evaluate(x.view())?;
        Ok(Trial {
            x,
            y,
            controlled_values,
        })
    }

    fn check_control(&self, ctrl: &ControlSpec) -> Result<(), OracleError> {
        if ctrl.num_vars() != self.spec.num_vars {
            return Err(OracleError::Control(format!(
                "control spec covers {} variables, oracle has {}",
                ctrl.num_vars(),
                self.spec.num_vars
            )));
        }
        Ok(())
    }

    /// A plain batch with every variable free.
    pub fn sample(&mut self, batch: usize) -> Result<Trial<T>, OracleError> {
        let ctrl = ControlSpec::all_free(self.spec.num_vars);
        self.sample_trial(&ctrl, batch)
    }

    /// Noiseless ground truth, bypassing the noise model and counters.
    pub fn ground_truth(&self) -> &Tree<T> {
        &self.tree
    }
}
