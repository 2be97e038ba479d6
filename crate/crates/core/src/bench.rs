//! Benchmark harness: runs one algorithm over equation files and reports
//! held-out metrics per equation plus a per-group summary.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::metrics::{compute_metrics, MetricReport, RECOVERY_R2};
use crate::oracle::{EquationSpec, Oracle, OracleConfig};
use crate::rng::{derive_seed, tag_of};
use crate::vsr::{run_classic, run_vsr, RegressorConfig, VsrConfig};
use crate::{gp::GpConfig, mcts::MctsConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gp,
    VsrGp,
    Mcts,
    VsrMcts,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Gp, Algorithm::VsrGp, Algorithm::Mcts, Algorithm::VsrMcts];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gp => "gp",
            Algorithm::VsrGp => "vsr-gp",
            Algorithm::Mcts => "mcts",
            Algorithm::VsrMcts => "vsr-mcts",
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Algorithm::VsrGp | Algorithm::VsrMcts)
    }

    pub fn uses_gp(self) -> bool {
        matches!(self, Algorithm::Gp | Algorithm::VsrGp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected gp, vsr-gp, mcts or vsr-mcts)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Held-out rows used for the reported metrics.
    pub test_size: usize,
    pub gp: GpConfig,
    pub mcts: MctsConfig,
    /// Everything but the regressor, which comes from `gp` or `mcts`.
    pub vsr: VsrConfig,
    /// Record wall time in each report. Off by default so that reports are
    /// reproducible byte for byte.
    pub timing: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            algorithm: Algorithm::VsrMcts,
            seed: 0,
            noise_sigma: 0.0,
            test_size: 2000,
            gp: GpConfig::default(),
            mcts: MctsConfig::default(),
            vsr: VsrConfig::default(),
            timing: false,
        }
    }
}

/// One line of a run's JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub group: String,
    pub equation_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Space separated preorder tokens.
    pub best_expression: Option<String>,
    pub best_infix: Option<String>,
    pub metrics: Option<MetricReport<f64>>,
    /// `r2 >= 0.999` on the held-out rows.
    pub recovered: bool,
    /// Rows the training oracle served.
    pub oracle_queries: u64,
    /// Constant fits performed by the search.
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report always serializes")
    }
}

/// Runs `settings.algorithm` on one equation. Errors are recorded in the
/// report rather than returned.
pub fn run_equation(group: &str, id: &str, spec: &EquationSpec<f64>, settings: &RunSettings) -> RunReport {
    let mut report = RunReport {
        group: group.to_string(),
        equation_id: id.to_string(),
        algorithm: settings.algorithm,
        seed: settings.seed,
        noise_sigma: settings.noise_sigma,
        best_expression: None,
        best_infix: None,
        metrics: None,
        recovered: false,
        oracle_queries: 0,
        evaluations: 0,
        wall_time_seconds: None,
        error: None,
    };
    if let Err(e) = run_into(&mut report, spec, settings) {
        report.error = Some(e);
    }
    report
}

fn run_into(report: &mut RunReport, spec: &EquationSpec<f64>, s: &RunSettings) -> Result<(), String> {
    let eq_seed = derive_seed(s.seed, tag_of(&format!("{}/{}", report.group, report.equation_id)));
    let mut oracle = Oracle::new(
        spec.clone(),
        OracleConfig {
            noise_sigma: s.noise_sigma,
            seed: derive_seed(eq_seed, tag_of("train")),
        },
    )
    .map_err(|e| e.to_string())?;
    let ops = spec.operators().map_err(|e| e.to_string())?;
    let regressor = if s.algorithm.uses_gp() {
        RegressorConfig::Gp(s.gp.clone())
    } else {
        RegressorConfig::Mcts(s.mcts.clone())
    };
    let config = VsrConfig {
        regressor,
        seed: eq_seed,
        ..s.vsr.clone()
    };

    let start = Instant::now();
    let outcome = if s.algorithm.is_vertical() {
        run_vsr(&mut oracle, &ops, &config)
    } else {
        run_classic(&mut oracle, &ops, &config, spec.num_vars)
    }
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    report.best_expression = Some(outcome.best.to_preorder().tokens().join(" "));
    report.best_infix = Some(outcome.best.to_string());
    report.oracle_queries = oracle.query_count();
    report.evaluations = outcome.evaluations;
    if s.timing {
        report.wall_time_seconds = Some(elapsed);
    }

    // test rows come from a separate noiseless stream, drawn after training
    let mut test_oracle = Oracle::new(
        spec.clone(),
        OracleConfig {
            noise_sigma: 0.0,
            seed: derive_seed(eq_seed, tag_of("test")),
        },
    )
    .map_err(|e| e.to_string())?;
    let test = test_oracle.sample(s.test_size).map_err(|e| e.to_string())?;
    let pred = outcome.best.evaluate(test.x.view()).map_err(|e| e.to_string())?;
    let y = test.y.as_slice().expect("contiguous targets");
    let metrics = compute_metrics(y, pred.as_slice().expect("contiguous predictions")).map_err(|e| e.to_string())?;
    report.recovered = metrics.r2 >= RECOVERY_R2;
    report.metrics = Some(metrics);
    Ok(())
}

/// Aggregate of one group under one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: String,
    pub algorithm: Algorithm,
    pub equations: usize,
    pub failures: usize,
    /// Median over equations that produced metrics.
    pub median_nmse: Option<f64>,
    /// Fraction of all equations recovered.
    pub accuracy: f64,
    /// Total over timed reports; `None` when no report was timed.
    pub wall_time_seconds: Option<f64>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// One row per (group, algorithm), sorted by group then algorithm.
pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Algorithm)> = reports.iter().map(|r| (r.group.clone(), r.algorithm)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(group, algorithm)| {
            let rows: Vec<&RunReport> = reports
                .iter()
                .filter(|r| r.group == group && r.algorithm == algorithm)
                .collect();
            let mut nmse: Vec<f64> = rows.iter().filter_map(|r| r.metrics.map(|m| m.nmse)).collect();
            SummaryRow {
                equations: rows.len(),
                failures: rows.iter().filter(|r| r.failed()).count(),
                median_nmse: median(&mut nmse),
                accuracy: rows.iter().filter(|r| r.recovered).count() as f64 / rows.len() as f64,
                wall_time_seconds: rows
                    .iter()
                    .filter_map(|r| r.wall_time_seconds)
                    .reduce(|a, b| a + b),
                group,
                algorithm,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("group,algorithm,equations,failures,median_nmse,accuracy_at_0.999,wall_time_seconds\n");
    for r in rows {
        let nmse = r.median_nmse.map(|v| format!("{v:e}")).unwrap_or_default();
        let wall = r.wall_time_seconds.map(|v| format!("{v:.3}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.group, r.algorithm, r.equations, r.failures, nmse, r.accuracy, wall
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::IDEAL_GAS;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("vsr".parse::<Algorithm>().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn summary_counts_failures_and_recoveries() {
        let spec = IDEAL_GAS.spec::<f64>().unwrap();
        let settings = RunSettings {
            algorithm: Algorithm::Mcts,
            mcts: MctsConfig {
                episodes: 5,
                ..MctsConfig::default()
            },
            test_size: 50,
            ..RunSettings::default()
        };
        let ok = run_equation("g", "a", &spec, &settings);
        assert!(ok.error.is_none(), "{:?}", ok.error);
        let mut bad = ok.clone();
        bad.equation_id = "b".into();
        bad.error = Some("boom".into());
        bad.metrics = None;
        bad.recovered = false;
        let rows = summarize(&[ok.clone(), bad]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].equations, 2);
        assert_eq!(rows[0].failures, 1);
        assert_eq!(rows[0].median_nmse, ok.metrics.map(|m| m.nmse));
        assert!(summary_csv(&rows).lines().count() == 2);
    }
}
