//! `vsr`: generate benchmark equations, run the regressors on them, and
//! evaluate expressions.
//!
//! Exit status is 0 on success, 1 when some equation in a run failed, and 2
//! on bad arguments or configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vsr::bench::{run_equation, summarize, summary_csv, Algorithm, RunReport, RunSettings};
use vsr::datasets::{export_bundled, load_equation, write_trig_suite, TrigConfig};
use vsr::expr::{enumerate_trees, lemma_count, parse_infix, Operator};
use vsr::gp::GpConfig;
use vsr::mcts::MctsConfig;
use vsr::{compute_metrics, EquationSpec, Oracle, OracleConfig, Tree};

#[derive(Parser)]
#[command(name = "vsr", version, about = "Vertical symbolic regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random trigonometric equations.
    Gen(GenArgs),
    /// Run one algorithm over equation files.
    Run(RunArgs),
    /// Compare enumerated tree counts with the closed form.
    CountSpace(CountArgs),
    /// Score an expression against an equation's oracle.
    Eval(EvalArgs),
    /// Write the bundled equations.
    ExportBundled {
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Shape `l1,l2,l3`: variables, singular terms, pairwise terms.
    #[arg(long)]
    config: String,
    #[arg(long, default_value = "sin,cos,add,sub,mul")]
    ops: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Equation files, or directories searched for `*.json`.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// GP generations per round.
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    /// MCTS episodes per round.
    #[arg(long)]
    episodes: Option<usize>,
    /// Rows per fitness batch.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    /// Add wall time to each report (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// JSON-lines report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV summary file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    /// Largest tree size; sizes 1, 3, ... up to it are listed.
    #[arg(long, default_value_t = 9)]
    max_len: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    vars: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    ops: Vec<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// File holding an infix expression, or an equation file whose equation is scored.
    #[arg(long)]
    expr: PathBuf,
    #[arg(long)]
    equation: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

/// Failure classes mapped to exit codes.
enum Failure {
    Partial,
    Config(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a).map_err(Failure::from),
        Command::Run(a) => cmd_run(a),
        Command::CountSpace(a) => cmd_count_space(a).map_err(Failure::from),
        Command::Eval(a) => cmd_eval(a).map_err(Failure::from),
        Command::ExportBundled { out } => cmd_export(&out).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial) => ExitCode::from(1),
        // output piped into something like `head` that stopped reading
        Err(Failure::Config(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let shape: Vec<usize> = a
        .config
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad --config `{}`", a.config))?;
    let [l1, l2, l3] = shape[..] else {
        bail!("--config needs three numbers, got `{}`", a.config);
    };
    let config = TrigConfig {
        l1,
        l2,
        l3,
        ops: Operator::parse_list(&a.ops)?,
        seed: a.seed,
    };
    for path in write_trig_suite(&a.out, &config, a.count)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_export(out: &Path) -> Result<()> {
    for path in export_bundled(out)? {
        println!("{}", path.display());
    }
    Ok(())
}

/// Every `*.json` under the given paths, sorted.
fn equation_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in walkdir::WalkDir::new(p) {
                let entry = entry.with_context(|| format!("reading {}", p.display()))?;
                if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "json") {
                    files.push(entry.into_path());
                }
            }
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            bail!("{}: no such file or directory", p.display());
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn group_and_id(path: &Path) -> (String, String) {
    let name = |p: Option<&std::ffi::OsStr>| p.map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (name(path.parent().and_then(Path::file_name)), name(path.file_stem()))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(anyhow!("--sigma must be finite and >= 0").into());
    }
    let files = equation_files(&a.data)?;
    let mut settings = RunSettings {
        algorithm: a.algorithm,
        seed: a.seed,
        noise_sigma: a.sigma,
        test_size: a.test_size,
        timing: a.timing,
        ..RunSettings::default()
    };
    let gp = &mut settings.gp;
    *gp = GpConfig {
        generations: a.generations.unwrap_or(gp.generations),
        pool_size: a.pool.unwrap_or(gp.pool_size),
        batch_size: a.batch.unwrap_or(gp.batch_size),
        ..gp.clone()
    };
    let mcts = &mut settings.mcts;
    *mcts = MctsConfig {
        episodes: a.episodes.unwrap_or(mcts.episodes),
        batch_size: a.batch.unwrap_or(mcts.batch_size),
        ..mcts.clone()
    };
    settings.vsr.batch_size = a.batch.unwrap_or(settings.vsr.batch_size);
    settings.vsr.validate().map_err(anyhow::Error::from)?;

    let mut sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut reports: Vec<RunReport> = Vec::with_capacity(files.len());
    for path in &files {
        let (group, id) = group_and_id(path);
        let report = match load_equation::<f64>(path) {
            Ok(spec) => run_equation(&group, &id, &spec, &settings),
            Err(e) => RunReport {
                group,
                equation_id: id,
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
                error: Some(format!("{}: {e}", path.display())),
            },
        };
        writeln!(sink, "{}", report.to_json_line()).context("writing report")?;
        sink.flush().context("writing report")?;
        reports.push(report);
    }
    if let Some(p) = &a.summary {
        fs::write(p, summary_csv(&summarize(&reports))).with_context(|| format!("writing {}", p.display()))?;
    }
    if reports.iter().any(RunReport::failed) {
        return Err(Failure::Partial);
    }
    Ok(())
}

fn cmd_count_space(a: CountArgs) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "l,m,o,enumerated,closed_form,equal")?;
    for l in (1..=a.max_len).step_by(2) {
        for &m in &a.vars {
            for &o in &a.ops {
                let n = enumerate_trees(l, m, o)?;
                let closed = lemma_count(l, m, o).ok_or_else(|| anyhow!("closed form overflows at l={l}"))?;
                writeln!(out, "{l},{m},{o},{n},{closed},{}", n == closed)?;
            }
        }
    }
    Ok(())
}

fn read_expression(path: &Path) -> Result<Tree> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(spec) = EquationSpec::from_json_str(&text) {
        return Ok(spec.tree()?);
    }
    parse_infix(text.trim()).with_context(|| format!("{}: not an equation file or infix expression", path.display()))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let tree = read_expression(&a.expr)?;
    let spec = load_equation::<f64>(&a.equation)?;
    let mut oracle = Oracle::new(
        spec,
        OracleConfig {
            noise_sigma: a.sigma,
            seed: a.seed,
        },
    )?;
    let data = oracle.sample(a.n)?;
    let pred = tree.evaluate(data.x.view())?;
    let report = compute_metrics(
        data.y.as_slice().expect("contiguous targets"),
        pred.as_slice().expect("contiguous predictions"),
    )?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
