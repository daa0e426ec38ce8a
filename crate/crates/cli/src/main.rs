mod data;
mod run_config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gradmatch::estimator::{estimate, fit_partially_observed, CriterionConfig, PartialInit, PartialOptions, WeightSpec};
use gradmatch::knot_select::{KnotPolicy, Selection};
use gradmatch::montecarlo::{write_raw_csv, write_summary_csv, write_summary_text, Experiment, ExperimentConfig, ModelKind};
use gradmatch::ode::Oscillator;
use gradmatch::spline::{fit_least_squares, BSplineBasis, Interval, SplineFit};
use gradmatch::Error;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use run_config::RunConfig;

/// Two-step (gradient matching) estimation of ODE parameters.
#[derive(Parser)]
#[command(name = "gradmatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noisy observations of a registered model.
    Simulate(SimulateArgs),
    /// Fit a model to one data file.
    Fit(FitArgs),
    /// Run the Monte Carlo experiments of a configuration file.
    Mc(McArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Glv,
    ClassicLv,
    CustomLinearPartial,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Glv => ModelKind::Glv,
            ModelArg::ClassicLv => ModelKind::ClassicLv,
            ModelArg::CustomLinearPartial => ModelKind::CustomLinearPartial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Uniform,
    Boundary,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Parameters, comma separated. classic-lv also accepts the four free
    /// values a2,a3,b1,b3.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FitArgs {
    /// CSV with header t,y1,...,yd.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Known parameters as name=value pairs, e.g. a1=0,b2=1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta_fixed: Vec<String>,
    #[arg(long, value_enum, default_value = "boundary")]
    weight: WeightArg,
    /// `auto` selects knots by ElimAdd from the default candidate count; a
    /// number uses that many uniform interior knots.
    #[arg(long, default_value = "auto")]
    knots: String,
    /// End of the observation interval; by default one sampling step past
    /// the last time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Starting values (eta,a) for custom-linear-partial.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta_init: Vec<f64>,
    /// Starting value of the hidden state for custom-linear-partial.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v0_init: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Blowup { .. } | Error::IntegrationTolerance { .. } => 3,
            Error::NotIdentifiable { .. } => 4,
            Error::ExcessiveFailures { .. } => 5,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::usage(format!("{e:#}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Mc(a) => mc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn full_theta(model: ModelKind, theta: &[f64]) -> Vec<f64> {
    if model == ModelKind::ClassicLv && theta.len() == 4 {
        vec![0.0, theta[0], theta[1], theta[2], 0.0, theta[3]]
    } else {
        theta.to_vec()
    }
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let model = ModelKind::from(a.model);
    let config = ExperimentConfig {
        t_end: a.t_end,
        sigma: a.sigma,
        replications: 1,
        ..ExperimentConfig::new(model, full_theta(model, &a.theta), vec![], a.x0, a.n, a.seed)
    };
    let exp = Experiment::new(config)?;
    let data = exp.simulate(0);
    data::write_observations(&a.out, &data.times, &data.observations, model.observed_dim())?;
    Ok(())
}

fn parse_fixed(model: ModelKind, pairs: &[String]) -> Result<Vec<(usize, f64)>, Failure> {
    let names = model.field().param_names();
    pairs
        .iter()
        .map(|p| {
            let (name, value) = p
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("--theta-fixed entry {p:?} is not name=value")))?;
            let idx = names
                .iter()
                .position(|n| n == name.trim())
                .ok_or_else(|| Failure::usage(format!("unknown parameter {name:?}; expected one of {}", names.join(", "))))?;
            let v = value.trim().parse::<f64>().map_err(|_| Failure::usage(format!("bad value in {p:?}")))?;
            Ok((idx, v))
        })
        .collect()
}

fn first_step(times: &[f64], y: &DMatrix<f64>, interval: Interval, knots: &str) -> Result<SplineFit, Failure> {
    let policy = match knots {
        "auto" => KnotPolicy::default(),
        k => {
            let count = k.parse::<usize>().map_err(|_| Failure::usage(format!("--knots must be auto or a count, got {k:?}")))?;
            KnotPolicy { candidate_count: Some(count), selection: Selection::FixedUniform, ..KnotPolicy::default() }
        }
    };
    let sel = policy.select(interval, times, y)?;
    let basis = BSplineBasis::from_parts(interval, sel.selected_knots, policy.order)?;
    Ok(fit_least_squares(&basis, times, y)?)
}

#[derive(Serialize)]
struct PartialReport {
    schema: u32,
    model: &'static str,
    eta: Vec<f64>,
    a: Vec<f64>,
    v0: Vec<f64>,
    criterion_value: f64,
    converged: bool,
    iterations: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn fit(a: FitArgs) -> CmdResult {
    let model_kind = ModelKind::from(a.model);
    let (times, y) = data::read_observations(&a.data)?;
    let observed = model_kind.observed_dim();
    if y.ncols() != observed {
        return Err(Failure::usage(format!(
            "{} has {} data columns, {} expects {observed}",
            a.data.display(),
            y.ncols(),
            model_kind.name()
        )));
    }
    if times.len() < 2 {
        return Err(Failure::usage("need at least two observations"));
    }
    let n = times.len();
    let t_end = a.t_end.unwrap_or(times[n - 1] + (times[n - 1] - times[0]) / (n - 1) as f64);
    let interval = Interval::new(times[0].min(0.0), t_end)?;
    if times[n - 1] > t_end {
        return Err(Failure::usage(format!("--t-end {t_end} is before the last observation")));
    }
    let weight = match a.weight {
        WeightArg::Uniform => WeightSpec::Uniform,
        WeightArg::Boundary => WeightSpec::boundary(),
    };
    let config = CriterionConfig::new(weight.build(interval)?);
    let spline = first_step(&times, &y, interval, &a.knots)?;

    if model_kind == ModelKind::CustomLinearPartial {
        if a.theta_init.len() != 2 {
            return Err(Failure::usage("custom-linear-partial needs --theta-init eta,a"));
        }
        let v0 = if a.v0_init.is_empty() { vec![0.0] } else { a.v0_init.clone() };
        let init = PartialInit {
            eta: DVector::from_vec(vec![a.theta_init[0]]),
            a: DMatrix::from_element(1, 1, a.theta_init[1]),
            v0: DVector::from_vec(v0),
        };
        let est = fit_partially_observed(&spline, &Oscillator, &init, &config, &PartialOptions::default())?;
        println!("eta = {:.6}  a = {:.6}  v0 = {:.6}", est.eta[0], est.a[(0, 0)], est.v0[0]);
        let report = PartialReport {
            schema: 1,
            model: model_kind.name(),
            eta: est.eta.iter().copied().collect(),
            a: est.a.transpose().iter().copied().collect(),
            v0: est.v0.iter().copied().collect(),
            criterion_value: est.criterion_value,
            converged: est.converged,
            iterations: est.iterations,
        };
        return write_json(&a.out, &report);
    }

    let names = model_kind.field().param_names();
    let mut theta = vec![0.0; names.len()];
    let mut fixed = Vec::new();
    for (i, v) in parse_fixed(model_kind, &a.theta_fixed)? {
        theta[i] = v;
        fixed.push(i);
    }
    let model = model_kind.model(&theta, &fixed)?;
    let init = DVector::from_vec(theta);
    let est = estimate(&spline, &model, &config, Some(&init))?;
    let free = est.theta_free(&model);
    let parts: Vec<String> = est.free_names.iter().zip(free.iter()).map(|(n, v)| format!("{n} = {v:.6}")).collect();
    println!("theta_hat: {}", parts.join("  "));
    println!("J* condition number: {:.6e}", est.jstar_condition);
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&a.out, &est.report())
}

fn mc(a: McArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", a.config.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", a.config.display())))?;
    if a.jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::usage(e.to_string()))?;
    fs::create_dir_all(&a.out_dir)?;
    pool.install(|| {
        for case in &cfg.cases {
            let mut tables = Vec::new();
            let mut raw = Vec::new();
            for exp_cfg in case.experiments() {
                let exp = Experiment::new(exp_cfg)?;
                let (table, reps) = exp.run()?;
                eprintln!("{}: n = {} done", case.name, table.n);
                if case.raw_dump {
                    write_raw_csv(&exp, &reps, &mut raw)?;
                }
                tables.push(table);
            }
            let dir = &a.out_dir;
            write_summary_csv(&tables, BufWriter::new(fs::File::create(dir.join(format!("{}_summary.csv", case.name)))?))?;
            let mut text = Vec::new();
            write_summary_text(&tables, &mut text)?;
            fs::write(dir.join(format!("{}_summary.txt", case.name)), &text)?;
            std::io::stdout().write_all(&text)?;
            if case.raw_dump {
                fs::write(dir.join(format!("{}_raw.csv", case.name)), dedup_headers(&raw))?;
            }
        }
        Ok(())
    })
}

/// Raw dumps of several `n` are concatenated; keep only the first header.
fn dedup_headers(raw: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(raw);
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return Vec::new() };
    let mut out = String::from(header);
    out.push('\n');
    for l in lines.filter(|l| *l != header) {
        out.push_str(l);
        out.push('\n');
    }
    out.into_bytes()
}
