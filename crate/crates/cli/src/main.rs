//! Command line front end: load a model, run an analysis, write a report or
//! CSV. Exit codes for `verdict`: 0 honest, 10 dishonest, 20 undetermined.
//! `compare` exits 2 when the routes disagree beyond `--tol`. Any error
//! exits 1 with a message on stderr.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use honesty_lab::honesty_analyzer::{honesty_verdict, mass_loss_delta, DeltaParams, MassLoss, VerdictPolicy};
use honesty_lab::jump_simulator::{simulate, to_csv};
use honesty_lab::{zoo, ModelSpec, PosSeq, TruncationParams};

#[derive(Parser)]
#[command(name = "honesty-lab", version, about = "Honesty analysis of perturbed substochastic semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the trajectory from the initial vector is honest.
    Verdict(Common),
    /// Masses, functionals and mass loss over a time grid, as CSV.
    Trajectory(Common),
    /// Mass loss through the resolvent and Dyson-Phillips routes side by side.
    Compare(Common),
    /// Monte Carlo survival, explosion and killing over a time grid, as CSV.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Model JSON file, or `zoo:NAME` for a built-in model.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Verdict threshold (verdict), route discrepancy (compare) or
    /// truncation gap (trajectory).
    #[arg(long)]
    tol: Option<f64>,
    /// Inclusive grid `a:b:step`, a comma list, or a single time.
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial vector as `k:v,k:v`; defaults to `0:1`.
    #[arg(long, default_value = "0:1")]
    initial: String,
    #[arg(long)]
    n_start: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // usage errors share exit code 1 with every other failure
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Verdict(c) => cmd_verdict(&c),
        Command::Trajectory(c) => cmd_trajectory(&c),
        Command::Compare(c) => cmd_compare(&c),
        Command::Simulate(c) => cmd_simulate(&c),
    }
}

fn load_model(spec: &str) -> Result<ModelSpec> {
    if let Some(name) = spec.strip_prefix("zoo:") {
        return zoo::all()
            .into_iter()
            .find(|m| m.name == name)
            .with_context(|| format!("no built-in model named {name:?}"));
    }
    ModelSpec::load(spec).with_context(|| format!("loading model {spec}"))
}

fn parse_initial(text: &str) -> Result<PosSeq> {
    let mut entries = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once(':').with_context(|| format!("initial entry {part:?} is not k:v"))?;
        entries.push((k.trim().parse::<usize>()?, v.trim().parse::<f64>()?));
    }
    Ok(PosSeq::from_entries(entries)?)
}

/// `a:b:step` (both ends included), `t1,t2,...` or a single time.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
        let [a, b, step] = parts[..] else { bail!("grid {text:?} must be a:b:step") };
        if !(step > 0.0) || b < a {
            bail!("grid {text:?} needs step > 0 and a <= b");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|i| a + i as f64 * step).collect();
        if (b - g[n]).abs() > 1e-9 * step.max(b.abs()) {
            g.push(b);
        } else {
            g[n] = b;
        }
        g
    } else {
        text.split(',').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!("grid times must be finite and nonnegative");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        bail!("grid must be strictly increasing");
    }
    Ok(grid)
}

fn truncation(c: &Common, tol: Option<f64>) -> TruncationParams {
    let mut p = TruncationParams::default();
    if let Some(n) = c.n_start {
        p.n_start = n;
    }
    if let Some(n) = c.n_max {
        p.n_max = n;
    }
    if let Some(t) = tol {
        p.tol = t;
    }
    p
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        bail!("{name} must be positive, got {x}");
    }
    Ok(())
}

fn emit(c: &Common, text: &str) -> Result<()> {
    match &c.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_verdict(c: &Common) -> Result<u8> {
    let m = load_model(&c.model)?;
    let u = parse_initial(&c.initial)?;
    check_positive("lambda", c.lambda)?;
    let mut policy = VerdictPolicy { sweep: vec![0.5, 1.0, 2.0], ..VerdictPolicy::default() };
    if let Some(tol) = c.tol {
        check_positive("tol", tol)?;
        policy.xi.tol = tol;
    }
    if let Some(g) = &c.t_grid {
        policy.delta_times = parse_grid(g)?;
    }
    policy.delta.truncation = truncation(c, None);
    let report = honesty_verdict(&m, &u, c.lambda, &policy)?;
    let mut text = report.to_json();
    text.push('\n');
    emit(c, &text)?;
    eprintln!("{}: {:?}, xi in {}", m.name, report.verdict, report.xi);
    Ok(report.exit_code() as u8)
}

fn cmd_trajectory(c: &Common) -> Result<u8> {
    let m = load_model(&c.model)?;
    let u = parse_initial(&c.initial)?;
    check_positive("lambda", c.lambda)?;
    let grid = parse_grid(c.t_grid.as_deref().unwrap_or("0:2:0.25"))?;
    let params = DeltaParams { truncation: truncation(c, c.tol), ..DeltaParams::default() };
    let mut out = String::from("t,mass_lo,mass_hi,abar,ahat,delta_lo,delta_hi\n");
    for &t in &grid {
        let d = mass_loss_delta(&m, t, &u, c.lambda, &params)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t,
            d.mass.lo,
            d.mass.hi,
            d.abar.mid(),
            d.ahat.mid(),
            d.delta.lo,
            d.delta.hi
        ));
    }
    emit(c, &out)?;
    Ok(0)
}

#[derive(Serialize)]
struct CompareReport {
    model: String,
    lambda: f64,
    tol: f64,
    rows: Vec<MassLoss>,
    max_discrepancy: f64,
    pass: bool,
}

fn cmd_compare(c: &Common) -> Result<u8> {
    let m = load_model(&c.model)?;
    let u = parse_initial(&c.initial)?;
    check_positive("lambda", c.lambda)?;
    let tol = c.tol.unwrap_or(1e-6);
    check_positive("tol", tol)?;
    let grid = parse_grid(c.t_grid.as_deref().unwrap_or("0.5,1"))?;
    let params = DeltaParams { truncation: truncation(c, None), ..DeltaParams::default() };
    let rows = grid
        .iter()
        .map(|&t| mass_loss_delta(&m, t, &u, c.lambda, &params))
        .collect::<honesty_lab::Result<Vec<_>>>()?;
    let max_discrepancy = rows.iter().map(MassLoss::discrepancy).fold(0.0, f64::max);
    let pass = max_discrepancy <= tol;
    let report = CompareReport { model: m.name.clone(), lambda: c.lambda, tol, rows, max_discrepancy, pass };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(c, &text)?;
    eprintln!("{}: max discrepancy {:.3e} ({})", m.name, max_discrepancy, if pass { "pass" } else { "FAIL" });
    Ok(if pass { 0 } else { 2 })
}

fn cmd_simulate(c: &Common) -> Result<u8> {
    let m = load_model(&c.model)?;
    let u = parse_initial(&c.initial)?;
    let grid = parse_grid(c.t_grid.as_deref().unwrap_or("1"))?;
    let results = grid
        .iter()
        .map(|&t| simulate(&m, &u, t, c.paths, c.seed))
        .collect::<honesty_lab::Result<Vec<_>>>()?;
    let aborted: usize = results.iter().map(|r| r.aborted).sum();
    if aborted > 0 {
        eprintln!("warning: {aborted} paths hit the jump cap and were counted as surviving");
    }
    emit(c, &to_csv(&results))?;
    Ok(0)
}
