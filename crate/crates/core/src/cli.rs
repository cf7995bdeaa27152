//! Command-line front end.
//!
//! Exit codes: 0 when everything went as expected, 1 for an unexpected
//! dynamical verdict or a failed check, 2 for configuration and usage errors.

use crate::analysis::{beta_growth_summary, certify, GROWTH_C, GROWTH_DELTA};
use crate::config::{self, ExperimentConfig};
use crate::experiments::{
    fig4_experiments, fig5_experiment, sweep, sweep_csv, verdict_name, Experiment, Outcome,
};
use crate::gains::{
    check_beta_growth, default_growth_grid, nussbaum_index_with, BetaSpec, GainError,
    NussbaumOptions,
};
use crate::output::{text_table, trajectory_csv, write_atomic};
use crate::plot::{render, Panel, Series};
use crate::simcore::{Method, Termination, Trajectory, VerdictClass};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNEXPECTED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "npi-lab",
    version,
    about = "Nonlinear PI control under ignored actuator dynamics"
)]
pub struct Cli {
    /// Output directory for CSV, SVG and report files.
    #[arg(long, global = true, env = "NPI_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    /// Reserved. The tool uses no randomness, so this flag is rejected.
    #[arg(long, global = true)]
    pub seedless: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Rkf45,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    /// Step size (initial trial step for the adaptive method).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final simulated time.
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed loop described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Exit with 1 unless the verdict is Converged.
        #[arg(long)]
        expect_converge: bool,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Check the stability-certificate hypotheses for a config.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Probe whether a gain is a Nussbaum function.
    CheckNf {
        /// Take the gain from a config's controller block.
        #[arg(long, conflicts_with = "gain")]
        config: Option<PathBuf>,
        /// `identity`, `power:P` or `expquad:C1,C2`.
        #[arg(long)]
        gain: Option<String>,
        /// Oscillating factor multiplying beta.
        #[arg(long, value_enum, default_value = "cos")]
        kernel: Kernel,
        #[arg(long, default_value_t = 200.0)]
        zeta_max: f64,
        /// Quadrature intervals per direction.
        #[arg(long, default_value_t = 200_000)]
        grid: usize,
        #[arg(long, default_value_t = 1e3)]
        gate: f64,
    },
    /// Check the beta growth property over a grid of (c, delta).
    CheckBeta {
        #[arg(long, conflicts_with = "beta")]
        config: Option<PathBuf>,
        /// `identity`, `power:P` or `expquad:C1,C2`.
        #[arg(long)]
        beta: Option<String>,
        #[arg(long, requires = "delta")]
        c: Option<f64>,
        #[arg(long, requires = "c")]
        delta: Option<f64>,
    },
    /// Rerun the linear-plant comparison of NG, nPI and nPI-N.
    ReproduceFig4 {
        #[command(flatten)]
        step: StepArgs,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Rerun the sign-varying sector example.
    ReproduceFig5 {
        #[command(flatten)]
        step: StepArgs,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long)]
        u0: Option<f64>,
    },
    /// Classify a grid of (epsilon, lambda) cells for a config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma list `a,b,c` or range `start:stop:count`.
        #[arg(long, allow_hyphen_values = true)]
        epsilon_grid: String,
        #[arg(long, allow_hyphen_values = true)]
        lambda_grid: String,
        #[command(flatten)]
        step: StepArgs,
        /// Output file name inside the output directory.
        #[arg(long, default_value = "sweep.csv")]
        file: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Cos,
    Sin,
}

/// A failure that maps to an exit code.
struct Failure {
    code: i32,
    message: String,
}

fn config_error(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.to_string(),
    }
}

type CmdResult = Result<i32, Failure>;

pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    if cli.seedless {
        eprintln!("error: --seedless is reserved; no command uses randomness");
        return EXIT_CONFIG;
    }
    let out = cli.out.as_path();
    let result = match cli.command {
        Command::Simulate {
            config,
            expect_converge,
            step,
        } => cmd_simulate(&config, expect_converge, &step, out),
        Command::Certify { config } => cmd_certify(&config, out),
        Command::CheckNf {
            config,
            gain,
            kernel,
            zeta_max,
            grid,
            gate,
        } => cmd_check_nf(
            config.as_deref(),
            gain.as_deref(),
            kernel,
            zeta_max,
            grid,
            gate,
        ),
        Command::CheckBeta {
            config,
            beta,
            c,
            delta,
        } => cmd_check_beta(config.as_deref(), beta.as_deref(), c.zip(delta)),
        Command::ReproduceFig4 { step, method } => cmd_reproduce_fig4(&step, method, out),
        Command::ReproduceFig5 {
            step,
            method,
            epsilon,
            y0,
            u0,
        } => cmd_reproduce_fig5(&step, method, epsilon, y0, u0, out),
        Command::Sweep {
            config,
            epsilon_grid,
            lambda_grid,
            step,
            file,
        } => cmd_sweep(&config, &epsilon_grid, &lambda_grid, &step, &out.join(file)),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    config::load(path).map_err(config_error)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    write_atomic(path, contents.as_bytes()).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn apply_overrides(
    e: &mut Experiment,
    step: &StepArgs,
    method: Option<MethodArg>,
) -> Result<(), Failure> {
    if let Some(dt) = step.dt {
        e.sim.dt = dt;
    }
    if let Some(t_end) = step.t_end {
        e.sim.t_end = t_end;
    }
    match method {
        Some(MethodArg::Rk4) => {
            e.sim.method = Method::Rk4;
            e.sim.record_interval = None;
        }
        Some(MethodArg::Rkf45) if e.sim.method == Method::Rk4 => {
            e.sim.method = Method::rkf45_default()
        }
        _ => {}
    }
    e.plant.validate().map_err(config_error)?;
    e.sim.validate(&e.plant).map_err(config_error)
}

fn run_experiment(e: &Experiment) -> Result<Outcome, Failure> {
    e.run().map_err(config_error)
}

fn termination_text(t: Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::Diverged { t } => format!("diverged at t={t:.4}"),
        Termination::Overflow { t } => format!("overflow at t={t:.4}"),
    }
}

/// Output, actuator and nominal input stacked over time.
fn signal_panels(t: &Trajectory) -> Vec<Panel<'_>> {
    [
        ("output", "y", &t.y),
        ("actuator", "u", &t.u),
        ("nominal input", "u_nom", &t.u_nom),
    ]
    .into_iter()
    .map(|(title, label, y)| Panel {
        title: title.into(),
        series: vec![Series {
            label: label.into(),
            x: &t.t,
            y,
        }],
        clip: None,
    })
    .collect()
}

fn outcome_row(e: &Experiment, o: &Outcome) -> Vec<String> {
    let (y, u, un) = o.verdict.final_abs;
    vec![
        e.name.to_string(),
        verdict_name(o.verdict.class).to_string(),
        termination_text(o.trajectory.termination),
        format!("{:.3e}", o.verdict.tail_max_abs),
        format!("{:.3e}", y.max(u).max(un)),
        o.trajectory.steps.to_string(),
        format!("{:.2}s", o.elapsed.as_secs_f64()),
    ]
}

const OUTCOME_HEADER: [&str; 7] = [
    "run",
    "verdict",
    "termination",
    "tail_max",
    "final_max",
    "steps",
    "time",
];

fn cmd_simulate(path: &Path, expect_converge: bool, step: &StepArgs, out: &Path) -> CmdResult {
    let cfg = load(path)?;
    let mut e = Experiment::from_config(&cfg);
    apply_overrides(&mut e, step, None)?;
    let o = run_experiment(&e)?;
    write(&out.join(&cfg.output.csv), &trajectory_csv(&o.trajectory))?;
    if let Some(svg) = &cfg.output.svg {
        write(&out.join(svg), &render(&signal_panels(&o.trajectory), "t"))?;
    }
    print!("{}", text_table(&OUTCOME_HEADER, &[outcome_row(&e, &o)]));
    Ok(
        if expect_converge && o.verdict.class != VerdictClass::Converged {
            EXIT_UNEXPECTED
        } else {
            EXIT_OK
        },
    )
}

fn cmd_certify(path: &Path, out: &Path) -> CmdResult {
    let cfg = load(path)?;
    let report = certify(&cfg.plant, &cfg.controller, cfg.ell_factor).map_err(config_error)?;
    print!("{}", report.to_text());
    write(&out.join(&cfg.output.report), &report.to_key_values())?;
    Ok(if report.passes() {
        EXIT_OK
    } else {
        EXIT_UNEXPECTED
    })
}

/// Parses `identity`, `power:P` or `expquad:C1,C2`.
pub fn parse_beta(text: &str) -> Result<BetaSpec, String> {
    let (name, args) = text.split_once(':').unwrap_or((text, ""));
    let nums: Result<Vec<f64>, _> = args
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let nums = nums.map_err(|_| format!("bad number in `{text}`"))?;
    let beta = match (name.trim(), nums.as_slice()) {
        ("identity", []) => BetaSpec::Identity,
        ("power", [p]) => BetaSpec::Power { p: *p },
        ("expquad", [c1, c2]) => BetaSpec::ExpQuadratic { c1: *c1, c2: *c2 },
        _ => {
            return Err(format!(
                "cannot parse `{text}`; expected identity, power:P or expquad:C1,C2"
            ))
        }
    };
    beta.validate().map_err(|e| e.to_string())?;
    Ok(beta)
}

fn beta_from(config: Option<&Path>, spec: Option<&str>) -> Result<BetaSpec, Failure> {
    match (config, spec) {
        (Some(path), _) => {
            let cfg = load(path)?;
            cfg.controller
                .gain()
                .and_then(|g| g.beta())
                .ok_or_else(|| config_error("the config's controller has no beta gain"))
        }
        (None, Some(s)) => parse_beta(s).map_err(config_error),
        (None, None) => Err(config_error("pass --config or a gain description")),
    }
}

fn cmd_check_nf(
    config: Option<&Path>,
    gain: Option<&str>,
    kernel: Kernel,
    zeta_max: f64,
    grid: usize,
    gate: f64,
) -> CmdResult {
    let beta = beta_from(config, gain)?;
    let opts = NussbaumOptions {
        growth_gate: gate,
        ..NussbaumOptions::default()
    };
    let f = |s: f64| -> Result<f64, GainError> {
        let osc = match kernel {
            Kernel::Cos => s.cos(),
            Kernel::Sin => s.sin(),
        };
        Ok(beta.eval_real_line(s)? * osc)
    };
    let v = nussbaum_index_with(f, zeta_max, grid, &opts).map_err(config_error)?;
    let mut rows = Vec::new();
    for (dir, w) in [("+", &v.positive), ("-", &v.negative)] {
        for (sup, inf) in w.windowed_sup.iter().zip(&w.windowed_inf) {
            rows.push(vec![
                dir.to_string(),
                format!("{:.3}", sup.zeta_end),
                format!("{:.6e}", sup.value),
                format!("{:.6e}", inf.value),
            ]);
        }
    }
    print!(
        "{}",
        text_table(&["direction", "zeta", "running_sup", "running_inf"], &rows)
    );
    println!("classification: {:?}", v.classification);
    if let Some(bound) = v.witness_bound {
        println!("witness bound: {bound:.6}");
    }
    if let Some(d) = &v.diagnostic {
        println!("note: {d}");
    }
    Ok(EXIT_OK)
}

fn cmd_check_beta(
    config: Option<&Path>,
    spec: Option<&str>,
    single: Option<(f64, f64)>,
) -> CmdResult {
    let beta = beta_from(config, spec)?;
    let grid = default_growth_grid();
    let pairs: Vec<(f64, f64)> = match single {
        Some(pair) => vec![pair],
        None => GROWTH_C
            .iter()
            .flat_map(|&c| GROWTH_DELTA.iter().map(move |&d| (c, d)))
            .collect(),
    };
    let mut rows = Vec::new();
    let mut all = true;
    for (c, delta) in pairs {
        let g = check_beta_growth(&beta, c, delta, &grid).map_err(config_error)?;
        all &= g.passes;
        let last = g.values.last().map_or(f64::NAN, |s| s.value());
        rows.push(vec![
            format!("{c}"),
            format!("{delta}"),
            if g.passes { "pass" } else { "fail" }.to_string(),
            format!("{last:.3e}"),
        ]);
    }
    print!(
        "{}",
        text_table(&["c", "delta", "result", "g(z_max)"], &rows)
    );
    if single.is_none() {
        let summary = beta_growth_summary(&beta).map_err(config_error)?;
        println!(
            "{} of {} cases pass",
            summary.cases - summary.failures.len(),
            summary.cases
        );
    }
    Ok(if all { EXIT_OK } else { EXIT_UNEXPECTED })
}

fn report_expectations(results: &[(Experiment, Outcome)]) -> i32 {
    let mut code = EXIT_OK;
    for (e, o) in results {
        if !o.as_expected(e.expected) {
            code = EXIT_UNEXPECTED;
            println!(
                "unexpected verdict for {}: expected {}, got {} ({})",
                e.name,
                verdict_name(e.expected),
                verdict_name(o.verdict.class),
                termination_text(o.trajectory.termination)
            );
        }
    }
    code
}

fn cmd_reproduce_fig4(step: &StepArgs, method: Option<MethodArg>, out: &Path) -> CmdResult {
    let mut results = Vec::new();
    for mut e in fig4_experiments() {
        apply_overrides(&mut e, step, method)?;
        let o = run_experiment(&e)?;
        write(
            &out.join(format!("fig4_{}.csv", e.name)),
            &trajectory_csv(&o.trajectory),
        )?;
        results.push((e, o));
    }
    let series = results
        .iter()
        .map(|(e, o)| Series {
            label: e.label.to_string(),
            x: &o.trajectory.t,
            y: &o.trajectory.y,
        })
        .collect();
    let doc = render(
        &[Panel {
            title: "output y(t), linear plant".into(),
            series,
            clip: Some(20.0),
        }],
        "t",
    );
    write(&out.join("fig4_y.svg"), &doc)?;
    let rows: Vec<_> = results.iter().map(|(e, o)| outcome_row(e, o)).collect();
    print!("{}", text_table(&OUTCOME_HEADER, &rows));
    Ok(report_expectations(&results))
}

fn cmd_reproduce_fig5(
    step: &StepArgs,
    method: Option<MethodArg>,
    epsilon: Option<f64>,
    y0: Option<f64>,
    u0: Option<f64>,
    out: &Path,
) -> CmdResult {
    let mut e = fig5_experiment();
    if let Some(eps) = epsilon {
        e.plant.epsilon = eps;
    }
    e.y0 = y0.unwrap_or(e.y0);
    e.u0 = u0.unwrap_or(e.u0);
    apply_overrides(&mut e, step, method)?;
    let o = run_experiment(&e)?;
    write(&out.join("fig5.csv"), &trajectory_csv(&o.trajectory))?;
    write(
        &out.join("fig5.svg"),
        &render(&signal_panels(&o.trajectory), "t"),
    )?;
    print!("{}", text_table(&OUTCOME_HEADER, &[outcome_row(&e, &o)]));
    Ok(report_expectations(&[(e, o)]))
}

/// Parses `a,b,c` or `start:stop:count` (inclusive, evenly spaced). An empty
/// string is an empty grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{}` is not a finite number", s.trim()))
    };
    if let [start, stop, count] = text.split(':').collect::<Vec<_>>()[..] {
        let (a, b) = (num(start)?, num(stop)?);
        let n: usize = count
            .trim()
            .parse()
            .map_err(|_| format!("`{}` is not a count", count.trim()))?;
        return Ok(match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect(),
        });
    }
    text.split(',').map(num).collect()
}

fn cmd_sweep(path: &Path, eps: &str, lambdas: &str, step: &StepArgs, file: &Path) -> CmdResult {
    let cfg = load(path)?;
    let eps = parse_grid(eps).map_err(|e| config_error(format!("--epsilon-grid: {e}")))?;
    let lambdas = parse_grid(lambdas).map_err(|e| config_error(format!("--lambda-grid: {e}")))?;
    let mut base = Experiment::from_config(&cfg);
    apply_overrides(&mut base, step, None)?;
    let cells = sweep(&base, &eps, &lambdas).map_err(config_error)?;
    write(file, &sweep_csv(&cells))?;
    let count = |v: VerdictClass| cells.iter().filter(|c| c.verdict == v).count();
    println!(
        "{} cells: {} Converged, {} BoundedNonConverged, {} Diverged; wrote {}",
        cells.len(),
        count(VerdictClass::Converged),
        count(VerdictClass::BoundedNonConverged),
        count(VerdictClass::Diverged),
        file.display()
    );
    let worst = cells
        .iter()
        .filter(|c| c.margin > 0.0 && c.verdict == VerdictClass::Diverged)
        .count();
    if worst > 0 {
        println!("{worst} diverged cells have a positive margin");
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.5:1:1").unwrap(), vec![0.5]);
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("0:1:x").is_err());
        assert!(parse_grid("inf").is_err());
    }

    #[test]
    fn beta_parsing() {
        assert_eq!(parse_beta("identity").unwrap(), BetaSpec::Identity);
        assert_eq!(parse_beta("power:2").unwrap(), BetaSpec::Power { p: 2.0 });
        assert_eq!(
            parse_beta("expquad:1,0.1").unwrap(),
            BetaSpec::ExpQuadratic { c1: 1.0, c2: 0.1 }
        );
        assert!(parse_beta("power").is_err());
        assert!(parse_beta("power:-1").is_err());
        assert!(parse_beta("cubic").is_err());
    }

    #[test]
    fn seedless_is_rejected() {
        assert_eq!(
            run_from_args(["npi-lab", "--seedless", "reproduce-fig5"]),
            EXIT_CONFIG
        );
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run_from_args(["npi-lab", "simulate"]), EXIT_CONFIG);
        assert_eq!(run_from_args(["npi-lab", "bogus"]), EXIT_CONFIG);
    }
}
