use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpu_merton::acceptance::{is_known_id, CRITERIA};
use rpu_merton::pipeline::{execute_with, ExecOptions, MANIFEST_FILE};
use rpu_merton::scenario::{parse_scenario, ConfigError, RunKind, Scenario};

#[derive(Parser)]
#[command(name = "rpu", version, about = "Merton portfolio choice under recursive perturbed utility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON scenario file; a built-in Black–Scholes scenario is used if absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the scenario's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed (overrides `sim.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Also draw SVG plots from the written CSVs.
    #[arg(long)]
    plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reduced HJB equation and write u.csv.
    Solve(Common),
    /// Solve, then write the optimal Gaussian policy.
    Policy(Common),
    /// Solve, build the policy and simulate wealth paths.
    Simulate(Common),
    /// Small-temperature expansion fields.
    Expand(Common),
    /// Bias and wealth-loss sweep over the scenario's temperatures.
    Loss(Common),
    /// Additive perturbation, wealth-scaled temperature, CARA and BSDE checks.
    Variants(Common),
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run only this criterion id (repeatable).
        #[arg(long = "criterion")]
        criteria: Vec<String>,
        /// Divide default grid resolutions by this factor.
        #[arg(long, default_value_t = 1)]
        coarsen: usize,
        /// Path count of the Black–Scholes value check.
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
    },
    /// Execute the scenario's own run list.
    Run(Common),
}

fn load(common: &Common, run: Option<RunKind>) -> Result<Scenario, ConfigError> {
    let mut scenario = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
            parse_scenario(&text)?
        }
        None if run.is_none() => return Err(ConfigError::Io("`run` needs --config".into())),
        None => Scenario::default_black_scholes(vec![RunKind::Solve]),
    };
    if let Some(kind) = run {
        scenario.run = vec![kind];
    }
    if let Some(out) = &common.out {
        scenario.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        scenario.sim.seed = seed;
    }
    scenario.plots |= common.plots;
    Ok(scenario)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut exec = ExecOptions::default();
    let (common, run) = match cli.command {
        Command::Solve(c) => (c, Some(RunKind::Solve)),
        Command::Policy(c) => (c, Some(RunKind::Policy)),
        Command::Simulate(c) => (c, Some(RunKind::Simulate)),
        Command::Expand(c) => (c, Some(RunKind::Expand)),
        Command::Loss(c) => (c, Some(RunKind::Loss)),
        Command::Variants(c) => (c, Some(RunKind::Variants)),
        Command::Verify {
            common,
            criteria,
            coarsen,
            paths,
        } => {
            if let Some(bad) = criteria.iter().find(|c| !is_known_id(c)) {
                let ids: Vec<&str> = CRITERIA.iter().map(|(id, _)| *id).collect();
                eprintln!("error: unknown criterion `{bad}`; known: {}", ids.join(", "));
                return ExitCode::from(2);
            }
            if coarsen == 0 || paths == 0 {
                eprintln!("error: --coarsen and --paths must be positive");
                return ExitCode::from(2);
            }
            exec = ExecOptions {
                criteria,
                coarsen,
                mc_paths: paths,
                echo: true,
            };
            (common, Some(RunKind::Verify))
        }
        Command::Run(c) => (c, None),
    };

    let scenario = match load(&common, run) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = execute_with(&scenario, &exec);
    if let Some(e) = &report.config_error {
        eprintln!("error: {e}");
        return ExitCode::from(report.code() as u8);
    }
    if let Some(m) = &report.manifest {
        for r in &m.runs {
            let tag = if r.implicit { " (implicit)" } else { "" };
            match &r.error {
                None => println!("{:<9} ok      {:>8.2} s  {}{tag}", r.run.name(), r.wall_seconds, r.outputs.join(" ")),
                Some(e) => println!("{:<9} FAILED  {:>8.2} s  {e}{tag}", r.run.name(), r.wall_seconds),
            }
        }
        for e in &m.plot_errors {
            println!("plot skipped: {e}");
        }
    }
    if !report.verify.is_empty() {
        let passed = report.verify.iter().filter(|o| o.pass).count();
        println!("{passed}/{} criteria passed", report.verify.len());
    }
    println!("manifest: {}", scenario.output_dir.join(MANIFEST_FILE).display());
    ExitCode::from(report.code() as u8)
}
