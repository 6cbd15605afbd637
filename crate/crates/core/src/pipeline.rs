//! Scenario execution: runs in dependency order, CSV artifacts, manifest and
//! optional SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::acceptance::{self, format_line, results_csv, VerifyOptions};
use crate::asymptotics::{expansion_bundle, loss_sweep, ExpansionBundle};
use crate::error::{Error, Result};
use crate::hjb::{optimal_policy, solve_log_level, solve_u, value_at, GaussianPolicyField, ValueSurface};
use crate::io::fmt17;
use crate::market::{MarketModel, Preference, Utility};
use crate::pde::{Grid, ScalarField};
use crate::scenario::{plan_runs, ConfigError, ModelSpec, PreferenceSpec, RunKind, Scenario};
use crate::simulate::{simulate_exploratory_wealth, summary_csv, McEstimate, SummaryRow};
use crate::variants::{
    apu_divergence_demo, bsde_residual, cara_solve, explosion_time_quadrature, wealth_temperature_ode, CaraSolution, OdeOutcome,
    OdeParams,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    RunFailure,
    ConfigError,
}

impl ExitStatus {
    pub fn code(&self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::RunFailure => 1,
            ExitStatus::ConfigError => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub run: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: RunKind,
    pub implicit: bool,
    /// `ok` or `FAILED`.
    pub status: String,
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub software: Software,
    pub started: String,
    pub finished: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub runs: Vec<RunRecord>,
    /// Every file written, CSVs and plots alike.
    pub outputs: Vec<FileRecord>,
    pub plot_errors: Vec<String>,
}

#[derive(Debug)]
pub struct PipelineReport {
    pub status: ExitStatus,
    pub manifest: Option<Manifest>,
    /// Set when the run stopped before any compute.
    pub config_error: Option<ConfigError>,
    pub verify: Vec<acceptance::Outcome>,
}

impl PipelineReport {
    pub fn code(&self) -> i32 {
        self.status.code()
    }
}

/// Knobs for the verify run that are not part of the scenario.
#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub criteria: Vec<String>,
    pub coarsen: usize,
    pub mc_paths: usize,
    /// Print each verify line as it completes.
    pub echo: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        let d = VerifyOptions::default();
        Self {
            criteria: Vec::new(),
            coarsen: d.coarsen,
            mc_paths: d.mc_paths,
            echo: false,
        }
    }
}

pub fn execute(scenario: &Scenario) -> PipelineReport {
    execute_with(scenario, &ExecOptions::default())
}

fn config_failure(e: ConfigError) -> PipelineReport {
    PipelineReport {
        status: ExitStatus::ConfigError,
        manifest: None,
        config_error: Some(e),
        verify: Vec::new(),
    }
}

/// Fails unless the directory can be created and written to.
pub fn probe_output_dir(dir: &Path) -> std::result::Result<(), ConfigError> {
    let fail = |e: std::io::Error| ConfigError::Output(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".rpu-write-probe");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Outputs {
    fn write(&mut self, run: &str, name: &str, contents: &[u8]) -> Result<String> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(FileRecord {
            file: name.to_string(),
            run: run.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
        Ok(name.to_string())
    }
}

/// Results carried between runs.
#[derive(Default)]
struct State {
    u: Option<ScalarField>,
    surface: Option<ValueSurface>,
    policy: Option<GaussianPolicyField>,
    bundle: Option<ExpansionBundle>,
    cara: Option<CaraSolution>,
}

struct Env<'a> {
    scenario: &'a Scenario,
    model: MarketModel,
    pref: Preference,
    grid: Grid,
}

pub fn execute_with(scenario: &Scenario, opts: &ExecOptions) -> PipelineReport {
    if let Err(e) = probe_output_dir(&scenario.output_dir) {
        return config_failure(e);
    }
    let built = (|| -> Result<Env> {
        Ok(Env {
            scenario,
            model: scenario.model()?,
            pref: scenario.preference()?,
            grid: scenario.grid()?,
        })
    })();
    let env = match built {
        Ok(e) => e,
        Err(e) => return config_failure(ConfigError::Range { path: "model".into(), message: e.to_string() }),
    };
    if let Err(e) = env.model.validate_on(&env.grid).into_result() {
        return config_failure(ConfigError::Range { path: "model".into(), message: e.to_string() });
    }

    let started = now();
    let mut out = Outputs {
        dir: scenario.output_dir.clone(),
        files: Vec::new(),
    };
    let mut state = State::default();
    let mut runs = Vec::new();
    let mut verify = Vec::new();
    let mut failed: Vec<RunKind> = Vec::new();

    for planned in plan_runs(&scenario.run) {
        let clock = Instant::now();
        let before = out.files.len();
        let blocked = planned.kind.requires().filter(|d| failed.contains(d));
        let result = match blocked {
            Some(dep) => Err(Error::PrerequisiteFailed(dep.to_string())),
            None => match planned.kind {
                RunKind::Solve => run_solve(&env, &mut state, &mut out),
                RunKind::Policy => run_policy(&env, &mut state, &mut out),
                RunKind::Simulate => run_simulate(&env, &state, &mut out),
                RunKind::Expand => run_expand(&env, &mut state, &mut out),
                RunKind::Loss => run_loss(&env, &state, &mut out),
                RunKind::Variants => run_variants(&env, &state, &mut out),
                RunKind::Verify => run_verify(&env, opts, &mut out, &mut verify),
            },
        };
        if result.is_err() {
            failed.push(planned.kind);
        }
        runs.push(RunRecord {
            run: planned.kind,
            implicit: planned.implicit,
            status: if result.is_ok() { "ok" } else { "FAILED" }.into(),
            error: result.err().map(|e| e.to_string()),
            wall_seconds: clock.elapsed().as_secs_f64(),
            outputs: out.files[before..].iter().map(|f| f.file.clone()).collect(),
        });
    }

    let mut plot_errors = Vec::new();
    if scenario.plots {
        plot_errors = write_plots(&mut out);
    }
    let manifest = Manifest {
        software: Software {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        started,
        finished: now(),
        seed: scenario.sim.seed,
        scenario: scenario.clone(),
        runs,
        outputs: out.files.clone(),
        plot_errors,
    };
    let status = match serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(e.to_string()))
        .and_then(|s| std::fs::write(out.dir.join(MANIFEST_FILE), s + "\n").map_err(Error::from))
    {
        Err(_) => ExitStatus::RunFailure,
        Ok(()) if failed.is_empty() => ExitStatus::Success,
        Ok(()) => ExitStatus::RunFailure,
    };
    PipelineReport {
        status,
        manifest: Some(manifest),
        config_error: None,
        verify,
    }
}

fn is_cara(pref: &Preference) -> bool {
    matches!(pref.utility(), Utility::Cara { .. })
}

fn constant_lambda(pref: &Preference) -> f64 {
    pref.constant_lambda().unwrap_or(0.0)
}

fn run_solve(env: &Env, state: &mut State, out: &mut Outputs) -> Result<()> {
    if is_cara(&env.pref) {
        let sol = cara_solve(&env.model, env.pref.gamma(), constant_lambda(&env.pref), &env.grid)?;
        out.write("solve", "u.csv", sol.u.to_csv().as_bytes())?;
        state.cara = Some(sol);
        return Ok(());
    }
    let u = solve_u(&env.model, &env.pref, &env.grid)?;
    let level = if env.pref.is_log() {
        solve_log_level(&env.model, &env.pref, &env.grid)?
    } else {
        u.clone()
    };
    let surface = ValueSurface::new(level, env.pref.utility())?;
    out.write("solve", "u.csv", surface.field().to_csv().as_bytes())?;
    state.u = Some(u);
    state.surface = Some(surface);
    Ok(())
}

fn run_policy(env: &Env, state: &mut State, out: &mut Outputs) -> Result<()> {
    let policy = match (&state.cara, &state.u) {
        (Some(sol), _) => sol.policy()?,
        (None, Some(u)) => optimal_policy(u, &env.model, &env.pref)?,
        _ => return Err(Error::InvalidModel("no solved value function".into())),
    };
    out.write("policy", "policy.csv", policy.to_csv().as_bytes())?;
    state.policy = Some(policy);
    Ok(())
}

fn run_simulate(env: &Env, state: &State, out: &mut Outputs) -> Result<()> {
    let policy = state
        .policy
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("no policy to simulate".into()))?;
    let sim = &env.scenario.sim;
    let ens = simulate_exploratory_wealth(&env.model, &env.pref, policy, &sim.config())?;
    let reference = state.surface.as_ref().and_then(|s| value_at(s, 0.0, sim.x0, sim.w0).ok());
    let rows = vec![
        SummaryRow {
            name: "rpu_value".into(),
            estimate: ens.rpu_estimate(&env.pref),
            reference,
        },
        SummaryRow {
            name: "terminal_utility".into(),
            estimate: ens.terminal_utility_estimate(&env.pref),
            reference: None,
        },
        SummaryRow {
            name: "terminal_wealth".into(),
            estimate: ens.estimate(|p| ens.terminal_wealth(p)),
            reference: None,
        },
        SummaryRow {
            name: "terminal_factor".into(),
            estimate: ens.estimate(|p| ens.terminal_x(p)),
            reference: None,
        },
        SummaryRow {
            name: "min_wealth".into(),
            estimate: McEstimate {
                mean: ens.min_wealth(),
                standard_error: 0.0,
                n_paths: ens.n_paths(),
            },
            reference: None,
        },
    ];
    out.write("simulate", "simulation_summary.csv", summary_csv(&rows).as_bytes())?;
    if sim.dump_paths {
        out.write("simulate", "paths.csv", ens.path_csv()?.as_bytes())?;
    }
    Ok(())
}

fn run_expand(env: &Env, state: &mut State, out: &mut Outputs) -> Result<()> {
    let bundle = expansion_bundle(&env.model, &env.pref, &env.grid)?;
    let g = bundle.grid();
    let mut s = String::from("t,x,u0,u1,u2,phi2\n");
    for n in 0..g.t_nodes() {
        for i in 0..g.x_nodes() {
            let cells = [g.t(n), g.x(i), bundle.u0.at(n, i), bundle.u1.at(n, i), bundle.u2.at(n, i), bundle.phi2.at(n, i)];
            let row: Vec<String> = cells.iter().map(|v| fmt17(*v)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
    }
    out.write("expand", "expansion.csv", s.as_bytes())?;
    state.bundle = Some(bundle);
    Ok(())
}

fn run_loss(env: &Env, state: &State, out: &mut Outputs) -> Result<()> {
    let bundle = state
        .bundle
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("no expansion bundle".into()))?;
    let reports = loss_sweep(bundle, &env.model, &env.pref, &env.scenario.expansion.lambdas)?;
    let mut s = String::new();
    for (k, r) in reports.iter().enumerate() {
        let csv = r.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            let _ = writeln!(s, "lambda,{header}");
        }
        let l = fmt17(r.lambda);
        for line in lines {
            let _ = writeln!(s, "{l},{line}");
        }
    }
    out.write("loss", "loss.csv", s.as_bytes())?;
    Ok(())
}

fn run_variants(env: &Env, state: &State, out: &mut Outputs) -> Result<()> {
    let sc = env.scenario;
    let v = &sc.variants;
    let horizon = env.model.horizon();
    let mut rows: Vec<(String, f64, String)> = Vec::new();
    let mut push = |name: &str, value: Result<f64>, note: String| match value {
        Ok(x) => rows.push((name.to_string(), x, note)),
        Err(e) => rows.push((name.to_string(), f64::NAN, format!("error: {e}"))),
    };

    match apu_divergence_demo(v.apu_gamma, v.apu_lambda, horizon, &[1.0, 2f64.exp()]) {
        Ok(s) => {
            push("apu_bound_at_1", Ok(s.bounds[0]), String::new());
            push("apu_shift_e2", Ok(s.bounds[1] - s.bounds[0]), "equals lambda*T".into());
            push("apu_log_witness", Ok(s.log_witness(v.apu_threshold)), format!("ln v* for threshold {}", v.apu_threshold));
        }
        Err(e) => push("apu_bound_at_1", Err(e), String::new()),
    }

    let ode = match (&sc.model, &sc.preference) {
        (ModelSpec::BlackScholes { r, mu, sigma, .. }, PreferenceSpec::Crra { gamma, lambda }) => Ok(OdeParams {
            r: *r,
            mu: *mu,
            sigma: *sigma,
            gamma: *gamma,
            lambda: *lambda,
            horizon: v.ode_horizon,
        }),
        _ => Err(Error::InvalidModel("needs a black_scholes model with crra utility".into())),
    };
    match ode {
        Ok(p) => {
            match wealth_temperature_ode(&p) {
                Ok(r) => {
                    let (note, tau) = match r.outcome {
                        OdeOutcome::SurvivedTo(t) => ("survived".to_string(), t),
                        OdeOutcome::HitZeroAt(t) => ("hit_zero".to_string(), t),
                    };
                    push("ode_tau", Ok(tau), note);
                    push("ode_phi_end", Ok(r.last().1), String::new());
                }
                Err(e) => push("ode_tau", Err(e), String::new()),
            }
            push("explosion_quadrature", explosion_time_quadrature(&p), String::new());
        }
        Err(e) => push("ode_tau", Err(e), String::new()),
    }

    let lambda = constant_lambda(&env.pref);
    let i = env.grid.nearest_x(sc.sim.x0);
    let cara = match &state.cara {
        Some(sol) => Ok(sol.clone()),
        None => cara_solve(&env.model, env.pref.gamma(), lambda, &env.grid),
    };
    match cara {
        Ok(sol) => {
            push("cara_mean_t0", Ok(sol.mean.at(0, i)), format!("x = {}", env.grid.x(i)));
            push("cara_variance_t0", Ok(sol.variance.at(0, i)), format!("x = {}", env.grid.x(i)));
        }
        Err(e) => push("cara_mean_t0", Err(e), String::new()),
    }

    if !is_cara(&env.pref) {
        let u = match &state.u {
            Some(u) => Ok(u.clone()),
            None => solve_u(&env.model, &env.pref, &env.grid),
        };
        push("bsde_residual", u.and_then(|u| bsde_residual(&env.model, &env.pref, &u, lambda)), String::new());
    }

    let mut s = String::from("name,value,note\n");
    for (name, value, note) in &rows {
        let _ = writeln!(s, "{name},{},{}", fmt17(*value), note.replace(',', ";"));
    }
    out.write("variants", "variants.csv", s.as_bytes())?;
    Ok(())
}

fn run_verify(env: &Env, opts: &ExecOptions, out: &mut Outputs, outcomes: &mut Vec<acceptance::Outcome>) -> Result<()> {
    let vopts = VerifyOptions {
        coarsen: opts.coarsen,
        seed: env.scenario.sim.seed,
        mc_paths: opts.mc_paths,
        selection: opts.criteria.clone(),
        factor: Some(env.scenario.model.clone()),
        scratch: Some(out.dir.clone()),
    };
    let echo = opts.echo;
    *outcomes = acceptance::run_suite_with(&vopts, |o| {
        if echo {
            println!("{}", format_line(o));
        }
    });
    out.write("verify", "verify.csv", results_csv(outcomes).as_bytes())?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CriteriaFailed(failed.join(", ")))
    }
}

// ---- plots ----------------------------------------------------------------

type Series = (String, Vec<(f64, f64)>);

fn read_long_csv(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

/// Rows of a long table at the first time value, as `(x, column)` pairs,
/// split by an optional grouping column.
fn first_slice(path: &Path, value: &str, group: Option<&str>) -> std::result::Result<Vec<Series>, String> {
    let (header, rows) = read_long_csv(path).map_err(|e| e.to_string())?;
    let (ct, cx) = (column(&header, "t"), column(&header, "x"));
    let cv = column(&header, value);
    let (Some(ct), Some(cx), Some(cv)) = (ct, cx, cv) else {
        return Err(format!("{}: missing t, x or {value} column", path.display()));
    };
    let cg = group.and_then(|g| column(&header, g));
    let t0 = rows.first().map(|r| r[ct]).unwrap_or(0.0);
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r[ct] == t0) {
        let key = match (cg, group) {
            (Some(c), Some(g)) => format!("{g} = {}", r[c]),
            _ => value.to_string(),
        };
        groups.entry(key).or_default().push((r[cx], r[cv]));
    }
    Ok(groups.into_iter().collect())
}

fn wide_first_row(path: &Path) -> std::result::Result<Vec<Series>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let xs: Vec<f64> = lines.next().unwrap_or_default().split(',').skip(1).filter_map(|c| c.parse().ok()).collect();
    let first: Vec<f64> = lines.next().unwrap_or_default().split(',').skip(1).filter_map(|c| c.parse().ok()).collect();
    Ok(vec![("t = 0".into(), xs.into_iter().zip(first).collect())])
}

fn wealth_paths(path: &Path, max_paths: usize) -> std::result::Result<Vec<Series>, String> {
    let (header, rows) = read_long_csv(path).map_err(|e| e.to_string())?;
    let (Some(cp), Some(ct), Some(cw)) = (column(&header, "path"), column(&header, "t"), column(&header, "W")) else {
        return Err(format!("{}: missing path, t or W column", path.display()));
    };
    let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        let p = r[cp] as u64;
        if (p as usize) < max_paths {
            groups.entry(p).or_default().push((r[ct], r[cw]));
        }
    }
    Ok(groups.into_iter().map(|(p, v)| (format!("path {p}"), v)).collect())
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Static line chart.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 20.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    if !(x0 < x1) {
        x1 = x0 + 1.0;
    }
    if !(y0 < y1) {
        let pad = if y0.is_finite() && y0 != 0.0 { y0.abs() * 0.1 } else { 1.0 };
        y0 -= pad;
        y1 = y0 + 2.0 * pad;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for (v, anchor, x, y) in [
        (x0, "start", left, h - bottom + 16.0),
        (x1, "end", w - right, h - bottom + 16.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.4}</text>"#);
    }
    for (v, y) in [(y0, h - bottom), (y1, top + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.4e}</text>"#, left - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (k, (name, data)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = data
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        if series.len() <= PALETTE.len() {
            let ly = top + 14.0 + 14.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{colour}">{}</text>"#, left + 8.0, escape(name));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Draws a chart for each CSV present; returns the errors instead of failing.
fn write_plots(out: &mut Outputs) -> Vec<String> {
    type Loader = Box<dyn Fn(&Path) -> std::result::Result<Vec<Series>, String>>;
    let specs: Vec<(&str, &str, &str, &str, &str, Loader)> = vec![
        ("u.csv", "u_t0.svg", "value exponent at t = 0", "x", "u", Box::new(wide_first_row)),
        ("policy.csv", "policy_t0.svg", "policy mean at t = 0", "x", "mean", Box::new(|p| first_slice(p, "mean", None))),
        ("expansion.csv", "expansion_t0.svg", "first-order correction at t = 0", "x", "u1", Box::new(|p| first_slice(p, "u1", None))),
        ("loss.csv", "loss_bias_t0.svg", "policy bias at t = 0", "x", "bias", Box::new(|p| first_slice(p, "bias", Some("lambda")))),
        ("paths.csv", "paths.svg", "wealth paths", "t", "W", Box::new(|p| wealth_paths(p, 20))),
    ];
    let mut errors = Vec::new();
    for (csv, svg, title, xl, yl, load) in specs {
        let path = out.dir.join(csv);
        if !path.exists() {
            continue;
        }
        let result = load(&path).and_then(|series| {
            let chart = svg_line_chart(title, xl, yl, &series);
            out.write("plots", svg, chart.as_bytes()).map_err(|e| e.to_string())
        });
        if let Err(e) = result {
            errors.push(format!("{svg}: {e}"));
        }
    }
    errors
}
