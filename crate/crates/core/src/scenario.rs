//! JSON scenario documents: parsing, schema errors with suggestions, range
//! checks, and materialized defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result as CoreResult;
use crate::market::{CustomCoefficients, MarketModel, Preference};
use crate::pde::Grid;
use crate::simulate::{Recording, SimConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error at `{path}`: {message}{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    Schema {
        path: String,
        message: String,
        suggestion: Option<String>,
    },
    #[error("range error at `{path}`: {message}")]
    Range { path: String, message: String },
    #[error("output directory error: {0}")]
    Output(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl ConfigError {
    fn range(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Range {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

/// Market model as written in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    BlackScholes {
        r: f64,
        mu: f64,
        sigma: f64,
        horizon: f64,
    },
    FactorPremium {
        r: f64,
        rho: f64,
        horizon: f64,
        sigma: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    },
    StochVol {
        r: f64,
        rho: f64,
        horizon: f64,
        eta: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    },
    /// OU factor with volatility `sigma0·exp(beta (x−theta)²)` and risk
    /// premium `σ(x)·x`.
    LevelVol {
        r: f64,
        rho: f64,
        horizon: f64,
        sigma0: f64,
        beta: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    },
}

impl ModelSpec {
    pub fn horizon(&self) -> f64 {
        match self {
            ModelSpec::BlackScholes { horizon, .. }
            | ModelSpec::FactorPremium { horizon, .. }
            | ModelSpec::StochVol { horizon, .. }
            | ModelSpec::LevelVol { horizon, .. } => *horizon,
        }
    }

    pub fn build(&self) -> CoreResult<MarketModel> {
        match *self {
            ModelSpec::BlackScholes { r, mu, sigma, horizon } => MarketModel::black_scholes(r, mu, sigma, horizon),
            ModelSpec::FactorPremium {
                r,
                rho,
                horizon,
                sigma,
                kappa,
                theta,
                nu,
            } => MarketModel::factor_premium(r, rho, horizon, sigma, kappa, theta, nu),
            ModelSpec::StochVol {
                r,
                rho,
                horizon,
                eta,
                kappa,
                theta,
                nu,
            } => MarketModel::stoch_vol(r, rho, horizon, eta, kappa, theta, nu),
            ModelSpec::LevelVol {
                r,
                rho,
                horizon,
                sigma0,
                beta,
                kappa,
                theta,
                nu,
            } => level_vol_model(r, rho, horizon, sigma0, beta, kappa, theta, nu),
        }
    }

    /// Natural starting factor value: the OU mean, or 0 without a factor.
    pub fn default_x0(&self) -> f64 {
        match self {
            ModelSpec::BlackScholes { .. } => 0.0,
            ModelSpec::FactorPremium { theta, .. } | ModelSpec::StochVol { theta, .. } | ModelSpec::LevelVol { theta, .. } => *theta,
        }
    }

    /// Truncated factor domain used when the grid does not give one.
    pub fn default_x_domain(&self) -> (f64, f64) {
        match *self {
            ModelSpec::LevelVol { kappa, theta, nu, .. } => {
                let sd = nu / (2.0 * kappa).sqrt();
                (theta - 5.0 * sd, theta + 5.0 * sd)
            }
            _ => self.build().map(|m| m.default_x_domain()).unwrap_or((-5.0, 5.0)),
        }
    }
}

/// Custom model with volatility `σ0·exp(β(x−θ)²)`, premium `σ(x)·x` and an OU
/// factor.
#[allow(clippy::too_many_arguments)]
pub fn level_vol_model(r: f64, rho: f64, horizon: f64, sigma0: f64, beta: f64, kappa: f64, theta: f64, nu: f64) -> CoreResult<MarketModel> {
    let vol = move |x: f64| sigma0 * (beta * (x - theta) * (x - theta)).exp();
    MarketModel::custom(
        r,
        rho,
        horizon,
        CustomCoefficients::new(
            move |_, x| r + vol(x) * x,
            move |_, x| vol(x),
            move |_, x| kappa * (theta - x),
            move |_, _| nu,
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "utility", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreferenceSpec {
    Crra { gamma: f64, lambda: f64 },
    Log { lambda: f64 },
    Cara { gamma: f64, lambda: f64 },
}

impl PreferenceSpec {
    pub fn build(&self) -> CoreResult<Preference> {
        match *self {
            PreferenceSpec::Crra { gamma, lambda } => Preference::crra(gamma, lambda),
            PreferenceSpec::Log { lambda } => Preference::log(lambda),
            PreferenceSpec::Cara { gamma, lambda } => Preference::cara(gamma, lambda),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            PreferenceSpec::Crra { lambda, .. } | PreferenceSpec::Log { lambda } | PreferenceSpec::Cara { lambda, .. } => lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_nodes: usize,
    pub x_nodes: usize,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> CoreResult<Grid> {
        Grid::new(horizon, self.t_nodes, self.x_lo, self.x_hi, self.x_nodes)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_nodes: Option<usize>,
    x_nodes: Option<usize>,
    x_lo: Option<f64>,
    x_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub w0: f64,
    pub x0: f64,
    pub antithetic: bool,
    /// Also write every path node to `paths.csv`.
    pub dump_paths: bool,
}

impl SimSpec {
    pub fn config(&self) -> SimConfig {
        SimConfig::new(self.n_paths, self.dt, self.seed)
            .with_start(self.w0, self.x0)
            .with_antithetic(self.antithetic)
            .with_recording(if self.dump_paths { Recording::Full } else { Recording::Terminal })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    n_paths: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
    w0: Option<f64>,
    x0: Option<f64>,
    antithetic: Option<bool>,
    dump_paths: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionSpec {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.04, 0.02, 0.01]
}

impl Default for ExpansionSpec {
    fn default() -> Self {
        Self { lambdas: default_lambdas() }
    }
}

/// Parameters of the variant runs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariantsSpec {
    pub apu_gamma: f64,
    pub apu_lambda: f64,
    pub apu_threshold: f64,
    pub ode_horizon: f64,
}

impl Default for VariantsSpec {
    fn default() -> Self {
        Self {
            apu_gamma: 0.5,
            apu_lambda: 0.1,
            apu_threshold: 1e6,
            ode_horizon: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Solve,
    Policy,
    Simulate,
    Expand,
    Loss,
    Variants,
    Verify,
}

impl RunKind {
    pub const ALL: [RunKind; 7] = [
        RunKind::Solve,
        RunKind::Policy,
        RunKind::Simulate,
        RunKind::Expand,
        RunKind::Loss,
        RunKind::Variants,
        RunKind::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RunKind::Solve => "solve",
            RunKind::Policy => "policy",
            RunKind::Simulate => "simulate",
            RunKind::Expand => "expand",
            RunKind::Loss => "loss",
            RunKind::Variants => "variants",
            RunKind::Verify => "verify",
        }
    }

    /// Direct prerequisite, if any.
    pub fn requires(&self) -> Option<RunKind> {
        match self {
            RunKind::Policy => Some(RunKind::Solve),
            RunKind::Simulate => Some(RunKind::Policy),
            RunKind::Loss => Some(RunKind::Expand),
            _ => None,
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One planned run and whether the user asked for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlannedRun {
    pub kind: RunKind,
    pub implicit: bool,
}

/// Requested runs plus their prerequisites, in dependency order.
pub fn plan_runs(requested: &[RunKind]) -> Vec<PlannedRun> {
    let asked: BTreeSet<RunKind> = requested.iter().copied().collect();
    let mut all = asked.clone();
    for k in requested {
        let mut cur = *k;
        while let Some(dep) = cur.requires() {
            all.insert(dep);
            cur = dep;
        }
    }
    RunKind::ALL
        .iter()
        .filter(|k| all.contains(k))
        .map(|k| PlannedRun {
            kind: *k,
            implicit: !asked.contains(k),
        })
        .collect()
}

/// Fully materialized scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub model: ModelSpec,
    pub preference: PreferenceSpec,
    pub grid: GridSpec,
    pub sim: SimSpec,
    pub expansion: ExpansionSpec,
    pub variants: VariantsSpec,
    pub run: Vec<RunKind>,
    pub output_dir: PathBuf,
    pub plots: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    model: ModelSpec,
    preference: PreferenceSpec,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    expansion: ExpansionSpec,
    #[serde(default)]
    variants: VariantsSpec,
    run: Vec<RunKind>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    plots: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("rpu-output")
}

const TOP_KEYS: &[&str] = &["model", "preference", "grid", "sim", "expansion", "variants", "run", "output_dir", "plots"];

fn suggest(unknown: &str, expected: &[&str]) -> Option<String> {
    expected
        .iter()
        .map(|k| (strsim::damerau_levenshtein(unknown, k), *k))
        .filter(|(d, k)| *d <= 2.max(k.len() / 3))
        .min()
        .map(|(_, k)| k.to_string())
}

/// Extracts the offending name and the expected names from a serde message.
fn parse_unknown(msg: &str) -> Option<(String, Vec<String>)> {
    let kind = if msg.starts_with("unknown field") {
        "field"
    } else if msg.starts_with("unknown variant") {
        "variant"
    } else {
        return None;
    };
    let _ = kind;
    let ticks: Vec<&str> = msg.split('`').collect();
    let name = ticks.get(1)?.to_string();
    let expected = ticks.iter().skip(3).step_by(2).map(|s| s.to_string()).collect();
    Some((name, expected))
}

/// Parses and validates a scenario document, filling in every default.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = match serde_path_to_error::deserialize(de) {
        Ok(v) => v,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            use serde_json::error::Category;
            return Err(match inner.classify() {
                Category::Syntax | Category::Eof | Category::Io => ConfigError::Parse(inner.to_string()),
                Category::Data => {
                    let msg = inner.to_string();
                    let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
                    let suggestion = parse_unknown(&msg).and_then(|(name, expected)| {
                        let exp: Vec<&str> = if expected.is_empty() {
                            TOP_KEYS.to_vec()
                        } else {
                            expected.iter().map(String::as_str).collect()
                        };
                        suggest(&name, &exp)
                    });
                    ConfigError::Schema {
                        path: if path == "." { String::new() } else { path },
                        message: msg,
                        suggestion,
                    }
                }
            });
        }
    };
    materialize(raw)
}

fn check(cond: bool, path: &str, message: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::range(path, message))
    }
}

fn finite(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite(), path, "must be finite")
}

fn positive(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v > 0.0, path, format!("must be positive, got {v}"))
}

fn check_model(m: &ModelSpec) -> Result<(), ConfigError> {
    let rho_ok = |rho: f64| check(rho.is_finite() && rho.abs() < 1.0, "model.rho", format!("must lie in (-1, 1), got {rho}"));
    match *m {
        ModelSpec::BlackScholes { r, mu, sigma, horizon } => {
            finite(r, "model.r")?;
            finite(mu, "model.mu")?;
            positive(sigma, "model.sigma")?;
            positive(horizon, "model.horizon")
        }
        ModelSpec::FactorPremium {
            r,
            rho,
            horizon,
            sigma,
            kappa,
            theta,
            nu,
        } => {
            finite(r, "model.r")?;
            rho_ok(rho)?;
            positive(horizon, "model.horizon")?;
            positive(sigma, "model.sigma")?;
            positive(kappa, "model.kappa")?;
            finite(theta, "model.theta")?;
            positive(nu, "model.nu")
        }
        ModelSpec::StochVol {
            r,
            rho,
            horizon,
            eta,
            kappa,
            theta,
            nu,
        } => {
            finite(r, "model.r")?;
            rho_ok(rho)?;
            positive(horizon, "model.horizon")?;
            finite(eta, "model.eta")?;
            positive(kappa, "model.kappa")?;
            finite(theta, "model.theta")?;
            positive(nu, "model.nu")
        }
        ModelSpec::LevelVol {
            r,
            rho,
            horizon,
            sigma0,
            beta,
            kappa,
            theta,
            nu,
        } => {
            finite(r, "model.r")?;
            rho_ok(rho)?;
            positive(horizon, "model.horizon")?;
            positive(sigma0, "model.sigma0")?;
            finite(beta, "model.beta")?;
            positive(kappa, "model.kappa")?;
            finite(theta, "model.theta")?;
            positive(nu, "model.nu")
        }
    }
}

fn check_preference(p: &PreferenceSpec) -> Result<(), ConfigError> {
    let lambda_ok = |l: f64| check(l.is_finite() && l >= 0.0, "preference.lambda", format!("must be non-negative, got {l}"));
    match *p {
        PreferenceSpec::Crra { gamma, lambda } => {
            positive(gamma, "preference.gamma")?;
            check(gamma != 1.0, "preference.gamma", "gamma = 1 is log utility; use \"utility\": \"log\"")?;
            lambda_ok(lambda)
        }
        PreferenceSpec::Log { lambda } => lambda_ok(lambda),
        PreferenceSpec::Cara { gamma, lambda } => {
            positive(gamma, "preference.gamma")?;
            lambda_ok(lambda)
        }
    }
}

fn materialize(raw: RawScenario) -> Result<Scenario, ConfigError> {
    check_model(&raw.model)?;
    check_preference(&raw.preference)?;
    let horizon = raw.model.horizon();
    let (dlo, dhi) = raw.model.default_x_domain();
    let grid = GridSpec {
        t_nodes: raw.grid.t_nodes.unwrap_or((400.0 * horizon).round() as usize + 1),
        x_nodes: raw.grid.x_nodes.unwrap_or(201),
        x_lo: raw.grid.x_lo.unwrap_or(dlo),
        x_hi: raw.grid.x_hi.unwrap_or(dhi),
    };
    check(grid.t_nodes >= 2, "grid.t_nodes", "need at least 2 time nodes")?;
    check(grid.x_nodes >= 4, "grid.x_nodes", "need at least 4 space nodes")?;
    finite(grid.x_lo, "grid.x_lo")?;
    check(grid.x_hi.is_finite() && grid.x_hi > grid.x_lo, "grid.x_hi", "must exceed grid.x_lo")?;

    let sim = SimSpec {
        n_paths: raw.sim.n_paths.unwrap_or(100_000),
        dt: raw.sim.dt.unwrap_or(1.0 / 250.0),
        seed: raw.sim.seed.unwrap_or(42),
        w0: raw.sim.w0.unwrap_or(1.0),
        x0: raw.sim.x0.unwrap_or_else(|| raw.model.default_x0()),
        antithetic: raw.sim.antithetic.unwrap_or(false),
        dump_paths: raw.sim.dump_paths.unwrap_or(false),
    };
    check(sim.n_paths > 0, "sim.n_paths", "must be positive")?;
    check(!sim.antithetic || sim.n_paths % 2 == 0, "sim.n_paths", "must be even with antithetic sampling")?;
    positive(sim.dt, "sim.dt")?;
    let steps = (horizon / sim.dt).round();
    check(steps >= 1.0 && (steps * sim.dt - horizon).abs() <= 1e-12, "sim.dt", format!("must divide the horizon {horizon}"))?;
    positive(sim.w0, "sim.w0")?;
    finite(sim.x0, "sim.x0")?;

    check(!raw.expansion.lambdas.is_empty(), "expansion.lambdas", "must not be empty")?;
    for l in &raw.expansion.lambdas {
        positive(*l, "expansion.lambdas")?;
    }
    let v = &raw.variants;
    check(v.apu_gamma > 0.0 && v.apu_gamma < 1.0, "variants.apu_gamma", format!("must lie in (0, 1), got {}", v.apu_gamma))?;
    positive(v.apu_lambda, "variants.apu_lambda")?;
    finite(v.apu_threshold, "variants.apu_threshold")?;
    positive(v.ode_horizon, "variants.ode_horizon")?;

    check(!raw.run.is_empty(), "run", "must list at least one run")?;
    Ok(Scenario {
        model: raw.model,
        preference: raw.preference,
        grid,
        sim,
        expansion: raw.expansion,
        variants: raw.variants,
        run: raw.run,
        output_dir: raw.output_dir,
        plots: raw.plots,
    })
}

impl Scenario {
    /// Black–Scholes scenario with `(r, μ, σ, T) = (0.02, 0.08, 0.2, 1)` and
    /// CRRA `γ = 2`, `λ = 0.01`.
    pub fn default_black_scholes(run: Vec<RunKind>) -> Self {
        let text = serde_json::json!({
            "model": {"family": "black_scholes", "r": 0.02, "mu": 0.08, "sigma": 0.2, "horizon": 1.0},
            "preference": {"utility": "crra", "gamma": 2.0, "lambda": 0.01},
            "run": run,
        })
        .to_string();
        parse_scenario(&text).expect("built-in scenario is valid")
    }

    pub fn model(&self) -> CoreResult<MarketModel> {
        self.model.build()
    }

    pub fn preference(&self) -> CoreResult<Preference> {
        self.preference.build()
    }

    pub fn grid(&self) -> CoreResult<Grid> {
        self.grid.build(self.model.horizon())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"family": "black_scholes", "r": 0.02, "mu": 0.08, "sigma": 0.2, "horizon": 1.0},
        "preference": {"utility": "crra", "gamma": 2.0, "lambda": 0.01},
        "run": ["solve"]
    }"#;

    #[test]
    fn minimal_scenario_materializes_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.grid.t_nodes, 401);
        assert_eq!(s.grid.x_nodes, 201);
        assert_eq!((s.grid.x_lo, s.grid.x_hi), (-5.0, 5.0));
        assert_eq!(s.sim.n_paths, 100_000);
        assert_eq!(s.expansion.lambdas, vec![0.04, 0.02, 0.01]);
        assert_eq!(s.run, vec![RunKind::Solve]);
        assert!(!s.plots);
    }

    #[test]
    fn negative_gamma_is_a_range_error() {
        let text = MINIMAL.replace("\"gamma\": 2.0", "\"gamma\": -1.0");
        match parse_scenario(&text) {
            Err(ConfigError::Range { path, .. }) => assert_eq!(path, "preference.gamma"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn misspelled_key_gets_a_suggestion() {
        let text = MINIMAL.replace("\"model\"", "\"modle\"");
        match parse_scenario(&text) {
            Err(ConfigError::Schema { suggestion, .. }) => assert_eq!(suggestion.as_deref(), Some("model")),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"sigma\"", "\"sigmaa\"");
        match parse_scenario(&text) {
            Err(ConfigError::Schema { path, suggestion, .. }) => {
                assert_eq!(suggestion.as_deref(), Some("sigma"));
                assert!(path.starts_with("model"), "{path}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_scenario("{\"model\": "), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn missing_key_names_the_field() {
        let text = r#"{"model": {"family": "black_scholes", "r": 0.02, "mu": 0.08, "sigma": 0.2, "horizon": 1.0}, "run": ["solve"]}"#;
        match parse_scenario(text) {
            Err(ConfigError::Schema { message, .. }) => assert!(message.contains("preference"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_run_list_is_rejected() {
        let text = MINIMAL.replace("[\"solve\"]", "[]");
        assert!(matches!(parse_scenario(&text), Err(ConfigError::Range { .. })));
    }

    #[test]
    fn dependencies_are_inserted_in_order() {
        let plan = plan_runs(&[RunKind::Loss, RunKind::Simulate]);
        let kinds: Vec<_> = plan.iter().map(|p| (p.kind, p.implicit)).collect();
        assert_eq!(
            kinds,
            vec![
                (RunKind::Solve, true),
                (RunKind::Policy, true),
                (RunKind::Simulate, false),
                (RunKind::Expand, true),
                (RunKind::Loss, false)
            ]
        );
    }

    #[test]
    fn factor_families_default_to_their_mean() {
        let text = r#"{
            "model": {"family": "factor_premium", "r": 0.02, "rho": -0.5, "horizon": 1.0, "sigma": 0.2, "kappa": 1.0, "theta": 0.3, "nu": 0.2},
            "preference": {"utility": "log", "lambda": 0.01},
            "run": ["solve"]
        }"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.sim.x0, 0.3);
        assert!((s.grid.x_lo - (0.3 - 5.0 * 0.2 / 2f64.sqrt())).abs() < 1e-15);
    }
}
