//! Acceptance suite: every numbered criterion as a measured check, shared by
//! the `acceptance` test target and `rpu verify`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::asymptotics::{expansion_bundle, expansion_residual, loss_sweep, order_check, LossReport};
use crate::error::{Error, Result};
use crate::hjb::{gaussian_entropy, optimal_policy, solve_u, solve_value_surface, value_at, GaussianPolicyField, ValueSurface};
use crate::market::{CustomCoefficients, MarketModel, Preference};
use crate::pde::{convergence_probe, solve_backward, Grid, ScalarField, SemilinearProblem, SolverOptions, Source};
use crate::scenario::{level_vol_model, ModelSpec, RunKind, Scenario};
use crate::simulate::{
    estimate_rpu, policy_value_pde, positive_weight_check, simulate_exploratory_wealth, McEstimate, Recording, SimConfig,
};
use crate::variants::{
    apu_divergence_demo, bsde_residual, cara_solve, explosion_time_quadrature, wealth_temperature_ode, OdeOutcome, OdeParams,
};

/// Criterion ids with a short name. Ids ending in `s` are supplementary
/// checks run next to a literal criterion on a non-degenerate model.
pub const CRITERIA: &[(&str, &str)] = &[
    ("1", "black-scholes closed-form u"),
    ("2", "policy formula exactness"),
    ("3", "unbiasedness suite"),
    ("4", "log-utility collapse"),
    ("5", "mc vs closed-form value"),
    ("6", "mc vs pde cross-validation"),
    ("7", "expansion exactness and orders"),
    ("7s", "expansion orders, level-vol model"),
    ("8", "psi - u0 = O(lambda^2)"),
    ("8s", "psi - psi* = O(lambda^2), level-vol model"),
    ("9", "apu divergence witness"),
    ("10", "wealth-temperature explosion cross-check"),
    ("10s", "explosion cross-check, premise-satisfying set"),
    ("11", "cara formulas"),
    ("12", "bsde correspondence"),
    ("13", "pde engine orders"),
    ("14", "positivity invariants"),
    ("15", "reproducibility"),
];

/// Literal criteria whose failure is understood and documented.
pub const KNOWN_DEFECTS: &[&str] = &["7", "8", "10"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: String,
    pub name: String,
    pub measured: String,
    pub allowed: String,
    pub pass: bool,
    pub detail: String,
    pub supplementary: bool,
    /// Wall time; left out of the CSV so reruns compare byte-for-byte.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Divides every default grid's interval counts.
    pub coarsen: usize,
    pub seed: u64,
    /// Path count of the Black–Scholes value check.
    pub mc_paths: usize,
    /// Criterion ids to run; empty runs all.
    pub selection: Vec<String>,
    /// Replaces the factor model of the factor-based checks.
    pub factor: Option<ModelSpec>,
    /// Scratch directory for the reproducibility check.
    pub scratch: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            coarsen: 1,
            seed: 20240601,
            mc_paths: 1_000_000,
            selection: Vec::new(),
            factor: None,
            scratch: None,
        }
    }
}

pub fn is_known_id(id: &str) -> bool {
    CRITERIA.iter().any(|(c, _)| *c == id)
}

fn name_of(id: &str) -> &'static str {
    CRITERIA.iter().find(|(c, _)| *c == id).map(|(_, n)| *n).unwrap_or("unknown")
}

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

/// Builder for one outcome: records checks and joins their messages.
struct Check {
    id: &'static str,
    parts: Vec<String>,
    pass: bool,
    measured: String,
    allowed: String,
}

impl Check {
    fn new(id: &'static str) -> Self {
        Self {
            id,
            parts: Vec::new(),
            pass: true,
            measured: String::new(),
            allowed: String::new(),
        }
    }

    fn headline(&mut self, measured: String, allowed: impl Into<String>) {
        self.measured = measured;
        self.allowed = allowed.into();
    }

    fn require(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        self.parts.push(if ok { msg } else { format!("FAIL {msg}") });
        self.pass &= ok;
    }

    fn error(&mut self, what: &str, e: &Error) {
        self.require(false, format!("{what}: {e}"));
        if self.measured.is_empty() {
            self.measured = "error".into();
        }
    }

    fn finish(self, started: Instant) -> Outcome {
        Outcome {
            id: self.id.to_string(),
            name: name_of(self.id).to_string(),
            measured: self.measured,
            allowed: self.allowed,
            pass: self.pass,
            detail: self.parts.join("; "),
            supplementary: self.id.ends_with('s'),
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

struct FactorCase {
    model: MarketModel,
    x0: f64,
    domain: (f64, f64),
}

struct Ctx<'a> {
    opts: &'a VerifyOptions,
}

impl Ctx<'_> {
    fn coarse(&self, g: Grid) -> Result<Grid> {
        let k = self.opts.coarsen.max(1);
        if k == 1 {
            return Ok(g);
        }
        let nt = ((g.t_nodes() - 1) / k).max(1) + 1;
        let nx = ((g.x_nodes() - 1) / k).max(4) + 1;
        Grid::new(g.horizon(), nt, g.x_lo(), g.x_hi(), nx)
    }

    fn default_grid(&self, m: &MarketModel) -> Result<Grid> {
        self.coarse(Grid::default_for(m))
    }

    fn factor(&self) -> Result<FactorCase> {
        match &self.opts.factor {
            Some(spec) if !matches!(spec, ModelSpec::BlackScholes { .. }) => Ok(FactorCase {
                model: spec.build()?,
                x0: spec.default_x0(),
                domain: spec.default_x_domain(),
            }),
            _ => {
                let model = factor_premium()?;
                let domain = model.default_x_domain();
                Ok(FactorCase { model, x0: 0.3, domain })
            }
        }
    }

    fn factor_grid(&self, f: &FactorCase) -> Result<Grid> {
        self.coarse(Grid::new(
            f.model.horizon(),
            (400.0 * f.model.horizon()).round() as usize + 1,
            f.domain.0,
            f.domain.1,
            201,
        )?)
    }
}

fn black_scholes() -> Result<MarketModel> {
    MarketModel::black_scholes(0.02, 0.08, 0.2, 1.0)
}

fn factor_premium() -> Result<MarketModel> {
    MarketModel::factor_premium(0.02, -0.5, 1.0, 0.2, 1.0, 0.3, 0.2)
}

fn level_vol() -> Result<MarketModel> {
    level_vol_model(0.02, -0.5, 1.0, 0.2, 2.0, 1.0, 0.3, 0.2)
}

fn level_vol_domain() -> (f64, f64) {
    let sd = 0.2 / 2f64.sqrt();
    (0.3 - 5.0 * sd, 0.3 + 5.0 * sd)
}

fn crra(gamma: f64, lambda: f64) -> Result<Preference> {
    Preference::crra(gamma, lambda)
}

/// RPU value of a constant Gaussian policy on Black–Scholes
/// `(r, μ, σ, T) = (0.02, 0.08, 0.2, 1)` at unit wealth.
pub fn constant_policy_value(gamma: f64, lambda: f64, mean: f64, variance: f64) -> f64 {
    let (r, mu, sigma, t) = (0.02, 0.08, 0.2, 1.0);
    let h = gaussian_entropy(variance);
    let omg = 1.0 - gamma;
    let growth = omg * (r + (mu - r) * mean - 0.5 * gamma * sigma * sigma * (mean * mean + variance)) * t;
    let k = omg * lambda * h * t;
    let flow = if k == 0.0 {
        lambda * h * t
    } else {
        lambda * h * k.exp_m1() / (omg * lambda * h)
    };
    flow + k.exp() * growth.exp_m1() / omg
}

fn classical_mean(model: &MarketModel, gamma: f64, t: f64, x: f64) -> Result<f64> {
    let c = model.eval_coefficients(t, x)?;
    Ok((c.mu - model.r()) / (gamma * c.sigma * c.sigma))
}

fn c1(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("1");
    let oracle = -(0.02 + 0.06 * 0.06 / (2.0 * 2.0 * 0.04) + 0.005 * (2.0 * std::f64::consts::PI * 0.01 / (2.0 * 0.04)).ln());
    let run = || -> Result<f64> {
        let m = black_scholes()?;
        let g = ctx.default_grid(&m)?;
        let u = solve_u(&m, &crra(2.0, 0.01)?, &g)?;
        Ok(u.slice(0).iter().map(|v| (v - oracle).abs()).fold(0.0, f64::max))
    };
    match run() {
        Ok(err) => {
            let secs = started.elapsed().as_secs_f64();
            c.headline(sci(err), "<= 1e-6, < 5 s");
            c.require(err <= 1e-6, format!("max|u(0,x) - {oracle:.7}| = {}", sci(err)));
            c.require((oracle - -0.041292).abs() < 1e-6, format!("oracle {oracle:.7} vs -0.041292"));
            c.require(secs < 5.0, format!("runtime {secs:.2} s"));
        }
        Err(e) => c.error("solve", &e),
    }
    c.finish(started)
}

fn c2(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("2");
    let (gamma, lambda) = (2.0, 0.01);
    let run = |c: &mut Check| -> Result<f64> {
        let f = ctx.factor()?;
        let cases: Vec<(&str, MarketModel, Grid)> = {
            let bs = black_scholes()?;
            let fp = factor_premium()?;
            let sv = MarketModel::stoch_vol(0.02, -0.5, 1.0, 0.3, 1.0, (0.2f64).ln(), 0.3)?;
            let lv = level_vol()?;
            let (lo, hi) = level_vol_domain();
            let lg = ctx.coarse(Grid::new(1.0, 401, lo, hi, 201)?)?;
            let fg = ctx.factor_grid(&f)?;
            vec![
                ("black_scholes", bs.clone(), ctx.default_grid(&bs)?),
                ("factor_premium", fp.clone(), ctx.default_grid(&fp)?),
                ("stoch_vol", sv.clone(), ctx.default_grid(&sv)?),
                ("level_vol", lv, lg),
                ("factor_case", f.model, fg),
            ]
        };
        let pref = crra(gamma, lambda)?;
        let mut worst_ulps: f64 = 0.0;
        for (name, m, g) in &cases {
            let u = solve_u(m, &pref, g)?;
            let pol = optimal_policy(&u, m, &pref)?;
            let mut family_worst: f64 = 0.0;
            for n in 0..g.t_nodes() {
                for i in 0..g.x_nodes() {
                    let s = m.eval_coefficients(g.t(n), g.x(i))?.sigma;
                    let expect = lambda / (gamma * s * s);
                    let got = pol.variance().at(n, i);
                    family_worst = family_worst.max((got - expect).abs() / (expect * f64::EPSILON));
                }
            }
            c.require(family_worst <= 4.0, format!("{name}: variance off by {family_worst} ulp"));
            worst_ulps = worst_ulps.max(family_worst);
        }
        let bs = &cases[0];
        let u = solve_u(&bs.1, &pref, &bs.2)?;
        let pol = optimal_policy(&u, &bs.1, &pref)?;
        let mean_ulps = pol.mean().values().iter().map(|m| (m - 0.75).abs() / (0.75 * f64::EPSILON)).fold(0.0, f64::max);
        c.require(mean_ulps <= 4.0, format!("black_scholes mean within {mean_ulps} ulp of 0.75"));
        Ok(worst_ulps.max(mean_ulps))
    };
    match run(&mut c) {
        Ok(ulps) => c.headline(format!("{ulps} ulp"), "<= 4 ulp"),
        Err(e) => c.error("policy", &e),
    }
    c.finish(started)
}

fn c3(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("3");
    let run = |c: &mut Check| -> Result<f64> {
        let (r, sigma, kappa, theta) = (0.02, 0.2, 1.0, 0.3);
        let frozen = MarketModel::custom(
            r,
            -0.5,
            1.0,
            CustomCoefficients::new(move |_, x| r + sigma * x, move |_, _| sigma, move |_, x| kappa * (theta - x), |_, _| 0.0),
        )?;
        let uncorrelated = MarketModel::factor_premium(0.02, 0.0, 1.0, 0.2, 1.0, 0.3, 0.2)?;
        let fp = factor_premium()?;
        let dom = fp.default_x_domain();
        let grid = ctx.coarse(Grid::new(1.0, 401, dom.0, dom.1, 201)?)?;
        let cases = [
            ("nu = 0", frozen, crra(2.0, 0.01)?),
            ("rho = 0", uncorrelated, crra(2.0, 0.01)?),
            ("log utility", fp, Preference::log(0.01)?),
        ];
        let mut worst: f64 = 0.0;
        for (name, m, pref) in &cases {
            let u = solve_u(m, pref, &grid)?;
            let pol = optimal_policy(&u, m, pref)?;
            let mut err: f64 = 0.0;
            for n in 0..grid.t_nodes() {
                for i in 0..grid.x_nodes() {
                    let a = classical_mean(m, pref.gamma(), grid.t(n), grid.x(i))?;
                    err = err.max((pol.mean().at(n, i) - a).abs());
                }
            }
            c.require(err <= 1e-6, format!("{name}: max|mean - a*| = {}", sci(err)));
            worst = worst.max(err);
        }
        Ok(worst)
    };
    match run(&mut c) {
        Ok(w) => {
            let secs = started.elapsed().as_secs_f64();
            c.headline(sci(w), "<= 1e-6, < 30 s");
            c.require(secs < 30.0, format!("runtime {secs:.2} s"));
        }
        Err(e) => c.error("solve", &e),
    }
    c.finish(started)
}

fn c4(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("4");
    let run = |c: &mut Check| -> Result<f64> {
        let pref = Preference::log(0.01)?;
        let f = ctx.factor()?;
        let (lo, hi) = level_vol_domain();
        let cases = [
            ("factor_case", f.model.clone(), ctx.factor_grid(&f)?),
            ("level_vol", level_vol()?, ctx.coarse(Grid::new(1.0, 401, lo, hi, 201)?)?),
        ];
        let mut worst: f64 = 0.0;
        for (name, m, g) in &cases {
            let u = solve_u(m, &pref, g)?.max_abs();
            c.require(u <= 1e-8, format!("{name}: max|u| = {}", sci(u)));
            worst = worst.max(u);
        }
        Ok(worst)
    };
    match run(&mut c) {
        Ok(w) => c.headline(sci(w), "<= 1e-8"),
        Err(e) => c.error("solve", &e),
    }
    c.finish(started)
}

fn c5(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("5");
    let target = 0.040452;
    let oracle = constant_policy_value(2.0, 0.01, 0.75, 0.125);
    let run = || -> Result<McEstimate> {
        let m = black_scholes()?;
        let pref = crra(2.0, 0.01)?;
        let g = ctx.default_grid(&m)?;
        let pol = optimal_policy(&solve_u(&m, &pref, &g)?, &m, &pref)?;
        estimate_rpu(&m, &pref, &pol, &SimConfig::new(ctx.opts.mc_paths, 1.0 / 250.0, ctx.opts.seed))
    };
    match run() {
        Ok(est) => {
            let secs = started.elapsed().as_secs_f64();
            let dev = (est.mean - target).abs();
            c.headline(
                format!("{:.7} (se {})", est.mean, sci(est.standard_error)),
                format!("|J - {target}| <= 3 se, se < 5e-4, < 60 s"),
            );
            c.require(est.covers(target), format!("|{:.7} - {target}| = {} vs 3 se {}", est.mean, sci(dev), sci(est.half_width())));
            c.require(est.covers(oracle), format!("constant-policy oracle {oracle:.7}"));
            c.require((oracle - target).abs() < 1e-6, "oracle matches the stated constant");
            c.require(est.standard_error < 5e-4, format!("se {}", sci(est.standard_error)));
            c.require(secs < 60.0, format!("{} paths in {secs:.1} s", est.n_paths));
        }
        Err(e) => c.error("estimate", &e),
    }
    c.finish(started)
}

fn c6(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("6");
    let run = |c: &mut Check| -> Result<f64> {
        let f = ctx.factor()?;
        let pref = crra(2.0, 0.01)?;
        let g = ctx.factor_grid(&f)?;
        let paths = (ctx.opts.mc_paths / 5).max(1000);
        let cfg = SimConfig::new(paths, 1.0 / 250.0, ctx.opts.seed.wrapping_add(1)).with_start(1.0, f.x0);

        let surface = solve_value_surface(&f.model, &pref, &g)?;
        let pol = optimal_policy(surface.field(), &f.model, &pref)?;
        let opt_target = value_at(&surface, 0.0, f.x0, 1.0)?;
        let opt = estimate_rpu(&f.model, &pref, &pol, &cfg)?;
        let dev_opt = (opt.mean - opt_target).abs() / opt.standard_error;
        c.require(opt.covers(opt_target), format!("optimal: mc {:.7} vs surface {opt_target:.7} ({dev_opt:.2} se)", opt.mean));

        let sub_pol = GaussianPolicyField::constant(&g, 0.5, 0.125)?;
        let q = ValueSurface::new(policy_value_pde(&f.model, &pref, &sub_pol, &g)?, pref.utility())?;
        let sub_target = value_at(&q, 0.0, f.x0, 1.0)?;
        let sub = estimate_rpu(&f.model, &pref, &sub_pol, &cfg.clone().with_start(1.0, f.x0))?;
        let dev_sub = (sub.mean - sub_target).abs() / sub.standard_error;
        c.require(sub.covers(sub_target), format!("suboptimal: mc {:.7} vs q-pde {sub_target:.7} ({dev_sub:.2} se)", sub.mean));
        c.require(
            sub.mean <= opt_target + sub.half_width(),
            format!("suboptimal {:.7} <= optimal {opt_target:.7} + 3 se", sub.mean),
        );
        Ok(dev_opt.max(dev_sub))
    };
    match run(&mut c) {
        Ok(d) => c.headline(format!("{d:.2} se"), "<= 3 se"),
        Err(e) => c.error("cross-validation", &e),
    }
    c.finish(started)
}

struct OrderReport {
    bias_slope: Result<f64>,
    delta_slope: Result<f64>,
    delta_min: f64,
    reports: Vec<LossReport>,
    u0: ScalarField,
}

fn order_report(model: &MarketModel, grid: &Grid, x0: f64) -> Result<OrderReport> {
    let pref = crra(2.0, 0.01)?;
    let bundle = expansion_bundle(model, &pref, grid)?;
    let lambdas = [0.04, 0.02, 0.01];
    let reports = loss_sweep(&bundle, model, &pref, &lambdas)?;
    let i = grid.nearest_x(x0);
    let mut bias = Vec::new();
    let mut delta = Vec::new();
    let mut delta_min = f64::INFINITY;
    for r in &reports {
        bias.push((r.lambda, r.bias.at(0, i) - r.predicted_bias.at(0, i)));
        delta.push((r.lambda, r.delta_exact.at(0, i)));
        delta_min = delta_min.min(r.delta_exact.min());
    }
    Ok(OrderReport {
        bias_slope: order_check(&bias),
        delta_slope: order_check(&delta),
        delta_min,
        reports,
        u0: bundle.u0,
    })
}

fn slope_check(c: &mut Check, what: &str, slope: &Result<f64>) -> String {
    match slope {
        Ok(s) => {
            c.require((1.8..=2.2).contains(s), format!("{what} slope {s:.3}"));
            format!("{s:.3}")
        }
        Err(e) => {
            c.require(false, format!("{what} slope: {e}"));
            "degenerate".into()
        }
    }
}

fn c7(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("7");
    let run = |c: &mut Check| -> Result<String> {
        let bs = black_scholes()?;
        let res = expansion_residual(&bs, &crra(2.0, 0.01)?, &ctx.default_grid(&bs)?, 0.01)?;
        c.require(res <= 1e-7, format!("black_scholes residual {}", sci(res)));
        let f = ctx.factor()?;
        let rep = order_report(&f.model, &ctx.factor_grid(&f)?, f.x0)?;
        let sb = slope_check(c, "bias remainder", &rep.bias_slope);
        let sd = slope_check(c, "delta_exact", &rep.delta_slope);
        c.require(rep.delta_min >= -1e-9, format!("min delta_exact {}", sci(rep.delta_min)));
        let secs = started.elapsed().as_secs_f64();
        c.require(secs < 300.0, format!("runtime {secs:.1} s"));
        Ok(format!("residual {}, slopes {sb}/{sd}", sci(res)))
    };
    match run(&mut c) {
        Ok(m) => c.headline(m, "residual <= 1e-7, slopes in [1.8, 2.2], delta >= -1e-9, < 300 s"),
        Err(e) => c.error("expansion", &e),
    }
    c.finish(started)
}

fn level_vol_report(ctx: &Ctx) -> Result<OrderReport> {
    let (lo, hi) = level_vol_domain();
    let grid = ctx.coarse(Grid::new(1.0, 201, lo, hi, 101)?)?;
    order_report(&level_vol()?, &grid, 0.3)
}

fn c7s(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("7s");
    match level_vol_report(ctx) {
        Ok(rep) => {
            let sb = slope_check(&mut c, "bias remainder", &rep.bias_slope);
            let sd = slope_check(&mut c, "delta_exact", &rep.delta_slope);
            c.require(rep.delta_min >= -1e-9, format!("min delta_exact {}", sci(rep.delta_min)));
            c.headline(format!("slopes {sb}/{sd}"), "slopes in [1.8, 2.2], delta >= -1e-9");
        }
        Err(e) => c.error("expansion", &e),
    }
    c.finish(started)
}

/// `max|a - b| / λ²` per temperature; checks the spread of the constants.
fn quadratic_constant(c: &mut Check, pairs: &[(f64, f64)]) -> String {
    let cs: Vec<f64> = pairs.iter().map(|(l, d)| d / (l * l)).collect();
    let hi = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let list: Vec<String> = pairs.iter().zip(&cs).map(|((l, _), k)| format!("C({l})={}", sci(*k))).collect();
    c.require(spread <= 1.5, format!("{} spread x{spread:.3}", list.join(" ")));
    let (l, d) = pairs[pairs.len() - 1];
    c.require(d <= hi * l * l, format!("max|diff| at lambda={l} is {}", sci(d)));
    format!("x{spread:.3}")
}

fn c8(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("8");
    let run = |c: &mut Check| -> Result<String> {
        let f = ctx.factor()?;
        let rep = order_report(&f.model, &ctx.factor_grid(&f)?, f.x0)?;
        let pairs = rep
            .reports
            .iter()
            .map(|r| Ok((r.lambda, r.psi.max_abs_diff(&rep.u0)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(quadratic_constant(c, &pairs))
    };
    match run(&mut c) {
        Ok(m) => c.headline(m, "C stable within x1.5"),
        Err(e) => c.error("psi", &e),
    }
    c.finish(started)
}

fn c8s(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("8s");
    let run = |c: &mut Check| -> Result<String> {
        let rep = level_vol_report(ctx)?;
        let pairs = rep
            .reports
            .iter()
            .map(|r| Ok((r.lambda, r.psi.max_abs_diff(&r.psi_classical)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(quadratic_constant(c, &pairs))
    };
    match run(&mut c) {
        Ok(m) => c.headline(m, "C stable within x1.5"),
        Err(e) => c.error("psi", &e),
    }
    c.finish(started)
}

fn c9() -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("9");
    let vs = [1.0, 2f64.exp(), 10.0, 1e3, 1e6, 1e12];
    match apu_divergence_demo(0.5, 0.1, 1.0, &vs) {
        Ok(s) => {
            c.require(s.strictly_increasing(), "bound strictly increasing on the sweep");
            let mut worst: f64 = 0.0;
            for v in vs {
                let shift = s.bound_from_log(v.ln() + 2.0) - s.bound_from_log(v.ln());
                worst = worst.max((shift - 0.1).abs());
            }
            c.require(worst <= 4.0 * f64::EPSILON, format!("max|L(e^2 v) - L(v) - 0.1| = {}", sci(worst)));
            let ln_v = s.log_witness(1e6);
            let ok = ln_v.is_finite() && s.bound_from_log(ln_v) >= 1e6 * (1.0 - 1e-9);
            c.require(ok, format!("ln v* = {ln_v:.6e}, L(v*) = {:.6e}", s.bound_from_log(ln_v)));
            c.headline(sci(worst), "shift error <= 4 eps, finite v*");
        }
        Err(e) => c.error("apu", &e),
    }
    c.finish(started)
}

fn ode_params(r: f64, mu: f64, lambda: f64, horizon: f64) -> OdeParams {
    OdeParams {
        r,
        mu,
        sigma: 0.2,
        gamma: 2.0,
        lambda,
        horizon,
    }
}

/// Requires a hit and a quadrature within 1%; returns the relative gap.
fn explosion_agrees(c: &mut Check, label: &str, p: &OdeParams) -> Option<f64> {
    let ode = match wealth_temperature_ode(p) {
        Ok(r) => r,
        Err(e) => {
            c.error(label, &e);
            return None;
        }
    };
    let tau = match ode.outcome {
        OdeOutcome::HitZeroAt(t) => t,
        OdeOutcome::SurvivedTo(t) => {
            c.require(false, format!("{label}: survived to {t} with phi = {:.6e}", ode.last().1));
            return None;
        }
    };
    match explosion_time_quadrature(p) {
        Ok(q) => {
            let rel = ((tau - q) / q).abs();
            c.require(rel <= 0.01, format!("{label}: tau* = {tau:.4}, tau_e = {q:.4}, rel {}", sci(rel)));
            Some(rel)
        }
        Err(e) => {
            c.error(&format!("{label}: quadrature"), &e);
            None
        }
    }
}

fn survives(c: &mut Check, label: &str, p: &OdeParams) {
    match wealth_temperature_ode(p) {
        Ok(r) => c.require(
            r.outcome == OdeOutcome::SurvivedTo(p.horizon),
            format!("{label}: {:?}, phi(T) = {:.6e}", r.outcome, r.last().1),
        ),
        Err(e) => c.error(label, &e),
    }
}

fn c10() -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("10");
    let rel = explosion_agrees(&mut c, "(-0.05, -0.04, 0.005)", &ode_params(-0.05, -0.04, 0.005, 100.0));
    survives(&mut c, "(0.02, 0.08, 0.01) to T=1", &ode_params(0.02, 0.08, 0.01, 1.0));
    c.headline(rel.map(sci).unwrap_or_else(|| "no explosion".into()), "hit zero, rel gap <= 1%; survival to T");
    c.finish(started)
}

fn c10s() -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("10s");
    let rel = explosion_agrees(&mut c, "(0.02, 0.08, 0.01)", &ode_params(0.02, 0.08, 0.01, 100.0));
    c.headline(rel.map(sci).unwrap_or_else(|| "no explosion".into()), "hit zero, rel gap <= 1%");
    c.finish(started)
}

fn c11(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("11");
    let run = |c: &mut Check| -> Result<f64> {
        let m = black_scholes()?;
        let g = ctx.default_grid(&m)?;
        let (gamma, lambda) = (2.0, 0.01);
        let sol = cara_solve(&m, gamma, lambda, &g)?;
        let i = g.nearest_x(0.0);
        let (mean, var) = (sol.mean.at(0, i), sol.variance.at(0, i));
        let e_mean = (mean - 0.735149).abs();
        let e_var = (var - 0.060049).abs();
        c.require(e_mean <= 1e-6, format!("mean {mean:.7}"));
        c.require(e_var <= 1e-6, format!("variance {var:.7}"));
        let level = 0.06 * 0.06 / (2.0 * gamma * 0.04)
            + lambda / (2.0 * gamma) * (2.0 * std::f64::consts::PI * lambda / (gamma * gamma * 0.04)).ln();
        let exact = |t: f64| level * (1.0 - t) - lambda * 0.02 / gamma * (1.0 - t) * (1.0 - t) / 2.0;
        let mut e_u: f64 = 0.0;
        for n in 0..g.t_nodes() {
            for i in 0..g.x_nodes() {
                e_u = e_u.max((sol.u.at(n, i) - exact(g.t(n))).abs());
            }
        }
        c.require(e_u <= 1e-8, format!("nu = 0 closed form gap {}", sci(e_u)));
        Ok(e_mean.max(e_var))
    };
    match run(&mut c) {
        Ok(e) => c.headline(sci(e), "<= 1e-6; u gap <= 1e-8"),
        Err(e) => c.error("cara", &e),
    }
    c.finish(started)
}

fn c12(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("12");
    let run = |c: &mut Check| -> Result<String> {
        let bs = black_scholes()?;
        let pref = crra(2.0, 0.01)?;
        let g = ctx.default_grid(&bs)?;
        let res = bsde_residual(&bs, &pref, &solve_u(&bs, &pref, &g)?, 0.01)?;
        c.require(res <= 1e-7, format!("black_scholes residual {}", sci(res)));
        let f = ctx.factor()?;
        let k = ctx.opts.coarsen.max(1);
        let mut rs = Vec::new();
        for n in [50usize, 100, 200] {
            let nodes = (n / k).max(4) + 1;
            let grid = Grid::new(f.model.horizon(), nodes, f.domain.0, f.domain.1, nodes)?;
            let u = solve_u(&f.model, &pref, &grid)?;
            rs.push(bsde_residual(&f.model, &pref, &u, 0.01)?);
        }
        let o = (rs[1] / rs[2]).log2();
        c.require(
            (1.8..=2.2).contains(&o),
            format!("residuals {} {} {}, order {o:.3}", sci(rs[0]), sci(rs[1]), sci(rs[2])),
        );
        Ok(format!("{} / order {o:.3}", sci(res)))
    };
    match run(&mut c) {
        Ok(m) => c.headline(m, "<= 1e-7; order in [1.8, 2.2]"),
        Err(e) => c.error("bsde", &e),
    }
    c.finish(started)
}

fn manufactured<'a>() -> SemilinearProblem<'a> {
    SemilinearProblem::new(
        |_, _| 0.0,
        |_, _| 2f64.sqrt(),
        Source::Explicit(Box::new(|t, x| 2.0 * (-t).exp() * x.sin())),
        |x| (-1.0f64).exp() * x.sin(),
    )
}

fn manufactured_error(nt: usize, nx: usize) -> Result<f64> {
    let g = Grid::new(1.0, nt, 0.0, std::f64::consts::PI, nx)?;
    let u = solve_backward(&manufactured(), &g, &SolverOptions::default())?;
    u.max_abs_diff(&ScalarField::from_fn(&g, |t, x| (-t).exp() * x.sin()))
}

fn orders(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn c13() -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("13");
    let run = |c: &mut Check| -> Result<f64> {
        let opts = SolverOptions::default();
        let g0 = Grid::new(1.0, 81, 0.0, std::f64::consts::PI, 81)?;
        let probe = convergence_probe(&manufactured(), &[g0.clone(), g0.refined(), g0.refined().refined()], &opts)?;
        let joint = [manufactured_error(81, 81)?, manufactured_error(161, 161)?, manufactured_error(321, 321)?];
        let space = [manufactured_error(4001, 81)?, manufactured_error(4001, 161)?, manufactured_error(4001, 321)?];
        let time = [manufactured_error(21, 4001)?, manufactured_error(41, 4001)?, manufactured_error(81, 4001)?];
        let mut all = Vec::new();
        for (name, os) in [
            ("joint", orders(&joint)),
            ("probe", probe.orders().to_vec()),
            ("space", orders(&space)),
            ("time", orders(&time)),
        ] {
            let ok = !os.is_empty() && os.iter().all(|o| (1.8..=2.2).contains(o));
            let list: Vec<String> = os.iter().map(|o| format!("{o:.3}")).collect();
            c.require(ok, format!("{name} orders [{}]", list.join(", ")));
            all.extend(os);
        }
        let zero = SemilinearProblem::new(|_, x| 0.3 * x, |_, _| 0.5, Source::Zero, |_| 0.0);
        let z = solve_backward(&zero, &g0, &opts)?;
        c.require(z.values().iter().all(|v| *v == 0.0), "zero problem returns exact zeros");
        Ok(all.iter().map(|o| (o - 2.0).abs()).fold(0.0, f64::max))
    };
    match run(&mut c) {
        Ok(d) => c.headline(format!("max|order - 2| = {d:.3}"), "orders in [1.8, 2.2]; exact zero"),
        Err(e) => c.error("engine", &e),
    }
    c.finish(started)
}

fn c14(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("14");
    let run = |c: &mut Check| -> Result<usize> {
        let f = ctx.factor()?;
        let bs = black_scholes()?;
        let cases = [("black_scholes", &bs, 0.0, ctx.default_grid(&bs)?), ("factor_case", &f.model, f.x0, ctx.factor_grid(&f)?)];
        let mut ok = 0;
        for (name, m, x0, g) in &cases {
            for gamma in [0.5, 2.0] {
                let pref = crra(gamma, 0.01)?;
                let surface = solve_value_surface(m, &pref, g)?;
                let pol = optimal_policy(surface.field(), m, &pref)?;
                let cfg = SimConfig::new(1000, 1.0 / 250.0, ctx.opts.seed.wrapping_add(2))
                    .with_start(1.0, *x0)
                    .with_recording(Recording::Full);
                let ens = simulate_exploratory_wealth(m, &pref, &pol, &cfg)?;
                let w = ens.min_wealth();
                let weight = positive_weight_check(&ens, &pref, &surface);
                c.require(w > 0.0 && weight, format!("{name} gamma={gamma}: min wealth {}, weight positive {weight}", sci(w)));
                ok += usize::from(w > 0.0 && weight);
            }
        }
        Ok(ok)
    };
    match run(&mut c) {
        Ok(n) => c.headline(format!("{n}/4 cases"), "4/4 cases"),
        Err(e) => c.error("simulate", &e),
    }
    c.finish(started)
}

fn scratch_dir(base: Option<&Path>, tag: &str) -> PathBuf {
    let root = base.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
    root.join(format!("rpu-repro-{}-{tag}", std::process::id()))
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            out.push((name, std::fs::read(&p)?));
        }
    }
    out.sort();
    Ok(out)
}

fn c15(ctx: &Ctx) -> Outcome {
    let started = Instant::now();
    let mut c = Check::new("15");
    let run = |c: &mut Check| -> Result<usize> {
        let mut scenario = Scenario::default_black_scholes(vec![
            RunKind::Solve,
            RunKind::Policy,
            RunKind::Simulate,
            RunKind::Expand,
            RunKind::Loss,
            RunKind::Variants,
        ]);
        scenario.grid.t_nodes = 101;
        scenario.grid.x_nodes = 51;
        scenario.sim.n_paths = 2000;
        scenario.sim.dt = 0.01;
        scenario.sim.seed = ctx.opts.seed;
        scenario.sim.dump_paths = true;
        let mut dumps = Vec::new();
        for tag in ["a", "b"] {
            let dir = scratch_dir(ctx.opts.scratch.as_deref(), tag);
            let _ = std::fs::remove_dir_all(&dir);
            scenario.output_dir = dir.clone();
            let status = crate::pipeline::execute(&scenario);
            let files = csv_files(&dir);
            let _ = std::fs::remove_dir_all(&dir);
            c.require(status.code() == 0, format!("pipeline run {tag}: exit {}", status.code()));
            dumps.push(files?);
        }
        let same = dumps[0] == dumps[1];
        c.require(
            same && !dumps[0].is_empty(),
            format!("{} pipeline CSVs identical: {same}", dumps[0].len()),
        );

        let sub = VerifyOptions {
            selection: ["2", "9", "11", "14"].iter().map(|s| s.to_string()).collect(),
            ..ctx.opts.clone()
        };
        let a = results_csv(&run_suite(&sub));
        let b = results_csv(&run_suite(&sub));
        c.require(a == b, format!("results CSV of criteria 2, 9, 11, 14 identical: {}", a == b));
        Ok(dumps[0].len() + 1)
    };
    match run(&mut c) {
        Ok(n) => c.headline(format!("{n} files compared"), "byte-identical"),
        Err(e) => c.error("reproducibility", &e),
    }
    c.finish(started)
}

/// Runs one criterion by id.
pub fn run_one(id: &str, opts: &VerifyOptions) -> Option<Outcome> {
    let ctx = Ctx { opts };
    Some(match id {
        "1" => c1(&ctx),
        "2" => c2(&ctx),
        "3" => c3(&ctx),
        "4" => c4(&ctx),
        "5" => c5(&ctx),
        "6" => c6(&ctx),
        "7" => c7(&ctx),
        "7s" => c7s(&ctx),
        "8" => c8(&ctx),
        "8s" => c8s(&ctx),
        "9" => c9(),
        "10" => c10(),
        "10s" => c10s(),
        "11" => c11(&ctx),
        "12" => c12(&ctx),
        "13" => c13(),
        "14" => c14(&ctx),
        "15" => c15(&ctx),
        _ => return None,
    })
}

/// Ids selected by the options, in suite order.
pub fn selected_ids(opts: &VerifyOptions) -> Vec<&'static str> {
    CRITERIA
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| opts.selection.is_empty() || opts.selection.iter().any(|s| s == id))
        .collect()
}

pub fn run_suite(opts: &VerifyOptions) -> Vec<Outcome> {
    run_suite_with(opts, |_| {})
}

/// Runs the selection, calling `report` after each criterion.
pub fn run_suite_with(opts: &VerifyOptions, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    selected_ids(opts)
        .into_iter()
        .filter_map(|id| {
            let o = run_one(id, opts)?;
            report(&o);
            Some(o)
        })
        .collect()
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Columns `id,name,measured,allowed,pass,detail`.
pub fn results_csv(outcomes: &[Outcome]) -> String {
    let mut s = String::from("id,name,measured,allowed,pass,detail\n");
    for o in outcomes {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            o.id,
            csv_cell(&o.name),
            csv_cell(&o.measured),
            csv_cell(&o.allowed),
            if o.pass { "pass" } else { "fail" },
            csv_cell(&o.detail)
        );
    }
    s
}

/// One human-readable line per outcome.
pub fn format_line(o: &Outcome) -> String {
    format!(
        "[{}] {:>3}  {:<44} measured {} | allowed {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.measured,
        o.allowed,
        o.seconds
    )
}
