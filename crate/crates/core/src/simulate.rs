//! Euler–Maruyama simulation of the factor and wealth dynamics, Monte Carlo
//! estimation of the recursive utility, and policy evaluation by PDE.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{gaussian_entropy, value_from_exponent, GaussianPolicyField, ValueSurface};
use crate::io::fmt17;
use crate::market::{MarketModel, Preference, Utility};
use crate::pde::{solve_backward, Grid, ScalarField, SemilinearProblem, SolverOptions, Source};
use crate::rng::normal_pair;

/// What a simulation keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Every node of every path.
    #[default]
    Full,
    /// Terminal state and running accumulators only.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub w0: f64,
    pub x0: f64,
    pub antithetic: bool,
    pub recording: Recording,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt,
            seed,
            w0: 1.0,
            x0: 0.0,
            antithetic: false,
            recording: Recording::Full,
        }
    }

    pub fn with_start(mut self, w0: f64, x0: f64) -> Self {
        self.w0 = w0;
        self.x0 = x0;
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    /// Number of steps over `horizon`, after checking the configuration.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        if self.n_paths == 0 {
            return Err(Error::InvalidSimConfig("n_paths must be positive".into()));
        }
        if self.antithetic && (self.n_paths < 2 || self.n_paths % 2 != 0) {
            return Err(Error::InvalidSimConfig(
                "antithetic sampling needs an even number of paths (at least 2)".into(),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidSimConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.w0 > 0.0) || !self.w0.is_finite() {
            return Err(Error::InvalidSimConfig(format!("w0 must be positive, got {}", self.w0)));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidSimConfig("x0 must be finite".into()));
        }
        let steps = (horizon / self.dt).round();
        if steps < 1.0 || (steps * self.dt - horizon).abs() > 1e-12 {
            return Err(Error::InvalidSimConfig(format!(
                "dt={} does not divide the horizon {}",
                self.dt, horizon
            )));
        }
        Ok(steps as usize)
    }
}

/// Per-path running integrals, all by left-endpoint quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathAccumulators {
    /// `K_T = ∫ λ(1-γ)ℋ ds`.
    pub k: f64,
    /// `∫ e^{K_s} λ ℋ ds`.
    pub entropy_flow: f64,
    /// `∫ σ²(M² + V) ds`.
    pub quadratic_variation: f64,
    /// `∫ |μ M| ds`.
    pub abs_drift: f64,
    /// `∫ λ |1-γ| |ℋ| ds`.
    pub abs_entropy: f64,
}

/// One stored path.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub x: &'a [f64],
    pub log_w: &'a [f64],
    pub k: &'a [f64],
}

/// Simulated trajectories with their seed and scheme metadata.
///
/// Noise increments are not stored; [`PathEnsemble::noise`] regenerates them
/// from the counter-based generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
    antithetic: bool,
    recording: Recording,
    entropy_accumulated: bool,
    x: Vec<f64>,
    log_w: Vec<f64>,
    k: Vec<f64>,
    acc: Vec<PathAccumulators>,
}

pub const SCHEME: &str = "euler-maruyama, log-wealth, left-endpoint quadrature";

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn antithetic(&self) -> bool {
        self.antithetic
    }
    pub fn recording(&self) -> Recording {
        self.recording
    }
    pub fn scheme(&self) -> &'static str {
        SCHEME
    }
    pub fn entropy_accumulated(&self) -> bool {
        self.entropy_accumulated
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    fn stride(&self) -> usize {
        match self.recording {
            Recording::Full => self.n_steps + 1,
            Recording::Terminal => 1,
        }
    }

    /// Full trajectory of path `p`, if recorded.
    pub fn path(&self, p: usize) -> Option<PathView<'_>> {
        if self.recording != Recording::Full || p >= self.n_paths {
            return None;
        }
        let s = self.stride();
        let r = p * s..(p + 1) * s;
        Some(PathView {
            x: &self.x[r.clone()],
            log_w: &self.log_w[r.clone()],
            k: &self.k[r],
        })
    }

    fn last(&self, v: &[f64], p: usize) -> f64 {
        v[(p + 1) * self.stride() - 1]
    }

    pub fn terminal_x(&self, p: usize) -> f64 {
        self.last(&self.x, p)
    }
    pub fn terminal_log_wealth(&self, p: usize) -> f64 {
        self.last(&self.log_w, p)
    }
    pub fn terminal_wealth(&self, p: usize) -> f64 {
        self.terminal_log_wealth(p).exp()
    }
    pub fn accumulators(&self, p: usize) -> PathAccumulators {
        self.acc[p]
    }

    /// Brownian increments `(ΔB, ΔB̃, ΔB̄)` used by path `p` on step `n`.
    pub fn noise(&self, p: usize, n: usize) -> (f64, f64, f64) {
        let (key, sign) = path_key(p, self.antithetic);
        let sq = self.dt.sqrt();
        let (zb, zbar) = normal_pair(self.seed, key, n as u64, 0);
        let (zt, _) = normal_pair(self.seed, key, n as u64, 1);
        (sign * sq * zb, sign * sq * zt, sign * sq * zbar)
    }

    /// Smallest stored wealth.
    pub fn min_wealth(&self) -> f64 {
        self.log_w.iter().fold(f64::INFINITY, |m, v| m.min(*v)).exp()
    }

    /// Sample mean of a per-path statistic, pairing antithetic partners.
    pub fn estimate(&self, f: impl Fn(usize) -> f64 + Sync) -> McEstimate {
        let samples: Vec<f64> = (0..self.n_paths).into_par_iter().map(&f).collect();
        McEstimate::from_samples(&samples, self.antithetic)
    }

    /// Recursive utility `∫ e^K λℋ ds + e^{K_T} U(W_T)`.
    pub fn rpu_estimate(&self, pref: &Preference) -> McEstimate {
        self.estimate(|p| {
            let a = self.acc[p];
            a.entropy_flow + a.k.exp() * pref.utility_of_log_wealth(self.terminal_log_wealth(p))
        })
    }

    /// `Ê[U(W_T)]`.
    pub fn terminal_utility_estimate(&self, pref: &Preference) -> McEstimate {
        self.estimate(|p| pref.utility_of_log_wealth(self.terminal_log_wealth(p)))
    }

    /// Path dump with columns `path,t,X,W,K`.
    pub fn path_csv(&self) -> Result<String> {
        if self.recording != Recording::Full {
            return Err(Error::InvalidSimConfig("path dump needs full recording".into()));
        }
        let mut out = String::from("path,t,X,W,K\n");
        for p in 0..self.n_paths {
            let v = self.path(p).expect("full recording");
            for n in 0..=self.n_steps {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    p,
                    fmt17(self.t(n)),
                    fmt17(v.x[n]),
                    fmt17(v.log_w[n].exp()),
                    fmt17(v.k[n])
                );
            }
        }
        Ok(out)
    }

    pub fn write_path_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.path_csv()?)?;
        Ok(())
    }
}

/// Sample mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    /// Builds the estimate from per-path samples. With antithetic pairing the
    /// standard error is taken over pair averages.
    pub fn from_samples(samples: &[f64], antithetic: bool) -> Self {
        let units: Vec<f64> = if antithetic {
            samples.chunks(2).map(|c| 0.5 * (c[0] + c[c.len() - 1])).collect()
        } else {
            samples.to_vec()
        };
        let n = units.len() as f64;
        let mean = pairwise_sum(&units) / n;
        let se = if units.len() > 1 {
            let dev: Vec<f64> = units.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            standard_error: se,
            n_paths: samples.len(),
        }
    }

    pub fn half_width(&self) -> f64 {
        3.0 * self.standard_error
    }

    /// `|mean − target| ≤ 3 SE`.
    pub fn covers(&self, target: f64) -> bool {
        (self.mean - target).abs() <= self.half_width()
    }
}

/// Summation by recursive halving; result depends only on the slice order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[inline]
fn path_key(p: usize, antithetic: bool) -> (u64, f64) {
    if antithetic {
        ((p / 2) as u64, if p % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (p as u64, 1.0)
    }
}

#[derive(Clone, Copy)]
enum Control<'a> {
    Zero,
    Feedback(&'a ScalarField),
    Gaussian(&'a GaussianPolicyField),
}

impl Control<'_> {
    #[inline]
    fn at(&self, t: f64, x: f64) -> (f64, f64) {
        match self {
            Control::Zero => (0.0, 0.0),
            Control::Feedback(a) => (a.sample_clamped(t, x), 0.0),
            Control::Gaussian(p) => p.sample_clamped(t, x),
        }
    }
}

struct PathOut {
    x: Vec<f64>,
    log_w: Vec<f64>,
    k: Vec<f64>,
    acc: PathAccumulators,
}

fn simulate(
    model: &MarketModel,
    cfg: &SimConfig,
    control: Control<'_>,
    entropy: Option<&Preference>,
) -> Result<PathEnsemble> {
    let steps = cfg.steps_for(model.horizon())?;
    let dt = model.horizon() / steps as f64;
    let sq = dt.sqrt();
    let r = model.r();
    let rho = model.rho();
    let rho_perp = (1.0 - rho * rho).sqrt();
    let (gamma_gap, abs_gap) = match entropy {
        Some(p) => (p.one_minus_gamma(), p.one_minus_gamma().abs()),
        None => (0.0, 0.0),
    };
    let full = cfg.recording == Recording::Full;

    let one = |p: usize| -> Result<PathOut> {
        let (key, sign) = path_key(p, cfg.antithetic);
        let cap = if full { steps + 1 } else { 1 };
        let mut xs = Vec::with_capacity(cap);
        let mut ws = Vec::with_capacity(cap);
        let mut ks = Vec::with_capacity(cap);
        let (mut x, mut lw) = (cfg.x0, cfg.w0.ln());
        let mut acc = PathAccumulators::default();
        for n in 0..steps {
            if full {
                xs.push(x);
                ws.push(lw);
                ks.push(acc.k);
            }
            let t = n as f64 * dt;
            let c = model.eval_coefficients(t, x)?;
            let (m, v) = control.at(t, x);
            if let Some(pref) = entropy {
                let lambda = pref.lambda(t, x);
                if lambda != 0.0 {
                    if !(v > 0.0) {
                        return Err(Error::DegeneratePolicy { t, x });
                    }
                    let h = gaussian_entropy(v);
                    acc.entropy_flow += acc.k.exp() * lambda * h * dt;
                    acc.k += lambda * gamma_gap * h * dt;
                    acc.abs_entropy += lambda * abs_gap * h.abs() * dt;
                }
            }
            acc.quadratic_variation += c.sigma * c.sigma * (m * m + v) * dt;
            acc.abs_drift += (c.mu * m).abs() * dt;

            let (zb, zbar) = normal_pair(cfg.seed, key, n as u64, 0);
            let db = sign * sq * zb;
            let dbar = sign * sq * zbar;
            lw += (r + (c.mu - r) * m - 0.5 * c.sigma * c.sigma * (m * m + v)) * dt
                + c.sigma * m * db
                + if v > 0.0 { c.sigma * v.sqrt() * dbar } else { 0.0 };
            if c.nu != 0.0 {
                let (zt, _) = normal_pair(cfg.seed, key, n as u64, 1);
                let dtilde = sign * sq * zt;
                x += c.m * dt + c.nu * (rho * db + rho_perp * dtilde);
            } else {
                x += c.m * dt;
            }
            if !(x.is_finite() && lw.is_finite() && acc.k.is_finite()) {
                return Err(Error::NonFinitePath { path: p, step: n + 1 });
            }
        }
        xs.push(x);
        ws.push(lw);
        ks.push(acc.k);
        Ok(PathOut {
            x: xs,
            log_w: ws,
            k: ks,
            acc,
        })
    };

    let outs: Vec<Result<PathOut>> = (0..cfg.n_paths).into_par_iter().map(one).collect();
    let stride = if full { steps + 1 } else { 1 };
    let mut ens = PathEnsemble {
        n_paths: cfg.n_paths,
        n_steps: steps,
        dt,
        seed: cfg.seed,
        antithetic: cfg.antithetic,
        recording: cfg.recording,
        entropy_accumulated: entropy.is_some(),
        x: Vec::with_capacity(cfg.n_paths * stride),
        log_w: Vec::with_capacity(cfg.n_paths * stride),
        k: Vec::with_capacity(cfg.n_paths * stride),
        acc: Vec::with_capacity(cfg.n_paths),
    };
    for out in outs {
        let out = out?;
        ens.x.extend_from_slice(&out.x);
        ens.log_w.extend_from_slice(&out.log_w);
        ens.k.extend_from_slice(&out.k);
        ens.acc.push(out.acc);
    }
    Ok(ens)
}

/// Factor paths; wealth stays in the bond.
pub fn simulate_factor(model: &MarketModel, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate(model, cfg, Control::Zero, None)
}

/// Wealth under a Gaussian feedback policy, accumulating the entropy discount
/// unless the preference has zero temperature.
pub fn simulate_exploratory_wealth(
    model: &MarketModel,
    pref: &Preference,
    policy: &GaussianPolicyField,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    require_power(pref)?;
    let entropy = if pref.is_classical() { None } else { Some(pref) };
    simulate(model, cfg, Control::Gaussian(policy), entropy)
}

/// Wealth under a deterministic feedback policy `a(t, x)`.
pub fn simulate_classical_wealth(model: &MarketModel, a_field: &ScalarField, cfg: &SimConfig) -> Result<PathEnsemble> {
    simulate(model, cfg, Control::Feedback(a_field), None)
}

/// Monte Carlo estimate of the recursive utility `J₀` of a Gaussian policy.
pub fn estimate_rpu(
    model: &MarketModel,
    pref: &Preference,
    policy: &GaussianPolicyField,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    let cfg = cfg.clone().with_recording(Recording::Terminal);
    let ens = simulate_exploratory_wealth(model, pref, policy, &cfg)?;
    Ok(ens.rpu_estimate(pref))
}

fn require_power(pref: &Preference) -> Result<()> {
    if matches!(pref.utility(), Utility::Cara { .. }) {
        return Err(Error::InvalidPreference(
            "wealth simulation in fractions of wealth needs CRRA or log utility".into(),
        ));
    }
    Ok(())
}

/// Exponent `q` of the value of a wealth-independent Gaussian policy.
///
/// For CRRA the value is `(w^{1-γ} e^q - 1)/(1-γ)`; for log utility it is
/// `ln w + q`. Wrap the result in a [`ValueSurface`] to evaluate it.
pub fn policy_value_pde(
    model: &MarketModel,
    pref: &Preference,
    policy: &GaussianPolicyField,
    grid: &Grid,
) -> Result<ScalarField> {
    require_power(pref)?;
    model.validate_on(grid).into_result()?;
    for n in 0..grid.t_nodes() {
        let t = grid.t(n);
        for i in 0..grid.x_nodes() {
            let x = grid.x(i);
            if pref.lambda(t, x) != 0.0 && !(policy.sample_clamped(t, x).1 > 0.0) {
                return Err(Error::DegeneratePolicy { t, x });
            }
        }
    }
    let r = model.r();
    let rho = model.rho();
    let entropy_flow = move |t: f64, x: f64, v: f64| {
        let lambda = pref.lambda(t, x);
        if lambda == 0.0 {
            0.0
        } else {
            lambda * gaussian_entropy(v)
        }
    };
    let drift = |t: f64, x: f64| model.coefficients(t, x).m;
    let diffusion = |t: f64, x: f64| model.coefficients(t, x).nu;

    if pref.is_log() {
        let problem = SemilinearProblem::new(
            drift,
            diffusion,
            Source::Explicit(Box::new(move |t, x| {
                let c = model.coefficients(t, x);
                let (m, v) = policy.sample_clamped(t, x);
                r + (c.mu - r) * m - 0.5 * c.sigma * c.sigma * (m * m + v) + entropy_flow(t, x, v)
            })),
            |_| 0.0,
        );
        return solve_backward(&problem, grid, &SolverOptions::default());
    }

    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let problem = SemilinearProblem::new(
        move |t, x| {
            let c = model.coefficients(t, x);
            let (m, _) = policy.sample_clamped(t, x);
            c.m + omg * rho * c.nu * c.sigma * m
        },
        diffusion,
        Source::Nonlinear(Box::new(move |t, x, _q, qx| {
            let c = model.coefficients(t, x);
            let (m, v) = policy.sample_clamped(t, x);
            0.5 * c.nu * c.nu * qx * qx
                + omg * (r + (c.mu - r) * m - 0.5 * gamma * c.sigma * c.sigma * (m * m + v))
                + omg * entropy_flow(t, x, v)
        })),
        |_| 0.0,
    );
    solve_backward(&problem, grid, &SolverOptions::default())
}

/// One line of an admissibility report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticEntry {
    pub name: String,
    pub estimate: f64,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub entries: Vec<DiagnosticEntry>,
}

impl DiagnosticReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&DiagnosticEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Estimates above this are treated as divergent.
pub const DIAGNOSTIC_LIMIT: f64 = 1e12;

/// Sampled integrability checks for a Gaussian policy. Never fails; a
/// simulation error turns every entry into FAIL with the error as note.
pub fn admissibility_diagnostic(
    model: &MarketModel,
    pref: &Preference,
    policy: &GaussianPolicyField,
    cfg: &SimConfig,
) -> DiagnosticReport {
    let cfg = cfg.clone().with_recording(Recording::Terminal);
    let names = ["quadratic_variation", "abs_drift", "entropy_exp_moment", "utility_second_moment"];
    let wants_entropy = !pref.is_classical() && !policy.is_degenerate() && require_power(pref).is_ok();
    let run = if wants_entropy {
        simulate(model, &cfg, Control::Gaussian(policy), Some(pref))
    } else {
        simulate(model, &cfg, Control::Gaussian(policy), None)
    };
    let ens = match run {
        Ok(e) => e,
        Err(e) => {
            return DiagnosticReport {
                entries: names
                    .iter()
                    .map(|n| DiagnosticEntry {
                        name: n.to_string(),
                        estimate: f64::NAN,
                        pass: false,
                        note: Some(e.to_string()),
                    })
                    .collect(),
            }
        }
    };
    let judge = |name: &str, est: f64, note: Option<String>| DiagnosticEntry {
        name: name.to_string(),
        estimate: est,
        pass: est.is_finite() && est.abs() <= DIAGNOSTIC_LIMIT,
        note,
    };
    let qv = ens.estimate(|p| ens.acc[p].quadratic_variation).mean;
    let ad = ens.estimate(|p| ens.acc[p].abs_drift).mean;
    let u2 = ens
        .estimate(|p| {
            let u = pref.utility_of_log_wealth(ens.terminal_log_wealth(p));
            u * u
        })
        .mean;
    let exp_entry = if wants_entropy {
        judge(names[2], ens.estimate(|p| (2.0 * ens.acc[p].abs_entropy).exp()).mean, None)
    } else {
        DiagnosticEntry {
            name: names[2].to_string(),
            estimate: 1.0,
            pass: true,
            note: Some("entropy term skipped (degenerate policy or zero temperature)".into()),
        }
    };
    DiagnosticReport {
        entries: vec![judge(names[0], qv, None), judge(names[1], ad, None), exp_entry, judge(names[3], u2, None)],
    }
}

/// Checks `(1-γ)J + 1 > 0` at every stored node, with `J` from the surface.
/// With terminal-only recording this covers the start and end of each path.
pub fn positive_weight_check(ensemble: &PathEnsemble, pref: &Preference, surface: &ValueSurface) -> bool {
    let utility = surface.utility();
    positive_weight_check_with(ensemble, pref, |t, w, x| {
        value_from_exponent(utility, surface.field().sample_clamped(t, x), w)
    })
}

/// As [`positive_weight_check`] with an arbitrary `J(t, w, x)`.
pub fn positive_weight_check_with(
    ensemble: &PathEnsemble,
    pref: &Preference,
    value: impl Fn(f64, f64, f64) -> f64 + Sync,
) -> bool {
    let omg = match pref.utility() {
        Utility::Cara { .. } => return false,
        _ => pref.one_minus_gamma(),
    };
    let ok = |t: f64, lw: f64, x: f64| omg * value(t, lw.exp(), x) + 1.0 > 0.0;
    (0..ensemble.n_paths).into_par_iter().all(|p| match ensemble.path(p) {
        Some(v) => (0..=ensemble.n_steps).all(|n| ok(ensemble.t(n), v.log_w[n], v.x[n])),
        None => ok(ensemble.t(ensemble.n_steps), ensemble.terminal_log_wealth(p), ensemble.terminal_x(p)),
    })
}

/// Row of the ensemble summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub estimate: McEstimate,
    /// Target the estimate should cover within 3 SE, if any.
    pub reference: Option<f64>,
}

/// Summary table with columns `name,mean,se,n_paths,pass`.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("name,mean,se,n_paths,pass\n");
    for r in rows {
        let verdict = match r.reference {
            Some(v) if r.estimate.covers(v) => "pass",
            Some(_) => "fail",
            None => "n/a",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            fmt17(r.estimate.mean),
            fmt17(r.estimate.standard_error),
            r.estimate.n_paths,
            verdict
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{optimal_policy, solve_u};

    fn bs() -> MarketModel {
        MarketModel::black_scholes(0.02, 0.08, 0.2, 1.0).unwrap()
    }

    #[test]
    fn config_checks() {
        assert!(SimConfig::new(10, 0.004, 1).steps_for(1.0).unwrap() == 250);
        assert!(SimConfig::new(10, 0.003, 1).steps_for(1.0).is_err());
        assert!(SimConfig::new(3, 0.01, 1).with_antithetic(true).steps_for(1.0).is_err());
        assert!(SimConfig::new(0, 0.01, 1).steps_for(1.0).is_err());
    }

    #[test]
    fn bond_only_wealth_is_exact() {
        let g = Grid::new(1.0, 11, -1.0, 1.0, 5).unwrap();
        let a = ScalarField::zeros(&g);
        let ens = simulate_classical_wealth(&bs(), &a, &SimConfig::new(8, 0.01, 3)).unwrap();
        for p in 0..8 {
            assert_eq!(ens.terminal_log_wealth(p), {
                let mut lw = 0.0f64;
                for _ in 0..100 {
                    lw += 0.02 * ens.dt();
                }
                lw
            });
            assert!((ens.terminal_wealth(p) - 0.02f64.exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_factor_stays_put() {
        let ens = simulate_factor(&bs(), &SimConfig::new(4, 0.1, 9).with_start(1.0, 0.7)).unwrap();
        for p in 0..4 {
            assert!(ens.path(p).unwrap().x.iter().all(|x| *x == 0.7));
        }
    }

    #[test]
    fn degenerate_policy_with_entropy_is_rejected() {
        let g = Grid::new(1.0, 11, -1.0, 1.0, 5).unwrap();
        let pol = GaussianPolicyField::constant(&g, 0.5, 0.0).unwrap();
        let pref = Preference::crra(2.0, 0.01).unwrap();
        let err = simulate_exploratory_wealth(&bs(), &pref, &pol, &SimConfig::new(2, 0.1, 1)).unwrap_err();
        assert!(matches!(err, Error::DegeneratePolicy { .. }));
    }

    #[test]
    fn antithetic_partners_mirror_noise() {
        let ens = simulate_factor(&bs(), &SimConfig::new(4, 0.25, 5).with_antithetic(true)).unwrap();
        let (a, b, c) = ens.noise(0, 2);
        let (d, e, f) = ens.noise(1, 2);
        assert_eq!((a, b, c), (-d, -e, -f));
    }

    #[test]
    fn estimate_pairs_antithetic_samples() {
        let e = McEstimate::from_samples(&[1.0, 3.0, 2.0, 2.0], true);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.standard_error, 0.0);
        assert_eq!(e.n_paths, 4);
        assert_eq!(e.half_width(), 0.0);
        let e = McEstimate::from_samples(&[1.0, 3.0], false);
        assert_eq!(e.mean, 2.0);
        assert!((e.standard_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn optimal_policy_value_pde_recovers_u() {
        let model = MarketModel::factor_premium(0.02, -0.5, 1.0, 0.2, 1.0, 0.3, 0.2).unwrap();
        let pref = Preference::crra(2.0, 0.01).unwrap();
        let g = Grid::new(1.0, 101, -1.0, 1.6, 101).unwrap();
        let u = solve_u(&model, &pref, &g).unwrap();
        let pol = optimal_policy(&u, &model, &pref).unwrap();
        let q = policy_value_pde(&model, &pref, &pol, &g).unwrap();
        assert!(q.max_abs_within(-0.2, 0.8) > 0.0);
        let diff = q.zip_with(&u, |_, x, a, b| if (-0.2..=0.8).contains(&x) { a - b } else { 0.0 }).unwrap();
        assert!(diff.max_abs() < 1e-4, "{}", diff.max_abs());
    }

    #[test]
    fn summary_layout() {
        let rows = vec![SummaryRow {
            name: "j0".into(),
            estimate: McEstimate {
                mean: 1.0,
                standard_error: 0.1,
                n_paths: 10,
            },
            reference: Some(1.2),
        }];
        let csv = summary_csv(&rows);
        assert!(csv.starts_with("name,mean,se,n_paths,pass\n"));
        assert!(csv.trim_end().ends_with(",10,pass"));
    }
}
