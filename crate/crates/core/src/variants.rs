//! Alternative formulations: the additive entropy bonus, a wealth-scaled
//! temperature, CARA utility, and the BSDE form of the reduced HJB.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::GaussianPolicyField;
use crate::io::{fmt17, CsvTable};
use crate::market::{MarketModel, Preference, Utility};
use crate::pde::{derivative_x, interior_residual, solve_backward, Grid, ScalarField, SemilinearProblem, SolverOptions, Source};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Lower bound `L(v) = (λT/2) ln(2πe v) − 1/(1−γ)` on the additive objective
/// of the policy `N(0, v)`, for `γ ∈ (0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApuSweep {
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub variances: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl ApuSweep {
    pub fn bound(&self, v: f64) -> f64 {
        apu_bound(self.gamma, self.lambda, self.horizon, v.ln())
    }

    pub fn bound_from_log(&self, ln_v: f64) -> f64 {
        apu_bound(self.gamma, self.lambda, self.horizon, ln_v)
    }

    pub fn strictly_increasing(&self) -> bool {
        self.bounds.windows(2).all(|w| w[1] > w[0])
    }

    /// `ln v*` with `L(v*) = threshold`; `v*` itself overflows for large thresholds.
    pub fn log_witness(&self, threshold: f64) -> f64 {
        2.0 * (threshold + 1.0 / (1.0 - self.gamma)) / (self.lambda * self.horizon) - (TWO_PI * std::f64::consts::E).ln()
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["v", "lower_bound"]);
        for (v, l) in self.variances.iter().zip(&self.bounds) {
            t.push_numbers(&[*v, *l]);
        }
        t.render()
    }
}

fn apu_bound(gamma: f64, lambda: f64, horizon: f64, ln_v: f64) -> f64 {
    0.5 * lambda * horizon * ((TWO_PI * std::f64::consts::E).ln() + ln_v) - 1.0 / (1.0 - gamma)
}

/// Evaluates the additive-perturbation lower bound over an increasing
/// variance grid.
pub fn apu_divergence_demo(gamma: f64, lambda: f64, horizon: f64, v_grid: &[f64]) -> Result<ApuSweep> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if !(lambda > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidPreference("need λ > 0 and T > 0".into()));
    }
    if v_grid.is_empty() || v_grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || v_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateData("variance grid must be positive and strictly increasing".into()));
    }
    let bounds = v_grid.iter().map(|v| apu_bound(gamma, lambda, horizon, v.ln())).collect();
    Ok(ApuSweep {
        gamma,
        lambda,
        horizon,
        variances: v_grid.to_vec(),
        bounds,
    })
}

/// Black–Scholes market and CRRA preference for the wealth-scaled
/// temperature ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: f64,
}

impl OdeParams {
    /// `r + (μ−r)²/(2γσ²) + (λ/2) ln(2πλ/(γσ²))`.
    pub fn stated_condition(&self) -> f64 {
        let ex = self.mu - self.r;
        self.r
            + ex * ex / (2.0 * self.gamma * self.sigma * self.sigma)
            + 0.5 * self.lambda * (TWO_PI * self.lambda / (self.gamma * self.sigma * self.sigma)).ln()
    }

    fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0) || self.gamma == 1.0 {
            return Err(Error::InvalidPreference(format!("need γ > 0, γ ≠ 1, got {}", self.gamma)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidPreference(format!("need λ > 0, got {}", self.lambda)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidModel(format!("need σ > 0, got {}", self.sigma)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// `F(y) = a y + b − c ln y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl OdeCoefficients {
    pub fn from_params(p: &OdeParams) -> Self {
        let omg = 1.0 - p.gamma;
        let ex = p.mu - p.r;
        Self {
            a: omg * (p.r + ex * ex / (2.0 * p.gamma * p.sigma * p.sigma)),
            b: omg * 0.5 * p.lambda * (TWO_PI * p.lambda / (p.gamma * p.sigma * p.sigma)).ln(),
            c: omg * 0.5 * p.lambda,
        }
    }

    #[inline]
    pub fn rhs(&self, y: f64) -> f64 {
        self.a * y + self.b - self.c * y.ln()
    }

    /// `g(z) = a + b e^z + c z e^z`, the rate of `−z'` under `y = e^{−z}`.
    pub fn g(&self, z: f64) -> f64 {
        self.a + (self.b + self.c * z) * z.exp()
    }

    /// Whether `g < 0` on `[0, ∞)`. Equality anywhere counts as failure.
    pub fn explosion_premise(&self) -> std::result::Result<(), String> {
        if !(self.c < 0.0) {
            return Err(format!("c = {} must be negative (γ > 1)", self.c));
        }
        let g0 = self.a + self.b;
        if !(g0 < 0.0) {
            return Err(format!("g(0) = a + b = {g0} is not negative"));
        }
        if self.b + self.c > 0.0 {
            let z0 = (self.b + self.c) / -self.c;
            let peak = self.g(z0);
            if !(peak < 0.0) {
                return Err(format!("g attains {peak} ≥ 0 at z = {z0}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OdeOutcome {
    SurvivedTo(f64),
    HitZeroAt(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeResult {
    pub params: Option<OdeParams>,
    pub coefficients: OdeCoefficients,
    pub horizon: f64,
    /// `(τ, φ)` samples; every bracketing step near zero is kept.
    pub trajectory: Vec<(f64, f64)>,
    pub outcome: OdeOutcome,
}

impl OdeResult {
    pub fn last(&self) -> (f64, f64) {
        *self.trajectory.last().expect("trajectory starts at (0, 1)")
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["tau", "phi"]);
        for (tau, phi) in &self.trajectory {
            t.push_numbers(&[*tau, *phi]);
        }
        t.render()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub const ODE_STEP: f64 = 1e-4;
/// Below this level steps are bisected instead of taken at full length.
pub const ODE_ENTER_BRACKET: f64 = 1e-6;
/// A trajectory below this level has hit zero.
pub const ODE_HIT: f64 = 1e-8;
const RECORD_EVERY: usize = 100;

fn rk4(f: &OdeCoefficients, y: f64, h: f64) -> Option<f64> {
    let stage = |v: f64| if v > 0.0 { Some(f.rhs(v)) } else { None };
    let k1 = stage(y)?;
    let k2 = stage(y + 0.5 * h * k1)?;
    let k3 = stage(y + 0.5 * h * k2)?;
    let k4 = stage(y + h * k3)?;
    let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if next.is_finite() && next > 0.0 {
        Some(next)
    } else {
        None
    }
}

/// Integrates `φ' = a φ + b − c ln φ`, `φ(0) = 1`, with the wealth-scaled
/// temperature coefficients.
pub fn wealth_temperature_ode(params: &OdeParams) -> Result<OdeResult> {
    params.check()?;
    let mut res = integrate_ode(&OdeCoefficients::from_params(params), params.horizon)?;
    res.params = Some(*params);
    Ok(res)
}

/// RK4 at step `1e-4`. Once `φ` is below `1e-6`, or a full step would leave
/// the domain or cut `φ` by more than ten, the step length is found by
/// bisection so each accepted step lands at or above a tenth of the current
/// value. Reaching `1e-8` counts as hitting zero.
pub fn integrate_ode(coef: &OdeCoefficients, horizon: f64) -> Result<OdeResult> {
    let mut tau = 0.0f64;
    let mut y = 1.0f64;
    let mut traj = vec![(0.0, 1.0)];
    let mut count = 0usize;
    let end = horizon * (1.0 - 1e-15);
    let done = |traj: Vec<(f64, f64)>, outcome| OdeResult {
        params: None,
        coefficients: *coef,
        horizon,
        trajectory: traj,
        outcome,
    };
    while tau < end {
        let hmax = ODE_STEP.min(horizon - tau);
        let near = y < ODE_ENTER_BRACKET;
        let accept = |yn: Option<f64>| matches!(yn, Some(v) if v >= 0.1 * y);
        let full = rk4(coef, y, hmax);
        if !near && accept(full) {
            tau += hmax;
            y = full.unwrap();
            count += 1;
            if count % RECORD_EVERY == 0 {
                traj.push((tau, y));
            }
            continue;
        }
        let h = if accept(full) {
            hmax
        } else {
            let (mut lo, mut hi) = (0.0f64, hmax);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if accept(rk4(coef, y, mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if !(h > 0.0) || tau + h == tau {
            return Err(Error::StepSizeUnderflow { tau, phi: y });
        }
        let yn = rk4(coef, y, h).ok_or(Error::StepSizeUnderflow { tau, phi: y })?;
        tau += h;
        y = yn;
        traj.push((tau, y));
        if y < ODE_HIT {
            return Ok(done(traj, OdeOutcome::HitZeroAt(tau)));
        }
    }
    if traj.last().map(|p| p.0) != Some(tau) {
        traj.push((tau, y));
    }
    Ok(done(traj, OdeOutcome::SurvivedTo(horizon)))
}

/// `τ_e = −∫₀^∞ dz / g(z)` for the wealth-scaled temperature ODE.
pub fn explosion_time_quadrature(params: &OdeParams) -> Result<f64> {
    params.check()?;
    if !(params.gamma > 1.0) {
        return Err(Error::ConditionViolated(format!("γ = {} is not above 1", params.gamma)));
    }
    explosion_time_from(&OdeCoefficients::from_params(params))
}

/// As [`explosion_time_quadrature`] for raw coefficients.
pub fn explosion_time_from(coef: &OdeCoefficients) -> Result<f64> {
    coef.explosion_premise().map_err(Error::ConditionViolated)?;
    // With s = 1 − e^{−z}: dz/g = ds / (a(1−s) + b + c z).
    let f = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let z = -(-s).ln_1p();
        -1.0 / (coef.a * (1.0 - s) + coef.b + coef.c * z)
    };
    Ok(adaptive_simpson(&f, 0.0, 1.0, 1e-12, 60))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// CARA exponent and the dollar-amount Gaussian policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CaraSolution {
    pub u: ScalarField,
    pub mean: ScalarField,
    pub variance: ScalarField,
    gamma: f64,
    r: f64,
}

impl CaraSolution {
    /// `V(t, w, x) = −(1/γ) exp(−γu − γ e^{r(T−t)} w)`, with `u` clamped to the grid.
    pub fn value(&self, t: f64, w: f64, x: f64) -> f64 {
        let horizon = self.u.grid().horizon();
        let u = self.u.sample_clamped(t, x);
        -(-self.gamma * u - self.gamma * (self.r * (horizon - t)).exp() * w).exp() / self.gamma
    }

    pub fn policy(&self) -> Result<GaussianPolicyField> {
        GaussianPolicyField::new(self.mean.clone(), self.variance.clone())
    }

    pub fn to_csv(&self) -> String {
        let g = self.u.grid();
        let mut t = CsvTable::new(&["t", "x", "u", "mean", "variance"]);
        for n in 0..g.t_nodes() {
            for i in 0..g.x_nodes() {
                t.push_numbers(&[g.t(n), g.x(i), self.u.at(n, i), self.mean.at(n, i), self.variance.at(n, i)]);
            }
        }
        t.render()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Solves the CARA exponent PDE and builds the dollar-amount policy.
pub fn cara_solve(model: &MarketModel, gamma: f64, lambda: f64, grid: &Grid) -> Result<CaraSolution> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidPreference(format!("CARA coefficient must be positive, got {gamma}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidPreference(format!("temperature must be non-negative, got {lambda}")));
    }
    model.validate_on(grid).into_result()?;
    let (r, rho, horizon) = (model.r(), model.rho(), grid.horizon());
    let problem = SemilinearProblem::new(
        |t, x| model.coefficients(t, x).m,
        |t, x| model.coefficients(t, x).nu,
        Source::Nonlinear(Box::new(move |t, x, _u, ux| {
            let c = model.coefficients(t, x);
            let s2 = c.sigma * c.sigma;
            let tilt = (c.mu - r) / (gamma * s2) - rho * c.nu / c.sigma * ux;
            let bonus = if lambda > 0.0 {
                lambda / (2.0 * gamma) * ((TWO_PI * lambda / (gamma * gamma * s2)).ln() - 2.0 * r * (horizon - t))
            } else {
                0.0
            };
            -0.5 * gamma * c.nu * c.nu * ux * ux + 0.5 * gamma * s2 * tilt * tilt + bonus
        })),
        |_| 0.0,
    );
    let u = solve_backward(&problem, grid, &SolverOptions::default())?;
    let ux = derivative_x(&u);
    let mut mean = Vec::with_capacity(u.values().len());
    let mut var = Vec::with_capacity(u.values().len());
    for n in 0..grid.t_nodes() {
        let t = grid.t(n);
        let disc = (-r * (horizon - t)).exp();
        for i in 0..grid.x_nodes() {
            let c = model.coefficients(t, grid.x(i));
            let s2 = c.sigma * c.sigma;
            let hedge = if c.nu == 0.0 || rho == 0.0 { 0.0 } else { rho * c.nu / c.sigma * ux.at(n, i) };
            mean.push(((c.mu - r) / (gamma * s2) - hedge) * disc);
            var.push(lambda / (gamma * gamma * s2) * (-2.0 * r * (horizon - t)).exp());
        }
    }
    Ok(CaraSolution {
        mean: ScalarField::from_values(grid, mean)?,
        variance: ScalarField::from_values(grid, var)?,
        u,
        gamma,
        r,
    })
}

/// `f(t, x, Z) = (1−γ)[(λ/2) ln(2πλ/(γσ²)) + r + (μ−r+ρσZ)²/(2γσ²)] + ½Z²`.
pub fn bsde_driver(model: &MarketModel, gamma: f64, lambda: f64, t: f64, x: f64, z: f64) -> f64 {
    let c = model.coefficients(t, x);
    let s2 = c.sigma * c.sigma;
    let omg = 1.0 - gamma;
    let bonus = if lambda > 0.0 { 0.5 * lambda * (TWO_PI * lambda / (gamma * s2)).ln() } else { 0.0 };
    let tilt = c.mu - model.r() + model.rho() * c.sigma * z;
    let bracket = bonus + model.r() + tilt * tilt / (2.0 * gamma * s2);
    let head = if omg == 0.0 { 0.0 } else { omg * bracket };
    head + 0.5 * z * z
}

/// Max interior `|u_t + m u_x + ½ν² u_xx + f(t, x, ν u_x)|`.
pub fn bsde_residual(model: &MarketModel, pref: &Preference, u: &ScalarField, lambda: f64) -> Result<f64> {
    let gamma = match pref.utility() {
        Utility::Crra { gamma } => gamma,
        Utility::Log => 1.0,
        Utility::Cara { .. } => {
            return Err(Error::InvalidPreference("the BSDE form is stated for CRRA or log utility".into()))
        }
    };
    Ok(interior_residual(u, |j| {
        let c = model.coefficients(j.t, j.x);
        j.u_t + c.m * j.u_x + 0.5 * c.nu * c.nu * j.u_xx + bsde_driver(model, gamma, lambda, j.t, j.x, c.nu * j.u_x)
    }))
}

/// Summary row for the explosion cross-check table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionRow {
    pub params: OdeParams,
    pub outcome: OdeOutcome,
    pub quadrature: Option<f64>,
}

/// Table with columns `r,mu,sigma,gamma,lambda,horizon,outcome,tau,tau_quadrature`.
pub fn explosion_csv(rows: &[ExplosionRow]) -> String {
    let mut t = CsvTable::new(&["r", "mu", "sigma", "gamma", "lambda", "horizon", "outcome", "tau", "tau_quadrature"]);
    for row in rows {
        let p = &row.params;
        let (kind, tau) = match row.outcome {
            OdeOutcome::SurvivedTo(v) => ("survived", v),
            OdeOutcome::HitZeroAt(v) => ("hit_zero", v),
        };
        let mut cells: Vec<String> = [p.r, p.mu, p.sigma, p.gamma, p.lambda, p.horizon].iter().map(|v| fmt17(*v)).collect();
        cells.push(kind.to_string());
        cells.push(fmt17(tau));
        cells.push(row.quadrature.map(fmt17).unwrap_or_else(|| "nan".into()));
        t.push(cells);
    }
    t.render()
}
