//! Reduced HJB equation for the exploratory Merton problem, the optimal
//! Gaussian policy and the value function built from it.
//!
//! For CRRA utility the value function separates as
//! `V(t,w,x) = (w^{1-γ} e^{u(t,x)} - 1)/(1-γ)`, where `u` solves
//!
//! ```text
//! u_t + (1-γ)r + m u_x + ½ν²(u_xx + u_x²) + (1-γ)λ/2 · ln(2πλ/(γσ²))
//!     + (1-γ)/(2γ) · [(μ-r)²/σ² + 2ρ(μ-r)ν/σ · u_x + ρ²ν² u_x²] = 0,  u(T,·) = 0
//! ```
//!
//! and the optimal policy is Gaussian with mean
//! `(μ-r)/(γσ²) + ρν u_x/(γσ)` and variance `λ/(γσ²)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{fmt17, CsvTable};
use crate::market::{MarketModel, Preference, Utility};
use crate::pde::{derivative_x, interior_residual, solve_backward, Grid, ScalarField, SemilinearProblem, SolverOptions, Source};

/// Gaussian differential entropy `½ ln(2πe v)`.
#[inline]
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).ln()
}

/// Mean and variance surfaces of a Gaussian feedback policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyField {
    mean: ScalarField,
    variance: ScalarField,
}

impl GaussianPolicyField {
    pub fn new(mean: ScalarField, variance: ScalarField) -> Result<Self> {
        if mean.grid() != variance.grid() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = variance.values().iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            let g = variance.grid();
            let (n, i) = (k / g.x_nodes(), k % g.x_nodes());
            return Err(Error::NonFiniteField { t: g.t(n), x: g.x(i) });
        }
        Ok(Self { mean, variance })
    }

    /// Policy with the same mean and variance at every node.
    pub fn constant(grid: &Grid, mean: f64, variance: f64) -> Result<Self> {
        Self::new(ScalarField::from_fn(grid, |_, _| mean), ScalarField::from_fn(grid, |_, _| variance))
    }

    /// Deterministic feedback policy (zero variance).
    pub fn dirac(mean: ScalarField) -> Self {
        let variance = ScalarField::zeros(mean.grid());
        Self { mean, variance }
    }

    pub fn grid(&self) -> &Grid {
        self.mean.grid()
    }

    pub fn mean(&self) -> &ScalarField {
        &self.mean
    }

    pub fn variance(&self) -> &ScalarField {
        &self.variance
    }

    /// `(mean, variance)` at `(t, x)`, clamped into the grid.
    #[inline]
    pub fn sample_clamped(&self, t: f64, x: f64) -> (f64, f64) {
        let (m, v) = ScalarField::sample_pair_clamped(&self.mean, &self.variance, t, x);
        (m, v.max(0.0))
    }

    pub fn is_degenerate(&self) -> bool {
        self.variance.values().iter().all(|v| *v == 0.0)
    }

    /// CSV with columns `t, x, mean, variance, entropy`, one row per node.
    pub fn to_csv(&self) -> String {
        let g = self.grid();
        let mut table = CsvTable::new(&["t", "x", "mean", "variance", "entropy"]);
        for n in 0..g.t_nodes() {
            for i in 0..g.x_nodes() {
                let v = self.variance.at(n, i);
                let h = if v > 0.0 { gaussian_entropy(v) } else { f64::NEG_INFINITY };
                table.push(vec![fmt17(g.t(n)), fmt17(g.x(i)), fmt17(self.mean.at(n, i)), fmt17(v), fmt17(h)]);
            }
        }
        table.render()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Exponent field of the separable value function.
///
/// For CRRA the field is `u` in `(w^{1-γ} e^u - 1)/(1-γ)`; for log utility it
/// is the additive level `ũ` in `ln w + ũ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    u: ScalarField,
    utility: Utility,
}

impl ValueSurface {
    pub fn new(u: ScalarField, utility: Utility) -> Result<Self> {
        if matches!(utility, Utility::Cara { .. }) {
            return Err(Error::InvalidPreference("value surfaces are for CRRA or log utility".into()));
        }
        Ok(Self { u, utility })
    }

    pub fn field(&self) -> &ScalarField {
        &self.u
    }

    pub fn utility(&self) -> Utility {
        self.utility
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

/// Value of the surface at `(t, x)` and wealth `w`.
pub fn value_at(surface: &ValueSurface, t: f64, x: f64, w: f64) -> Result<f64> {
    let u = surface.u.sample(t, x)?;
    Ok(value_from_exponent(surface.utility, u, w))
}

#[inline]
pub(crate) fn value_from_exponent(utility: Utility, u: f64, w: f64) -> f64 {
    match utility {
        Utility::Crra { gamma } => (w.powf(1.0 - gamma) * u.exp() - 1.0) / (1.0 - gamma),
        Utility::Log => w.ln() + u,
        Utility::Cara { .. } => f64::NAN,
    }
}

/// Entropy of the policy at `(t, x)`.
pub fn entropy_of(policy: &GaussianPolicyField, t: f64, x: f64) -> Result<f64> {
    let v = policy.variance.sample(t, x)?;
    if v <= 0.0 {
        return Err(Error::DegeneratePolicy { t, x });
    }
    Ok(gaussian_entropy(v))
}

fn require_power_utility(pref: &Preference) -> Result<()> {
    match pref.utility() {
        Utility::Cara { .. } => Err(Error::InvalidPreference(
            "the reduced HJB applies to CRRA or log utility; use the CARA solver".into(),
        )),
        _ => Ok(()),
    }
}

/// Checks `λ > 0` at every node unless the temperature is the constant 0.
fn check_temperature(pref: &Preference, grid: &Grid) -> Result<()> {
    if pref.is_classical() {
        return Ok(());
    }
    for n in 0..grid.t_nodes() {
        let t = grid.t(n);
        for i in 0..grid.x_nodes() {
            let x = grid.x(i);
            let lambda = pref.lambda(t, x);
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::TemperatureNonPositive { t, x, lambda });
            }
        }
    }
    Ok(())
}

/// `(1-γ)λ/2 · ln(2πλ/(γσ²))`, zero at `λ = 0`.
#[inline]
fn entropy_bonus(one_m_g: f64, gamma: f64, lambda: f64, sigma: f64) -> f64 {
    if lambda == 0.0 || one_m_g == 0.0 {
        0.0
    } else {
        0.5 * one_m_g * lambda * (2.0 * std::f64::consts::PI * lambda / (gamma * sigma * sigma)).ln()
    }
}

fn solve_reduced(model: &MarketModel, pref: &Preference, grid: &Grid, with_temperature: bool) -> Result<ScalarField> {
    require_power_utility(pref)?;
    model.validate_on(grid).into_result()?;
    if with_temperature {
        check_temperature(pref, grid)?;
    }
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let r = model.r();
    let rho = model.rho();
    let problem = SemilinearProblem::new(
        |t, x| model.coefficients(t, x).m,
        |t, x| model.coefficients(t, x).nu,
        Source::Nonlinear(Box::new(move |t, x, _u, ux| {
            let c = model.coefficients(t, x);
            let ex = c.mu - r;
            let lambda = if with_temperature { pref.lambda(t, x) } else { 0.0 };
            omg * r
                + 0.5 * c.nu * c.nu * ux * ux
                + entropy_bonus(omg, gamma, lambda, c.sigma)
                + omg / (2.0 * gamma)
                    * (ex * ex / (c.sigma * c.sigma)
                        + 2.0 * rho * ex * c.nu / c.sigma * ux
                        + rho * rho * c.nu * c.nu * ux * ux)
        })),
        |_| 0.0,
    );
    solve_backward(&problem, grid, &SolverOptions::default())
}

/// Solves the reduced HJB for `u` with the preference's temperature.
pub fn solve_u(model: &MarketModel, pref: &Preference, grid: &Grid) -> Result<ScalarField> {
    if pref.is_classical() {
        return solve_u0(model, pref, grid);
    }
    solve_reduced(model, pref, grid, true)
}

/// Classical exponent `u⁰` (temperature term removed).
pub fn solve_u0(model: &MarketModel, pref: &Preference, grid: &Grid) -> Result<ScalarField> {
    solve_reduced(model, pref, grid, false)
}

/// Additive level `ũ` of the log-utility value `ln w + ũ` under the optimal
/// policy (myopic mean, variance `λ/σ²`).
pub fn solve_log_level(model: &MarketModel, pref: &Preference, grid: &Grid) -> Result<ScalarField> {
    if !pref.is_log() {
        return Err(Error::InvalidPreference("log level field requires log utility".into()));
    }
    model.validate_on(grid).into_result()?;
    check_temperature(pref, grid)?;
    let r = model.r();
    let problem = SemilinearProblem::new(
        |t, x| model.coefficients(t, x).m,
        |t, x| model.coefficients(t, x).nu,
        Source::Explicit(Box::new(move |t, x| {
            let c = model.coefficients(t, x);
            let sharpe = (c.mu - r) / c.sigma;
            let lambda = pref.lambda(t, x);
            let bonus = if lambda > 0.0 {
                0.5 * lambda * (2.0 * std::f64::consts::PI * lambda / (c.sigma * c.sigma)).ln()
            } else {
                0.0
            };
            r + 0.5 * sharpe * sharpe + bonus
        })),
        |_| 0.0,
    );
    solve_backward(&problem, grid, &SolverOptions::default())
}

/// Value surface of the optimal policy for the given preference.
pub fn solve_value_surface(model: &MarketModel, pref: &Preference, grid: &Grid) -> Result<ValueSurface> {
    let u = if pref.is_log() {
        solve_log_level(model, pref, grid)?
    } else {
        solve_u(model, pref, grid)?
    };
    ValueSurface::new(u, pref.utility())
}

fn policy_from_exponent(u: &ScalarField, model: &MarketModel, pref: &Preference, with_variance: bool) -> Result<GaussianPolicyField> {
    require_power_utility(pref)?;
    let g = u.grid();
    let gamma = pref.gamma();
    let r = model.r();
    let rho = model.rho();
    let ux = derivative_x(u);
    let mut mean = Vec::with_capacity(g.t_nodes() * g.x_nodes());
    let mut var = Vec::with_capacity(g.t_nodes() * g.x_nodes());
    for n in 0..g.t_nodes() {
        let t = g.t(n);
        for i in 0..g.x_nodes() {
            let x = g.x(i);
            let c = model.eval_coefficients(t, x)?;
            let hedge = if c.nu == 0.0 || rho == 0.0 {
                0.0
            } else {
                rho * c.nu * ux.at(n, i) / (gamma * c.sigma)
            };
            mean.push((c.mu - r) / (gamma * c.sigma * c.sigma) + hedge);
            var.push(if with_variance {
                pref.lambda(t, x) / (gamma * c.sigma * c.sigma)
            } else {
                0.0
            });
        }
    }
    GaussianPolicyField::new(ScalarField::from_values(g, mean)?, ScalarField::from_values(g, var)?)
}

/// Optimal Gaussian policy built nodewise from a solved `u`.
pub fn optimal_policy(u: &ScalarField, model: &MarketModel, pref: &Preference) -> Result<GaussianPolicyField> {
    policy_from_exponent(u, model, pref, true)
}

/// Classical Merton policy from `u⁰`, wrapped as a zero-variance Gaussian.
pub fn classical_policy(u0: &ScalarField, model: &MarketModel, pref: &Preference) -> Result<GaussianPolicyField> {
    policy_from_exponent(u0, model, pref, false)
}

/// Interior residual of the exponential form `v = e^u` of the reduced HJB.
pub fn exponential_form_residual(u: &ScalarField, model: &MarketModel, pref: &Preference) -> Result<f64> {
    require_power_utility(pref)?;
    let v = u.map(f64::exp);
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let (r, rho) = (model.r(), model.rho());
    Ok(interior_residual(&v, |j| {
        let c = model.coefficients(j.t, j.x);
        let ex = c.mu - r;
        let lambda = pref.lambda(j.t, j.x);
        j.u_t
            + omg * r * j.u
            + c.m * j.u_x
            + 0.5 * c.nu * c.nu * j.u_xx
            + entropy_bonus(omg, gamma, lambda, c.sigma) * j.u
            + omg / (2.0 * gamma)
                * (ex * ex / (c.sigma * c.sigma) * j.u
                    + 2.0 * rho * ex * c.nu / c.sigma * j.u_x
                    + rho * rho * c.nu * c.nu * j.u_x * j.u_x / j.u)
    }))
}
