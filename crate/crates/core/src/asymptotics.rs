//! Small-temperature expansion of the reduced HJB solution and of the loss
//! caused by following the mean of the randomized policy.
//!
//! With constant temperature `λ`,
//!
//! ```text
//! u = u0 + (1-γ)(T-t)/2 · λ ln λ + λ u1 + λ² u2 + O(λ³)
//! ```
//!
//! where `u1`, `u2` solve linear equations sharing the transport
//! `m + ν² u0_x + (1-γ)ρν(μ-r+ρνσ u0_x)/(γσ)`:
//!
//! ```text
//! u1: source (1-γ)/2 · ln(2π/(γσ²))
//! u2: source [½ + (1-γ)ρ²/(2γ)] ν² u1_x²
//! ```
//!
//! The value of the mean policy in the classical problem is
//! `(w^{1-γ} e^ψ - 1)/(1-γ)` and `ψ = u0 + λ² φ2 + O(λ³)`, with `φ2` driven by
//! `-(1-γ)ρ²ν² u1_x²/(2γ)` under the same transport.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{classical_policy, optimal_policy, solve_u, solve_u0};
use crate::io::{fmt17, CsvTable};
use crate::market::{MarketModel, Preference, Utility};
use crate::pde::{derivative_x, solve_backward, Grid, ScalarField, SemilinearProblem, SolverOptions, Source};

fn require_crra_or_log(pref: &Preference) -> Result<()> {
    if matches!(pref.utility(), Utility::Cara { .. }) {
        return Err(Error::InvalidPreference("expansions are defined for CRRA or log utility".into()));
    }
    Ok(())
}

fn require_same_grid(field: &ScalarField, grid: &Grid) -> Result<()> {
    if field.grid() != grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Transport shared by the first- and second-order correction equations.
fn correction_drift<'a>(model: &'a MarketModel, pref: &Preference, u0_x: &'a ScalarField) -> impl Fn(f64, f64) -> f64 + 'a {
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let (r, rho) = (model.r(), model.rho());
    move |t, x| {
        let c = model.coefficients(t, x);
        let p = u0_x.sample_clamped(t, x);
        c.m + c.nu * c.nu * p + omg * rho * c.nu * (c.mu - r + rho * c.nu * c.sigma * p) / (gamma * c.sigma)
    }
}

fn solve_linear_correction(
    model: &MarketModel,
    u0: &ScalarField,
    pref: &Preference,
    grid: &Grid,
    source: impl Fn(f64, f64) -> f64,
) -> Result<ScalarField> {
    let u0_x = derivative_x(u0);
    let drift = correction_drift(model, pref, &u0_x);
    let problem = SemilinearProblem::new(
        drift,
        |t, x| model.coefficients(t, x).nu,
        Source::Explicit(Box::new(source)),
        |_| 0.0,
    );
    solve_backward(&problem, grid, &SolverOptions::default())
}

/// First-order correction `u1`.
pub fn solve_u1(model: &MarketModel, pref: &Preference, u0: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    require_crra_or_log(pref)?;
    require_same_grid(u0, grid)?;
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    solve_linear_correction(model, u0, pref, grid, move |t, x| {
        if omg == 0.0 {
            return 0.0;
        }
        let s = model.coefficients(t, x).sigma;
        0.5 * omg * (2.0 * std::f64::consts::PI / (gamma * s * s)).ln()
    })
}

/// Second-order correction `u2`.
pub fn solve_u2(model: &MarketModel, pref: &Preference, u0: &ScalarField, u1: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    require_crra_or_log(pref)?;
    require_same_grid(u0, grid)?;
    require_same_grid(u1, grid)?;
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let rho = model.rho();
    let u1_x = derivative_x(u1);
    solve_linear_correction(model, u0, pref, grid, move |t, x| {
        let nu = model.coefficients(t, x).nu;
        let q = u1_x.sample_clamped(t, x);
        (0.5 + omg * rho * rho / (2.0 * gamma)) * nu * nu * q * q
    })
}

/// Second-order coefficient `φ2` of the mean-policy value exponent.
pub fn solve_phi2(model: &MarketModel, pref: &Preference, u0: &ScalarField, u1: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    require_crra_or_log(pref)?;
    require_same_grid(u0, grid)?;
    require_same_grid(u1, grid)?;
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let rho = model.rho();
    let u1_x = derivative_x(u1);
    solve_linear_correction(model, u0, pref, grid, move |t, x| {
        let nu = model.coefficients(t, x).nu;
        let q = u1_x.sample_clamped(t, x);
        -omg * rho * rho * nu * nu * q * q / (2.0 * gamma)
    })
}

/// Exponent `ψ` of the classical value of a deterministic feedback policy
/// `a(t, x)` (no discounting).
pub fn solve_psi(model: &MarketModel, pref: &Preference, mean_policy: &ScalarField, grid: &Grid) -> Result<ScalarField> {
    require_crra_or_log(pref)?;
    require_same_grid(mean_policy, grid)?;
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let (r, rho) = (model.r(), model.rho());
    let problem = SemilinearProblem::new(
        |t, x| {
            let c = model.coefficients(t, x);
            c.m + omg * rho * c.nu * c.sigma * mean_policy.sample_clamped(t, x)
        },
        |t, x| model.coefficients(t, x).nu,
        Source::Nonlinear(Box::new(|t, x, _psi, psi_x| {
            let c = model.coefficients(t, x);
            let a = mean_policy.sample_clamped(t, x);
            0.5 * c.nu * c.nu * psi_x * psi_x + omg * (r + (c.mu - r) * a - 0.5 * gamma * c.sigma * c.sigma * a * a)
        })),
        |_| 0.0,
    );
    solve_backward(&problem, grid, &SolverOptions::default())
}

/// `u0`, `u1`, `u2`, `φ2` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionBundle {
    pub u0: ScalarField,
    pub u1: ScalarField,
    pub u2: ScalarField,
    pub phi2: ScalarField,
    gamma: f64,
    horizon: f64,
}

impl ExpansionBundle {
    /// Coefficient of `λ ln λ`: `(1-γ)(T-t)/2`.
    pub fn log_coefficient(&self, t: f64) -> f64 {
        (1.0 - self.gamma) * (self.horizon - t) / 2.0
    }

    /// First-order coefficient of the mean-policy exponent; identically zero.
    pub fn phi1(&self) -> f64 {
        0.0
    }

    pub fn grid(&self) -> &Grid {
        self.u0.grid()
    }

    /// `u0 + c(t) λ ln λ + λ u1 + λ² u2`.
    pub fn reconstruct(&self, lambda: f64) -> ScalarField {
        let ll = if lambda > 0.0 { lambda * lambda.ln() } else { 0.0 };
        let g = self.grid();
        let mut v = Vec::with_capacity(g.t_nodes() * g.x_nodes());
        for n in 0..g.t_nodes() {
            let c = self.log_coefficient(g.t(n)) * ll;
            for i in 0..g.x_nodes() {
                v.push(self.u0.at(n, i) + c + lambda * self.u1.at(n, i) + lambda * lambda * self.u2.at(n, i));
            }
        }
        ScalarField::from_values(g, v).expect("same grid")
    }
}

pub fn expansion_bundle(model: &MarketModel, pref: &Preference, grid: &Grid) -> Result<ExpansionBundle> {
    require_crra_or_log(pref)?;
    let base = pref.with_lambda(0.0)?;
    let u0 = solve_u0(model, &base, grid)?;
    let u1 = solve_u1(model, pref, &u0, grid)?;
    let u2 = solve_u2(model, pref, &u0, &u1, grid)?;
    let phi2 = solve_phi2(model, pref, &u0, &u1, grid)?;
    Ok(ExpansionBundle {
        u0,
        u1,
        u2,
        phi2,
        gamma: pref.gamma(),
        horizon: grid.horizon(),
    })
}

/// `u - (u0 + c λ ln λ + λ u1 + λ² u2)` nodewise.
pub fn expansion_remainder(bundle: &ExpansionBundle, u: &ScalarField, lambda: f64) -> Result<ScalarField> {
    let approx = bundle.reconstruct(lambda);
    u.zip_with(&approx, |_, _, a, b| a - b)
}

/// Max-node gap between the full solution at `λ` and its second-order expansion.
pub fn expansion_residual(model: &MarketModel, pref: &Preference, grid: &Grid, lambda: f64) -> Result<f64> {
    let pref = pref.with_lambda(lambda)?;
    let bundle = expansion_bundle(model, &pref, grid)?;
    let u = solve_u(model, &pref, grid)?;
    Ok(expansion_remainder(&bundle, &u, lambda)?.max_abs())
}

/// Bias and loss fields at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub lambda: f64,
    /// Mean of the optimal randomized policy minus the classical policy.
    pub bias: ScalarField,
    /// `λ ρν u1_x/(γσ)`.
    pub predicted_bias: ScalarField,
    /// `1 - exp((ψ - ψ*)/(1-γ))`, `ψ*` the classical optimum.
    pub delta_exact: ScalarField,
    /// `-λ² φ2/(1-γ)`.
    pub delta_predicted: ScalarField,
    /// `λ² |φ2| · |1 + 1/((1-γ)V0)|` at unit wealth.
    pub relative_utility_loss: ScalarField,
    /// `|V_λ - V0| / |V0|` at unit wealth from the solved exponents.
    pub relative_utility_loss_direct: ScalarField,
    /// Exponent of the mean policy's classical value.
    pub psi: ScalarField,
    /// Exponent of the classical optimum, from the same policy-evaluation
    /// equation under the classical policy.
    pub psi_classical: ScalarField,
}

impl LossReport {
    /// CSV with columns `t, x, bias, predicted_bias, delta_exact,
    /// delta_predicted, rel_utility_loss`.
    pub fn to_csv(&self) -> String {
        let g = self.bias.grid();
        let mut table = CsvTable::new(&[
            "t",
            "x",
            "bias",
            "predicted_bias",
            "delta_exact",
            "delta_predicted",
            "rel_utility_loss",
        ]);
        for n in 0..g.t_nodes() {
            for i in 0..g.x_nodes() {
                table.push(
                    [
                        g.t(n),
                        g.x(i),
                        self.bias.at(n, i),
                        self.predicted_bias.at(n, i),
                        self.delta_exact.at(n, i),
                        self.delta_predicted.at(n, i),
                        self.relative_utility_loss.at(n, i),
                    ]
                    .iter()
                    .map(|v| fmt17(*v))
                    .collect(),
                );
            }
        }
        table.render()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Loss report at temperature `λ` reusing a solved bundle.
pub fn loss_report_with(bundle: &ExpansionBundle, model: &MarketModel, pref: &Preference, lambda: f64) -> Result<LossReport> {
    require_crra_or_log(pref)?;
    let grid = bundle.grid().clone();
    let pref = pref.with_lambda(lambda)?;
    let gamma = pref.gamma();
    let omg = pref.one_minus_gamma();
    let rho = model.rho();

    let u = solve_u(model, &pref, &grid)?;
    let mean = optimal_policy(&u, model, &pref)?.mean().clone();
    let classical = classical_policy(&bundle.u0, model, &pref)?.mean().clone();
    let bias = mean.zip_with(&classical, |_, _, a, b| a - b)?;
    let u1_x = derivative_x(&bundle.u1);
    let predicted_bias = u1_x.map_nodes(|t, x, q| {
        let c = model.coefficients(t, x);
        if c.nu == 0.0 || rho == 0.0 {
            0.0
        } else {
            lambda * rho * c.nu * q / (gamma * c.sigma)
        }
    });

    if omg == 0.0 {
        // log utility: the mean policy is the classical one
        let zero = ScalarField::zeros(&grid);
        return Ok(LossReport {
            lambda,
            bias,
            predicted_bias,
            delta_exact: zero.clone(),
            delta_predicted: zero.clone(),
            relative_utility_loss: zero.clone(),
            relative_utility_loss_direct: zero.clone(),
            psi: zero.clone(),
            psi_classical: zero,
        });
    }

    let (psi, psi_classical) = rayon::join(
        || solve_psi(model, &pref, &mean, &grid),
        || solve_psi(model, &pref, &classical, &grid),
    );
    let (psi, psi_classical) = (psi?, psi_classical?);
    let delta_exact = psi.zip_with(&psi_classical, |_, _, p, q| -((p - q) / omg).exp_m1())?;
    let delta_predicted = bundle.phi2.map(|f| -lambda * lambda * f / omg);
    let relative_utility_loss = bundle.phi2.zip_with(&bundle.u0, |_, _, f, u0| {
        if f == 0.0 {
            return 0.0;
        }
        let v0 = u0.exp_m1() / omg;
        lambda * lambda * f.abs() * (1.0 + 1.0 / (omg * v0)).abs()
    })?;
    let relative_utility_loss_direct = psi.zip_with(&psi_classical, |_, _, p, q| {
        let num = (p.exp() - q.exp()).abs();
        let den = q.exp_m1().abs();
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    })?;
    Ok(LossReport {
        lambda,
        bias,
        predicted_bias,
        delta_exact,
        delta_predicted,
        relative_utility_loss,
        relative_utility_loss_direct,
        psi,
        psi_classical,
    })
}

/// Loss report at temperature `λ`.
pub fn loss_report(model: &MarketModel, pref: &Preference, lambda: f64, grid: &Grid) -> Result<LossReport> {
    let bundle = expansion_bundle(model, &pref.with_lambda(lambda)?, grid)?;
    loss_report_with(&bundle, model, pref, lambda)
}

/// Loss reports over several temperatures, solved concurrently.
pub fn loss_sweep(bundle: &ExpansionBundle, model: &MarketModel, pref: &Preference, lambdas: &[f64]) -> Result<Vec<LossReport>> {
    lambdas
        .par_iter()
        .map(|&l| loss_report_with(bundle, model, pref, l))
        .collect()
}

/// Least-squares slope of `ln|value|` against `ln λ`.
pub fn order_check(values: &[(f64, f64)]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::DegenerateData(format!("need at least 3 points, got {}", values.len())));
    }
    if let Some((l, v)) = values.iter().find(|(_, v)| !(v.abs() >= 1e-14)) {
        return Err(Error::DegenerateData(format!("value {v:e} at λ={l} is numerically zero")));
    }
    if values.iter().any(|(l, _)| !(*l > 0.0)) {
        return Err(Error::DegenerateData("λ values must be positive".into()));
    }
    let ratio = values[1].0 / values[0].0;
    for w in values.windows(2) {
        if ((w[1].0 / w[0].0) / ratio - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateData("λ values are not in geometric progression".into()));
        }
    }
    let pts: Vec<(f64, f64)> = values.iter().map(|(l, v)| (l.ln(), v.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::CustomCoefficients;

    fn bs() -> MarketModel {
        MarketModel::black_scholes(0.02, 0.08, 0.2, 1.0).unwrap()
    }

    fn fp(rho: f64) -> MarketModel {
        MarketModel::factor_premium(0.02, rho, 1.0, 0.2, 1.0, 0.3, 0.2).unwrap()
    }

    /// Factor premium with volatility depending on the factor level.
    fn level_vol() -> MarketModel {
        let (r, s0, beta, theta) = (0.02, 0.2, 2.0, 0.3);
        let vol = move |x: f64| s0 * (beta * (x - theta) * (x - theta)).exp();
        MarketModel::custom(
            r,
            -0.5,
            1.0,
            CustomCoefficients::new(
                move |_, x| r + vol(x) * x,
                move |_, x| vol(x),
                move |_, x| 1.0 * (theta - x),
                |_, _| 0.2,
            ),
        )
        .unwrap()
    }

    fn grid_for(m: &MarketModel, nt: usize, nx: usize) -> Grid {
        let (lo, hi) = (0.3 - 5.0 * 0.2 / 2f64.sqrt(), 0.3 + 5.0 * 0.2 / 2f64.sqrt());
        Grid::new(m.horizon(), nt, lo, hi, nx).unwrap()
    }

    #[test]
    fn black_scholes_first_order_closed_form() {
        let m = bs();
        let g = Grid::new(1.0, 41, -5.0, 5.0, 11).unwrap();
        let pref = Preference::crra(2.0, 0.01).unwrap();
        let b = expansion_bundle(&m, &pref, &g).unwrap();
        let oracle = -0.5 * (2.0 * std::f64::consts::PI / (2.0 * 0.04)).ln();
        assert!((oracle + 2.181803).abs() < 1e-6);
        assert!((b.u1.at(0, 4) - oracle).abs() < 1e-12);
        assert_eq!(b.u2.max_abs(), 0.0);
        assert_eq!(b.phi2.max_abs(), 0.0);
        let res = expansion_residual(&m, &pref, &g, 0.01).unwrap();
        assert!(res < 1e-8, "{res}");
    }

    #[test]
    fn terminal_slices_vanish() {
        let m = level_vol();
        let g = grid_for(&m, 41, 41);
        let b = expansion_bundle(&m, &Preference::crra(2.0, 0.01).unwrap(), &g).unwrap();
        let last = g.t_nodes() - 1;
        for f in [&b.u1, &b.u2, &b.phi2] {
            assert!(f.slice(last).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn log_utility_kills_every_correction() {
        let m = level_vol();
        let g = grid_for(&m, 41, 41);
        let pref = Preference::log(0.01).unwrap();
        let b = expansion_bundle(&m, &pref, &g).unwrap();
        for f in [&b.u0, &b.u1, &b.u2, &b.phi2] {
            assert_eq!(f.max_abs(), 0.0);
        }
        assert!(expansion_residual(&m, &pref, &g, 0.03).unwrap() <= 1e-12);
        let rep = loss_report_with(&b, &m, &pref, 0.02).unwrap();
        assert!(rep.bias.max_abs() < 1e-14);
    }

    #[test]
    fn factor_premium_first_order_is_state_free() {
        let m = fp(0.0);
        let g = grid_for(&m, 81, 61);
        let b = expansion_bundle(&m, &Preference::crra(2.0, 0.01).unwrap(), &g).unwrap();
        assert!(derivative_x(&b.u1).max_abs() < 1e-10);
    }

    #[test]
    fn phi2_is_nonnegative_for_high_risk_aversion() {
        let m = level_vol();
        let g = grid_for(&m, 81, 61);
        let b = expansion_bundle(&m, &Preference::crra(2.0, 0.01).unwrap(), &g).unwrap();
        assert!(b.phi2.min() >= -1e-12);
        assert!(b.phi2.max() > 0.0);
    }

    #[test]
    fn psi_reproduces_u0_under_classical_policy() {
        let m = fp(-0.5);
        let g = grid_for(&m, 201, 101);
        let pref = Preference::crra(2.0, 0.0).unwrap();
        let u0 = solve_u0(&m, &pref, &g).unwrap();
        let a = classical_policy(&u0, &m, &pref).unwrap();
        let psi = solve_psi(&m, &pref, a.mean(), &g).unwrap();
        let i = g.nearest_x(0.3);
        assert!((psi.at(0, i) - u0.at(0, i)).abs() < 1e-5);
        let b = bs();
        let gb = Grid::new(1.0, 41, -5.0, 5.0, 11).unwrap();
        let pb = Preference::crra(2.0, 0.01).unwrap();
        let ub = solve_u(&b, &pb, &gb).unwrap();
        let psib = solve_psi(&b, &pb, optimal_policy(&ub, &b, &pb).unwrap().mean(), &gb).unwrap();
        assert!((psib.at(0, 3) + 0.0425).abs() < 1e-12);
    }

    #[test]
    fn black_scholes_loss_is_zero() {
        let m = bs();
        let g = Grid::new(1.0, 41, -5.0, 5.0, 11).unwrap();
        let rep = loss_report(&m, &Preference::crra(2.0, 0.01).unwrap(), 0.01, &g).unwrap();
        assert!(rep.bias.max_abs() < 1e-15);
        assert_eq!(rep.delta_exact.max_abs(), 0.0);
        assert_eq!(rep.delta_predicted.max_abs(), 0.0);
    }

    #[test]
    fn level_vol_orders() {
        let m = level_vol();
        let g = grid_for(&m, 201, 101);
        let pref = Preference::crra(2.0, 0.01).unwrap();
        let b = expansion_bundle(&m, &pref, &g).unwrap();
        let lambdas = [0.04, 0.02, 0.01];
        let reps = loss_sweep(&b, &m, &pref, &lambdas).unwrap();
        let x = g.nearest_x(0.3);
        let mut bias_rem = Vec::new();
        let mut delta = Vec::new();
        let mut delta_rem = Vec::new();
        for r in &reps {
            assert!(r.delta_exact.min() >= -1e-9, "{}", r.delta_exact.min());
            let d = r.bias.zip_with(&r.predicted_bias, |_, _, a, b| a - b).unwrap();
            bias_rem.push((r.lambda, d.at(0, x)));
            delta.push((r.lambda, r.delta_exact.at(0, x)));
            delta_rem.push((r.lambda, r.delta_exact.at(0, x) - r.delta_predicted.at(0, x)));
        }
        let s_bias = order_check(&bias_rem).unwrap();
        let s_delta = order_check(&delta).unwrap();
        let s_rem = order_check(&delta_rem).unwrap();
        assert!((1.8..=2.2).contains(&s_bias), "bias slope {s_bias} {bias_rem:?}");
        assert!((1.8..=2.2).contains(&s_delta), "delta slope {s_delta} {delta:?}");
        assert!((2.6..=3.4).contains(&s_rem), "delta remainder slope {s_rem} {delta_rem:?}");
    }

    #[test]
    fn order_check_examples() {
        let sq: Vec<_> = [0.04, 0.02, 0.01].iter().map(|l: &f64| (*l, l * l)).collect();
        assert!((order_check(&sq).unwrap() - 2.0).abs() < 1e-12);
        let cu: Vec<_> = [0.04, 0.02, 0.01].iter().map(|l: &f64| (*l, l.powi(3))).collect();
        assert!((order_check(&cu).unwrap() - 3.0).abs() < 1e-12);
        assert!(matches!(order_check(&[(0.04, 1.0), (0.02, 0.0), (0.01, 1.0)]), Err(Error::DegenerateData(_))));
        assert!(matches!(order_check(&[(0.04, 1.0), (0.02, 1.0)]), Err(Error::DegenerateData(_))));
    }
}
