//! Market and preference specifications.
//!
//! A [`MarketModel`] bundles the risk-free rate, the stock/factor correlation,
//! the horizon and one coefficient family for the drift `μ(t,x)`, volatility
//! `σ(t,x)`, factor drift `m(t,x)` and factor volatility `ν(t,x)`. The stock
//! and the single observable factor follow
//!
//! ```text
//! dS/S = μ(t,X) dt + σ(t,X) dB
//! dX   = m(t,X) dt + ν(t,X) (ρ dB + √(1-ρ²) dB̃)
//! ```
//!
//! Both types are immutable after construction and can be shared freely
//! across solver and simulation workers.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pde::Grid;

/// Coefficient callback `(t, x) -> value`.
pub type CoefFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Coefficient values at one `(t, x)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub mu: f64,
    pub sigma: f64,
    pub m: f64,
    pub nu: f64,
}

/// User-supplied coefficient functions.
#[derive(Clone)]
pub struct CustomCoefficients {
    pub mu: CoefFn,
    pub sigma: CoefFn,
    pub m: CoefFn,
    pub nu: CoefFn,
}

impl CustomCoefficients {
    pub fn new(
        mu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        m: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        nu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            mu: Arc::new(mu),
            sigma: Arc::new(sigma),
            m: Arc::new(m),
            nu: Arc::new(nu),
        }
    }
}

/// Parametric coefficient families.
#[derive(Clone)]
pub enum Family {
    /// Constant `μ`, `σ`; the factor is frozen (`m = ν = 0`).
    BlackScholes { mu: f64, sigma: f64 },
    /// `μ = r + σ·x`, constant `σ`, Ornstein–Uhlenbeck factor.
    FactorPremium {
        sigma: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    },
    /// `σ = exp(x)`, `μ = r + η·exp(x)`, Ornstein–Uhlenbeck factor.
    StochVol {
        eta: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    },
    Custom(CustomCoefficients),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::BlackScholes { mu, sigma } => f
                .debug_struct("BlackScholes")
                .field("mu", mu)
                .field("sigma", sigma)
                .finish(),
            Family::FactorPremium {
                sigma,
                kappa,
                theta,
                nu,
            } => f
                .debug_struct("FactorPremium")
                .field("sigma", sigma)
                .field("kappa", kappa)
                .field("theta", theta)
                .field("nu", nu)
                .finish(),
            Family::StochVol {
                eta,
                kappa,
                theta,
                nu,
            } => f
                .debug_struct("StochVol")
                .field("eta", eta)
                .field("kappa", kappa)
                .field("theta", theta)
                .field("nu", nu)
                .finish(),
            Family::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarketModel {
    r: f64,
    rho: f64,
    horizon: f64,
    family: Family,
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive, got {v}")))
    }
}

impl MarketModel {
    fn new(r: f64, rho: f64, horizon: f64, family: Family) -> Result<Self> {
        check_finite("r", r)?;
        check_positive("horizon", horizon)?;
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::CorrelationOutOfRange(rho));
        }
        Ok(Self {
            r,
            rho,
            horizon,
            family,
        })
    }

    pub fn black_scholes(r: f64, mu: f64, sigma: f64, horizon: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        check_positive("sigma", sigma)?;
        Self::new(r, 0.0, horizon, Family::BlackScholes { mu, sigma })
    }

    pub fn factor_premium(
        r: f64,
        rho: f64,
        horizon: f64,
        sigma: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    ) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_positive("kappa", kappa)?;
        check_finite("theta", theta)?;
        check_positive("nu", nu)?;
        Self::new(
            r,
            rho,
            horizon,
            Family::FactorPremium {
                sigma,
                kappa,
                theta,
                nu,
            },
        )
    }

    pub fn stoch_vol(
        r: f64,
        rho: f64,
        horizon: f64,
        eta: f64,
        kappa: f64,
        theta: f64,
        nu: f64,
    ) -> Result<Self> {
        check_finite("eta", eta)?;
        check_positive("kappa", kappa)?;
        check_finite("theta", theta)?;
        check_positive("nu", nu)?;
        Self::new(
            r,
            rho,
            horizon,
            Family::StochVol {
                eta,
                kappa,
                theta,
                nu,
            },
        )
    }

    pub fn custom(r: f64, rho: f64, horizon: f64, coefficients: CustomCoefficients) -> Result<Self> {
        Self::new(r, rho, horizon, Family::Custom(coefficients))
    }

    /// Copy of this model with a different correlation.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.r, rho, self.horizon, self.family.clone())
    }

    /// Copy of this model with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.r, self.rho, horizon, self.family.clone())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// True when `ν` vanishes identically by construction of the family.
    pub fn has_frozen_factor(&self) -> bool {
        matches!(self.family, Family::BlackScholes { .. })
    }

    /// Coefficients without the positivity check on custom volatility.
    #[inline]
    pub(crate) fn coefficients(&self, t: f64, x: f64) -> Coefficients {
        match &self.family {
            Family::BlackScholes { mu, sigma } => Coefficients {
                mu: *mu,
                sigma: *sigma,
                m: 0.0,
                nu: 0.0,
            },
            Family::FactorPremium {
                sigma,
                kappa,
                theta,
                nu,
            } => Coefficients {
                mu: self.r + sigma * x,
                sigma: *sigma,
                m: kappa * (theta - x),
                nu: *nu,
            },
            Family::StochVol {
                eta,
                kappa,
                theta,
                nu,
            } => {
                let vol = x.exp();
                Coefficients {
                    mu: self.r + eta * vol,
                    sigma: vol,
                    m: kappa * (theta - x),
                    nu: *nu,
                }
            }
            Family::Custom(c) => Coefficients {
                mu: (c.mu)(t, x),
                sigma: (c.sigma)(t, x),
                m: (c.m)(t, x),
                nu: (c.nu)(t, x),
            },
        }
    }

    /// Evaluates `(μ, σ, m, ν)` at `(t, x)`.
    pub fn eval_coefficients(&self, t: f64, x: f64) -> Result<Coefficients> {
        let c = self.coefficients(t, x);
        if !(c.sigma > 0.0) {
            return Err(Error::NonPositiveSigma {
                t,
                x,
                sigma: c.sigma,
            });
        }
        Ok(c)
    }

    /// Default truncated factor domain: five stationary standard deviations
    /// around the mean for OU factors, `[-5, 5]` otherwise.
    pub fn default_x_domain(&self) -> (f64, f64) {
        match self.family {
            Family::FactorPremium {
                kappa, theta, nu, ..
            }
            | Family::StochVol {
                kappa, theta, nu, ..
            } => {
                let sd = nu / (2.0 * kappa).sqrt();
                (theta - 5.0 * sd, theta + 5.0 * sd)
            }
            _ => (-5.0, 5.0),
        }
    }

    /// Scans every grid node and collects all violations.
    pub fn validate_on(&self, grid: &Grid) -> ValidationReport {
        validate_model(self, grid)
    }
}

/// Min/max of one coefficient over a grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn empty() -> Self {
        Range {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        if v.is_finite() {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveSigma { t: f64, x: f64, sigma: f64 },
    NonFinite { coefficient: &'static str, t: f64, x: f64 },
    CorrelationOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub mu: Range,
    pub sigma: Range,
    pub m: Range,
    pub nu: Range,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        match self.violations[0] {
            Violation::NonPositiveSigma { t, x, sigma } => Err(Error::NonPositiveSigma { t, x, sigma }),
            Violation::CorrelationOutOfRange(rho) => Err(Error::CorrelationOutOfRange(rho)),
            Violation::NonFinite { coefficient, t, x } => Err(Error::ValidationFailed(format!(
                "{} violation(s); first: non-finite {coefficient} at t={t}, x={x}",
                self.violations.len()
            ))),
        }
    }
}

/// Scans all grid nodes, recording coefficient ranges and every violation.
pub fn validate_model(model: &MarketModel, grid: &Grid) -> ValidationReport {
    let mut report = ValidationReport {
        mu: Range::empty(),
        sigma: Range::empty(),
        m: Range::empty(),
        nu: Range::empty(),
        violations: Vec::new(),
    };
    if !(model.rho.abs() < 1.0) {
        report
            .violations
            .push(Violation::CorrelationOutOfRange(model.rho));
    }
    for n in 0..grid.t_nodes() {
        let t = grid.t(n);
        for i in 0..grid.x_nodes() {
            let x = grid.x(i);
            let c = model.coefficients(t, x);
            for (name, v) in [("mu", c.mu), ("sigma", c.sigma), ("m", c.m), ("nu", c.nu)] {
                if !v.is_finite() {
                    report.violations.push(Violation::NonFinite {
                        coefficient: name,
                        t,
                        x,
                    });
                }
            }
            if c.sigma.is_finite() && c.sigma <= 0.0 {
                report.violations.push(Violation::NonPositiveSigma {
                    t,
                    x,
                    sigma: c.sigma,
                });
            }
            report.mu.push(c.mu);
            report.sigma.push(c.sigma);
            report.m.push(c.m);
            report.nu.push(c.nu);
        }
    }
    report
}

/// Terminal utility family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `U(w) = (w^{1-γ} - 1)/(1-γ)`, `γ > 0`, `γ ≠ 1`.
    Crra { gamma: f64 },
    /// `U(w) = ln w`; the `γ = 1` member with every `(1-γ)` factor zeroed.
    Log,
    /// `U(w) = -exp(-γ w)/γ`.
    Cara { gamma: f64 },
}

/// Temperature `λ(t, x)` weighting the entropy flow.
#[derive(Clone)]
pub enum Temperature {
    Constant(f64),
    Callback(CoefFn),
}

impl fmt::Debug for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Constant(l) => write!(f, "Constant({l})"),
            Temperature::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preference {
    utility: Utility,
    temperature: Temperature,
}

impl Preference {
    pub fn new(utility: Utility, temperature: Temperature) -> Result<Self> {
        match utility {
            Utility::Crra { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::InvalidPreference(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
                if gamma == 1.0 {
                    return Err(Error::InvalidPreference(
                        "CRRA requires gamma != 1; use Log".into(),
                    ));
                }
            }
            Utility::Cara { gamma } => {
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(Error::InvalidPreference(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
            }
            Utility::Log => {}
        }
        if let Temperature::Constant(l) = temperature {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidPreference(format!(
                    "temperature must be non-negative, got {l}"
                )));
            }
        }
        Ok(Self {
            utility,
            temperature,
        })
    }

    pub fn crra(gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(Utility::Crra { gamma }, Temperature::Constant(lambda))
    }

    pub fn log(lambda: f64) -> Result<Self> {
        Self::new(Utility::Log, Temperature::Constant(lambda))
    }

    pub fn cara(gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(Utility::Cara { gamma }, Temperature::Constant(lambda))
    }

    /// CRRA (or log when `gamma == 1`) with a constant temperature.
    pub fn power(gamma: f64, lambda: f64) -> Result<Self> {
        if gamma == 1.0 {
            Self::log(lambda)
        } else {
            Self::crra(gamma, lambda)
        }
    }

    pub fn with_temperature(&self, temperature: Temperature) -> Result<Self> {
        Self::new(self.utility, temperature)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.utility, Temperature::Constant(lambda))
    }

    pub fn utility(&self) -> Utility {
        self.utility
    }

    pub fn temperature(&self) -> &Temperature {
        &self.temperature
    }

    /// Risk aversion; 1 for log utility.
    pub fn gamma(&self) -> f64 {
        match self.utility {
            Utility::Crra { gamma } | Utility::Cara { gamma } => gamma,
            Utility::Log => 1.0,
        }
    }

    /// `1 - γ`, exactly zero for log utility.
    pub fn one_minus_gamma(&self) -> f64 {
        match self.utility {
            Utility::Crra { gamma } => 1.0 - gamma,
            Utility::Log => 0.0,
            Utility::Cara { .. } => f64::NAN,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self.utility, Utility::Log)
    }

    /// True for the classical case `λ ≡ 0`.
    pub fn is_classical(&self) -> bool {
        matches!(self.temperature, Temperature::Constant(l) if l == 0.0)
    }

    #[inline]
    pub fn lambda(&self, t: f64, x: f64) -> f64 {
        match &self.temperature {
            Temperature::Constant(l) => *l,
            Temperature::Callback(f) => f(t, x),
        }
    }

    pub fn constant_lambda(&self) -> Option<f64> {
        match self.temperature {
            Temperature::Constant(l) => Some(l),
            Temperature::Callback(_) => None,
        }
    }

    /// Terminal utility `U(w)`.
    pub fn utility_of(&self, w: f64) -> f64 {
        match self.utility {
            Utility::Crra { gamma } => (w.powf(1.0 - gamma) - 1.0) / (1.0 - gamma),
            Utility::Log => w.ln(),
            Utility::Cara { gamma } => -(-gamma * w).exp() / gamma,
        }
    }

    /// Terminal utility computed from `ln w`, robust to wealth under/overflow.
    pub fn utility_of_log_wealth(&self, log_w: f64) -> f64 {
        match self.utility {
            Utility::Crra { gamma } => (((1.0 - gamma) * log_w).exp() - 1.0) / (1.0 - gamma),
            Utility::Log => log_w,
            Utility::Cara { gamma } => -(-gamma * log_w.exp()).exp() / gamma,
        }
    }
}
