use rpu_merton::hjb::{classical_policy, gaussian_entropy, optimal_policy, solve_u0, solve_value_surface, value_at, GaussianPolicyField, ValueSurface};
use rpu_merton::market::{MarketModel, Preference};
use rpu_merton::pde::{Grid, ScalarField};
use rpu_merton::simulate::*;

fn bs() -> MarketModel {
    MarketModel::black_scholes(0.02, 0.08, 0.2, 1.0).unwrap()
}

fn factor() -> MarketModel {
    MarketModel::factor_premium(0.02, -0.5, 1.0, 0.2, 1.0, 0.3, 0.2).unwrap()
}

fn small_grid() -> Grid {
    Grid::new(1.0, 11, -1.0, 1.0, 5).unwrap()
}

/// J₀ of a constant Gaussian policy under Black–Scholes, CRRA γ ≠ 1.
fn constant_policy_value(gamma: f64, lambda: f64, m: f64, v: f64) -> f64 {
    let (r, mu, sigma, t) = (0.02, 0.08, 0.2, 1.0);
    let h = gaussian_entropy(v);
    let omg = 1.0 - gamma;
    let growth = omg * (r + (mu - r) * m - 0.5 * gamma * sigma * sigma * (m * m + v)) * t;
    let k = omg * lambda * h * t;
    let flow = if k == 0.0 { lambda * h * t } else { lambda * h * k.exp_m1() / (omg * lambda * h) };
    flow + k.exp() * growth.exp_m1() / omg
}

#[test]
fn ou_transition_moments() {
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 11)
        .with_start(1.0, 0.0)
        .with_recording(Recording::Terminal);
    let ens = simulate_factor(&factor(), &cfg).unwrap();
    let mean = ens.estimate(|p| ens.terminal_x(p));
    let target_mean = 0.3 + (0.0 - 0.3) * (-1.0f64).exp();
    assert!(mean.covers(target_mean), "{mean:?} vs {target_mean}");
    let var = ens.estimate(|p| (ens.terminal_x(p) - mean.mean).powi(2)).mean;
    let target_var = 0.04 * (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((var / target_var - 1.0).abs() < 0.05, "{var} vs {target_var}");
}

#[test]
fn euler_weak_order_on_factor_mean() {
    // Antithetic pairs cancel the noise in the linear factor exactly, so the
    // sample mean is the scheme's own mean and the bias is measurable.
    let exact = 0.3 - 0.3 * (-1.0f64).exp();
    let bias = |dt: f64| {
        let cfg = SimConfig::new(2, dt, 5).with_antithetic(true).with_recording(Recording::Terminal);
        let ens = simulate_factor(&factor(), &cfg).unwrap();
        (ens.estimate(|p| ens.terminal_x(p)).mean - exact).abs()
    };
    let (b1, b2, b3) = (bias(0.02), bias(0.01), bias(0.005));
    let o1 = (b1 / b2).log2();
    let o2 = (b2 / b3).log2();
    assert!((o1 - 1.0).abs() < 0.1 && (o2 - 1.0).abs() < 0.1, "{o1} {o2}");
}

#[test]
fn wealth_moment_under_optimal_black_scholes_policy() {
    let pol = GaussianPolicyField::constant(&small_grid(), 0.75, 0.125).unwrap();
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 21).with_recording(Recording::Terminal);
    let ens = simulate_exploratory_wealth(&bs(), &pref, &pol, &cfg).unwrap();
    let est = ens.estimate(|p| 1.0 / ens.terminal_wealth(p));
    assert!(est.covers((-0.0375f64).exp()), "{est:?}");
    assert!(ens.min_wealth() > 0.0);
}

#[test]
fn antithetic_pairing_reduces_error() {
    let pol = GaussianPolicyField::constant(&small_grid(), 0.75, 0.125).unwrap();
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let base = SimConfig::new(20_000, 1.0 / 50.0, 8).with_recording(Recording::Terminal);
    let plain = simulate_exploratory_wealth(&bs(), &pref, &pol, &base).unwrap();
    let anti = simulate_exploratory_wealth(&bs(), &pref, &pol, &base.clone().with_antithetic(true)).unwrap();
    let se_plain = plain.estimate(|p| 1.0 / plain.terminal_wealth(p)).standard_error;
    let se_anti = anti.estimate(|p| 1.0 / anti.terminal_wealth(p)).standard_error;
    assert!(se_plain / se_anti >= 1.2, "{se_plain} {se_anti}");
}

#[test]
fn classical_black_scholes_utility() {
    let a = ScalarField::from_fn(&small_grid(), |_, _| 0.75);
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 2).with_recording(Recording::Terminal);
    let ens = simulate_classical_wealth(&bs(), &a, &cfg).unwrap();
    let est = ens.terminal_utility_estimate(&Preference::crra(2.0, 0.0).unwrap());
    let target = -(-0.0425f64).exp_m1();
    assert!((target - 0.041609).abs() < 1e-6);
    assert!(est.covers(target), "{est:?} vs {target}");
}

#[test]
fn classical_factor_policy_matches_pde() {
    let model = factor();
    let pref = Preference::crra(2.0, 0.0).unwrap();
    let grid = Grid::default_for(&model);
    let u0 = solve_u0(&model, &pref, &grid).unwrap();
    let a = classical_policy(&u0, &model, &pref).unwrap();
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 4)
        .with_start(1.0, 0.3)
        .with_recording(Recording::Terminal);
    let ens = simulate_classical_wealth(&model, a.mean(), &cfg).unwrap();
    let est = ens.terminal_utility_estimate(&pref);
    let surface = ValueSurface::new(u0, pref.utility()).unwrap();
    let target = value_at(&surface, 0.0, 0.3, 1.0).unwrap();
    assert!(est.covers(target), "{est:?} vs {target}");
}

#[test]
fn rpu_estimate_matches_constant_policy_oracle() {
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let pol = GaussianPolicyField::constant(&small_grid(), 0.75, 0.125).unwrap();
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 77);
    let est = estimate_rpu(&bs(), &pref, &pol, &cfg).unwrap();
    let oracle = constant_policy_value(2.0, 0.01, 0.75, 0.125);
    assert!((oracle - 0.040452).abs() < 1e-6);
    assert!(est.covers(oracle), "{est:?} vs {oracle}");
}

#[test]
fn log_utility_payoff_is_drift_plus_entropy() {
    let lambda = 0.02;
    let pref = Preference::log(lambda).unwrap();
    let (m, v) = (1.2, 0.3);
    let pol = GaussianPolicyField::constant(&small_grid(), m, v).unwrap();
    let cfg = SimConfig::new(50_000, 0.01, 9).with_start(2.0, 0.0).with_recording(Recording::Terminal);
    let ens = simulate_exploratory_wealth(&bs(), &pref, &pol, &cfg).unwrap();
    assert!((0..ens.n_paths()).all(|p| ens.accumulators(p).k == 0.0));
    let est = ens.rpu_estimate(&pref);
    let target = 2.0f64.ln() + (0.02 + 0.06 * m - 0.5 * 0.04 * (m * m + v)) + lambda * gaussian_entropy(v);
    assert!(est.covers(target), "{est:?} vs {target}");
}

#[test]
fn suboptimal_constant_policy_pde_and_mc_agree() {
    let model = bs();
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let grid = Grid::default_for(&model);
    let pol = GaussianPolicyField::constant(&grid, 0.5, 0.125).unwrap();
    let q = policy_value_pde(&model, &pref, &pol, &grid).unwrap();
    let surface = ValueSurface::new(q, pref.utility()).unwrap();
    let pde_value = value_at(&surface, 0.0, 0.0, 1.0).unwrap();
    let oracle = constant_policy_value(2.0, 0.01, 0.5, 0.125);
    assert!((pde_value - oracle).abs() < 1e-8, "{pde_value} vs {oracle}");
    let est = estimate_rpu(&model, &pref, &pol, &SimConfig::new(100_000, 1.0 / 250.0, 3)).unwrap();
    assert!(est.covers(oracle), "{est:?} vs {oracle}");
    assert!(oracle < constant_policy_value(2.0, 0.01, 0.75, 0.125));
}

#[test]
fn optimal_factor_policy_matches_value_surface() {
    let model = factor();
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let grid = Grid::default_for(&model);
    let surface = solve_value_surface(&model, &pref, &grid).unwrap();
    let pol = optimal_policy(surface.field(), &model, &pref).unwrap();
    let cfg = SimConfig::new(100_000, 1.0 / 250.0, 12).with_start(1.0, 0.3);
    let est = estimate_rpu(&model, &pref, &pol, &cfg).unwrap();
    let target = value_at(&surface, 0.0, 0.3, 1.0).unwrap();
    assert!(est.covers(target), "{est:?} vs {target}");
}

#[test]
fn policy_value_never_beats_optimum() {
    let model = factor();
    let grid = Grid::default_for(&model);
    for gamma in [0.5, 2.0, 4.0] {
        let pref = Preference::crra(gamma, 0.01).unwrap();
        let surface = solve_value_surface(&model, &pref, &grid).unwrap();
        for (m, v) in [(0.5, 0.125), (1.5, 0.05), (0.0, 0.3)] {
            let pol = GaussianPolicyField::constant(&grid, m, v).unwrap();
            let q = policy_value_pde(&model, &pref, &pol, &grid).unwrap();
            let qs = ValueSurface::new(q, pref.utility()).unwrap();
            for x in [0.0, 0.3, 0.6] {
                let vp = value_at(&qs, 0.0, x, 1.0).unwrap();
                let vo = value_at(&surface, 0.0, x, 1.0).unwrap();
                assert!(vp <= vo + 1e-8, "gamma={gamma} m={m} v={v} x={x}: {vp} > {vo}");
            }
        }
    }
}

#[test]
fn admissibility_reports() {
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let cfg = SimConfig::new(2_000, 1.0 / 250.0, 1);
    let good = GaussianPolicyField::constant(&small_grid(), 0.75, 0.125).unwrap();
    let rep = admissibility_diagnostic(&bs(), &pref, &good, &cfg);
    assert!(rep.pass(), "{rep:?}");
    assert_eq!(rep.entries.len(), 4);

    let wild = GaussianPolicyField::constant(&small_grid(), 0.75, 1e6).unwrap();
    let rep = admissibility_diagnostic(&bs(), &pref, &wild, &cfg);
    assert!(!rep.pass(), "{rep:?}");

    let dirac = GaussianPolicyField::constant(&small_grid(), 0.75, 0.0).unwrap();
    let rep = admissibility_diagnostic(&bs(), &pref, &dirac, &cfg);
    assert!(rep.pass());
    assert!(rep.entry("entropy_exp_moment").unwrap().note.is_some());
}

#[test]
fn positive_weight_along_paths() {
    let model = factor();
    let grid = Grid::default_for(&model);
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let surface = solve_value_surface(&model, &pref, &grid).unwrap();
    let pol = optimal_policy(surface.field(), &model, &pref).unwrap();
    let ens = simulate_exploratory_wealth(&model, &pref, &pol, &SimConfig::new(200, 0.01, 5).with_start(1.0, 0.3)).unwrap();
    assert!(ens.min_wealth() > 0.0);
    assert!(positive_weight_check(&ens, &pref, &surface));
    // J' = −J − 2/(1−γ) flips the sign of the weight (1−γ)J + 1.
    let flipped = |t: f64, w: f64, x: f64| {
        let j = rpu_merton::hjb::value_at(&surface, t, x.clamp(grid.x_lo(), grid.x_hi()), w).unwrap();
        -j + 2.0
    };
    assert!(!positive_weight_check_with(&ens, &pref, flipped));

    let bs_model = bs();
    let g2 = Grid::default_for(&bs_model);
    let pref = Preference::crra(0.5, 0.01).unwrap();
    let surface = solve_value_surface(&bs_model, &pref, &g2).unwrap();
    let pol = optimal_policy(surface.field(), &bs_model, &pref).unwrap();
    let ens = simulate_exploratory_wealth(&bs_model, &pref, &pol, &SimConfig::new(200, 0.01, 6)).unwrap();
    assert!(positive_weight_check(&ens, &pref, &surface));
}

#[test]
fn simulation_is_reproducible() {
    let model = factor();
    let pref = Preference::crra(2.0, 0.01).unwrap();
    let pol = GaussianPolicyField::constant(&Grid::default_for(&model), 0.6, 0.1).unwrap();
    let cfg = SimConfig::new(64, 0.01, 99).with_start(1.0, 0.3).with_antithetic(true);
    let a = simulate_exploratory_wealth(&model, &pref, &pol, &cfg).unwrap();
    let b = simulate_exploratory_wealth(&model, &pref, &pol, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.path_csv().unwrap(), b.path_csv().unwrap());
    let c = simulate_exploratory_wealth(&model, &pref, &pol, &SimConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn cara_is_rejected_for_fractional_wealth() {
    let pref = Preference::cara(2.0, 0.01).unwrap();
    let pol = GaussianPolicyField::constant(&small_grid(), 0.75, 0.125).unwrap();
    assert!(simulate_exploratory_wealth(&bs(), &pref, &pol, &SimConfig::new(2, 0.1, 1)).is_err());
}
