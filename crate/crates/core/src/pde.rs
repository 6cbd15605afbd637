//! Backward Crank–Nicolson solver for one-dimensional semilinear parabolic
//! equations
//!
//! ```text
//! ∂u/∂t + a(t,x) u_x + ½ b(t,x)² u_xx + s(t, x, u, u_x) = 0,   u(T, x) = g(x)
//! ```
//!
//! on a truncated uniform grid. The linear part is implicit; the source is
//! lagged and resolved by Picard iteration inside every time step. Both
//! boundaries impose a zero second derivative through a one-sided
//! second-order stencil (plain linear extrapolation on grids too small for it).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::fmt17;

/// Uniform tensor grid on `[0, T] × [x_lo, x_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    horizon: f64,
    t_nodes: usize,
    x_lo: f64,
    x_hi: f64,
    x_nodes: usize,
}

impl Grid {
    pub fn new(horizon: f64, t_nodes: usize, x_lo: f64, x_hi: f64, x_nodes: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if t_nodes < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 time nodes, got {t_nodes}")));
        }
        if x_nodes < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 space nodes, got {x_nodes}")));
        }
        if !(x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi) {
            return Err(Error::InvalidGrid(format!("need x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        Ok(Self {
            horizon,
            t_nodes,
            x_lo,
            x_hi,
            x_nodes,
        })
    }

    /// 201 space nodes × 401 time nodes (per unit horizon) over the model's
    /// default factor domain.
    pub fn default_for(model: &crate::market::MarketModel) -> Self {
        let (lo, hi) = model.default_x_domain();
        let t_nodes = (400.0 * model.horizon()).round().max(1.0) as usize + 1;
        Self::new(model.horizon(), t_nodes, lo, hi, 201).expect("default grid is valid")
    }

    /// Grid with the time and space spacing both halved.
    pub fn refined(&self) -> Self {
        Self {
            t_nodes: 2 * (self.t_nodes - 1) + 1,
            x_nodes: 2 * (self.x_nodes - 1) + 1,
            ..self.clone()
        }
    }

    /// Grid with `factor`-times coarser spacing in both directions (rounded).
    pub fn coarsened(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            t_nodes: ((self.t_nodes - 1) / f).max(1) + 1,
            x_nodes: ((self.x_nodes - 1) / f).max(2) + 1,
            ..self.clone()
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn t_nodes(&self) -> usize {
        self.t_nodes
    }
    pub fn x_nodes(&self) -> usize {
        self.x_nodes
    }
    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }
    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }
    pub fn dt(&self) -> f64 {
        self.horizon / (self.t_nodes - 1) as f64
    }
    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.x_nodes - 1) as f64
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        if n + 1 == self.t_nodes {
            self.horizon
        } else {
            self.horizon * n as f64 / (self.t_nodes - 1) as f64
        }
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.x_nodes {
            self.x_hi
        } else {
            self.x_lo + (self.x_hi - self.x_lo) * i as f64 / (self.x_nodes - 1) as f64
        }
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        let eps = 1e-12 * (1.0 + self.horizon.abs());
        let epx = 1e-12 * (1.0 + self.x_lo.abs().max(self.x_hi.abs()));
        t >= -eps && t <= self.horizon + eps && x >= self.x_lo - epx && x <= self.x_hi + epx
    }

    /// Nearest space node index.
    pub fn nearest_x(&self, x: f64) -> usize {
        let f = ((x - self.x_lo) / self.dx()).round();
        f.clamp(0.0, (self.x_nodes - 1) as f64) as usize
    }

    /// Index/weight pair for linear interpolation along one axis, snapping to
    /// a node when the coordinate sits on it up to roundoff.
    #[inline]
    fn locate(pos: f64, nodes: usize) -> (usize, f64) {
        let max = (nodes - 1) as f64;
        let p = pos.clamp(0.0, max);
        let r = p.round();
        if (p - r).abs() < 1e-9 {
            let k = r as usize;
            return if k == nodes - 1 { (k - 1, 1.0) } else { (k, 0.0) };
        }
        let k = (p.floor() as usize).min(nodes - 2);
        (k, p - k as f64)
    }

    #[inline]
    fn locate_t(&self, t: f64) -> (usize, f64) {
        Self::locate(t / self.dt(), self.t_nodes)
    }

    #[inline]
    fn locate_x(&self, x: f64) -> (usize, f64) {
        Self::locate((x - self.x_lo) / self.dx(), self.x_nodes)
    }
}

/// Values of a function of `(t, x)` on a [`Grid`], stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.t_nodes * grid.x_nodes],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.t_nodes * grid.x_nodes);
        for n in 0..grid.t_nodes {
            let t = grid.t(n);
            for i in 0..grid.x_nodes {
                values.push(f(t, grid.x(i)));
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.t_nodes * grid.x_nodes {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.t_nodes * grid.x_nodes,
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.grid.x_nodes + i]
    }

    #[inline]
    fn set(&mut self, n: usize, i: usize, v: f64) {
        let nx = self.grid.x_nodes;
        self.values[n * nx + i] = v;
    }

    /// Time slice `n`.
    pub fn slice(&self, n: usize) -> &[f64] {
        let nx = self.grid.x_nodes;
        &self.values[n * nx..(n + 1) * nx]
    }

    /// Bilinear interpolation; errors outside the grid.
    pub fn sample(&self, t: f64, x: f64) -> Result<f64> {
        if !self.grid.contains(t, x) {
            return Err(Error::OutOfDomain { t, x });
        }
        Ok(self.sample_clamped(t, x))
    }

    /// Bilinear interpolation with coordinates clamped into the grid.
    #[inline]
    pub fn sample_clamped(&self, t: f64, x: f64) -> f64 {
        let (n, wt) = self.grid.locate_t(t);
        let (i, wx) = self.grid.locate_x(x);
        let nx = self.grid.x_nodes;
        let v = &self.values;
        let base = n * nx + i;
        if wt == 0.0 {
            if wx == 0.0 {
                return v[base];
            }
            return (1.0 - wx) * v[base] + wx * v[base + 1];
        }
        let lo = (1.0 - wx) * v[base] + wx * v[base + 1];
        let hi = (1.0 - wx) * v[base + nx] + wx * v[base + nx + 1];
        (1.0 - wt) * lo + wt * hi
    }

    /// Samples two fields on the same grid with one index lookup.
    #[inline]
    pub fn sample_pair_clamped(a: &ScalarField, b: &ScalarField, t: f64, x: f64) -> (f64, f64) {
        debug_assert!(a.grid == b.grid);
        let (n, wt) = a.grid.locate_t(t);
        let (i, wx) = a.grid.locate_x(x);
        let nx = a.grid.x_nodes;
        let base = n * nx + i;
        let interp = |v: &[f64]| {
            if wt == 0.0 {
                if wx == 0.0 {
                    return v[base];
                }
                return (1.0 - wx) * v[base] + wx * v[base + 1];
            }
            let lo = (1.0 - wx) * v[base] + wx * v[base + 1];
            let hi = (1.0 - wx) * v[base + nx] + wx * v[base + nx + 1];
            (1.0 - wt) * lo + wt * hi
        };
        (interp(&a.values), interp(&b.values))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise `f(t, x, self, other)`.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64, f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let g = &self.grid;
        let mut out = Self::zeros(g);
        for n in 0..g.t_nodes {
            let t = g.t(n);
            for i in 0..g.x_nodes {
                out.set(n, i, f(t, g.x(i), self.at(n, i), other.at(n, i)));
            }
        }
        Ok(out)
    }

    /// Nodewise `f(t, x, value)`.
    pub fn map_nodes(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let g = &self.grid;
        let mut out = Self::zeros(g);
        for n in 0..g.t_nodes {
            let t = g.t(n);
            for i in 0..g.x_nodes {
                out.set(n, i, f(t, g.x(i), self.at(n, i)));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Max of `|self|` over nodes whose `x` lies in `[lo, hi]`.
    pub fn max_abs_within(&self, lo: f64, hi: f64) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for n in 0..g.t_nodes {
            for i in 0..g.x_nodes {
                let x = g.x(i);
                if x >= lo && x <= hi {
                    m = m.max(self.at(n, i).abs());
                }
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV: header `t,x_0,...`, then one row per time node.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut s = String::from("t");
        for i in 0..g.x_nodes {
            s.push(',');
            s.push_str(&fmt17(g.x(i)));
        }
        s.push('\n');
        for n in 0..g.t_nodes {
            s.push_str(&fmt17(g.t(n)));
            for v in self.slice(n) {
                let _ = write!(s, ",{}", fmt17(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Parses the [`ScalarField::to_csv`] layout back, given the grid.
    pub fn from_csv(grid: &Grid, text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.t_nodes * grid.x_nodes);
        for (k, line) in text.lines().enumerate().skip(1) {
            let mut cells = line.split(',');
            cells.next();
            for c in cells {
                let v: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::Io(format!("bad number {c:?} on line {}", k + 1)))?;
                values.push(v);
            }
        }
        Self::from_values(grid, values)
    }
}

/// `u_x`: central differences inside, one-sided second order at the ends.
pub fn derivative_x(field: &ScalarField) -> ScalarField {
    let g = field.grid();
    let nx = g.x_nodes();
    let inv2dx = 0.5 / g.dx();
    let mut out = ScalarField::zeros(g);
    for n in 0..g.t_nodes() {
        let row = field.slice(n);
        let mut d = vec![0.0; nx];
        row_derivative(row, inv2dx, &mut d);
        for (i, v) in d.into_iter().enumerate() {
            out.set(n, i, v);
        }
    }
    out
}

/// `u_xx`: central differences inside, one-sided at the ends (linear
/// extrapolation of the neighbours for 3-node grids).
pub fn second_derivative_x(field: &ScalarField) -> ScalarField {
    let g = field.grid();
    let nx = g.x_nodes();
    let inv = 1.0 / (g.dx() * g.dx());
    let mut out = ScalarField::zeros(g);
    for n in 0..g.t_nodes() {
        let u = field.slice(n);
        for i in 1..nx - 1 {
            out.set(n, i, (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv);
        }
        if nx >= 4 {
            out.set(n, 0, (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * inv);
            let k = nx - 1;
            out.set(n, k, (2.0 * u[k] - 5.0 * u[k - 1] + 4.0 * u[k - 2] - u[k - 3]) * inv);
        } else {
            let c = out.at(n, 1);
            out.set(n, 0, c);
            out.set(n, nx - 1, c);
        }
    }
    out
}

#[inline]
fn row_derivative(u: &[f64], inv2dx: f64, out: &mut [f64]) {
    let nx = u.len();
    for i in 1..nx - 1 {
        out[i] = (u[i + 1] - u[i - 1]) * inv2dx;
    }
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) * inv2dx;
    out[nx - 1] = (3.0 * u[nx - 1] - 4.0 * u[nx - 2] + u[nx - 3]) * inv2dx;
}

/// Partial derivatives at one node, as seen by [`interior_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeJet {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub u_t: f64,
    pub u_x: f64,
    pub u_xx: f64,
}

/// Max over interior nodes (both directions) of `|op(jet)|`, with the time
/// derivative taken by central differences and the space derivatives by the
/// standard three-point stencils.
pub fn interior_residual(field: &ScalarField, op: impl Fn(&NodeJet) -> f64) -> f64 {
    let g = field.grid();
    let (dt, dx) = (g.dt(), g.dx());
    let mut worst: f64 = 0.0;
    if g.t_nodes() < 3 {
        return worst;
    }
    for n in 1..g.t_nodes() - 1 {
        let t = g.t(n);
        for i in 1..g.x_nodes() - 1 {
            let u = field.at(n, i);
            let jet = NodeJet {
                t,
                x: g.x(i),
                u,
                u_t: (field.at(n + 1, i) - field.at(n - 1, i)) / (2.0 * dt),
                u_x: (field.at(n, i + 1) - field.at(n, i - 1)) / (2.0 * dx),
                u_xx: (field.at(n, i + 1) - 2.0 * u + field.at(n, i - 1)) / (dx * dx),
            };
            worst = worst.max(op(&jet).abs());
        }
    }
    worst
}

type Coef<'a> = Box<dyn Fn(f64, f64) -> f64 + 'a>;

/// Source term of a [`SemilinearProblem`].
pub enum Source<'a> {
    Zero,
    /// `s(t, x)`: no dependence on the solution; one linear solve per step.
    Explicit(Coef<'a>),
    /// `s(t, x, u, u_x)`, resolved by Picard iteration.
    Nonlinear(Box<dyn Fn(f64, f64, f64, f64) -> f64 + 'a>),
}

pub struct SemilinearProblem<'a> {
    pub drift: Coef<'a>,
    pub diffusion: Coef<'a>,
    pub source: Source<'a>,
    pub terminal: Box<dyn Fn(f64) -> f64 + 'a>,
}

impl<'a> SemilinearProblem<'a> {
    pub fn new(
        drift: impl Fn(f64, f64) -> f64 + 'a,
        diffusion: impl Fn(f64, f64) -> f64 + 'a,
        source: Source<'a>,
        terminal: impl Fn(f64) -> f64 + 'a,
    ) -> Self {
        Self {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            source,
            terminal: Box::new(terminal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub picard_tol: f64,
    pub max_picard_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            max_picard_iterations: 50,
        }
    }
}

/// Iteration counters from one backward solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub steps: usize,
    pub max_picard_iterations: usize,
    pub total_picard_iterations: usize,
}

pub fn solve_backward(problem: &SemilinearProblem<'_>, grid: &Grid, opts: &SolverOptions) -> Result<ScalarField> {
    solve_backward_with_stats(problem, grid, opts).map(|(f, _)| f)
}

/// Node coefficients at one time level.
struct Level {
    drift: Vec<f64>,
    half_b2: Vec<f64>,
}

fn eval_level(problem: &SemilinearProblem<'_>, grid: &Grid, t: f64) -> Result<Level> {
    let nx = grid.x_nodes();
    let mut drift = Vec::with_capacity(nx);
    let mut half_b2 = Vec::with_capacity(nx);
    for i in 0..nx {
        let x = grid.x(i);
        let a = (problem.drift)(t, x);
        let b = (problem.diffusion)(t, x);
        if !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidModel(format!(
                "diffusion must be finite and non-negative and drift finite at t={t}, x={x} (a={a}, b={b})"
            )));
        }
        drift.push(a);
        half_b2.push(0.5 * b * b);
    }
    Ok(Level { drift, half_b2 })
}

/// Evaluates the source at interior nodes for the row `u`.
fn eval_source(problem: &SemilinearProblem<'_>, grid: &Grid, t: f64, u: &[f64], ux: &mut [f64], out: &mut [f64]) {
    let nx = grid.x_nodes();
    match &problem.source {
        Source::Zero => out.iter_mut().for_each(|v| *v = 0.0),
        Source::Explicit(s) => {
            for i in 1..nx - 1 {
                out[i] = s(t, grid.x(i));
            }
        }
        Source::Nonlinear(s) => {
            row_derivative(u, 0.5 / grid.dx(), ux);
            for i in 1..nx - 1 {
                out[i] = s(t, grid.x(i), u[i], ux[i]);
            }
        }
    }
}

/// Thomas algorithm; all slices have the same length.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
}

/// How a boundary node is recovered from the interior after a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Closure {
    /// `u_b = 2u_1 - u_2`.
    Linear,
    /// One-sided second derivative set to zero:
    /// `u_b = (5u_1 - 4u_2 + u_3)/2`; `factor` removes `u_3` from the first
    /// interior row using the second one.
    Cubic { factor: f64 },
}

impl Closure {
    #[inline]
    fn apply(self, u1: f64, u2: f64, u3: f64) -> f64 {
        match self {
            Closure::Linear => 2.0 * u1 - u2,
            Closure::Cubic { .. } => 2.5 * u1 - 2.0 * u2 + 0.5 * u3,
        }
    }

    #[inline]
    fn factor(self) -> f64 {
        match self {
            Closure::Linear => 0.0,
            Closure::Cubic { factor } => factor,
        }
    }
}

/// Folds the boundary closure into rows `0` and `m-1` of the tridiagonal
/// system. Row indices `near`/`next` point inward from the boundary.
fn fold_boundary(lower: &mut [f64], diag: &mut [f64], upper: &mut [f64], left: bool) -> Closure {
    let m = diag.len();
    let (near, next) = if left { (0, 1) } else { (m - 1, m - 2) };
    // coefficient of the boundary node and of the second/third inward nodes
    let (c_b, c_2, c_2next, c_3next) = if left {
        (lower[near], upper[near], diag[next], upper[next])
    } else {
        (upper[near], lower[near], diag[next], lower[next])
    };
    let c_1next = if left { lower[next] } else { upper[next] };
    let closure = if m >= 3 && (c_b == 0.0 || c_3next != 0.0) {
        let factor = if c_b == 0.0 { 0.0 } else { 0.5 * c_b / c_3next };
        diag[near] += 2.5 * c_b - factor * c_1next;
        let second = c_2 - 2.0 * c_b - factor * c_2next;
        if left {
            upper[near] = second;
        } else {
            lower[near] = second;
        }
        Closure::Cubic { factor }
    } else {
        diag[near] += 2.0 * c_b;
        if left {
            upper[near] = c_2 - c_b;
        } else {
            lower[near] = c_2 - c_b;
        }
        Closure::Linear
    };
    if left {
        lower[near] = 0.0;
    } else {
        upper[near] = 0.0;
    }
    closure
}

/// [`solve_backward`] returning the Picard iteration counters as well.
pub fn solve_backward_with_stats(
    problem: &SemilinearProblem<'_>,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveStats)> {
    let nx = grid.x_nodes();
    let nt = grid.t_nodes();
    if nx < 4 {
        return Err(Error::InvalidGrid(format!(
            "solver needs at least 4 space nodes, got {nx}"
        )));
    }
    let dt = grid.dt();
    let dx = grid.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let inv_2dx = 0.5 / dx;
    let m = nx - 2;

    let mut field = ScalarField::zeros(grid);
    let t_end = grid.t(nt - 1);
    for i in 0..nx {
        let x = grid.x(i);
        let g = (problem.terminal)(x);
        if !g.is_finite() {
            return Err(Error::NonFiniteField { t: t_end, x });
        }
        field.set(nt - 1, i, g);
    }

    let mut stats = SolveStats::default();
    let mut next_level = eval_level(problem, grid, t_end)?;
    let mut ux = vec![0.0; nx];
    let mut src_next = vec![0.0; nx];
    let mut src_cur = vec![0.0; nx];
    let mut rhs = vec![0.0; m];
    let mut rhs_iter = vec![0.0; m];
    let (mut lower, mut diag, mut upper) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut interior = vec![0.0; m];

    {
        let u1 = field.slice(nt - 1).to_vec();
        eval_source(problem, grid, t_end, &u1, &mut ux, &mut src_next);
    }

    for n in (0..nt - 1).rev() {
        let t = grid.t(n);
        let u1 = field.slice(n + 1).to_vec();
        let cur = eval_level(problem, grid, t)?;

        // explicit half: U1 + ½dt (L1 U1 + S1)
        for k in 0..m {
            let i = k + 1;
            let a = next_level.drift[i];
            let d = next_level.half_b2[i];
            let lu = a * (u1[i + 1] - u1[i - 1]) * inv_2dx + d * (u1[i + 1] - 2.0 * u1[i] + u1[i - 1]) * inv_dx2;
            rhs[k] = u1[i] + 0.5 * dt * (lu + src_next[i]);
        }

        // implicit half: (I - ½dt L0) with boundary rows folded in
        for k in 0..m {
            let i = k + 1;
            let a = cur.drift[i];
            let d = cur.half_b2[i];
            lower[k] = -0.5 * dt * (-a * inv_2dx + d * inv_dx2);
            diag[k] = 1.0 + dt * d * inv_dx2;
            upper[k] = -0.5 * dt * (a * inv_2dx + d * inv_dx2);
        }
        let left = fold_boundary(&mut lower, &mut diag, &mut upper, true);
        let right = fold_boundary(&mut lower, &mut diag, &mut upper, false);
        let (f_left, f_right) = (left.factor(), right.factor());

        let mut guess = u1.clone();
        let mut iterations = 0usize;
        let explicit = !matches!(problem.source, Source::Nonlinear(_));
        loop {
            iterations += 1;
            eval_source(problem, grid, t, &guess, &mut ux, &mut src_cur);
            for k in 0..m {
                rhs_iter[k] = rhs[k] + 0.5 * dt * src_cur[k + 1];
            }
            let (r1, r2) = (rhs_iter[1], rhs_iter[m - 2]);
            rhs_iter[0] -= f_left * r1;
            rhs_iter[m - 1] -= f_right * r2;
            solve_tridiagonal(&lower, &diag, &upper, &rhs_iter, &mut interior);
            let mut new_row = vec![0.0; nx];
            new_row[1..nx - 1].copy_from_slice(&interior);
            new_row[0] = left.apply(new_row[1], new_row[2], new_row[3]);
            new_row[nx - 1] = right.apply(new_row[nx - 2], new_row[nx - 3], new_row[nx - 4]);

            if let Some(i) = new_row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteField { t, x: grid.x(i) });
            }
            if explicit {
                guess = new_row;
                break;
            }
            let scale = 1.0 + new_row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let residual = new_row
                .iter()
                .zip(&guess)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            guess = new_row;
            if residual <= opts.picard_tol * scale {
                break;
            }
            if iterations >= opts.max_picard_iterations {
                return Err(Error::PicardDivergence {
                    t,
                    residual,
                    iterations,
                });
            }
        }
        stats.steps += 1;
        stats.total_picard_iterations += iterations;
        stats.max_picard_iterations = stats.max_picard_iterations.max(iterations);

        for (i, v) in guess.iter().enumerate() {
            field.set(n, i, *v);
        }
        // source at the accepted level becomes the explicit half of the next step
        eval_source(problem, grid, t, &guess, &mut ux, &mut src_next);
        next_level = cur;
    }
    Ok((field, stats))
}

/// Result of a grid-refinement study.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservedOrders {
    /// `differences[k] = max |u_k - u_{k+1}|` on the coarse nodes;
    /// `orders[k] = log2(differences[k] / differences[k+1])`.
    Orders { differences: Vec<f64>, orders: Vec<f64> },
    /// Every successive difference was exactly zero.
    ExactOnAllGrids,
}

impl ObservedOrders {
    pub fn orders(&self) -> &[f64] {
        match self {
            ObservedOrders::Orders { orders, .. } => orders,
            ObservedOrders::ExactOnAllGrids => &[],
        }
    }
}

fn check_refinement(coarse: &Grid, fine: &Grid) -> Result<()> {
    let same_box = coarse.horizon == fine.horizon && coarse.x_lo == fine.x_lo && coarse.x_hi == fine.x_hi;
    if !same_box || fine.t_nodes != 2 * (coarse.t_nodes - 1) + 1 || fine.x_nodes != 2 * (coarse.x_nodes - 1) + 1 {
        return Err(Error::NotARefinement(format!(
            "{}x{} -> {}x{}",
            coarse.t_nodes, coarse.x_nodes, fine.t_nodes, fine.x_nodes
        )));
    }
    Ok(())
}

/// Max difference between two solutions on the nodes of the coarser grid.
pub fn coarse_node_difference(coarse: &ScalarField, fine: &ScalarField) -> Result<f64> {
    let (cg, fg) = (coarse.grid(), fine.grid());
    check_refinement(cg, fg)?;
    let mut d: f64 = 0.0;
    for n in 0..cg.t_nodes {
        for i in 0..cg.x_nodes {
            d = d.max((coarse.at(n, i) - fine.at(2 * n, 2 * i)).abs());
        }
    }
    Ok(d)
}

/// Observed convergence orders from successive-difference ratios over a
/// refinement sequence (each grid halves both spacings).
pub fn convergence_probe(problem: &SemilinearProblem<'_>, grids: &[Grid], opts: &SolverOptions) -> Result<ObservedOrders> {
    if grids.len() < 3 {
        return Err(Error::InsufficientGrids(grids.len()));
    }
    for w in grids.windows(2) {
        check_refinement(&w[0], &w[1])?;
    }
    let solutions = grids
        .iter()
        .map(|g| solve_backward(problem, g, opts))
        .collect::<Result<Vec<_>>>()?;
    let differences = solutions
        .windows(2)
        .map(|w| coarse_node_difference(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    if differences.iter().all(|d| *d == 0.0) {
        return Ok(ObservedOrders::ExactOnAllGrids);
    }
    let orders = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ObservedOrders::Orders { differences, orders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // u_t + u = 0, u(T) = 1 ⇒ u(t) = e^{T-t}
    fn decay_problem<'a>() -> SemilinearProblem<'a> {
        SemilinearProblem::new(|_, _| 0.0, |_, _| 0.0, Source::Nonlinear(Box::new(|_, _, u, _| u)), |_| 1.0)
    }

    fn manufactured<'a>() -> SemilinearProblem<'a> {
        // u* = e^{-t} sin x solves u_t + u_xx + 2 e^{-t} sin x = 0
        SemilinearProblem::new(
            |_, _| 0.0,
            |_, _| 2f64.sqrt(),
            Source::Explicit(Box::new(|t, x| 2.0 * (-t).exp() * x.sin())),
            |x| (-1.0f64).exp() * x.sin(),
        )
    }

    #[test]
    fn pure_decay_matches_exponential() {
        let g = Grid::new(1.0, 401, -1.0, 1.0, 5).unwrap();
        let u = solve_backward(&decay_problem(), &g, &SolverOptions::default()).unwrap();
        for i in 0..5 {
            assert!((u.at(0, i) - std::f64::consts::E).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_problem_gives_exact_zero() {
        let p = SemilinearProblem::new(|_, _| 0.3, |_, _| 0.5, Source::Zero, |_| 0.0);
        let g = Grid::new(1.0, 11, 0.0, 1.0, 11).unwrap();
        let u = solve_backward(&p, &g, &SolverOptions::default()).unwrap();
        assert!(u.values().iter().all(|v| *v == 0.0));
        let grids = [g.clone(), g.refined(), g.refined().refined()];
        assert_eq!(
            convergence_probe(&p, &grids, &SolverOptions::default()).unwrap(),
            ObservedOrders::ExactOnAllGrids
        );
    }

    #[test]
    fn terminal_slice_is_exact() {
        let p = SemilinearProblem::new(
            |_, x| x,
            |_, _| 0.3,
            Source::Nonlinear(Box::new(|_, _, _, ux| 0.5 * ux * ux)),
            |x: f64| x.cos() + 0.1 * x,
        );
        let g = Grid::new(1.0, 21, -2.0, 2.0, 41).unwrap();
        let u = solve_backward(&p, &g, &SolverOptions::default()).unwrap();
        for i in 0..g.x_nodes() {
            assert_eq!(u.at(g.t_nodes() - 1, i), g.x(i).cos() + 0.1 * g.x(i));
        }
    }

    #[test]
    fn explicit_source_takes_one_iteration_per_step() {
        let g = Grid::new(1.0, 41, 0.0, std::f64::consts::PI, 21).unwrap();
        let (_, stats) = solve_backward_with_stats(&manufactured(), &g, &SolverOptions::default()).unwrap();
        assert_eq!(stats.max_picard_iterations, 1);
        assert_eq!(stats.total_picard_iterations, 40);
    }

    #[test]
    fn manufactured_solution_second_order() {
        let g0 = Grid::new(1.0, 81, 0.0, std::f64::consts::PI, 81).unwrap();
        let grids = [g0.clone(), g0.refined(), g0.refined().refined()];
        let mut errs = Vec::new();
        for g in &grids {
            let u = solve_backward(&manufactured(), g, &SolverOptions::default()).unwrap();
            let exact = ScalarField::from_fn(g, |t, x| (-t).exp() * x.sin());
            errs.push(u.max_abs_diff(&exact).unwrap());
        }
        for w in errs.windows(2) {
            let p = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&p), "order {p} from {errs:?}");
        }
        let probe_grids = [grids[1].clone(), grids[2].clone(), grids[2].refined()];
        let probe = convergence_probe(&manufactured(), &probe_grids, &SolverOptions::default()).unwrap();
        for p in probe.orders() {
            assert!((1.8..=2.2).contains(p), "{probe:?}");
        }
    }

    #[test]
    fn nonlinear_manufactured_solution() {
        // u* = e^{-t} sin x with a quadratic gradient term moved into the source
        let exact = |t: f64, x: f64| (-t).exp() * x.sin();
        let p = SemilinearProblem::new(
            |_, x| 0.2 * x,
            |_, _| 1.0,
            Source::Nonlinear(Box::new(move |t: f64, x: f64, _u, ux: f64| {
                let ue = (-t).exp();
                let (s, c) = x.sin_cos();
                // -(u_t + a u_x + ½ u_xx) - ½ u_x² + ½ (u*_x)²
                -(-ue * s + 0.2 * x * ue * c - 0.5 * ue * s) + 0.5 * ux * ux - 0.5 * (ue * c).powi(2)
            })),
            move |x| exact(1.0, x),
        );
        let g0 = Grid::new(1.0, 21, 0.0, std::f64::consts::PI, 11).unwrap();
        let mut errs = Vec::new();
        let mut g = g0;
        for _ in 0..3 {
            let (u, stats) = solve_backward_with_stats(&p, &g, &SolverOptions::default()).unwrap();
            assert!(stats.max_picard_iterations >= 2);
            errs.push(u.max_abs_diff(&ScalarField::from_fn(&g, exact)).unwrap());
            g = g.refined();
        }
        let p1 = (errs[0] / errs[1]).log2();
        let p2 = (errs[1] / errs[2]).log2();
        assert!(p1 > 1.8 && p2 > 1.8, "{errs:?}");
    }

    #[test]
    fn decay_temporal_order() {
        let g0 = Grid::new(1.0, 11, -1.0, 1.0, 5).unwrap();
        let mut errs = Vec::new();
        for k in 0..3 {
            let g = Grid::new(1.0, 10 * (1 << k) + 1, -1.0, 1.0, 5).unwrap();
            let u = solve_backward(&decay_problem(), &g, &SolverOptions::default()).unwrap();
            errs.push((u.at(0, 2) - std::f64::consts::E).abs());
        }
        let _ = g0;
        for w in errs.windows(2) {
            let p = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&p), "{errs:?}");
        }
    }

    #[test]
    fn larger_source_gives_larger_solution() {
        let g = Grid::new(1.0, 41, -2.0, 2.0, 41).unwrap();
        let base = |t: f64, x: f64| (x * 1.3).sin() * (1.0 + t);
        let p1 = SemilinearProblem::new(|_, x| -0.5 * x, |_, _| 0.4, Source::Explicit(Box::new(base)), |x| x * x);
        let p2 = SemilinearProblem::new(
            |_, x| -0.5 * x,
            |_, _| 0.4,
            Source::Explicit(Box::new(move |t, x| base(t, x) + 0.1 * (1.0 + x * x))),
            |x| x * x,
        );
        let u1 = solve_backward(&p1, &g, &SolverOptions::default()).unwrap();
        let u2 = solve_backward(&p2, &g, &SolverOptions::default()).unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn probe_needs_three_grids() {
        let g = Grid::new(1.0, 5, 0.0, 1.0, 5).unwrap();
        let p = decay_problem();
        assert_eq!(
            convergence_probe(&p, &[g.clone(), g.refined()], &SolverOptions::default()),
            Err(Error::InsufficientGrids(2))
        );
        let bad = [g.clone(), g.clone(), g];
        assert!(matches!(
            convergence_probe(&p, &bad, &SolverOptions::default()),
            Err(Error::NotARefinement(_))
        ));
    }

    #[test]
    fn picard_cap_is_reported() {
        let p = SemilinearProblem::new(
            |_, _| 0.0,
            |_, _| 0.1,
            Source::Nonlinear(Box::new(|_, _, u, _| -u)),
            |_| 1.0,
        );
        let g = Grid::new(1.0, 3, 0.0, 1.0, 5).unwrap();
        let opts = SolverOptions {
            picard_tol: 1e-14,
            max_picard_iterations: 2,
        };
        assert!(matches!(solve_backward(&p, &g, &opts), Err(Error::PicardDivergence { .. })));
    }

    #[test]
    fn blow_up_is_caught() {
        let p = SemilinearProblem::new(
            |_, _| 0.0,
            |_, _| 0.0,
            Source::Nonlinear(Box::new(|_, _, u, _| u * u * 1e300)),
            |_| 1e10,
        );
        let g = Grid::new(1.0, 11, 0.0, 1.0, 5).unwrap();
        assert!(solve_backward(&p, &g, &SolverOptions::default()).is_err());
    }

    #[test]
    fn derivative_exactness() {
        let g = Grid::new(1.0, 3, -1.0, 2.0, 13).unwrap();
        let lin = derivative_x(&ScalarField::from_fn(&g, |_, x| x));
        assert!(lin.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let quad = derivative_x(&ScalarField::from_fn(&g, |_, x| x * x));
        for n in 0..g.t_nodes() {
            for i in 0..g.x_nodes() {
                assert!((quad.at(n, i) - 2.0 * g.x(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_second_order_on_sine() {
        let err = |nx: usize| {
            let g = Grid::new(1.0, 2, 0.0, 3.0, nx).unwrap();
            let d = derivative_x(&ScalarField::from_fn(&g, |_, x| x.sin()));
            d.max_abs_diff(&ScalarField::from_fn(&g, |_, x| x.cos())).unwrap()
        };
        let ratio = err(41) / err(81);
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn sample_hits_nodes_exactly() {
        let g = Grid::new(1.0, 401, -0.4, 1.0, 201).unwrap();
        let f = ScalarField::from_fn(&g, |t, x| (t * 3.0).sin() + x.exp());
        for &(n, i) in &[(0usize, 0usize), (17, 55), (400, 200), (399, 1)] {
            assert_eq!(f.sample(g.t(n), g.x(i)).unwrap(), f.at(n, i));
        }
        assert!(f.sample(1.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let g = Grid::new(2.0, 3, -1.0, 1.0, 4).unwrap();
            let f = ScalarField::from_values(&g, vals).unwrap();
            let back = ScalarField::from_csv(&g, &f.to_csv()).unwrap();
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
