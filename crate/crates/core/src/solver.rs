//! Discrete dead-core energy and its constrained minimization.
//!
//! The energy is
//!
//! ```text
//! J_h(u) = Σ_cells (h^N / 4) Σ_corners a(center) |g_corner|^p / p  +  Σ_nodes h^N λ(x) F(u)
//! ```
//!
//! where each corner gradient uses the two cell edges meeting at that corner
//! (one edge, two corners in 1D). For `p = 2` this is the 5-point Laplacian.
//! Minimization over `{u >= 0, u = g on Dirichlet nodes}` is done by cyclic
//! pointwise relaxation: every interior node is minimized exactly along its own
//! coordinate, optionally over-relaxed, and projected onto `u >= 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{extract_regions, Threshold};
use crate::grid::{Grid, GridField, NodeClass};
use crate::problem::{pow_fast, AbsorptionLaw, Domain, Point, Problem};

/// Smallest positive value a node takes.
const TINY: f64 = f64::MIN_POSITIVE;

/// Node positions in a 2D cell: 0 = (i,j), 1 = (i+1,j), 2 = (i,j+1), 3 = (i+1,j+1).
///
/// `DIR[k][c]` is the derivative (times h) of corner `c`'s gradient with respect to the value at node `k`.
const DIR: [[[f64; 2]; 4]; 4] = [
    [[-1.0, -1.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]],
    [[1.0, 0.0], [1.0, -1.0], [0.0, 0.0], [0.0, -1.0]],
    [[0.0, 1.0], [0.0, 0.0], [-1.0, 1.0], [-1.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]],
];

#[inline]
fn corner_gradients(v: &[f64; 4], inv_h: f64) -> [[f64; 2]; 4] {
    let b = (v[1] - v[0]) * inv_h;
    let t = (v[3] - v[2]) * inv_h;
    let l = (v[2] - v[0]) * inv_h;
    let r = (v[3] - v[1]) * inv_h;
    [[b, l], [b, r], [t, l], [t, r]]
}

/// `|g|^p` from `|g|^2`.
#[inline]
fn pow_abs(norm2: f64, p: f64) -> f64 {
    pow_fast(norm2, 0.5 * p)
}

/// `|g|^(p-2)` from `|g|^2`, with the value at `g = 0` left to the caller.
#[inline]
fn pow_abs_m2(norm2: f64, p: f64) -> f64 {
    pow_fast(norm2, 0.5 * (p - 2.0))
}

/// Unweighted corner sum `Σ_c |g_c|^p / p` of one cell.
fn cell_energy(dim: usize, v: &[f64; 4], p: f64, inv_h: f64) -> f64 {
    if dim == 1 {
        let e = (v[1] - v[0]) * inv_h;
        return 2.0 * pow_abs(e * e, p) / p;
    }
    corner_gradients(v, inv_h)
        .iter()
        .map(|g| pow_abs(g[0] * g[0] + g[1] * g[1], p) / p)
        .sum()
}

/// First and second derivative of the unweighted cell sum with respect to node `k`.
fn cell_derivatives(dim: usize, v: &[f64; 4], k: usize, p: f64, inv_h: f64) -> (f64, f64) {
    if dim == 1 {
        let sign = if k == 0 { -1.0 } else { 1.0 };
        let e = (v[1] - v[0]) * inv_h;
        let e2 = e * e;
        if e2 == 0.0 {
            let d2 = if p > 2.0 { 0.0 } else if p == 2.0 { 2.0 * inv_h * inv_h } else { f64::INFINITY };
            return (0.0, d2);
        }
        let m = pow_abs_m2(e2, p);
        return (2.0 * m * e * sign * inv_h, 2.0 * (p - 1.0) * m * inv_h * inv_h);
    }
    let g = corner_gradients(v, inv_h);
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for c in 0..4 {
        let dir = DIR[k][c];
        let dd = dir[0] * dir[0] + dir[1] * dir[1];
        if dd == 0.0 {
            continue;
        }
        let gc = g[c];
        let n2 = gc[0] * gc[0] + gc[1] * gc[1];
        if n2 == 0.0 {
            d2 += if p > 2.0 { 0.0 } else if p == 2.0 { dd * inv_h * inv_h } else { f64::INFINITY };
            continue;
        }
        let m = pow_abs_m2(n2, p);
        let gd = (gc[0] * dir[0] + gc[1] * dir[1]) * inv_h;
        d1 += m * gd;
        d2 += m * dd * inv_h * inv_h + (p - 2.0) * m / n2 * gd * gd;
    }
    (d1, d2)
}

/// Precomputed coefficients of the discrete energy on one grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    grid: Arc<Grid>,
    p: f64,
    q: f64,
    law: AbsorptionLaw,
    /// Per-cell weight `a(center) h^N / 4` (2D) or `a(center) h / 2` (1D); 0 for inactive cells.
    cell_weight: Vec<f64>,
    lambda: Vec<f64>,
    boundary: Vec<f64>,
    inv_h: f64,
    vol: f64,
}

/// One cell touching a node: weight, corner values and the node's position.
#[derive(Clone, Copy)]
struct LocalCell {
    weight: f64,
    values: [f64; 4],
    k: usize,
}

impl Discretization {
    pub fn new(problem: &Problem, grid: Arc<Grid>) -> Result<Self> {
        let dim = grid.dim();
        if dim != problem.dimension() {
            return Err(Error::Geometry("grid and problem dimensions differ".into()));
        }
        let h = grid.h();
        let [nx, ny] = grid.shape();
        let vol = grid.cell_volume();
        let corner_scale = if dim == 1 { 0.5 * h } else { 0.25 * vol };
        let mut cell_weight = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let [i, j] = grid.coords(idx);
            if i + 1 >= nx || (dim == 2 && j + 1 >= ny) {
                continue;
            }
            let corners = cell_nodes(&grid, idx);
            let count = if dim == 1 { 2 } else { 4 };
            if corners[..count].iter().any(|&c| grid.class(c) == NodeClass::Exterior) {
                continue;
            }
            let x = grid.point(idx);
            let center = if dim == 1 { [x[0] + 0.5 * h, 0.0] } else { [x[0] + 0.5 * h, x[1] + 0.5 * h] };
            cell_weight[idx] = problem.weight.eval(center) * corner_scale;
        }
        let g = problem.boundary_fn()?;
        let mut lambda = vec![0.0; grid.len()];
        let mut boundary = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            match grid.class(idx) {
                NodeClass::Exterior => {}
                class => {
                    lambda[idx] = problem.lambda.eval(grid.point(idx));
                    if class == NodeClass::Dirichlet {
                        boundary[idx] = g(grid.point(idx));
                    }
                }
            }
        }
        Ok(Self {
            grid,
            p: problem.exponents.p,
            q: problem.exponents.q,
            law: problem.absorption,
            cell_weight,
            lambda,
            boundary,
            inv_h: 1.0 / h,
            vol,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Boundary value carried by a Dirichlet node.
    pub fn boundary_value(&self, idx: usize) -> f64 {
        self.boundary[idx]
    }

    /// Total discrete energy of a nodal vector.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let mut e = 0.0;
        for (idx, &w) in self.cell_weight.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let v = self.cell_values(u, idx);
            e += w * cell_energy(dim, &v, self.p, self.inv_h);
        }
        for idx in 0..self.grid.len() {
            if self.grid.class(idx) != NodeClass::Exterior && self.lambda[idx] != 0.0 {
                e += self.vol * self.lambda[idx] * self.law.primitive(self.q, u[idx]);
            }
        }
        e
    }

    fn cell_values(&self, u: &[f64], lower_left: usize) -> [f64; 4] {
        let ids = cell_nodes(&self.grid, lower_left);
        if self.grid.dim() == 1 {
            [u[ids[0]], u[ids[1]], 0.0, 0.0]
        } else {
            ids.map(|i| u[i])
        }
    }

    fn local_cells(&self, u: &[f64], idx: usize, out: &mut Vec<LocalCell>) {
        out.clear();
        let [i, j] = self.grid.coords(idx);
        let nx = self.grid.shape()[0];
        if self.grid.dim() == 1 {
            if i > 0 && self.cell_weight[idx - 1] != 0.0 {
                out.push(LocalCell { weight: self.cell_weight[idx - 1], values: self.cell_values(u, idx - 1), k: 1 });
            }
            if self.cell_weight[idx] != 0.0 {
                out.push(LocalCell { weight: self.cell_weight[idx], values: self.cell_values(u, idx), k: 0 });
            }
            return;
        }
        let cands = [
            (i > 0 && j > 0, idx.wrapping_sub(1 + nx), 3),
            (j > 0, idx.wrapping_sub(nx), 2),
            (i > 0, idx.wrapping_sub(1), 1),
            (true, idx, 0),
        ];
        for (ok, cell, k) in cands {
            if ok && self.cell_weight[cell] != 0.0 {
                out.push(LocalCell { weight: self.cell_weight[cell], values: self.cell_values(u, cell), k });
            }
        }
    }

    /// Energy terms depending on the node, as a function of its value `t`.
    fn local_energy(&self, cells: &[LocalCell], idx: usize, t: f64) -> f64 {
        let dim = self.grid.dim();
        let mut e = 0.0;
        for c in cells {
            let mut v = c.values;
            v[c.k] = t;
            e += c.weight * cell_energy(dim, &v, self.p, self.inv_h);
        }
        e + self.vol * self.lambda[idx] * self.law.primitive(self.q, t)
    }

    /// `(∂J/∂u_idx, ∂²J/∂u_idx²)` at value `t`. `absorb_at_zero` is the
    /// absorption value used when `t == 0`.
    fn local_derivatives(&self, cells: &[LocalCell], idx: usize, t: f64, absorb_at_zero: f64) -> (f64, f64) {
        let dim = self.grid.dim();
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for c in cells {
            let mut v = c.values;
            v[c.k] = t;
            let (a, b) = cell_derivatives(dim, &v, c.k, self.p, self.inv_h);
            d1 += c.weight * a;
            d2 += c.weight * b;
        }
        let lam = self.vol * self.lambda[idx];
        if t > 0.0 {
            d1 += lam * self.law.f(self.q, t);
            d2 += lam * self.law.df(self.q, t);
        } else {
            d1 += lam * absorb_at_zero;
        }
        (d1, d2)
    }

    /// `∂J_h/∂u_idx` with absorption `λ f(u)` (zero at `u = 0`).
    pub fn gradient(&self, u: &[f64], idx: usize) -> f64 {
        let mut cells = Vec::with_capacity(4);
        self.local_cells(u, idx, &mut cells);
        self.local_derivatives(&cells, idx, u[idx], 0.0).0
    }

    /// Largest complementarity violation per unit volume over interior nodes:
    /// `|∂J/∂u|` where `u > 0`, and the negative part of the right derivative where `u = 0`.
    ///
    /// The right derivative is taken at the smallest positive normal float: for
    /// small `q` the nodal root can lie below it, and then zero is the best
    /// representable value.
    pub fn kkt_residual(&self, u: &[f64]) -> f64 {
        let mut cells = Vec::with_capacity(4);
        let mut worst: f64 = 0.0;
        for idx in 0..self.grid.len() {
            if self.grid.class(idx) != NodeClass::Interior {
                continue;
            }
            self.local_cells(u, idx, &mut cells);
            let v = if u[idx] > 0.0 {
                self.local_derivatives(&cells, idx, u[idx], 0.0).0.abs()
            } else {
                (-self.local_derivatives(&cells, idx, TINY, 0.0).0).max(0.0)
            };
            worst = worst.max(v);
        }
        worst / self.vol
    }

    /// Exact minimizer of the energy along coordinate `idx` over `t >= 0`.
    ///
    /// Safeguarded Newton iteration on the (monotone) derivative: a bracket
    /// `[0, max neighbour]` is kept and any Newton step leaving it is replaced
    /// by bisection.
    /// Iteration stops once `|∂J/∂t| <= dtol`.
    fn node_minimizer(&self, cells: &[LocalCell], idx: usize, current: f64, dtol: f64) -> (f64, f64) {
        let mut hi: f64 = 0.0;
        for c in cells {
            for (k, &v) in c.values.iter().enumerate().take(if self.grid.dim() == 1 { 2 } else { 4 }) {
                if k != c.k {
                    hi = hi.max(v);
                }
            }
        }
        if hi <= TINY {
            return (0.0, hi.max(0.0));
        }
        let right = self.law.right_limit_at_zero(self.q);
        let (d0, _) = self.local_derivatives(cells, idx, TINY, right);
        if d0 >= 0.0 {
            return (0.0, hi);
        }
        let mut lo = TINY;
        let mut up = hi;
        let mut t = if current > 0.0 && current < hi { current } else { 0.5 * hi };
        for _ in 0..60 {
            let (d, d2) = self.local_derivatives(cells, idx, t, right);
            if d.abs() <= dtol {
                return (t, hi);
            }
            if d > 0.0 {
                up = t;
            } else {
                lo = t;
            }
            let newton = t - d / d2;
            let next = if d2 > 0.0 && newton.is_finite() && newton > lo && newton < up {
                newton
            } else if up > 4.0 * lo {
                // roots of u^q-type laws can sit many decades below the bracket top
                lo.sqrt() * up.sqrt()
            } else {
                0.5 * (lo + up)
            };
            let step = (next - t).abs();
            t = next;
            if step <= 4.0 * f64::EPSILON * t || up - lo <= 4.0 * f64::EPSILON * up {
                break;
            }
        }
        (t, hi)
    }
}

/// Node indices of the cell with lower-left node `idx` in the order 00, 10, 01, 11.
fn cell_nodes(grid: &Grid, idx: usize) -> [usize; 4] {
    let nx = grid.shape()[0];
    if grid.dim() == 1 {
        [idx, idx + 1, idx + 1, idx + 1]
    } else {
        [idx, idx + 1, idx + nx, idx + nx + 1]
    }
}

/// Discrete energy `J_h` of a field.
pub fn discrete_energy(field: &GridField, problem: &Problem) -> Result<f64> {
    let disc = Discretization::new(problem, field.grid.clone())?;
    let e = disc.energy(&field.values);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite(format!("discrete energy is {e}")))
    }
}

/// Starting iterate of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Multilinear (transfinite) extension of the boundary data.
    #[default]
    BoundaryExtension,
    Zero,
}

/// Over-relaxation factor of the nodal updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// `2 / (1 + sin(pi / n))` with `n` the largest cell count per axis.
    #[default]
    Auto,
    /// Fixed factor in `(0, 2)`; `1.0` is plain nonlinear Gauss–Seidel.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Tolerance on the sweep update (sup norm) and on the KKT residual.
    pub tol: f64,
    /// Sweep limit; defaults to 200 times the largest node count per axis.
    pub max_iter: Option<usize>,
    pub initial: InitialGuess,
    pub relaxation: Relaxation,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None, initial: InitialGuess::default(), relaxation: Relaxation::default() }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// A converged (or best available) discrete solution.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: GridField,
    pub problem: Problem,
    pub energy: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub tolerance_used: f64,
    pub converged: bool,
    /// Energy after every sweep.
    pub energy_history: Vec<f64>,
}

impl Solution {
    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn h(&self) -> f64 {
        self.field.grid.h()
    }

    /// Growth exponent of the underlying problem; fails in borderline mode.
    pub fn gamma(&self) -> Result<f64> {
        self.problem.exponents.gamma()
    }
}

fn initial_values(disc: &Discretization, problem: &Problem, guess: InitialGuess) -> Result<Vec<f64>> {
    let grid = disc.grid();
    let domain = &problem.domain;
    let g = problem.boundary_fn()?;
    let mut u = vec![0.0; grid.len()];
    let g_max = (0..grid.len())
        .filter(|&i| grid.class(i) == NodeClass::Dirichlet)
        .map(|i| disc.boundary_value(i))
        .fold(0.0, f64::max);
    let [nx, ny] = grid.shape();
    for idx in 0..grid.len() {
        match grid.class(idx) {
            NodeClass::Exterior => {}
            NodeClass::Dirichlet => u[idx] = disc.boundary_value(idx),
            NodeClass::Interior => {
                if guess == InitialGuess::Zero {
                    continue;
                }
                let [i, j] = grid.coords(idx);
                let v = match domain {
                    Domain::Interval { .. } => {
                        let s = i as f64 / (nx - 1) as f64;
                        (1.0 - s) * disc.boundary_value(0) + s * disc.boundary_value(nx - 1)
                    }
                    Domain::Rectangle { .. } => {
                        let s = i as f64 / (nx - 1) as f64;
                        let t = j as f64 / (ny - 1) as f64;
                        let b = |a: usize, c: usize| disc.boundary_value(grid.index(a, c));
                        let (l, r, bo, to) = (b(0, j), b(nx - 1, j), b(i, 0), b(i, ny - 1));
                        let corners = (1.0 - s) * (1.0 - t) * b(0, 0)
                            + s * (1.0 - t) * b(nx - 1, 0)
                            + (1.0 - s) * t * b(0, ny - 1)
                            + s * t * b(nx - 1, ny - 1);
                        (1.0 - s) * l + s * r + (1.0 - t) * bo + t * to - corners
                    }
                    Domain::Disk { .. } => g(domain.project_to_boundary(grid.point(idx))),
                };
                u[idx] = v.clamp(0.0, g_max);
            }
        }
    }
    Ok(u)
}

/// Minimizes the discrete energy over non-negative fields with the problem's
/// boundary data, on a grid of spacing `h`.
///
/// Non-convergence within `max_iter` sweeps is not an error: the last iterate
/// is returned with `converged = false`.
pub fn solve(problem: &Problem, h: f64, options: &SolveOptions) -> Result<Solution> {
    problem.validated()?;
    if !(options.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", options.tol)));
    }
    let grid = Arc::new(Grid::new(&problem.domain, h)?);
    solve_on(problem, grid, options)
}

/// As [`solve`], on an existing grid.
pub fn solve_on(problem: &Problem, grid: Arc<Grid>, options: &SolveOptions) -> Result<Solution> {
    let disc = Discretization::new(problem, grid.clone())?;
    let [nx, ny] = grid.shape();
    let n_axis = nx.max(ny);
    let max_iter = options.max_iter.unwrap_or(200 * n_axis);
    let omega = match options.relaxation {
        Relaxation::Auto => 2.0 / (1.0 + (std::f64::consts::PI / (n_axis - 1) as f64).sin()),
        Relaxation::Fixed(w) => {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::Domain(format!("relaxation factor must lie in (0, 2), got {w}")));
            }
            w
        }
    };
    let mut u = initial_values(&disc, problem, options.initial)?;
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| grid.class(i) == NodeClass::Interior).collect();

    // nodal solves are resolved well below the KKT tolerance
    let dtol = 1e-3 * options.tol * grid.cell_volume();
    let mut cells = Vec::with_capacity(4);
    let mut energy = disc.energy(&u);
    let mut history = Vec::new();
    let mut kkt = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_update: f64 = 0.0;
        for &idx in &interior {
            disc.local_cells(&u, idx, &mut cells);
            let old = u[idx];
            let (star, hi) = disc.node_minimizer(&cells, idx, old, dtol);
            let mut new = star;
            if omega != 1.0 {
                let relaxed = (old + omega * (star - old)).clamp(0.0, hi);
                if relaxed != star
                    && disc.local_energy(&cells, idx, relaxed) <= disc.local_energy(&cells, idx, old)
                {
                    new = relaxed;
                }
            }
            u[idx] = new;
            max_update = max_update.max((new - old).abs());
        }
        let next_energy = disc.energy(&u);
        debug_assert!(
            next_energy <= energy + 1e-10 * energy.abs() + 1e-20,
            "energy increased: {energy} -> {next_energy}"
        );
        energy = next_energy;
        history.push(energy);
        if max_update < options.tol {
            kkt = disc.kkt_residual(&u);
            if kkt <= options.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = disc.kkt_residual(&u);
    }
    if !energy.is_finite() {
        return Err(Error::NonFinite(format!("energy {energy} after {iterations} sweeps")));
    }
    Ok(Solution {
        field: GridField { grid, values: u },
        problem: problem.clone(),
        energy,
        kkt_residual: kkt,
        iterations,
        tolerance_used: options.tol,
        converged,
        energy_history: history,
    })
}

/// Nodes where the first solution exceeds the second by more than `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `(node index, position, u1, u2)` for every violating node.
    pub violations: Vec<(usize, Point, f64, f64)>,
    /// Whether the Dirichlet data were ordered `g1 <= g2`.
    pub boundary_ordered: bool,
}

impl ComparisonReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `u1 <= u2 + tol` at every node.
pub fn comparison_check(sol1: &Solution, sol2: &Solution, tol: f64) -> Result<ComparisonReport> {
    let (g1, g2) = (sol1.grid(), sol2.grid());
    if g1.shape() != g2.shape() || g1.h() != g2.h() || g1.classes() != g2.classes() {
        return Err(Error::Geometry("comparison needs identical grids".into()));
    }
    let mut violations = Vec::new();
    let mut boundary_ordered = true;
    for idx in 0..g1.len() {
        let class = g1.class(idx);
        if class == NodeClass::Exterior {
            continue;
        }
        let (a, b) = (sol1.field.values[idx], sol2.field.values[idx]);
        if class == NodeClass::Dirichlet && a > b {
            boundary_ordered = false;
        }
        if a > b + tol {
            violations.push((idx, g1.point(idx), a, b));
        }
    }
    Ok(ComparisonReport { violations, boundary_ordered })
}

/// Blow-up `v(y) = u(x0 + r y) / r^gamma` sampled on the unit ball with
/// reference spacing `h / r`.
pub fn rescale_solution(sol: &Solution, x0: Point, r: f64) -> Result<GridField> {
    let gamma = sol.gamma()?;
    let grid = sol.grid();
    let h = grid.h();
    if !(r > 0.0) {
        return Err(Error::Geometry(format!("radius must be positive, got {r}")));
    }
    if grid.domain().distance_to_boundary(x0) < r * (1.0 - 1e-9) {
        return Err(Error::Geometry(format!("ball B({x0:?}, {r}) escapes the domain")));
    }
    let m = (r / h).round().max(1.0) as usize;
    let reference = match grid.dim() {
        1 => Domain::Interval { lo: -1.0, hi: 1.0 },
        _ => Domain::Disk { center: [0.0, 0.0], radius: 1.0 },
    };
    let ref_grid = Arc::new(Grid::new(&reference, 1.0 / m as f64)?);
    let scale = r.powf(-gamma);
    let mut values = vec![0.0; ref_grid.len()];
    for idx in 0..ref_grid.len() {
        if ref_grid.class(idx) == NodeClass::Exterior {
            continue;
        }
        let y = ref_grid.point(idx);
        let x = [x0[0] + r * y[0], x0[1] + r * y[1]];
        let v = sol
            .field
            .interpolate(x)
            .ok_or_else(|| Error::Geometry(format!("ball B({x0:?}, {r}) leaves the grid at {x:?}")))?;
        values[idx] = v * scale;
    }
    Ok(GridField { grid: ref_grid, values })
}

/// Harnack quotient `S_{1/2}[v] / (I_{1/2}[v] + λ₊^{1/(p-1)} S_1[v]^{q/(p-1)})` of
/// the blow-up at `(x0, r)`. Zero when numerator and denominator both vanish.
pub fn harnack_quotient(sol: &Solution, x0: Point, r: f64) -> Result<f64> {
    if sol.grid().domain().distance_to_boundary(x0) < 2.0 * r * (1.0 - 1e-9) {
        return Err(Error::Geometry(format!("ball B({x0:?}, {}) escapes the domain", 2.0 * r)));
    }
    let v = rescale_solution(sol, x0, r)?;
    let g = &*v.grid;
    let mut s_half = f64::NEG_INFINITY;
    let mut i_half = f64::INFINITY;
    let mut s_one = f64::NEG_INFINITY;
    for idx in 0..g.len() {
        if g.class(idx) == NodeClass::Exterior {
            continue;
        }
        let d = g.distance(g.point(idx), [0.0, 0.0]);
        let val = v.values[idx];
        if d <= 1.0 + 1e-12 {
            s_one = s_one.max(val);
        }
        if d <= 0.5 + 1e-12 {
            s_half = s_half.max(val);
            i_half = i_half.min(val);
        }
    }
    let (p, q) = (sol.problem.exponents.p, sol.problem.exponents.q);
    let lambda_plus = sol.problem.lambda.bounds(&sol.problem.domain)[1];
    let forcing = lambda_plus.powf(1.0 / (p - 1.0)) * s_one.max(0.0).powf(q / (p - 1.0));
    let denom = i_half.max(0.0) + forcing;
    if denom == 0.0 {
        return Ok(if s_half <= 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(s_half / denom)
}

/// Discrete Radon measure of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    /// Density `-(1/h^N) ∂J_h/∂u_i` at every node (0 off the interior).
    pub mu: Vec<f64>,
    pub total_mass: f64,
    pub min_value: f64,
    /// Largest distance from a node with `mu > tolerance` to the free-boundary node set.
    pub support_distance: f64,
    pub tolerance: f64,
}

/// Evaluates the discrete measure `mu = -(1/h^N) ∂J_h/∂u` with absorption
/// `λ u_+^q χ_{u>0}`; non-negative and concentrated on the free boundary for minimizers.
pub fn kkt_measure(sol: &Solution) -> Result<MeasureReport> {
    let grid = sol.field.grid.clone();
    let disc = Discretization::new(&sol.problem, grid.clone())?;
    let vol = grid.cell_volume();
    let u = &sol.field.values;
    let mut mu = vec![0.0; grid.len()];
    for idx in 0..grid.len() {
        if grid.class(idx) == NodeClass::Interior {
            mu[idx] = -disc.gradient(u, idx) / vol;
        }
    }
    let tol = sol.tolerance_used;
    let total_mass = mu.iter().sum::<f64>() * vol;
    let min_value = mu.iter().copied().fold(0.0, f64::min);
    let threshold = if sol.problem.exponents.borderline { Threshold::Explicit(1e-10) } else { Threshold::Auto };
    let regions = extract_regions(sol, threshold)?;
    let mut support_distance: f64 = 0.0;
    for idx in 0..grid.len() {
        if mu[idx] > tol {
            support_distance = support_distance.max(regions.dist_to_fb[idx]);
        }
    }
    Ok(MeasureReport { mu, total_mass, min_value, support_distance, tolerance: tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::Exponents;
    use crate::problem::{BoundaryData, Coefficient};

    fn interval(lo: f64, hi: f64) -> Domain {
        Domain::Interval { lo, hi }
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::Constant { value: 0.0 },
        );
        let grid = Arc::new(Grid::new(&pb.domain, 0.125).unwrap());
        assert_eq!(discrete_energy(&GridField::zeros(grid), &pb).unwrap(), 0.0);
    }

    #[test]
    fn linear_field_energy_by_hand() {
        // four cells of length 1/4, slope 1: Σ 4 (1/4) 1^2 / 2 = 1/2
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(0.0, 1.0),
            0.0,
            BoundaryData::Custom(crate::problem::CustomField::new(|x| x[0])),
        );
        let grid = Arc::new(Grid::new(&pb.domain, 0.25).unwrap());
        let f = GridField::from_fn(grid, |x| x[0]);
        assert!((discrete_energy(&f, &pb).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_energy_matches_five_point_form() {
        // For p = 2 the corner quadrature gives a/4 (Δu)^2 per edge and adjacent cell.
        let pb = Problem {
            weight: Coefficient::constant(1.5),
            ..Problem::power_law(
                Exponents::standard(2.0, 0.0).unwrap(),
                Domain::Rectangle { lo: [0.0, 0.0], hi: [1.0, 1.0] },
                0.0,
                BoundaryData::Constant { value: 0.0 },
            )
        };
        let grid = Arc::new(Grid::new(&pb.domain, 0.25).unwrap());
        let f = GridField::from_fn(grid.clone(), |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let mut edges = 0.0;
        let [nx, ny] = grid.shape();
        for j in 0..ny {
            for i in 0..nx {
                let v = f.values[grid.index(i, j)];
                if i + 1 < nx {
                    let cells = if j == 0 || j + 1 == ny { 1.0 } else { 2.0 };
                    edges += cells * 0.375 * (f.values[grid.index(i + 1, j)] - v).powi(2);
                }
                if j + 1 < ny {
                    let cells = if i == 0 || i + 1 == nx { 1.0 } else { 2.0 };
                    edges += cells * 0.375 * (f.values[grid.index(i, j + 1)] - v).powi(2);
                }
            }
        }
        assert!((discrete_energy(&f, &pb).unwrap() - edges).abs() < 1e-13);
    }

    #[test]
    fn cell_derivatives_match_finite_differences() {
        let inv_h = 8.0;
        for p in [1.5, 2.0, 3.0] {
            let v = [0.3, 0.1, 0.45, 0.2];
            for k in 0..4 {
                let d = 1e-6;
                let mut a = v;
                let mut b = v;
                a[k] += d;
                b[k] -= d;
                let fd = (cell_energy(2, &a, p, inv_h) - cell_energy(2, &b, p, inv_h)) / (2.0 * d);
                let (d1, d2) = cell_derivatives(2, &v, k, p, inv_h);
                assert!((d1 - fd).abs() < 1e-5 * fd.abs().max(1.0), "p={p} k={k}");
                let (da, _) = cell_derivatives(2, &a, k, p, inv_h);
                let (db, _) = cell_derivatives(2, &b, k, p, inv_h);
                let fd2 = (da - db) / (2.0 * d);
                assert!((d2 - fd2).abs() < 1e-4 * fd2.abs().max(1.0), "p={p} k={k}: {d2} vs {fd2}");
            }
        }
    }

    #[test]
    fn energy_of_exact_interpolant_converges() {
        // ∫_{-1}^{1} (u')^2/2 + 2u for u = (|x|-1/2)_+^2 equals 1/3.
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::RadialPower { center: [0.0, 0.0], theta: Some(1.0), r0: 0.5, gamma: Some(2.0) },
        );
        let errors: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let grid = Arc::new(Grid::with_resolution(&pb.domain, n).unwrap());
                let f = GridField::from_fn(grid, |x| (x[0].abs() - 0.5).max(0.0).powi(2));
                (discrete_energy(&f, &pb).unwrap() - 1.0 / 3.0).abs()
            })
            .collect();
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::Constant { value: 0.0 },
        );
        let sol = solve(&pb, 1.0 / 64.0, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.field.values.iter().all(|&v| v == 0.0));
        assert_eq!(sol.energy, 0.0);
    }

    #[test]
    fn invalid_problem_is_rejected() {
        let pb = Problem::power_law(
            Exponents { p: 2.0, q: 1.0, borderline: false },
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::Constant { value: 1.0 },
        );
        assert!(matches!(solve(&pb, 0.1, &SolveOptions::default()), Err(Error::InvalidProblem(_))));
        let ok = Problem { exponents: Exponents::standard(2.0, 0.0).unwrap(), ..pb };
        assert!(solve(&ok, 0.1, &SolveOptions::with_tol(0.0)).is_err());
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::Constant { value: 0.25 },
        );
        let opts = SolveOptions { max_iter: Some(3), ..SolveOptions::default() };
        let sol = solve(&pb, 1.0 / 128.0, &opts).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
    }

    #[test]
    fn relaxation_outside_range_is_rejected() {
        let pb = Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            interval(-1.0, 1.0),
            2.0,
            BoundaryData::Constant { value: 0.25 },
        );
        let opts = SolveOptions { relaxation: Relaxation::Fixed(2.0), ..SolveOptions::default() };
        assert!(solve(&pb, 0.125, &opts).is_err());
    }
}
