//! Dead core and free boundary of a discrete solution, and the diagnostics
//! measured on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ball_extrema, NodeClass};
use crate::problem::Point;
use crate::solver::Solution;

/// Frozen stability constant used by [`deadcore_symdiff`].
///
/// Four times the largest ratio `measure / sigma` (1.015625) observed on the
/// 1D calibration family at `h = 1/512`; see `examples/calibrate_stability.rs`.
pub const C_STAB: f64 = 4.0625;

/// Classification threshold for the dead core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `max(1e-10, h^gamma)`; needs a growth exponent.
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    DeadCore,
    Positive,
    Dirichlet,
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub class: Vec<Region>,
    /// Free-boundary nodes in increasing index order.
    pub fb_nodes: Vec<usize>,
    /// Chamfer distance to the nearest free-boundary node (infinite if there is none).
    pub dist_to_fb: Vec<f64>,
    pub tau_dc: f64,
}

impl RegionMap {
    pub fn is_fb(&self, idx: usize) -> bool {
        self.fb_nodes.binary_search(&idx).is_ok()
    }

    pub fn dead_count(&self) -> usize {
        self.class.iter().filter(|&&c| c == Region::DeadCore).count()
    }
}

/// Splits the interior nodes into dead core (`u <= tau`) and positive set,
/// and locates the free boundary.
pub fn extract_regions(sol: &Solution, threshold: Threshold) -> Result<RegionMap> {
    let grid = sol.grid();
    let tau = match threshold {
        Threshold::Auto => {
            let gamma = sol.problem.exponents.gamma().map_err(|_| {
                Error::Precondition("automatic threshold needs a growth exponent; pass an explicit one".into())
            })?;
            grid.h().powf(gamma).max(1e-10)
        }
        Threshold::Explicit(t) => {
            if !(t >= 0.0) {
                return Err(Error::Domain(format!("threshold must be non-negative, got {t}")));
            }
            t
        }
    };
    let u = &sol.field.values;
    let class: Vec<Region> = (0..grid.len())
        .map(|i| match grid.class(i) {
            NodeClass::Exterior => Region::Exterior,
            NodeClass::Dirichlet => Region::Dirichlet,
            NodeClass::Interior if u[i] <= tau => Region::DeadCore,
            NodeClass::Interior => Region::Positive,
        })
        .collect();
    let opposite = |c: Region| match c {
        Region::DeadCore => Some(Region::Positive),
        Region::Positive => Some(Region::DeadCore),
        _ => None,
    };
    let fb_nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| match opposite(class[i]) {
            Some(o) => grid.axis_neighbors(i).any(|nb| class[nb] == o),
            None => false,
        })
        .collect();
    let dist_to_fb = chamfer(sol, &fb_nodes);
    Ok(RegionMap { class, fb_nodes, dist_to_fb, tau_dc: tau })
}

/// Two-pass chamfer distance transform with axis weight `h` and diagonal weight `sqrt(2) h`.
fn chamfer(sol: &Solution, seeds: &[usize]) -> Vec<f64> {
    let grid = sol.grid();
    let [nx, ny] = grid.shape();
    let h = grid.h();
    let diag = std::f64::consts::SQRT_2 * h;
    let mut d = vec![f64::INFINITY; grid.len()];
    for &s in seeds {
        d[s] = 0.0;
    }
    let at = |i: isize, j: isize| -> Option<usize> {
        (i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny).then(|| i as usize + nx * j as usize)
    };
    let forward = [(-1isize, 0isize, h), (-1, -1, diag), (0, -1, h), (1, -1, diag)];
    let backward = [(1isize, 0isize, h), (1, 1, diag), (0, 1, h), (-1, 1, diag)];
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let idx = at(i, j).unwrap();
            for &(di, dj, w) in &forward {
                if let Some(nb) = at(i + di, j + dj) {
                    d[idx] = d[idx].min(d[nb] + w);
                }
            }
        }
    }
    for j in (0..ny as isize).rev() {
        for i in (0..nx as isize).rev() {
            let idx = at(i, j).unwrap();
            for &(di, dj, w) in &backward {
                if let Some(nb) = at(i + di, j + dj) {
                    d[idx] = d[idx].min(d[nb] + w);
                }
            }
        }
    }
    d
}

/// Ordinary least squares `y = slope x + intercept` with coefficient of determination.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub target_exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl FitReport {
    fn new(radii: Vec<f64>, values: Vec<f64>, target: f64, tolerance: f64) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite(format!("non-positive value in log-log fit: {values:?}")));
        }
        let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let (slope, intercept, r_squared) = least_squares(&xs, &ys);
        let pass = (slope - target).abs() <= tolerance;
        Ok(Self { slope, intercept, r_squared, radii, values, target_exponent: target, tolerance, pass })
    }
}

/// Default slope tolerance of the exponent fits: 0.15 in 1D, 0.25 in 2D.
pub fn fit_tolerance(dim: usize) -> f64 {
    if dim == 1 {
        0.15
    } else {
        0.25
    }
}

/// Half-octave radii `r_max 2^{-j/2}` with `r_max = dist(x0, boundary)/2`, down to `5h`.
pub fn admissible_radii(sol: &Solution, x0: Point) -> Vec<f64> {
    let h = sol.h();
    let r_max = 0.5 * sol.grid().domain().distance_to_boundary(x0);
    (0..)
        .map(|j| r_max * 2f64.powf(-0.5 * j as f64))
        .take_while(|&r| r >= 5.0 * h * (1.0 - 1e-9))
        .collect()
}

/// Grid-aligned dyadic radii `4h 2^k` up to `dist(x0, boundary) / 2`.
pub fn dyadic_radii(sol: &Solution, x0: Point) -> Vec<f64> {
    let h = sol.h();
    let r_max = 0.5 * sol.grid().domain().distance_to_boundary(x0) * (1.0 + 1e-9);
    (0..).map(|k| 4.0 * h * 2f64.powi(k)).take_while(|&r| r <= r_max).collect()
}

fn fit_radii(sol: &Solution, regions: &RegionMap, x0: usize) -> Result<Vec<f64>> {
    if !regions.is_fb(x0) {
        return Err(Error::Precondition(format!("node {x0} is not a free-boundary node")));
    }
    let radii = admissible_radii(sol, sol.grid().point(x0));
    if radii.len() < 4 {
        return Err(Error::InsufficientRadii(format!(
            "{} admissible radii at node {x0}, need 4 (grid too coarse)",
            radii.len()
        )));
    }
    Ok(radii)
}

/// Slope of `log sup_{B_r(x0)} u` against `log r`.
pub fn fit_growth_exponent(sol: &Solution, regions: &RegionMap, x0: usize) -> Result<FitReport> {
    let gamma = sol.gamma()?;
    let radii = fit_radii(sol, regions, x0)?;
    let center = sol.grid().point(x0);
    let values = radii
        .iter()
        .map(|&r| ball_extrema(&sol.field, center, r).map(|e| e.sup))
        .collect::<Result<Vec<_>>>()?;
    FitReport::new(radii, values, gamma, fit_tolerance(sol.grid().dim()))
}

/// Discrete gradient norm at a positive node: centred differences, one-sided
/// into the positive set when a neighbour is dead.
fn gradient_norm(sol: &Solution, regions: &RegionMap, idx: usize) -> Option<f64> {
    let grid = sol.grid();
    let [nx, _] = grid.shape();
    let [i, j] = grid.coords(idx);
    let [_, ny] = grid.shape();
    let u = &sol.field.values;
    let h = grid.h();
    let usable = |k: usize| matches!(regions.class[k], Region::Positive | Region::Dirichlet);
    let mut sq = 0.0;
    for axis in 0..grid.dim() {
        let (has_lo, has_hi, stride) = if axis == 0 { (i > 0, i + 1 < nx, 1) } else { (j > 0, j + 1 < ny, nx) };
        if !has_lo || !has_hi {
            return None;
        }
        let (lo, hi) = (idx - stride, idx + stride);
        let d = match (usable(lo), usable(hi)) {
            (true, true) => (u[hi] - u[lo]) / (2.0 * h),
            (false, true) => (u[hi] - u[idx]) / h,
            (true, false) => (u[idx] - u[lo]) / h,
            (false, false) => ((u[hi] - u[idx]).abs().max((u[idx] - u[lo]).abs())) / h,
        };
        sq += d * d;
    }
    Some(sq.sqrt())
}

/// Slope of `log max_{B_r(x0)} |grad_h u|` against `log r`.
pub fn fit_gradient_exponent(sol: &Solution, regions: &RegionMap, x0: usize) -> Result<FitReport> {
    let gamma = sol.gamma()?;
    let radii = fit_radii(sol, regions, x0)?;
    let grid = sol.grid();
    let center = grid.point(x0);
    let mut values = Vec::with_capacity(radii.len());
    for &r in &radii {
        let mut best: f64 = 0.0;
        for idx in grid.nodes_in_box(center, r) {
            if regions.class[idx] != Region::Positive || grid.distance(grid.point(idx), center) > r * (1.0 + 1e-12) {
                continue;
            }
            if let Some(g) = gradient_norm(sol, regions, idx) {
                best = best.max(g);
            }
        }
        values.push(best);
    }
    FitReport::new(radii, values, gamma - 1.0, fit_tolerance(grid.dim()))
}

/// One row of a radius scan around a free-boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub node: usize,
    pub radius: f64,
    pub value: f64,
}

/// Minimum over free-boundary nodes and dyadic radii of
/// `sup_{|x - x0| ~ r} u / r^gamma`.
pub fn nondegeneracy_scan(sol: &Solution, regions: &RegionMap) -> Result<(f64, Vec<ScanRow>)> {
    let gamma = sol.gamma()?;
    if regions.fb_nodes.is_empty() {
        return Err(Error::Precondition("free boundary is empty".into()));
    }
    let grid = sol.grid();
    let mut table = Vec::new();
    for &x0 in &regions.fb_nodes {
        let center = grid.point(x0);
        for r in dyadic_radii(sol, center) {
            let e = ball_extrema(&sol.field, center, r)?;
            table.push(ScanRow { node: x0, radius: r, value: e.sup_on_sphere / r.powf(gamma) });
        }
    }
    if table.is_empty() {
        return Err(Error::InsufficientRadii("no free-boundary node has an admissible radius".into()));
    }
    let c_min = table.iter().map(|row| row.value).fold(f64::INFINITY, f64::min);
    Ok((c_min, table))
}

fn unit_ball_volume(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        std::f64::consts::PI
    }
}

fn positive_at(sol: &Solution, regions: &RegionMap, idx: usize) -> bool {
    match regions.class[idx] {
        Region::Positive => true,
        Region::Dirichlet => sol.field.values[idx] > regions.tau_dc,
        _ => false,
    }
}

/// Volume fraction of the positive set in `B_rho(x0)`.
pub fn density_fraction(sol: &Solution, regions: &RegionMap, x0: usize, rho: f64) -> Result<f64> {
    if !regions.is_fb(x0) {
        return Err(Error::Precondition(format!("node {x0} is not a free-boundary node")));
    }
    let grid = sol.grid();
    let h = grid.h();
    let center = grid.point(x0);
    let slack = 1.0 + 1e-9;
    if rho * slack < 2.0 * h || rho > grid.domain().distance_to_boundary(center) * slack {
        return Err(Error::Geometry(format!("radius {rho} outside [2h, dist(x0, boundary)]")));
    }
    let count = grid
        .nodes_in_box(center, rho)
        .filter(|&i| grid.distance(grid.point(i), center) <= rho * (1.0 + 1e-12) && positive_at(sol, regions, i))
        .count();
    let dim = grid.dim();
    Ok(count as f64 * grid.cell_volume() / (unit_ball_volume(dim) * rho.powi(dim as i32)))
}

/// Certified porosity constant: the minimum over free-boundary nodes and
/// admissible radii of the relative radius of the largest ball avoiding the
/// free boundary inside `B_r(x)`.
pub fn porosity_estimate(sol: &Solution, regions: &RegionMap) -> Result<(f64, Vec<ScanRow>)> {
    if regions.fb_nodes.is_empty() {
        return Err(Error::Precondition("free boundary is empty".into()));
    }
    let grid = sol.grid();
    let mut table = Vec::new();
    for &x in &regions.fb_nodes {
        let center = grid.point(x);
        for r in admissible_radii(sol, center) {
            let mut best: f64 = 0.0;
            for y in grid.nodes_in_box(center, r) {
                if regions.class[y] == Region::Exterior {
                    continue;
                }
                let slack = r - grid.distance(grid.point(y), center);
                if slack < 0.0 {
                    continue;
                }
                best = best.max(regions.dist_to_fb[y].min(slack));
            }
            table.push(ScanRow { node: x, radius: r, value: best / r });
        }
    }
    if table.is_empty() {
        return Err(Error::InsufficientRadii("no free-boundary node has an admissible radius".into()));
    }
    let delta = table.iter().map(|row| row.value).fold(f64::INFINITY, f64::min);
    Ok((delta, table))
}

/// Volume of the thin positive layer `{tau < u < rho^gamma}`.
pub fn level_set_measure(sol: &Solution, regions: &RegionMap, rho: f64) -> Result<f64> {
    let gamma = sol.gamma()?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
    }
    let top = rho.powf(gamma);
    let grid = sol.grid();
    let count = (0..grid.len())
        .filter(|&i| {
            let v = sol.field.values[i];
            grid.class(i) == NodeClass::Interior && v > regions.tau_dc && v < top
        })
        .count();
    Ok(count as f64 * grid.cell_volume())
}

/// Lower-left nodes of the grid cells whose corners straddle the dead-core
/// threshold, restricted to cells centred in `B_r(center)`.
fn crossing_cells(sol: &Solution, regions: &RegionMap, center: Point, r: f64) -> Vec<usize> {
    let grid = sol.grid();
    let h = grid.h();
    let [nx, ny] = grid.shape();
    let u = &sol.field.values;
    let tau = regions.tau_dc;
    let mut cells = Vec::new();
    for j in 0..ny.saturating_sub(1).max(1) {
        for i in 0..nx - 1 {
            let ids: &[usize] = &if grid.dim() == 1 {
                [i, i + 1, i, i + 1]
            } else {
                [grid.index(i, j), grid.index(i + 1, j), grid.index(i, j + 1), grid.index(i + 1, j + 1)]
            };
            if ids.iter().any(|&k| grid.class(k) == NodeClass::Exterior) {
                continue;
            }
            let p = grid.point(ids[0]);
            let mid = if grid.dim() == 1 { [p[0] + 0.5 * h, 0.0] } else { [p[0] + 0.5 * h, p[1] + 0.5 * h] };
            if grid.distance(mid, center) > r * (1.0 + 1e-12) {
                continue;
            }
            let dead = ids.iter().filter(|&&k| u[k] <= tau).count();
            if dead > 0 && dead < ids.len() {
                cells.push(ids[0]);
            }
        }
    }
    cells
}

/// Local size of the free boundary in `B_r(x0)`.
///
/// The free boundary is represented by the grid cells whose corners straddle
/// the dead-core threshold. In 2D the estimate is their number times
/// `pi/4 h`, the mean crossing count of a segment with random orientation;
/// in 1D it is the number of crossings. The dimension fit regresses box
/// counts at `eps = h 2^m`, `m = 0..4`, against `1/eps`.
pub fn boxcount_fb_measure(sol: &Solution, regions: &RegionMap, x0: usize, r: f64) -> Result<(f64, FitReport)> {
    let grid = sol.grid();
    let h = grid.h();
    let dim = grid.dim();
    if r < 8.0 * h * (1.0 - 1e-9) {
        return Err(Error::InsufficientRadii(format!("radius {r} below 8h = {}", 8.0 * h)));
    }
    let cells = crossing_cells(sol, regions, grid.point(x0), r);
    if cells.is_empty() {
        return Err(Error::Precondition("no free-boundary crossing inside the ball".into()));
    }
    let estimate = if dim == 1 {
        cells.len() as f64
    } else {
        std::f64::consts::FRAC_PI_4 * cells.len() as f64 * h
    };
    let nx = grid.shape()[0];
    let mut eps = Vec::new();
    let mut counts = Vec::new();
    for m in (0..=4).rev() {
        let side = 1usize << m;
        let mut boxes: Vec<usize> = cells
            .iter()
            .map(|&c| {
                let [a, b] = grid.coords(c);
                (a / side) + (nx / side + 1) * (b / side)
            })
            .collect();
        boxes.sort_unstable();
        boxes.dedup();
        eps.push(h * side as f64);
        counts.push(boxes.len() as f64);
    }
    // slope against log(1/eps) is minus the slope against log eps
    let mut fit = FitReport::new(eps, counts, (dim - 1) as f64, 0.2)?;
    fit.slope = -fit.slope;
    fit.pass = (fit.slope - fit.target_exponent).abs() <= fit.tolerance;
    Ok((estimate, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymDiff {
    pub measure: f64,
    pub sup_gap: f64,
    pub c_stab: f64,
    pub pass: bool,
}

/// Volume of the symmetric difference of two dead cores, checked against `C_STAB sigma`.
pub fn deadcore_symdiff(sol1: &Solution, sol2: &Solution, sigma: f64) -> Result<SymDiff> {
    deadcore_symdiff_with(sol1, sol2, sigma, C_STAB)
}

/// As [`deadcore_symdiff`] with an explicit stability constant.
pub fn deadcore_symdiff_with(sol1: &Solution, sol2: &Solution, sigma: f64, c_stab: f64) -> Result<SymDiff> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let (g1, g2) = (sol1.grid(), sol2.grid());
    if g1.shape() != g2.shape() || g1.h() != g2.h() || g1.classes() != g2.classes() {
        return Err(Error::Geometry("dead-core comparison needs identical grids".into()));
    }
    let gamma = sol1.gamma()?;
    let sup_gap = sol1.field.sup_distance(&sol2.field)?;
    let bound = sigma.powf(gamma);
    if sup_gap > bound * (1.0 + 1e-9) {
        return Err(Error::Precondition(format!("sup-norm gap {sup_gap:.3e} exceeds sigma^gamma = {bound:.3e}")));
    }
    let r1 = extract_regions(sol1, Threshold::Auto)?;
    let r2 = extract_regions(sol2, Threshold::Auto)?;
    let differing = r1
        .class
        .iter()
        .zip(&r2.class)
        .filter(|(a, b)| (**a == Region::DeadCore) != (**b == Region::DeadCore))
        .count();
    let measure = differing as f64 * g1.cell_volume();
    Ok(SymDiff { measure, sup_gap, c_stab, pass: measure <= c_stab * sigma })
}
