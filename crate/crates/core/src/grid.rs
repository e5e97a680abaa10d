//! Uniform Cartesian grids with a domain mask, and scalar fields on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{distance, Domain, Point};

/// Role of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    /// Free unknown.
    Interior,
    /// Fixed to the boundary data, which is extended to the node itself.
    Dirichlet,
    /// Outside the domain; no energy contribution.
    Exterior,
}

/// Uniform grid over the bounding box of a domain, spacing `h` on every axis.
///
/// One-dimensional grids have a single row (`n[1] == 1`) and nodes at `y = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    h: f64,
    origin: Point,
    class: Vec<NodeClass>,
    domain: Domain,
}

impl Grid {
    /// Grid with spacing `h`. Interval and rectangle extents must be integer
    /// multiples of `h`; disks are masked, and the ring of inside nodes with an
    /// outside neighbour (diagonals included) becomes Dirichlet, so every cell
    /// touching an interior node lies inside.
    pub fn new(domain: &Domain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Geometry(format!("grid spacing must be positive, got {h}")));
        }
        let dim = domain.dimension();
        let (lo, hi) = domain.bounding_box();
        let mut n = [1usize; 2];
        for k in 0..dim {
            let len = hi[k] - lo[k];
            let cells = (len / h).round();
            if cells < 2.0 || (cells * h - len).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::Geometry(format!(
                    "extent {len} on axis {k} is not a multiple (>= 2) of h={h}"
                )));
            }
            n[k] = cells as usize + 1;
        }
        let mut grid = Grid {
            dim,
            n,
            h,
            origin: lo,
            class: vec![NodeClass::Interior; n[0] * n[1]],
            domain: domain.clone(),
        };
        let inside: Vec<bool> = (0..grid.len()).map(|i| domain.contains(grid.point(i))).collect();
        for idx in 0..grid.len() {
            let [i, j] = grid.coords(idx);
            grid.class[idx] = if !inside[idx] {
                NodeClass::Exterior
            } else {
                let on_box_edge = i == 0 || i + 1 == n[0] || (dim == 2 && (j == 0 || j + 1 == n[1]));
                let outside_nbr = grid.all_neighbors(idx).any(|nb| !inside[nb]);
                if on_box_edge || outside_nbr {
                    NodeClass::Dirichlet
                } else {
                    NodeClass::Interior
                }
            };
        }
        Ok(grid)
    }

    /// Grid with `cells_per_unit` cells per unit length (`h = 1 / cells_per_unit`).
    pub fn with_resolution(domain: &Domain, cells_per_unit: usize) -> Result<Self> {
        Self::new(domain, 1.0 / cells_per_unit as f64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node counts per axis.
    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `h^N`, the volume owned by one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.class[idx]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n[0] * j
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], idx / self.n[0]]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let [i, j] = self.coords(idx);
        let y = if self.dim == 1 { 0.0 } else { self.origin[1] + j as f64 * self.h };
        [self.origin[0] + i as f64 * self.h, y]
    }

    /// Nearest boundary point of a Dirichlet node.
    pub fn dirichlet_anchor(&self, idx: usize) -> Point {
        let x = self.point(idx);
        match self.domain {
            Domain::Disk { .. } => self.domain.project_to_boundary(x),
            _ => x,
        }
    }

    /// Axis neighbours (2 in 1D, 4 in 2D) that exist on the grid.
    pub fn axis_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j] = self.coords(idx);
        let (nx, ny) = (self.n[0], self.n[1]);
        let cand = [
            (i > 0).then(|| idx - 1),
            (i + 1 < nx).then(|| idx + 1),
            (j > 0).then(|| idx - nx),
            (j + 1 < ny).then(|| idx + nx),
        ];
        cand.into_iter().flatten()
    }

    /// Axis and diagonal neighbours.
    pub fn all_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j] = self.coords(idx);
        let (nx, ny) = (self.n[0] as isize, self.n[1] as isize);
        let (i, j) = (i as isize, j as isize);
        (-1isize..=1)
            .flat_map(move |dj| (-1isize..=1).map(move |di| (di, dj)))
            .filter(|&(di, dj)| di != 0 || dj != 0)
            .filter_map(move |(di, dj)| {
                let (a, b) = (i + di, j + dj);
                (a >= 0 && a < nx && b >= 0 && b < ny).then(|| (a + nx * b) as usize)
            })
    }

    /// Indices of nodes whose position lies within the box `[x - r, x + r]^N`.
    pub fn nodes_in_box(&self, center: Point, r: f64) -> impl Iterator<Item = usize> + '_ {
        let range = |k: usize| {
            if k >= self.dim {
                return (0usize, 0usize);
            }
            let lo = ((center[k] - r - self.origin[k]) / self.h).ceil().max(0.0);
            let hi = ((center[k] + r - self.origin[k]) / self.h).floor().min((self.n[k] - 1) as f64);
            if hi < lo {
                (1, 0)
            } else {
                (lo as usize, hi as usize)
            }
        };
        let (i0, i1) = range(0);
        let (j0, j1) = range(1);
        let valid = i0 <= i1 && j0 <= j1;
        let nx = self.n[0];
        (j0..=j1)
            .filter(move |_| valid)
            .flat_map(move |j| (i0..=i1).map(move |i| i + nx * j))
    }

    /// Grid index of the node nearest to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: Point) -> usize {
        let mut ij = [0usize; 2];
        for k in 0..self.dim {
            let t = ((x[k] - self.origin[k]) / self.h).round();
            ij[k] = t.clamp(0.0, (self.n[k] - 1) as f64) as usize;
        }
        self.index(ij[0], ij[1])
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        distance(a, b, self.dim)
    }

    /// Lower-left node of the cell containing `x`, with local coordinates in [0, 1].
    fn locate(&self, x: Point) -> Option<([usize; 2], [f64; 2])> {
        let mut ij = [0usize; 2];
        let mut t = [0.0; 2];
        for k in 0..self.dim {
            let s = (x[k] - self.origin[k]) / self.h;
            let tol = 1e-9;
            if s < -tol || s > (self.n[k] - 1) as f64 + tol {
                return None;
            }
            let base = s.floor().clamp(0.0, (self.n[k] - 2) as f64);
            ij[k] = base as usize;
            t[k] = (s - base).clamp(0.0, 1.0);
        }
        Some((ij, t))
    }
}

/// Scalar values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at every non-exterior node; exterior nodes are 0.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| if grid.class(i) == NodeClass::Exterior { 0.0 } else { f(grid.point(i)) })
            .collect();
        Self { grid, values }
    }

    pub fn max(&self) -> f64 {
        self.active().map(|i| self.values[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.active().map(|i| self.values[i]).fold(f64::INFINITY, f64::min)
    }

    /// Non-exterior node indices.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(move |&i| self.grid.class(i) != NodeClass::Exterior)
    }

    /// Multilinear interpolation; `None` outside the grid or in a cell touching
    /// an exterior node.
    pub fn interpolate(&self, x: Point) -> Option<f64> {
        let g = &*self.grid;
        let ([i, j], [tx, ty]) = g.locate(x)?;
        if g.dim() == 1 {
            let (a, b) = (g.index(i, 0), g.index(i + 1, 0));
            if g.class(a) == NodeClass::Exterior || g.class(b) == NodeClass::Exterior {
                return None;
            }
            return Some((1.0 - tx) * self.values[a] + tx * self.values[b]);
        }
        let ids = [g.index(i, j), g.index(i + 1, j), g.index(i, j + 1), g.index(i + 1, j + 1)];
        if ids.iter().any(|&k| g.class(k) == NodeClass::Exterior) {
            return None;
        }
        let v = ids.map(|k| self.values[k]);
        Some(
            (1.0 - tx) * (1.0 - ty) * v[0] + tx * (1.0 - ty) * v[1] + (1.0 - tx) * ty * v[2] + tx * ty * v[3],
        )
    }

    /// Largest absolute nodal difference over non-exterior nodes.
    pub fn sup_distance(&self, other: &GridField) -> Result<f64> {
        if self.grid.shape() != other.grid.shape() || self.grid.h() != other.grid.h() {
            return Err(Error::Geometry("grid mismatch".into()));
        }
        Ok(self
            .active()
            .map(|i| (self.values[i] - other.values[i]).abs())
            .fold(0.0, f64::max))
    }
}

/// Extrema of a field over a ball and over its outer grid shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallExtrema {
    pub sup: f64,
    pub inf: f64,
    /// Supremum over nodes with `r - h < |x - center| <= r`.
    pub sup_on_sphere: f64,
}

/// Supremum and infimum of `field` over the node set `{|x - center| <= r}`
/// (non-exterior nodes), and the supremum over the shell `(r - h, r]`.
pub fn ball_extrema(field: &GridField, center: Point, r: f64) -> Result<BallExtrema> {
    let g = &*field.grid;
    let h = g.h();
    if r < 2.0 * h * (1.0 - 1e-9) {
        return Err(Error::Geometry(format!("ball radius {r} below 2h = {}", 2.0 * h)));
    }
    let r_in = r * (1.0 + 1e-12);
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let mut sphere = f64::NEG_INFINITY;
    let mut count = 0usize;
    for idx in g.nodes_in_box(center, r_in) {
        if g.class(idx) == NodeClass::Exterior {
            continue;
        }
        let d = g.distance(g.point(idx), center);
        if d > r_in {
            continue;
        }
        let v = field.values[idx];
        count += 1;
        sup = sup.max(v);
        inf = inf.min(v);
        if d > r - h {
            sphere = sphere.max(v);
        }
    }
    if count == 0 || sphere == f64::NEG_INFINITY {
        return Err(Error::Geometry(format!("no grid node in ball B({center:?}, {r})")));
    }
    Ok(BallExtrema { sup, inf, sup_on_sphere: sphere })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Domain {
        Domain::Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] }
    }

    #[test]
    fn interval_grid_layout() {
        let g = Grid::new(&Domain::Interval { lo: -1.0, hi: 1.0 }, 0.25).unwrap();
        assert_eq!(g.shape(), [9, 1]);
        assert_eq!(g.class(0), NodeClass::Dirichlet);
        assert_eq!(g.class(8), NodeClass::Dirichlet);
        assert_eq!(g.class(4), NodeClass::Interior);
        assert_eq!(g.point(4), [0.0, 0.0]);
        assert!(Grid::new(&Domain::Interval { lo: 0.0, hi: 1.0 }, 0.3).is_err());
    }

    #[test]
    fn disk_mask_has_dirichlet_ring() {
        let d = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let g = Grid::new(&d, 0.125).unwrap();
        for idx in 0..g.len() {
            let x = g.point(idx);
            match g.class(idx) {
                NodeClass::Exterior => assert!(x[0].hypot(x[1]) > 1.0),
                NodeClass::Interior => {
                    assert!(g.axis_neighbors(idx).all(|nb| g.class(nb) != NodeClass::Exterior))
                }
                NodeClass::Dirichlet => {
                    let a = g.dirichlet_anchor(idx);
                    assert!((a[0].hypot(a[1]) - 1.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(g.class(g.nearest_node([0.0, 0.0])), NodeClass::Interior);
    }

    #[test]
    fn constant_field_extrema() {
        let g = Arc::new(Grid::new(&unit_square(), 1.0 / 16.0).unwrap());
        let f = GridField::from_fn(g, |_| 3.5);
        let e = ball_extrema(&f, [0.1, -0.2], 0.4).unwrap();
        assert_eq!((e.sup, e.inf, e.sup_on_sphere), (3.5, 3.5, 3.5));
    }

    #[test]
    fn one_dimensional_ball_extrema() {
        let h = 1.0 / 256.0;
        let g = Arc::new(Grid::new(&Domain::Interval { lo: -1.0, hi: 1.0 }, h).unwrap());
        let f = GridField::from_fn(g, |x| (x[0] - 0.5).max(0.0).powi(2));
        let e = ball_extrema(&f, [0.5, 0.0], 0.25).unwrap();
        assert!((e.sup - 0.0625).abs() <= 2.0 * 0.25 * h);
        assert_eq!(e.inf, 0.0);
    }

    #[test]
    fn radial_ball_extrema() {
        let h = 1.0 / 64.0;
        let g = Arc::new(Grid::new(&unit_square(), h).unwrap());
        let f = GridField::from_fn(g, |x| x[0].hypot(x[1]).powi(3));
        for r in [0.1, 0.3, 0.6] {
            let e = ball_extrema(&f, [0.0, 0.0], r).unwrap();
            assert!((e.sup - r.powi(3)).abs() <= 3.0 * r * r * h, "r={r}");
            assert!((e.sup_on_sphere - e.sup).abs() <= 3.0 * r * r * h);
            assert_eq!(e.inf, 0.0);
        }
    }

    #[test]
    fn empty_ball_is_an_error() {
        let g = Arc::new(Grid::new(&unit_square(), 0.25).unwrap());
        let f = GridField::zeros(g);
        assert!(ball_extrema(&f, [5.0, 5.0], 0.5).is_err());
        assert!(ball_extrema(&f, [0.0, 0.0], 0.3).is_err());
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let g = Arc::new(Grid::new(&unit_square(), 0.125).unwrap());
        let f = GridField::from_fn(g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]);
        for x in [[0.03, -0.71], [0.999, 0.2], [-1.0, 1.0]] {
            let exact = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
            assert!((f.interpolate(x).unwrap() - exact).abs() < 1e-12);
        }
        assert!(f.interpolate([1.5, 0.0]).is_none());
    }

    proptest! {
        #[test]
        fn ball_extrema_monotone_in_radius(
            cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.08f64..0.4, dr in 0.0f64..0.3, seed in 0u64..1000
        ) {
            let g = Arc::new(Grid::new(&unit_square(), 1.0 / 32.0).unwrap());
            let f = GridField::from_fn(g, |x| ((x[0] * 7.1 + seed as f64).sin() * (x[1] * 3.3).cos()).abs());
            let small = ball_extrema(&f, [cx, cy], r).unwrap();
            let large = ball_extrema(&f, [cx, cy], r + dr).unwrap();
            prop_assert!(large.sup >= small.sup);
            prop_assert!(large.inf <= small.inf);
            prop_assert!(small.sup >= small.sup_on_sphere);
        }
    }
}
