//! Problem description: exponents, domain, coefficients, absorption law and
//! boundary data, together with the validation that enforces the structural
//! bounds of the scalar-weight model.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::Exponents;
use crate::oracle::{self, RadialShooting};

/// A point in the plane. One-dimensional problems use the first coordinate only.
pub type Point = [f64; 2];

/// Euclidean distance restricted to the first `dim` coordinates.
pub fn distance(a: Point, b: Point, dim: usize) -> f64 {
    if dim == 1 {
        (a[0] - b[0]).abs()
    } else {
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Computational domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: Point, hi: Point },
    Disk { center: Point, radius: f64 },
}

impl Domain {
    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match *self {
            Domain::Interval { lo, hi } => ([lo, 0.0], [hi, 0.0]),
            Domain::Rectangle { lo, hi } => (lo, hi),
            Domain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        const SLACK: f64 = 1e-12;
        match *self {
            Domain::Interval { lo, hi } => x[0] >= lo - SLACK && x[0] <= hi + SLACK,
            Domain::Rectangle { lo, hi } => {
                (0..2).all(|k| x[k] >= lo[k] - SLACK && x[k] <= hi[k] + SLACK)
            }
            Domain::Disk { center, radius } => distance(x, center, 2) <= radius * (1.0 + SLACK),
        }
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        match *self {
            Domain::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            Domain::Rectangle { lo, hi } => (0..2)
                .map(|k| (x[k] - lo[k]).min(hi[k] - x[k]))
                .fold(f64::INFINITY, f64::min),
            Domain::Disk { center, radius } => radius - distance(x, center, 2),
        }
    }

    /// Nearest boundary point of a point inside the domain.
    pub fn project_to_boundary(&self, x: Point) -> Point {
        match *self {
            Domain::Interval { lo, hi } => {
                if x[0] - lo <= hi - x[0] {
                    [lo, 0.0]
                } else {
                    [hi, 0.0]
                }
            }
            Domain::Rectangle { lo, hi } => {
                let gaps = [x[0] - lo[0], hi[0] - x[0], x[1] - lo[1], hi[1] - x[1]];
                let (k, _) = gaps
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (k, &g)| if g < acc.1 { (k, g) } else { acc });
                match k {
                    0 => [lo[0], x[1]],
                    1 => [hi[0], x[1]],
                    2 => [x[0], lo[1]],
                    _ => [x[0], hi[1]],
                }
            }
            Domain::Disk { center, radius } => {
                let d = distance(x, center, 2);
                if d == 0.0 {
                    [center[0] + radius, center[1]]
                } else {
                    let s = radius / d;
                    [center[0] + s * (x[0] - center[0]), center[1] + s * (x[1] - center[1])]
                }
            }
        }
    }

    /// Sample points on the boundary.
    pub fn boundary_samples(&self, count: usize) -> Vec<Point> {
        match *self {
            Domain::Interval { lo, hi } => vec![[lo, 0.0], [hi, 0.0]],
            Domain::Rectangle { lo, hi } => {
                let per_side = (count / 4).max(2);
                let mut out = Vec::with_capacity(4 * per_side);
                for i in 0..per_side {
                    let t = i as f64 / (per_side - 1) as f64;
                    let x = lo[0] + t * (hi[0] - lo[0]);
                    let y = lo[1] + t * (hi[1] - lo[1]);
                    out.extend_from_slice(&[[x, lo[1]], [x, hi[1]], [lo[0], y], [hi[0], y]]);
                }
                out
            }
            Domain::Disk { center, radius } => (0..count.max(8))
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / count.max(8) as f64;
                    [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                })
                .collect(),
        }
    }

    /// Sample points covering the closed domain on a lattice.
    pub fn interior_samples(&self, per_axis: usize) -> Vec<Point> {
        let (lo, hi) = self.bounding_box();
        let n = per_axis.max(2);
        let ny = if self.dimension() == 1 { 1 } else { n };
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..n {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
                let y = if ny == 1 { 0.0 } else { lo[1] + (hi[1] - lo[1]) * j as f64 / (n - 1) as f64 };
                if self.contains([x, y]) {
                    out.push([x, y]);
                }
            }
        }
        out
    }

    fn well_formed(&self) -> std::result::Result<(), String> {
        let ok = match *self {
            Domain::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Domain::Rectangle { lo, hi } => (0..2).all(|k| lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k]),
            Domain::Disk { center, radius } => center.iter().all(|c| c.is_finite()) && radius > 0.0 && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate domain {self:?}"))
        }
    }
}

/// A user-supplied closure usable as a coefficient or boundary datum.
#[derive(Clone)]
pub struct CustomField(pub Arc<dyn Fn(Point) -> f64 + Send + Sync>);

impl CustomField {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomField(..)")
    }
}

impl PartialEq for CustomField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Scalar coefficient field over the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Constant { value: f64 },
    /// `value + gradient · x`.
    Affine { value: f64, gradient: Point },
    #[serde(skip)]
    Custom(CustomField),
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Affine { value, gradient } => value + gradient[0] * x[0] + gradient[1] * x[1],
            ScalarField::Custom(f) => (f.0)(x),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarField::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

/// A coefficient field with its declared bounds `[lower, upper]`.
///
/// When bounds are omitted they are derived from the field over the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub field: ScalarField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Self { field: ScalarField::constant(value), bounds: None }
    }

    pub fn with_bounds(field: ScalarField, lower: f64, upper: f64) -> Self {
        Self { field, bounds: Some([lower, upper]) }
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.field.eval(x)
    }

    /// Declared bounds, or the sampled range of the field over `domain`.
    pub fn bounds(&self, domain: &Domain) -> [f64; 2] {
        if let Some(b) = self.bounds {
            return b;
        }
        if let Some(c) = self.field.as_constant() {
            return [c, c];
        }
        domain
            .interior_samples(65)
            .into_iter()
            .map(|x| self.eval(x))
            .fold([f64::INFINITY, f64::NEG_INFINITY], |b, v| [b[0].min(v), b[1].max(v)])
    }
}

/// Absorption nonlinearity `f(s)`, multiplied by the coefficient `lambda(x)`.
///
/// `Power` is `s_+^q`; the others are the generalized laws that behave like
/// `s^q` near zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbsorptionLaw {
    #[default]
    Power,
    /// `exp(s^t) - 1`, `t >= q > 0`.
    ExpPower { t: f64 },
    /// `ln(s^t + 1)`, `t >= q > 0`.
    LogPower { t: f64 },
    /// `s^q ln(s^t + 1)`, `t > 0`.
    PowerLog { t: f64 },
    /// `s^q / (1 + s^t)^m`, `t > 0`, `0 < m <= q`.
    PowerRational { t: f64, m: f64 },
}

impl AbsorptionLaw {
    /// Parameter constraints for absorption order `q`.
    pub fn check(&self, q: f64) -> std::result::Result<(), String> {
        match *self {
            AbsorptionLaw::Power => Ok(()),
            AbsorptionLaw::ExpPower { t } | AbsorptionLaw::LogPower { t } => {
                if q > 0.0 && t >= q {
                    Ok(())
                } else {
                    Err(format!("requires t >= q > 0, got t={t}, q={q}"))
                }
            }
            AbsorptionLaw::PowerLog { t } => {
                if t > 0.0 {
                    Ok(())
                } else {
                    Err(format!("requires t > 0, got t={t}"))
                }
            }
            AbsorptionLaw::PowerRational { t, m } => {
                if t > 0.0 && m > 0.0 && m <= q {
                    Ok(())
                } else {
                    Err(format!("requires t > 0 and 0 < m <= q, got t={t}, m={m}, q={q}"))
                }
            }
        }
    }

    /// `f(s)` for `s >= 0`; zero for `s <= 0`. At `s = 0` the value is 0 even when `q = 0`.
    pub fn f(&self, q: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            AbsorptionLaw::Power => {
                pow_fast(s, q)
            }
            AbsorptionLaw::ExpPower { t } => s.powf(t).exp_m1(),
            AbsorptionLaw::LogPower { t } => s.powf(t).ln_1p(),
            AbsorptionLaw::PowerLog { t } => s.powf(q) * s.powf(t).ln_1p(),
            AbsorptionLaw::PowerRational { t, m } => s.powf(q) / (1.0 + s.powf(t)).powf(m),
        }
    }

    /// `f'(s)` for `s > 0`.
    pub fn df(&self, q: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            AbsorptionLaw::Power => {
                if q == 0.0 {
                    0.0
                } else {
                    q * pow_fast(s, q - 1.0)
                }
            }
            AbsorptionLaw::ExpPower { t } => t * s.powf(t - 1.0) * s.powf(t).exp(),
            AbsorptionLaw::LogPower { t } => t * s.powf(t - 1.0) / (s.powf(t) + 1.0),
            AbsorptionLaw::PowerLog { t } => {
                let st = s.powf(t);
                q * s.powf(q - 1.0) * st.ln_1p() + s.powf(q) * t * s.powf(t - 1.0) / (st + 1.0)
            }
            AbsorptionLaw::PowerRational { t, m } => {
                let st = s.powf(t);
                q * s.powf(q - 1.0) * (1.0 + st).powf(-m)
                    - m * t * s.powf(q + t - 1.0) * (1.0 + st).powf(-m - 1.0)
            }
        }
    }

    /// `lim_{s -> 0+} f(s)`: 1 for the power law with `q = 0`, otherwise 0.
    pub fn right_limit_at_zero(&self, q: f64) -> f64 {
        match self {
            AbsorptionLaw::Power if q == 0.0 => 1.0,
            _ => 0.0,
        }
    }

    /// Primitive `F(s) = ∫_0^s f`.
    pub fn primitive(&self, q: f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            AbsorptionLaw::Power => pow_fast(s, q + 1.0) / (q + 1.0),
            _ => integrate(|v| self.f(q, v), 0.0, s),
        }
    }
}

/// `x^e` with shortcuts for the half-integer exponents met in practice.
#[inline]
pub fn pow_fast(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 1.5 {
        x * x.sqrt()
    } else if e == 2.0 {
        x * x
    } else if e == -0.5 {
        1.0 / x.sqrt()
    } else {
        x.powf(e)
    }
}

/// Adaptive Simpson quadrature; the absorption integrands are continuous and monotone.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = 1e-13 * (b - a).abs().max(1e-300) * fa.abs().max(fb.abs()).max(1e-300);
    step(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Boundary data `g >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    Constant { value: f64 },
    /// `theta (|x - center| - r0)_+^gamma`. `theta` and `gamma` default to the
    /// problem's explicit constant and growth exponent.
    RadialPower {
        center: Point,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
        r0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
    /// Trace of the radial dead-core solution with core radius `r0`, obtained
    /// by shooting on the radial equation (unit weight, constant lambda).
    RadialDeadCore { center: Point, r0: f64 },
    /// Trace of the strictly positive borderline solution `exp(k x_axis)`, axis 1-based.
    BorderlineExponential { axis: usize },
    #[serde(skip)]
    Custom(CustomField),
}

/// Evaluator of a scalar function of position.
pub type PointFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// A dead-core boundary value problem
/// `-div(a |∇u|^{p-2} ∇u) + lambda f(u) = 0`, `u = g` on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub exponents: Exponents,
    pub domain: Domain,
    #[serde(default = "unit_coefficient")]
    pub weight: Coefficient,
    #[serde(default)]
    pub absorption: AbsorptionLaw,
    pub lambda: Coefficient,
    pub boundary: BoundaryData,
}

fn unit_coefficient() -> Coefficient {
    Coefficient::constant(1.0)
}

/// One failed invariant of [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl Problem {
    /// Power-law problem with unit weight and constant `lambda`.
    pub fn power_law(exponents: Exponents, domain: Domain, lambda: f64, boundary: BoundaryData) -> Self {
        Self {
            exponents,
            domain,
            weight: Coefficient::constant(1.0),
            absorption: AbsorptionLaw::Power,
            lambda: Coefficient::constant(lambda),
            boundary,
        }
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    /// Constant `lambda` if the coefficient is constant.
    pub fn constant_lambda(&self) -> Option<f64> {
        self.lambda.field.as_constant()
    }

    fn is_unit_power_model(&self) -> bool {
        self.weight.field.as_constant() == Some(1.0)
            && self.absorption == AbsorptionLaw::Power
            && self.constant_lambda().is_some()
    }

    /// Evaluator of the boundary data `g`.
    pub fn boundary_fn(&self) -> Result<PointFn> {
        let dim = self.dimension();
        match &self.boundary {
            BoundaryData::Constant { value } => {
                let v = *value;
                Ok(Arc::new(move |_| v))
            }
            BoundaryData::RadialPower { center, theta, r0, gamma } => {
                let theta = match theta {
                    Some(t) => *t,
                    None => self.explicit_theta()?,
                };
                let gamma = match gamma {
                    Some(g) => *g,
                    None => self.exponents.gamma()?,
                };
                let (c, r0) = (*center, *r0);
                Ok(Arc::new(move |x| {
                    oracle::radial_power(theta, r0, gamma, distance(x, c, dim))
                }))
            }
            BoundaryData::RadialDeadCore { center, r0 } => {
                let lambda = self.constant_lambda().ok_or_else(|| {
                    Error::Domain("radial dead-core data needs a constant lambda".into())
                })?;
                let (lo, hi) = self.domain.bounding_box();
                let c = *center;
                let reach = [lo, hi, [lo[0], hi[1]], [hi[0], lo[1]]]
                    .iter()
                    .map(|&v| distance(v, c, dim))
                    .fold(0.0, f64::max);
                let profile = RadialShooting::new(dim, self.exponents, lambda, *r0, reach * 1.01 + 1e-9)?;
                Ok(Arc::new(move |x| profile.eval(distance(x, c, dim))))
            }
            BoundaryData::BorderlineExponential { axis } => {
                let lambda = self.constant_lambda().ok_or_else(|| {
                    Error::Domain("borderline exponential needs a constant lambda".into())
                })?;
                if *axis == 0 || *axis > dim {
                    return Err(Error::Domain(format!("axis {axis} outside 1..={dim}")));
                }
                let f = oracle::borderline_exponential(self.exponents.p, lambda, *axis);
                Ok(Arc::new(f))
            }
            BoundaryData::Custom(f) => Ok(f.0.clone()),
        }
    }

    fn explicit_theta(&self) -> Result<f64> {
        let lambda = self.constant_lambda().ok_or_else(|| {
            Error::Domain("explicit amplitude needs a constant lambda".into())
        })?;
        oracle::theta_constant(self.dimension(), self.exponents.p, self.exponents.q, lambda)
    }

    /// Closed-form solution of this problem, when the boundary data are the
    /// trace of one (unit weight, constant lambda, power law only).
    pub fn exact_solution(&self) -> Option<PointFn> {
        let dim = self.dimension();
        match &self.boundary {
            BoundaryData::Constant { value } => {
                let lambda = self.constant_lambda()?;
                if *value == 0.0 || lambda == 0.0 {
                    let v = *value;
                    Some(Arc::new(move |_| v))
                } else {
                    None
                }
            }
            BoundaryData::RadialPower { r0, theta, gamma, .. } => {
                if !self.is_unit_power_model() || self.exponents.borderline {
                    return None;
                }
                let g = self.exponents.gamma().ok()?;
                let t = self.explicit_theta().ok()?;
                let theta_ok = theta.is_none_or(|v| (v - t).abs() <= 1e-9 * t);
                let gamma_ok = gamma.is_none_or(|v| (v - g).abs() <= 1e-12 * g);
                if theta_ok && gamma_ok && (dim == 1 || *r0 == 0.0) {
                    self.boundary_fn().ok()
                } else {
                    None
                }
            }
            BoundaryData::RadialDeadCore { .. } => {
                if self.is_unit_power_model() {
                    self.boundary_fn().ok()
                } else {
                    None
                }
            }
            BoundaryData::BorderlineExponential { .. } => {
                if self.is_unit_power_model() && self.exponents.borderline {
                    self.boundary_fn().ok()
                } else {
                    None
                }
            }
            BoundaryData::Custom(_) => None,
        }
    }

    /// Checks every invariant; fails with the full violation list.
    pub fn validated(&self) -> Result<()> {
        let v = validate_problem(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(v.iter().map(|v| v.to_string()).collect()))
        }
    }
}

/// Lists every violated invariant of `problem`; empty iff the problem is well formed.
pub fn validate_problem(problem: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Violation { field: field.to_string(), message })
    };

    if let Err(e) = problem.exponents.check() {
        let msg = e.to_string();
        let field = if msg.contains("exponent mode") { "exponent mode" } else { "exponents" };
        push(field, msg);
    }
    if let Err(m) = problem.domain.well_formed() {
        push("domain", m);
        return out;
    }

    let interior = problem.domain.interior_samples(65);

    let [a_min, a_max] = problem.weight.bounds(&problem.domain);
    if !(a_min > 0.0) {
        push("weight", format!("lower bound a_min={a_min} must be positive"));
    }
    if a_min > a_max {
        push("weight", format!("bounds [{a_min}, {a_max}] are inverted"));
    }
    if let Some(x) = interior.iter().find(|&&x| {
        let v = problem.weight.eval(x);
        !(v.is_finite() && v >= a_min && v <= a_max)
    }) {
        push("weight", format!("a({x:?})={} outside [{a_min}, {a_max}]", problem.weight.eval(*x)));
    }

    let [l_min, l_max] = problem.lambda.bounds(&problem.domain);
    if !(l_min >= 0.0) {
        push("lambda", format!("negativity: lower bound {l_min} is negative"));
    }
    if l_min > l_max {
        push("lambda", format!("bounds [{l_min}, {l_max}] are inverted"));
    }
    if let Some(x) = interior.iter().find(|&&x| problem.lambda.eval(x) < 0.0) {
        push("lambda", format!("negativity: lambda({x:?})={} < 0", problem.lambda.eval(*x)));
    } else if let Some(x) = interior.iter().find(|&&x| {
        let v = problem.lambda.eval(x);
        !(v.is_finite() && v >= l_min && v <= l_max)
    }) {
        push("lambda", format!("lambda({x:?})={} outside [{l_min}, {l_max}]", problem.lambda.eval(*x)));
    }

    if let Err(m) = problem.absorption.check(problem.exponents.q) {
        push("absorption", m);
    }

    match problem.boundary_fn() {
        Err(e) => push("boundary_data", e.to_string()),
        Ok(g) => {
            let samples = problem.domain.boundary_samples(256);
            let mut u_max: f64 = 0.0;
            for x in &samples {
                let v = g(*x);
                if !(v.is_finite() && v >= 0.0) {
                    push("boundary_data", format!("g({x:?})={v} must be finite and non-negative"));
                    break;
                }
                u_max = u_max.max(v);
            }
            let q = problem.exponents.q;
            if problem.absorption.check(q).is_ok() && u_max > 0.0 {
                let law = problem.absorption;
                let mut prev: f64 = 0.0;
                for i in 1..=512 {
                    let s = u_max * i as f64 / 512.0;
                    let v = law.f(q, s);
                    if v < prev - 1e-14 * prev.abs() {
                        push("absorption", format!("f decreases near s={s:.4} on [0, {u_max}]"));
                        break;
                    }
                    prev = v;
                }
            }
        }
    }

    match &problem.boundary {
        BoundaryData::BorderlineExponential { .. } if !problem.exponents.borderline => {
            push("boundary_data", "borderline exponential data requires borderline exponents".into())
        }
        BoundaryData::RadialDeadCore { .. } | BoundaryData::RadialPower { .. } if problem.exponents.borderline => {
            push("boundary_data", "radial dead-core data requires standard exponents".into())
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial_1d() -> Problem {
        Problem::power_law(
            Exponents::standard(2.0, 0.0).unwrap(),
            Domain::Interval { lo: -1.0, hi: 1.0 },
            2.0,
            BoundaryData::RadialPower { center: [0.0, 0.0], theta: Some(1.0), r0: 0.5, gamma: Some(2.0) },
        )
    }

    #[test]
    fn well_formed_problem_has_no_violations() {
        assert!(validate_problem(&radial_1d()).is_empty());
    }

    #[test]
    fn negative_lambda_is_reported() {
        let mut pb = radial_1d();
        pb.lambda = Coefficient::with_bounds(
            ScalarField::Affine { value: 0.0, gradient: [1.0, 0.0] },
            -1.0,
            1.0,
        );
        let v = validate_problem(&pb);
        assert!(v.iter().any(|v| v.field == "lambda" && v.message.contains("negativ")), "{v:?}");

        pb.lambda = Coefficient::constant(-1.0);
        let v = validate_problem(&pb);
        assert!(v.iter().any(|v| v.field == "lambda"), "{v:?}");
    }

    #[test]
    fn unflagged_borderline_is_reported() {
        let mut pb = radial_1d();
        pb.exponents = Exponents { p: 2.0, q: 1.0, borderline: false };
        let v = validate_problem(&pb);
        assert!(v.iter().any(|v| v.field == "exponent mode"), "{v:?}");
    }

    #[test]
    fn weight_and_boundary_checks() {
        let mut pb = radial_1d();
        pb.weight = Coefficient::constant(0.0);
        assert!(validate_problem(&pb).iter().any(|v| v.field == "weight"));

        let mut pb = radial_1d();
        pb.boundary = BoundaryData::Constant { value: -0.5 };
        assert!(validate_problem(&pb).iter().any(|v| v.field == "boundary_data"));

        let mut pb = radial_1d();
        pb.weight = Coefficient::with_bounds(ScalarField::Affine { value: 1.0, gradient: [0.5, 0.0] }, 0.8, 1.2);
        assert!(validate_problem(&pb).iter().any(|v| v.field == "weight" && v.message.contains("outside")));
    }

    #[test]
    fn absorption_law_constraints() {
        assert!(AbsorptionLaw::ExpPower { t: 0.5 }.check(1.0).is_err());
        assert!(AbsorptionLaw::ExpPower { t: 1.0 }.check(0.0).is_err());
        assert!(AbsorptionLaw::LogPower { t: 1.0 }.check(0.5).is_ok());
        assert!(AbsorptionLaw::PowerRational { t: 1.0, m: 0.6 }.check(0.5).is_err());
        assert!(AbsorptionLaw::PowerRational { t: 1.0, m: 0.5 }.check(0.5).is_ok());
        assert!(AbsorptionLaw::PowerLog { t: 0.0 }.check(0.5).is_err());
    }

    #[test]
    fn absorption_laws_vanish_at_zero_and_bound_by_power() {
        let q = 0.5;
        let laws = [
            AbsorptionLaw::Power,
            AbsorptionLaw::ExpPower { t: 1.0 },
            AbsorptionLaw::LogPower { t: 0.5 },
            AbsorptionLaw::PowerLog { t: 1.0 },
            AbsorptionLaw::PowerRational { t: 1.0, m: 0.5 },
        ];
        for law in laws {
            assert_eq!(law.f(q, 0.0), 0.0);
            let mut prev = 0.0;
            let mut ratio_max: f64 = 0.0;
            for i in 1..=1000 {
                let s = i as f64 / 1000.0;
                let v = law.f(q, s);
                assert!(v >= prev, "{law:?} not monotone");
                prev = v;
                ratio_max = ratio_max.max(v / s.powf(q));
            }
            assert!(ratio_max < 3.0, "{law:?}: f(s)/s^q up to {ratio_max}");
        }
    }

    #[test]
    fn absorption_primitive_matches_closed_forms() {
        // ln(s+1) integrates to (s+1)ln(s+1) - s.
        let law = AbsorptionLaw::LogPower { t: 1.0 };
        for s in [0.1, 0.7, 2.0] {
            let exact = (s + 1.0) * f64::ln(s + 1.0) - s;
            assert!((law.primitive(1.0, s) - exact).abs() < 1e-11, "s={s}");
        }
        // exp(s)-1 integrates to exp(s)-1-s.
        let law = AbsorptionLaw::ExpPower { t: 1.0 };
        let s: f64 = 1.3;
        assert!((law.primitive(1.0, s) - (s.exp_m1() - s)).abs() < 1e-11);
        assert_eq!(AbsorptionLaw::Power.primitive(1.0, 2.0), 2.0);
    }

    #[test]
    fn absorption_derivative_matches_finite_difference() {
        let q = 0.7;
        let laws = [
            AbsorptionLaw::Power,
            AbsorptionLaw::ExpPower { t: 1.2 },
            AbsorptionLaw::LogPower { t: 0.9 },
            AbsorptionLaw::PowerLog { t: 1.5 },
            AbsorptionLaw::PowerRational { t: 2.0, m: 0.3 },
        ];
        for law in laws {
            for s in [0.2, 0.9, 1.7] {
                let d = 1e-6;
                let fd = (law.f(q, s + d) - law.f(q, s - d)) / (2.0 * d);
                assert!((law.df(q, s) - fd).abs() < 1e-6 * fd.abs().max(1.0), "{law:?} at {s}");
            }
        }
    }

    #[test]
    fn problem_json_rejects_unknown_keys() {
        let json = r#"{"exponents":{"p":2,"q":0},"domain":{"shape":"interval","lo":-1,"hi":1},
            "lambda":{"field":{"kind":"constant","value":2}},
            "boundary":{"kind":"constant","value":0.25},"lamda":1}"#;
        assert!(serde_json::from_str::<Problem>(json).is_err());
        let ok = json.replace(r#","lamda":1"#, "");
        let pb: Problem = serde_json::from_str(&ok).unwrap();
        assert!(validate_problem(&pb).is_empty());
    }

    #[test]
    fn domain_geometry() {
        let d = Domain::Disk { center: [0.0, 0.0], radius: 2.0 };
        let p = d.project_to_boundary([1.0, 0.0]);
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0);
        assert!((d.distance_to_boundary([0.0, 1.5]) - 0.5).abs() < 1e-15);
        let r = Domain::Rectangle { lo: [0.0, 0.0], hi: [1.0, 2.0] };
        assert_eq!(r.project_to_boundary([0.9, 1.0]), [1.0, 1.0]);
        assert!((r.distance_to_boundary([0.5, 0.25]) - 0.25).abs() < 1e-15);
    }
}
