//! Closed-form dead-core solutions and the constants attached to them.
//!
//! For the p-Laplacian with constant absorption coefficient `lambda`, the
//! function `theta |x|^gamma` solves `-Δ_p u + lambda u^q = 0` exactly when
//! `theta` is [`theta_constant`]. Shifting the core to radius `r0 > 0` keeps
//! the profile exact in one dimension and turns it into a supersolution in two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{gamma_exponent, Exponents};
use crate::problem::Point;

/// `theta (d - r0)_+^gamma`.
#[inline]
pub fn radial_power(theta: f64, r0: f64, gamma: f64, d: f64) -> f64 {
    let s = d - r0;
    if s <= 0.0 {
        0.0
    } else {
        theta * s.powf(gamma)
    }
}

/// Amplitude `theta` making `theta |x|^gamma` an exact solution of
/// `-Δ_p u + lambda u^q = 0` in dimension `n`:
///
/// `theta = [lambda (p-1-q)^p / (p^(p-1) (p q + n (p-1-q)))]^(1/(p-1-q))`.
pub fn theta_constant(n: usize, p: f64, q: f64, lambda: f64) -> Result<f64> {
    gamma_exponent(p, q)?;
    if n == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let gap = p - 1.0 - q;
    let base = lambda * gap.powf(p) / (p.powf(p - 1.0) * (p * q + n as f64 * gap));
    Ok(base.powf(1.0 / gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    Supersolution,
}

/// The radial dead-core profile `theta (|x| - r0)_+^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub theta: f64,
    pub r0: f64,
    pub exponents: Exponents,
    pub dimension: usize,
    pub lambda: f64,
    pub exactness: Exactness,
}

impl RadialProfile {
    /// Profile with the explicit amplitude for `(dimension, p, q, lambda)`.
    pub fn new(dimension: usize, exponents: Exponents, lambda: f64, r0: f64) -> Result<Self> {
        if r0 < 0.0 {
            return Err(Error::Domain(format!("core radius must be non-negative, got {r0}")));
        }
        let theta = theta_constant(dimension, exponents.p, exponents.q, lambda)?;
        let exactness = if r0 == 0.0 || dimension == 1 { Exactness::Exact } else { Exactness::Supersolution };
        Ok(Self { theta, r0, exponents, dimension, lambda, exactness })
    }

    pub fn gamma(&self) -> f64 {
        self.exponents.p / self.exponents.gap()
    }

    /// Profile value at radius `r`.
    pub fn value_at(&self, r: f64) -> f64 {
        radial_power(self.theta, self.r0, self.gamma(), r)
    }
}

/// Evaluates the profile at `x` (origin-centred; 1D uses `|x_1|`).
pub fn radial_profile_eval(profile: &RadialProfile, x: Point) -> f64 {
    let r = if profile.dimension == 1 { x[0].abs() } else { x[0].hypot(x[1]) };
    profile.value_at(r)
}

/// Pointwise value of `-Δ_p u + lambda u^q` for the profile at radius `r > r0`.
pub fn analytic_residual(profile: &RadialProfile, r: f64) -> Result<f64> {
    if !(r > profile.r0) {
        return Err(Error::Domain(format!("radius {r} must exceed the core radius {}", profile.r0)));
    }
    let RadialProfile { theta, r0, exponents, dimension, lambda, .. } = *profile;
    let (p, q) = (exponents.p, exponents.q);
    let gamma = profile.gamma();
    let s = r - r0;
    let s_pow = s.powf(gamma * q);
    let bracket = (1.0 + gamma * q) + (dimension as f64 - 1.0) * s / r;
    Ok(lambda * theta.powf(q) * s_pow - (theta * gamma).powf(p - 1.0) * bracket * s_pow)
}

/// The strictly positive borderline solution `x -> exp((lambda/(p-1))^(1/p) x_axis)`
/// of `-Δ_p u + lambda u^(p-1) = 0`. `axis` is 1-based.
pub fn borderline_exponential(p: f64, lambda: f64, axis: usize) -> impl Fn(Point) -> f64 + Send + Sync + Clone {
    let rate = (lambda / (p - 1.0)).powf(1.0 / p);
    let k = axis.saturating_sub(1).min(1);
    move |x: Point| (rate * x[k]).exp()
}

/// Left side of the barrier condition,
/// `kappa1 c^(p-1-q) [gamma^(p-1) + gamma^(p-2)/c + 1]` with `gamma = p/(p-1-q)`.
pub fn barrier_lhs(p: f64, q: f64, kappa1: f64, c: f64) -> f64 {
    let gamma = p / (p - 1.0 - q);
    kappa1 * c.powf(p - 1.0 - q) * (gamma.powf(p - 1.0) + gamma.powf(p - 2.0) / c + 1.0)
}

/// Largest `c > 0` satisfying the barrier condition `barrier_lhs(c) <= lambda_minus`,
/// found by bisection. Requires `p > 2 + q`.
pub fn barrier_constant(p: f64, q: f64, kappa1: f64, lambda_minus: f64) -> Result<f64> {
    if !(p > 2.0 + q) {
        return Err(Error::Domain(format!("barrier constant needs p > 2 + q, got p={p}, q={q}")));
    }
    if q < 0.0 {
        return Err(Error::Domain(format!("q must be non-negative, got {q}")));
    }
    if !(kappa1 > 0.0 && lambda_minus > 0.0) {
        return Err(Error::Domain(format!(
            "kappa1 and lambda_minus must be positive, got {kappa1}, {lambda_minus}"
        )));
    }
    let lhs = |c: f64| barrier_lhs(p, q, kappa1, c);
    let mut hi = 1.0;
    while lhs(hi) <= lambda_minus {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) <= lambda_minus {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Radial dead-core solution with core radius `r0 > 0` for constant `lambda`,
/// unit weight and the power law, computed by shooting outward from the core.
///
/// Integrates `(r^(N-1) |u'|^(p-2) u')' = lambda r^(N-1) u^q` in the variable
/// `ln(r - r0)` with classical RK4, starting from the one-dimensional profile
/// a tiny distance past `r0`. With `r0 = 0` the exact power `theta r^gamma`
/// is used instead.
#[derive(Debug, Clone)]
pub struct RadialShooting {
    r0: f64,
    theta_1d: f64,
    theta_n: f64,
    gamma: f64,
    tau0: f64,
    dtau: f64,
    // (r, u, u')
    table: Vec<(f64, f64, f64)>,
}

impl RadialShooting {
    const STEPS: usize = 6000;

    pub fn new(dimension: usize, exponents: Exponents, lambda: f64, r0: f64, r_max: f64) -> Result<Self> {
        let gamma = exponents.gamma()?;
        let (p, q) = (exponents.p, exponents.q);
        let theta_1d = theta_constant(1, p, q, lambda)?;
        let theta_n = theta_constant(dimension, p, q, lambda)?;
        if r0 < 0.0 {
            return Err(Error::Domain(format!("core radius must be non-negative, got {r0}")));
        }
        if r0 == 0.0 || r_max <= r0 {
            return Ok(Self { r0, theta_1d, theta_n, gamma, tau0: 0.0, dtau: 0.0, table: Vec::new() });
        }
        let s0 = 1e-7 * r0.min(r_max - r0);
        let tau0 = s0.ln();
        let tau1 = (r_max - r0).ln();
        let dtau = (tau1 - tau0) / Self::STEPS as f64;
        let nm1 = dimension as f64 - 1.0;
        let phi_inv = |z: f64| z.signum() * z.abs().powf(1.0 / (p - 1.0));
        let absorb = |u: f64| if u <= 0.0 { 0.0 } else if q == 0.0 { 1.0 } else { u.powf(q) };
        let rhs = |tau: f64, u: f64, w: f64| -> (f64, f64) {
            let s = tau.exp();
            let r = r0 + s;
            let rn = r.powf(nm1);
            (s * phi_inv(w / rn), s * lambda * rn * absorb(u))
        };
        let du0 = theta_1d * gamma * s0.powf(gamma - 1.0);
        let mut u = theta_1d * s0.powf(gamma);
        let mut w = (r0 + s0).powf(nm1) * du0.powf(p - 1.0);
        let mut table = Vec::with_capacity(Self::STEPS + 1);
        table.push((r0 + s0, u, du0));
        for k in 0..Self::STEPS {
            let t = tau0 + k as f64 * dtau;
            let (a1, b1) = rhs(t, u, w);
            let (a2, b2) = rhs(t + 0.5 * dtau, u + 0.5 * dtau * a1, w + 0.5 * dtau * b1);
            let (a3, b3) = rhs(t + 0.5 * dtau, u + 0.5 * dtau * a2, w + 0.5 * dtau * b2);
            let (a4, b4) = rhs(t + dtau, u + dtau * a3, w + dtau * b3);
            u += dtau / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            w += dtau / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            let r = r0 + (t + dtau).exp();
            table.push((r, u, phi_inv(w / r.powf(nm1))));
        }
        Ok(Self { r0, theta_1d, theta_n, gamma, tau0, dtau, table })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Profile value at radius `r`.
    pub fn eval(&self, r: f64) -> f64 {
        if self.r0 == 0.0 {
            return self.theta_n * r.max(0.0).powf(self.gamma);
        }
        let s = r - self.r0;
        if s <= 0.0 {
            return 0.0;
        }
        let first = self.table[0].0;
        if r <= first || self.table.is_empty() {
            return self.theta_1d * s.powf(self.gamma);
        }
        let pos = ((s.ln() - self.tau0) / self.dtau).floor();
        let k = (pos.max(0.0) as usize).min(self.table.len() - 2);
        let (ra, ua, da) = self.table[k];
        let (rb, ub, db) = self.table[k + 1];
        let len = rb - ra;
        let t = ((r - ra) / len).clamp(0.0, if k + 2 == self.table.len() { f64::INFINITY } else { 1.0 });
        // cubic Hermite
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * ua
            + (t3 - 2.0 * t2 + t) * len * da
            + (-2.0 * t3 + 3.0 * t2) * ub
            + (t3 - t2) * len * db
    }
}
