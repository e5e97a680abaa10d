//! Exponent arithmetic: the sharp growth order and the Hölder class it implies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when deciding whether `q == p - 1`.
const BORDERLINE_EPS: f64 = 1e-12;

/// Diffusion order `p` and absorption order `q` of a dead-core problem.
///
/// Two modes exist. In standard mode `0 <= q < p - 1` and the growth exponent
/// `gamma = p / (p - 1 - q)` is finite. In borderline mode `q = p - 1`, there is
/// no dead core and `gamma` must not be read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub borderline: bool,
}

impl Exponents {
    /// Standard-mode exponents; fails unless `p > 1` and `0 <= q < p - 1`.
    pub fn standard(p: f64, q: f64) -> Result<Self> {
        let e = Self { p, q, borderline: false };
        e.check()?;
        Ok(e)
    }

    /// Borderline exponents `q = p - 1`.
    pub fn borderline(p: f64) -> Result<Self> {
        let e = Self { p, q: p - 1.0, borderline: true };
        e.check()?;
        Ok(e)
    }

    /// Checks the mode invariants. Returns a description of the first violation.
    pub fn check(&self) -> Result<()> {
        let Self { p, q, borderline } = *self;
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::Domain(format!("non-finite exponents p={p}, q={q}")));
        }
        if p <= 1.0 {
            return Err(Error::Domain(format!("p must exceed 1, got {p}")));
        }
        if q < 0.0 {
            return Err(Error::Domain(format!("q must be non-negative, got {q}")));
        }
        let on_line = is_borderline_pair(p, q);
        match (borderline, on_line) {
            (true, true) => Ok(()),
            (true, false) => Err(Error::Domain(format!(
                "exponent mode: borderline flag set but q={q} != p-1={}",
                p - 1.0
            ))),
            (false, true) => Err(Error::Domain(format!(
                "exponent mode: q = p-1 = {q} requires the borderline flag"
            ))),
            (false, false) if q > p - 1.0 => Err(Error::Domain(format!(
                "exponent mode: q={q} exceeds p-1={}",
                p - 1.0
            ))),
            (false, false) => Ok(()),
        }
    }

    /// Sharp growth exponent `p / (p - 1 - q)`; an error in borderline mode.
    pub fn gamma(&self) -> Result<f64> {
        if self.borderline {
            return Err(Error::Domain(
                "gamma is undefined for borderline exponents (q = p-1)".into(),
            ));
        }
        gamma_exponent(self.p, self.q)
    }

    /// `p - 1 - q`, the absorption gap.
    pub fn gap(&self) -> f64 {
        self.p - 1.0 - self.q
    }
}

fn is_borderline_pair(p: f64, q: f64) -> bool {
    (q - (p - 1.0)).abs() <= BORDERLINE_EPS * p.max(1.0)
}

fn check_standard(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("q must be non-negative, got {q}")));
    }
    if q >= p - 1.0 || is_borderline_pair(p, q) {
        return Err(Error::Domain(format!(
            "q={q} must be strictly below p-1={}",
            p - 1.0
        )));
    }
    Ok(())
}

/// The sharp regularity exponent `gamma = p / (p - 1 - q)`.
pub fn gamma_exponent(p: f64, q: f64) -> Result<f64> {
    check_standard(p, q)?;
    Ok(p / (p - 1.0 - q))
}

/// Hölder class of the growth exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderClass {
    /// Integer part of gamma.
    pub k: u32,
    /// Fractional part of gamma.
    pub beta: f64,
    /// Whether solutions are classical (twice differentiable) across the free boundary.
    pub classical_across_fb: bool,
}

/// Splits gamma into `k + beta` and reports whether `gamma > 2`.
pub fn holder_class(p: f64, q: f64) -> Result<HolderClass> {
    let gamma = gamma_exponent(p, q)?;
    let k = gamma.floor();
    Ok(HolderClass {
        k: k as u32,
        beta: gamma - k,
        classical_across_fb: gamma > 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_exponent(2.0, 0.0).unwrap(), 2.0);
        assert_eq!(gamma_exponent(3.0, 1.0).unwrap(), 3.0);
        assert!((gamma_exponent(2.0, 0.2).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_rejects_bad_pairs() {
        assert!(gamma_exponent(1.0, 0.0).is_err());
        assert!(gamma_exponent(0.5, 0.0).is_err());
        assert!(gamma_exponent(2.0, 1.0).is_err());
        assert!(gamma_exponent(2.0, 1.5).is_err());
        assert!(gamma_exponent(2.0, -0.1).is_err());
    }

    #[test]
    fn holder_examples() {
        let c = holder_class(2.0, 0.2).unwrap();
        assert_eq!(c.k, 2);
        assert!((c.beta - 0.5).abs() < 1e-12);
        assert!(c.classical_across_fb);

        let c = holder_class(3.0, 1.0).unwrap();
        assert_eq!((c.k, c.beta, c.classical_across_fb), (3, 0.0, true));

        let c = holder_class(2.0, 0.0).unwrap();
        assert_eq!((c.k, c.beta, c.classical_across_fb), (2, 0.0, false));
    }

    #[test]
    fn borderline_mode_refuses_gamma() {
        let e = Exponents::borderline(2.0).unwrap();
        assert!(e.gamma().is_err());
        let unflagged = Exponents { p: 2.0, q: 1.0, borderline: false };
        assert!(unflagged.check().is_err());
        let wrong_flag = Exponents { p: 2.0, q: 0.5, borderline: true };
        assert!(wrong_flag.check().is_err());
    }

    proptest! {
        #[test]
        fn gamma_times_gap_is_p(p in 1.1f64..10.0, t in 0.0f64..1.0) {
            let q = t * (p - 1.0 - 1e-3);
            let g = gamma_exponent(p, q).unwrap();
            prop_assert!(((g * (p - 1.0 - q)) - p).abs() <= 1e-12 * p);
        }

        #[test]
        fn holder_parts_sum_to_gamma(p in 1.1f64..10.0, t in 0.0f64..1.0) {
            let q = t * (p - 1.0 - 1e-3);
            let g = gamma_exponent(p, q).unwrap();
            let c = holder_class(p, q).unwrap();
            prop_assert_eq!(c.k as f64 + c.beta, g);
            prop_assert_eq!(c.classical_across_fb, g > 2.0);
            if q > 0.0 || p >= 2.0 {
                prop_assert_eq!(c.classical_across_fb, q > 0f64.max((p - 2.0) / 2.0));
            }
        }
    }
}
