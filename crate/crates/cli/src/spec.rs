//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;

use deadcore::prelude::*;
use deadcore::problem::Violation;
use serde::{Deserialize, Serialize};

/// What an experiment computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve,
    OracleCheck,
    ExponentSweep,
    Liouville,
    Borderline,
    Stability,
    FullReport,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::OracleCheck => "oracle_check",
            Kind::ExponentSweep => "exponent_sweep",
            Kind::Liouville => "liouville",
            Kind::Borderline => "borderline",
            Kind::Stability => "stability",
            Kind::FullReport => "full_report",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Variation of the problem template. Unset fields keep the template's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryData>,
}

/// A single value or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleSpec {
    /// Fraction(s) of the critical amplitude, each in (0, 1].
    pub c: OneOrMany,
    /// Ball radii.
    pub s_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    pub sigmas: Vec<f64>,
    /// Stability constant; defaults to the frozen calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_stab: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
    /// Largest admissible sup-norm error at the finest resolution.
    #[serde(default = "default_error_tol")]
    pub error_tol: f64,
    /// Solve at every resolution; `false` checks the analytic residuals only.
    #[serde(default = "default_true")]
    pub solve: bool,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { residual_samples: default_residual_samples(), error_tol: default_error_tol(), solve: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Point near which the exponent fits are centred; defaults to
    /// `center + (r0, 0)` for radial boundary data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fb_point: Option<Point>,
    /// Free-boundary nodes sampled (seeded) for per-node fits in full reports.
    #[serde(default = "default_fit_samples")]
    pub fit_samples: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { fb_point: None, fit_samples: default_fit_samples() }
    }
}

fn default_residual_samples() -> usize {
    100
}

fn default_error_tol() -> f64 {
    5e-3
}

fn default_fit_samples() -> usize {
    8
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

/// One experiment, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub problem: Problem,
    /// Problem variations; empty means the template alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseSpec>,
    /// Grid resolutions in cells per unit length, strictly increasing.
    pub resolutions: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub plots: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liouville: Option<LiouvilleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot parse experiment spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid experiment spec:\n{}", list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

fn violation(field: &str, message: impl Into<String>) -> Violation {
    Violation { field: field.to_string(), message: message.into() }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Grid spacings, finest last.
    pub fn spacings(&self) -> Vec<f64> {
        self.resolutions.iter().map(|&n| 1.0 / n as f64).collect()
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.tolerance, max_iter: self.max_iter, ..SolveOptions::default() }
    }

    /// Labelled problems: one per case, or the template.
    pub fn case_problems(&self) -> Vec<(String, Problem)> {
        if self.cases.is_empty() {
            let e = self.problem.exponents;
            return vec![(case_label(e.p, e.q, self.problem.constant_lambda()), self.problem.clone())];
        }
        self.cases
            .iter()
            .map(|c| {
                let mut pb = self.problem.clone();
                pb.exponents = Exponents { p: c.p, q: c.q, borderline: self.problem.exponents.borderline };
                pb.lambda = Coefficient::constant(c.lambda);
                if let Some(d) = &c.domain {
                    pb.domain = d.clone();
                }
                if let Some(b) = &c.boundary {
                    pb.boundary = b.clone();
                }
                (case_label(c.p, c.q, Some(c.lambda)), pb)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let mut v = Vec::new();
        if self.resolutions.is_empty() {
            v.push(violation("resolutions", "at least one resolution is required"));
        }
        if self.resolutions.contains(&0) {
            v.push(violation("resolutions", "resolutions must be positive"));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            v.push(violation("resolutions", "resolutions must be strictly increasing"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            v.push(violation("tolerance", format!("must be positive, got {}", self.tolerance)));
        }
        for (label, pb) in self.case_problems() {
            for e in validate_problem(&pb) {
                v.push(violation(&format!("problem.{} [{label}]", e.field), e.message));
            }
        }
        let borderline = self.problem.exponents.borderline;
        match self.kind {
            Kind::Borderline if !borderline => v.push(violation(
                "problem.exponents",
                "borderline experiments need borderline exponents (q = p - 1)",
            )),
            Kind::OracleCheck | Kind::ExponentSweep | Kind::Liouville | Kind::Stability | Kind::FullReport
                if borderline =>
            {
                v.push(violation("problem.exponents", format!("{} needs standard exponents q < p - 1", self.kind)))
            }
            _ => {}
        }
        if matches!(self.kind, Kind::Liouville | Kind::Stability) && self.problem.constant_lambda().is_none() {
            v.push(violation("problem.lambda", "must be constant"));
        }
        if matches!(self.kind, Kind::Liouville | Kind::Stability) && self.problem.weight.field.as_constant() != Some(1.0)
        {
            v.push(violation("problem.weight", "must be the unit weight"));
        }
        match (&self.kind, &self.liouville) {
            (Kind::Liouville, None) => v.push(violation("liouville", "required for liouville experiments")),
            (Kind::Liouville, Some(l)) => {
                let cs = l.c.values();
                if cs.is_empty() || cs.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
                    v.push(violation("liouville.c", format!("every c must lie in (0, 1], got {cs:?}")));
                }
                if l.s_list.is_empty() || l.s_list.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    v.push(violation("liouville.s_list", "needs at least one positive radius"));
                }
                if self.problem.dimension() != 2 {
                    v.push(violation("problem.domain", "liouville experiments run on 2D disks"));
                }
            }
            _ => {}
        }
        match (&self.kind, &self.stability) {
            (Kind::Stability, None) => v.push(violation("stability", "required for stability experiments")),
            (Kind::Stability, Some(s)) => {
                if s.sigmas.is_empty() || s.sigmas.iter().any(|&x| !(x > 0.0 && x <= 0.5)) {
                    v.push(violation("stability.sigmas", "needs sigmas in (0, 0.5]"));
                }
                if s.c_stab.is_some_and(|c| !(c > 0.0)) {
                    v.push(violation("stability.c_stab", "must be positive"));
                }
            }
            _ => {}
        }
        if let Some(o) = &self.oracle {
            if o.residual_samples == 0 {
                v.push(violation("oracle.residual_samples", "must be positive"));
            }
            if !(o.error_tol > 0.0) {
                v.push(violation("oracle.error_tol", "must be positive"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SpecError::Invalid(v))
        }
    }
}

fn case_label(p: f64, q: f64, lambda: Option<f64>) -> String {
    match lambda {
        Some(l) => format!("p={p},q={q},lambda={l}"),
        None => format!("p={p},q={q}"),
    }
}
