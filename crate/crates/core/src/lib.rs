//! Dead-core solutions of `div(a |∇u|^{p-2} ∇u) = λ f(u)` with strong absorption.
//!
//! The crate has three layers:
//!
//! * [`problem`], [`exponents`] and [`oracle`] describe a problem and the
//!   closed-form radial solutions used to check it;
//! * [`grid`] and [`solver`] minimize the discrete energy over non-negative
//!   fields;
//! * [`geometry`] extracts the dead core and free boundary and measures them.
//!
//! ```
//! use deadcore::prelude::*;
//!
//! // p = 2, q = 0, λ = 2 on [-1, 1]: the dead core is [-1/2, 1/2].
//! let problem = Problem::power_law(
//!     Exponents::standard(2.0, 0.0).unwrap(),
//!     Domain::Interval { lo: -1.0, hi: 1.0 },
//!     2.0,
//!     BoundaryData::Constant { value: 0.25 },
//! );
//! let sol = solve(&problem, 1.0 / 64.0, &SolveOptions::default()).unwrap();
//! assert!(sol.converged);
//! let regions = extract_regions(&sol, Threshold::Auto).unwrap();
//! assert_eq!(regions.fb_nodes.len(), 4);
//! ```

pub mod error;
pub mod exponents;
pub mod geometry;
pub mod grid;
pub mod oracle;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::exponents::{gamma_exponent, holder_class, Exponents, HolderClass};
    pub use crate::geometry::{
        boxcount_fb_measure, deadcore_symdiff, density_fraction, extract_regions, fit_gradient_exponent,
        fit_growth_exponent, level_set_measure, nondegeneracy_scan, porosity_estimate, FitReport, Region, RegionMap,
        Threshold,
    };
    pub use crate::grid::{ball_extrema, Grid, GridField, NodeClass};
    pub use crate::oracle::{
        analytic_residual, barrier_constant, borderline_exponential, radial_power, theta_constant, RadialProfile,
        RadialShooting,
    };
    pub use crate::problem::{
        validate_problem, AbsorptionLaw, BoundaryData, Coefficient, Domain, Point, Problem, ScalarField,
    };
    pub use crate::solver::{
        comparison_check, discrete_energy, harnack_quotient, kkt_measure, rescale_solution, solve, InitialGuess,
        Relaxation, Solution, SolveOptions,
    };
}

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    pub mod problems {}
    #[doc = include_str!("../../../book/src/solver.md")]
    pub mod solver {}
    #[doc = include_str!("../../../book/src/free-boundary.md")]
    pub mod free_boundary {}
    #[doc = include_str!("../../../book/src/measurements.md")]
    pub mod measurements {}
}
