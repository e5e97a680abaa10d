//! Recomputes the frozen stability constant `C_STAB`.
//!
//! Family: p = 2, q = 0, λ = 2 on [-1, 1] (Θ = 1, γ = 2). The pair for a
//! given σ has dead cores [-(1 - σ/2), 1 - σ/2] and [-(1 - σ), 1 - σ], so the
//! sup-norm gap is 3σ²/4 and the cores differ by σ.

use deadcore::geometry::deadcore_symdiff_with;
use deadcore::prelude::*;

fn solve_core(r0: f64, h: f64) -> Solution {
    let problem = Problem::power_law(
        Exponents::standard(2.0, 0.0).unwrap(),
        Domain::Interval { lo: -1.0, hi: 1.0 },
        2.0,
        BoundaryData::Constant { value: (1.0 - r0) * (1.0 - r0) },
    );
    solve(&problem, h, &SolveOptions::default()).unwrap()
}

fn main() {
    let h = 1.0 / 512.0;
    let mut worst: f64 = 0.0;
    for sigma in [0.2, 0.1, 0.05] {
        let a = solve_core(1.0 - sigma / 2.0, h);
        let b = solve_core(1.0 - sigma, h);
        let s = deadcore_symdiff_with(&a, &b, sigma, f64::INFINITY).unwrap();
        println!("sigma={sigma} measure={:.6} ratio={:.6}", s.measure, s.measure / sigma);
        worst = worst.max(s.measure / sigma);
    }
    println!("c_stab = {}", 4.0 * worst);
}
