use deadcore::prelude::*;
use deadcore::solver::{InitialGuess, Solution};
use proptest::prelude::*;

fn radial_1d(p: f64, q: f64, lambda: f64, r0: f64) -> Problem {
    Problem::power_law(
        Exponents::standard(p, q).unwrap(),
        Domain::Interval { lo: -1.0, hi: 1.0 },
        lambda,
        BoundaryData::RadialPower { center: [0.0, 0.0], theta: None, r0, gamma: None },
    )
}

fn constant_1d(g: f64) -> Problem {
    Problem::power_law(
        Exponents::standard(2.0, 0.0).unwrap(),
        Domain::Interval { lo: -1.0, hi: 1.0 },
        2.0,
        BoundaryData::Constant { value: g },
    )
}

fn run(pb: &Problem, h: f64) -> Solution {
    let sol = solve(pb, h, &SolveOptions::default()).unwrap();
    assert!(sol.converged, "{} sweeps, residual {}", sol.iterations, sol.kkt_residual);
    sol
}

fn sup_error(sol: &Solution, exact: impl Fn(Point) -> f64) -> f64 {
    sol.field.active().map(|i| (sol.field.values[i] - exact(sol.grid().point(i))).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_data_gives_zero() {
    let sol = run(&constant_1d(0.0), 1.0 / 32.0);
    assert!(sol.field.values.iter().all(|&v| v == 0.0));
    assert_eq!(sol.energy, 0.0);
    let mu = kkt_measure(&sol).unwrap();
    assert_eq!(mu.total_mass, 0.0);
    assert!(mu.mu.iter().all(|&m| m == 0.0));
}

#[test]
fn quadratic_profile_in_one_dimension() {
    // g(±1) = 0.25 is the trace of (|x| - 1/2)_+^2
    let sol = run(&constant_1d(0.25), 1.0 / 512.0);
    let h = sol.h();
    let err = sup_error(&sol, |x| (x[0].abs() - 0.5).max(0.0).powi(2));
    assert!(err <= 5e-3, "{err}");
    let regions = extract_regions(&sol, Threshold::Auto).unwrap();
    let g = sol.grid();
    for &f in regions.fb_nodes.iter().filter(|&&f| regions.class[f] == Region::DeadCore) {
        assert!((g.point(f)[0].abs() - 0.5).abs() <= 2.0 * h);
    }
}

#[test]
fn maximum_bound() {
    for pb in [radial_1d(2.0, 0.5, 12.0, 0.3), radial_1d(3.0, 1.0, 36.0, 0.0), constant_1d(0.7)] {
        let sol = run(&pb, 1.0 / 64.0);
        let g = sol.grid();
        let g_max = (0..g.len())
            .filter(|&i| g.class(i) == NodeClass::Dirichlet)
            .map(|i| sol.field.values[i])
            .fold(0.0, f64::max);
        assert!(sol.field.max() <= g_max + 1e-12);
    }
}

#[test]
fn energy_never_increases() {
    let sol = run(&radial_1d(3.0, 1.0, 36.0, 0.4), 1.0 / 128.0);
    assert!(sol.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
}

#[test]
fn initial_guess_does_not_matter() {
    let pb = radial_1d(2.0, 0.5, 12.0, 0.4);
    let tol = 1e-9;
    let a = solve(&pb, 1.0 / 64.0, &SolveOptions::with_tol(tol)).unwrap();
    let b = solve(&pb, 1.0 / 64.0, &SolveOptions { initial: InitialGuess::Zero, ..SolveOptions::with_tol(tol) })
        .unwrap();
    assert!(a.converged && b.converged);
    let gap = a.field.values.iter().zip(&b.field.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 10.0 * tol, "{gap}");
}

#[test]
fn two_dimensional_origin_profile() {
    let pb = Problem::power_law(
        Exponents::standard(3.0, 1.0).unwrap(),
        Domain::Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
        45.0,
        BoundaryData::RadialPower { center: [0.0, 0.0], theta: None, r0: 0.0, gamma: None },
    );
    let exact = pb.exact_solution().unwrap();
    let coarse = sup_error(&run(&pb, 1.0 / 8.0), &*exact);
    let fine = sup_error(&run(&pb, 1.0 / 16.0), &*exact);
    assert!(fine < coarse && fine < 2e-2, "{coarse} -> {fine}");
}

#[test]
fn comparison_examples() {
    let h = 1.0 / 128.0;
    let low = run(&constant_1d(0.16), h);
    let high = run(&constant_1d(0.25), h);
    let same = run(&constant_1d(0.25), h);
    assert!(comparison_check(&high, &same, 1e-12).unwrap().is_empty());
    let rep = comparison_check(&low, &high, 1e-9).unwrap();
    assert!(rep.is_empty() && rep.boundary_ordered);
    // dead core of the larger solution sits inside that of the smaller one
    let (rl, rh) = (extract_regions(&low, Threshold::Auto).unwrap(), extract_regions(&high, Threshold::Auto).unwrap());
    for i in 0..rh.class.len() {
        if rh.class[i] == Region::DeadCore {
            assert_eq!(rl.class[i], Region::DeadCore);
        }
    }
    let swapped = comparison_check(&high, &low, 1e-9).unwrap();
    assert!(!swapped.is_empty() && !swapped.boundary_ordered);
    for (i, _, a, b) in &swapped.violations {
        assert!(a > &(b + 1e-9));
        assert_eq!(high.field.values[*i], *a);
    }
}

#[test]
fn comparison_needs_matching_grids() {
    let a = run(&constant_1d(0.25), 1.0 / 16.0);
    let b = run(&constant_1d(0.25), 1.0 / 32.0);
    assert!(comparison_check(&a, &b, 1e-9).is_err());
}

#[test]
fn rescaling_an_exact_profile_is_scale_free() {
    let pb = radial_1d(2.0, 0.0, 2.0, 0.0);
    let sol = run(&pb, 1.0 / 256.0);
    let v1 = rescale_solution(&sol, [0.0, 0.0], 0.5).unwrap();
    let v2 = rescale_solution(&sol, [0.0, 0.0], 0.25).unwrap();
    // Θ = 1, γ = 2: v_r(y) = y^2 for every r
    for v in [&v1, &v2] {
        for i in v.active() {
            let y = v.grid.point(i)[0];
            assert!((v.values[i] - y * y).abs() < 1e-6);
        }
    }
    assert!(rescale_solution(&sol, [0.8, 0.0], 0.5).is_err());
}

#[test]
fn rescaling_at_grid_scale_samples_neighbours() {
    let sol = run(&radial_1d(2.0, 0.0, 2.0, 0.5), 1.0 / 64.0);
    let h = sol.h();
    let x0 = [0.75, 0.0];
    let v = rescale_solution(&sol, x0, h).unwrap();
    let g = sol.grid();
    for i in v.active() {
        let y = v.grid.point(i)[0];
        let node = g.nearest_node([x0[0] + h * y, 0.0]);
        assert!((v.values[i] * h * h - sol.field.values[node]).abs() < 1e-12);
    }
}

#[test]
fn harnack_examples() {
    // constant solution without absorption
    let flat = Problem::power_law(
        Exponents::standard(2.0, 0.0).unwrap(),
        Domain::Interval { lo: -1.0, hi: 1.0 },
        0.0,
        BoundaryData::Constant { value: 0.3 },
    );
    let sol = run(&flat, 1.0 / 64.0);
    assert!((harnack_quotient(&sol, [0.0, 0.0], 0.25).unwrap() - 1.0).abs() < 1e-9);
    // inside the dead core
    let sol = run(&constant_1d(0.25), 1.0 / 128.0);
    assert_eq!(harnack_quotient(&sol, [0.0, 0.0], 0.1).unwrap(), 0.0);
    assert!(harnack_quotient(&sol, [0.8, 0.0], 0.25).is_err());
}

#[test]
fn harnack_quotient_is_scale_free_on_the_exact_profile() {
    let sol = run(&radial_1d(2.0, 0.0, 2.0, 0.0), 1.0 / 512.0);
    let q: Vec<f64> = (2..=5).map(|k| harnack_quotient(&sol, [0.0, 0.0], 0.5f64.powi(k)).unwrap()).collect();
    // S_{1/2} = 1/4, I_{1/2} = 0, forcing = λ S_1^0 = 2
    for v in &q {
        assert!((v - 0.125).abs() < 1e-6, "{q:?}");
    }
}

#[test]
fn measure_on_converged_oracle_solve() {
    let sol = run(&radial_1d(2.0, 0.0, 2.0, 0.5), 1.0 / 256.0);
    let m = kkt_measure(&sol).unwrap();
    assert!(m.min_value >= -10.0 * m.tolerance);
    assert!(m.support_distance <= 2.0 * sol.h());
    assert!(m.total_mass > 0.0);
}

#[test]
fn measure_detects_a_broken_node() {
    let mut sol = run(&radial_1d(2.0, 0.0, 2.0, 0.5), 1.0 / 64.0);
    let node = sol.grid().nearest_node([0.8, 0.0]);
    sol.field.values[node] *= 1.5;
    let m = kkt_measure(&sol).unwrap();
    assert!(m.min_value < -1.0, "{}", m.min_value);
}

#[test]
fn energy_examples() {
    let pb = Problem::power_law(
        Exponents::standard(2.0, 0.0).unwrap(),
        Domain::Interval { lo: 0.0, hi: 1.0 },
        0.0,
        BoundaryData::Constant { value: 0.0 },
    );
    let grid = std::sync::Arc::new(Grid::new(&pb.domain, 0.25).unwrap());
    let values = (0..grid.len()).map(|i| grid.point(i)[0]).collect();
    let field = GridField { grid, values };
    assert!((discrete_energy(&field, &pb).unwrap() - 0.5).abs() < 1e-14);
}

#[test]
fn interpolant_energy_approaches_the_integral() {
    // ∫_{-1}^{1} (u')^2/2 + 2u with u = (|x| - 1/2)_+^2 equals 2 (1/12 + 1/12) = 1/3
    let pb = constant_1d(0.25);
    let exact = 1.0 / 3.0;
    let errs: Vec<f64> = [64.0, 128.0, 256.0]
        .iter()
        .map(|&n| {
            let grid = std::sync::Arc::new(Grid::new(&pb.domain, 1.0 / n).unwrap());
            let values = (0..grid.len()).map(|i| (grid.point(i)[0].abs() - 0.5).max(0.0).powi(2)).collect();
            (discrete_energy(&GridField { grid, values }, &pb).unwrap() - exact).abs()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn invalid_problems_are_rejected() {
    let mut pb = constant_1d(0.25);
    pb.exponents = Exponents { p: 2.0, q: 1.5, borderline: false };
    assert!(solve(&pb, 0.1, &SolveOptions::default()).is_err());
    assert!(solve(&constant_1d(0.25), 0.1, &SolveOptions::with_tol(0.0)).is_err());
}

#[test]
fn tiny_nodal_roots_converge() {
    // the node next to the core wants u ~ 1e-177 here
    for (q, g) in [(0.0337, 0.335), (0.005, 0.7)] {
        let pb = Problem::power_law(
            Exponents::standard(2.0, q).unwrap(),
            Domain::Interval { lo: -1.0, hi: 1.0 },
            3.0,
            BoundaryData::Constant { value: g },
        );
        let sol = solve(&pb, 1.0 / 32.0, &SolveOptions::default()).unwrap();
        assert!(sol.converged, "q={q} g={g}: kkt {}", sol.kkt_residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nested_data_give_ordered_solutions(g1 in 0.0f64..0.4, dg in 0.0f64..0.3, q in 0.0f64..0.8) {
        let make = |g: f64| Problem::power_law(
            Exponents::standard(2.0, q).unwrap(),
            Domain::Interval { lo: -1.0, hi: 1.0 },
            3.0,
            BoundaryData::Constant { value: g },
        );
        let a = solve(&make(g1), 1.0 / 32.0, &SolveOptions::default()).unwrap();
        let b = solve(&make(g1 + dg), 1.0 / 32.0, &SolveOptions::default()).unwrap();
        prop_assert!(a.converged && b.converged);
        prop_assert!(comparison_check(&a, &b, 1e-7).unwrap().is_empty());
        prop_assert!(a.field.values.iter().all(|&v| v >= 0.0 && v <= g1 + 1e-12));
    }

    #[test]
    fn solution_satisfies_complementarity(p in 1.6f64..3.5, frac in 0.0f64..0.9, g in 0.05f64..1.0) {
        let q = frac * (p - 1.0);
        let pb = Problem::power_law(
            Exponents::standard(p, q).unwrap(),
            Domain::Interval { lo: 0.0, hi: 1.0 },
            5.0,
            BoundaryData::Constant { value: g },
        );
        let sol = solve(&pb, 1.0 / 32.0, &SolveOptions::default()).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.kkt_residual <= sol.tolerance_used);
        let m = kkt_measure(&sol).unwrap();
        prop_assert!(m.min_value >= -10.0 * sol.tolerance_used);
    }
}
