//! Experiment execution.

use std::time::Instant;

use deadcore::geometry::{fit_tolerance, least_squares, C_STAB};
use deadcore::grid::NodeClass;
use deadcore::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::plot::Series;
use crate::report::{emit_report, num, Check, EmitError, Formats, GridSize, Plot, Provenance, RunReport, Table, WallTime};
use crate::spec::{ExperimentSpec, Kind, OracleSpec, SpecError, SweepSpec};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DEADCORE_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("cannot write report: {0}")]
    Emit(#[from] EmitError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Runs the experiment and writes its report files into `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport, RunError> {
    let mut report = execute(spec)?;
    let formats = Formats { svg: spec.plots, ..Formats::default() };
    report.files = emit_report(&report, &spec.output_dir, formats)?;
    Ok(report)
}

/// Runs the experiment without touching the file system.
pub fn execute(spec: &ExperimentSpec) -> Result<RunReport, RunError> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    let mut report = RunReport {
        kind: spec.kind,
        seed: spec.seed,
        tables: Vec::new(),
        checks: Vec::new(),
        wall_times: Vec::new(),
        provenance: Provenance {
            config: spec.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            grid_sizes: Vec::new(),
        },
        plots: Vec::new(),
        files: Vec::new(),
    };
    pool.install(|| match spec.kind {
        Kind::Solve => run_solve(spec, &mut report),
        Kind::OracleCheck => run_oracle(spec, &mut report),
        Kind::ExponentSweep => run_sweep(spec, &mut report, false),
        Kind::FullReport => {
            run_solve(spec, &mut report);
            run_sweep(spec, &mut report, true);
        }
        Kind::Liouville => run_liouville(spec, &mut report),
        Kind::Borderline => run_borderline(spec, &mut report),
        Kind::Stability => run_stability(spec, &mut report),
    });
    Ok(report)
}

fn tag(label: &str, h: f64) -> String {
    format!("[{label},h={}]", num(h))
}

/// Dead-core threshold used by the runner: automatic in standard mode, 1e-10 in borderline mode.
pub fn regions_of(sol: &Solution) -> deadcore::Result<RegionMap> {
    let t = if sol.problem.exponents.borderline { Threshold::Explicit(1e-10) } else { Threshold::Auto };
    extract_regions(sol, t)
}

struct Solved {
    label: String,
    h: f64,
    outcome: deadcore::Result<Solution>,
    seconds: f64,
}

/// Solves every (case, spacing) pair in parallel; results keep the input order.
fn solve_all(tasks: Vec<(String, Problem, f64)>, opts: &SolveOptions) -> Vec<(Problem, Solved)> {
    tasks
        .into_par_iter()
        .map(|(label, pb, h)| {
            let t = Instant::now();
            let outcome = solve(&pb, h, opts);
            let seconds = t.elapsed().as_secs_f64();
            (pb, Solved { label, h, outcome, seconds })
        })
        .collect()
}

fn record(report: &mut RunReport, s: &Solved) {
    report.wall_times.push(WallTime { label: format!("solve{}", tag(&s.label, s.h)), seconds: s.seconds });
    if let Ok(sol) = &s.outcome {
        report.provenance.grid_sizes.push(GridSize {
            label: s.label.clone(),
            h: s.h,
            nodes: sol.grid().shape(),
        });
    }
}

fn convergence_check(s: &Solved) -> Check {
    match &s.outcome {
        Ok(sol) => Check::holds(
            format!("converged{}", tag(&s.label, s.h)),
            sol.converged,
            format!("{} sweeps, KKT residual {}", sol.iterations, num(sol.kkt_residual)),
        ),
        Err(e) => Check::holds(format!("converged{}", tag(&s.label, s.h)), false, e.to_string()),
    }
}

fn tasks(spec: &ExperimentSpec) -> Vec<(String, Problem, f64)> {
    let mut out = Vec::new();
    for (label, pb) in spec.case_problems() {
        for h in spec.spacings() {
            out.push((label.clone(), pb.clone(), h));
        }
    }
    out
}

fn run_solve(spec: &ExperimentSpec, report: &mut RunReport) {
    let mut table = Table::new(
        "solve",
        &[
            "case", "h", "nodes", "iterations", "converged", "energy", "kkt_residual", "u_max", "u_min",
            "dead_nodes", "fb_nodes", "trivial",
        ],
    );
    for (_, s) in solve_all(tasks(spec), &spec.solve_options()) {
        record(report, &s);
        report.checks.push(convergence_check(&s));
        let Ok(sol) = &s.outcome else { continue };
        let (dead, fb) = match regions_of(sol) {
            Ok(r) => (r.dead_count().to_string(), r.fb_nodes.len().to_string()),
            Err(_) => ("n/a".into(), "n/a".into()),
        };
        let trivial = sol.field.values.iter().all(|&v| v == 0.0);
        let interior = (0..sol.grid().len()).filter(|&i| sol.grid().class(i) == NodeClass::Interior).count();
        table.push(vec![
            s.label.clone(),
            num(s.h),
            interior.to_string(),
            sol.iterations.to_string(),
            sol.converged.to_string(),
            num(sol.energy),
            num(sol.kkt_residual),
            num(sol.field.max()),
            num(sol.field.min()),
            dead,
            fb,
            trivial.to_string(),
        ]);
        if trivial {
            report.checks.push(Check::holds(
                format!("trivial_solution{}", tag(&s.label, s.h)),
                true,
                "solution vanishes identically",
            ));
        }
    }
    report.tables.push(table);
}

/// Radial profile of a problem whose boundary data are radial and whose
/// model has unit weight, power absorption and constant lambda.
pub fn profile_for(pb: &Problem) -> Option<(RadialProfile, Point)> {
    if pb.weight.field.as_constant() != Some(1.0) || pb.absorption != AbsorptionLaw::Power || pb.exponents.borderline {
        return None;
    }
    let lambda = pb.constant_lambda()?;
    let (center, r0) = match pb.boundary {
        BoundaryData::RadialPower { center, r0, theta: None, gamma: None } => (center, r0),
        BoundaryData::RadialDeadCore { center, r0 } => (center, r0),
        _ => return None,
    };
    RadialProfile::new(pb.dimension(), pb.exponents, lambda, r0).ok().map(|p| (p, center))
}

/// Centre and core radius of radial boundary data.
fn radial_core(pb: &Problem) -> Option<(Point, f64)> {
    match pb.boundary {
        BoundaryData::RadialPower { center, r0, .. } | BoundaryData::RadialDeadCore { center, r0 } => Some((center, r0)),
        _ => None,
    }
}

fn case_seed(seed: u64, case: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((case as u64) << 20).wrapping_add(salt)
}

fn run_oracle(spec: &ExperimentSpec, report: &mut RunReport) {
    let cfg = spec.oracle.clone().unwrap_or_default();
    let mut residuals = Table::new("residuals", &["case", "exactness", "r", "residual", "relative"]);
    for (k, (label, pb)) in spec.case_problems().iter().enumerate() {
        residual_checks(label, pb, &cfg, case_seed(spec.seed, k, 1), &mut residuals, report);
    }
    report.tables.push(residuals);
    if !cfg.solve {
        return;
    }

    let mut table = Table::new("oracle", &["case", "h", "iterations", "converged", "sup_error", "endpoint_error"]);
    let mut errors: Vec<(String, Vec<[f64; 2]>)> = Vec::new();
    for (pb, s) in solve_all(tasks(spec), &spec.solve_options()) {
        record(report, &s);
        report.checks.push(convergence_check(&s));
        let Ok(sol) = &s.outcome else { continue };
        let sup_error = pb.exact_solution().map(|exact| {
            sol.field.active().map(|i| (sol.field.values[i] - exact(sol.grid().point(i))).abs()).fold(0.0, f64::max)
        });
        let endpoint = radial_core(&pb).filter(|&(_, r0)| r0 > 0.0).and_then(|(c, r0)| {
            let regions = regions_of(sol).ok()?;
            let g = sol.grid();
            regions
                .fb_nodes
                .iter()
                .filter(|&&i| regions.class[i] == Region::DeadCore)
                .map(|&i| (g.distance(g.point(i), c) - r0).abs())
                .reduce(f64::max)
        });
        if let Some(e) = endpoint {
            report.checks.push(Check::at_most(
                format!("endpoints{}", tag(&s.label, s.h)),
                e,
                2.0 * s.h,
                "distance of the dead-core boundary nodes from the exact free boundary",
            ));
        }
        table.push(vec![
            s.label.clone(),
            num(s.h),
            sol.iterations.to_string(),
            sol.converged.to_string(),
            sup_error.map_or_else(|| "n/a".into(), num),
            endpoint.map_or_else(|| "n/a".into(), num),
        ]);
        if let Some(e) = sup_error {
            match errors.iter_mut().find(|(l, _)| *l == s.label) {
                Some((_, v)) => v.push([s.h, e]),
                None => errors.push((s.label.clone(), vec![[s.h, e]])),
            }
        }
    }
    for (label, errs) in &errors {
        let finest = errs.last().expect("non-empty");
        report.checks.push(Check::at_most(
            format!("sup_error{}", tag(label, finest[0])),
            finest[1],
            cfg.error_tol,
            "sup-norm error against the exact solution at the finest grid",
        ));
        if errs.len() >= 2 {
            let coarse = errs[errs.len() - 2];
            let ratio = finest[1] / coarse[1];
            report.checks.push(Check::within(
                format!("error_halving[{label}]"),
                ratio,
                0.5,
                0.15,
                format!("error ratio between h={} and h={}", num(coarse[0]), num(finest[0])),
            ));
            let decreasing = errs.windows(2).all(|w| w[1][1] < w[0][1]);
            report.checks.push(Check::holds(
                format!("error_decreasing[{label}]"),
                decreasing,
                format!("errors {:?}", errs.iter().map(|e| num(e[1])).collect::<Vec<_>>()),
            ));
        }
    }
    if !errors.is_empty() {
        report.plots.push(Plot {
            name: "sup_error".into(),
            title: "sup-norm error against the exact solution".into(),
            x_label: "h".into(),
            y_label: "error".into(),
            series: errors.into_iter().map(|(label, points)| Series { label, points }).collect(),
        });
    }
    report.tables.push(table);
}

fn residual_checks(
    label: &str,
    pb: &Problem,
    cfg: &OracleSpec,
    seed: u64,
    table: &mut Table,
    report: &mut RunReport,
) {
    let Some((profile, _)) = profile_for(pb) else { return };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_abs: f64 = 0.0;
    let mut lowest: f64 = f64::INFINITY;
    let gamma = profile.gamma();
    let q = profile.exponents.q;
    for _ in 0..cfg.residual_samples {
        let r = profile.r0 + rand::Rng::random_range(&mut rng, 1e-3..1.0);
        let scale = profile.lambda * profile.theta.powf(q) * (r - profile.r0).powf(gamma * q);
        let (res, rel) = match analytic_residual(&profile, r) {
            Ok(v) => (v, v / scale),
            Err(_) => (f64::NAN, f64::NAN),
        };
        worst_abs = worst_abs.max(rel.abs());
        lowest = lowest.min(rel);
        table.push(vec![
            label.to_string(),
            format!("{:?}", profile.exactness).to_lowercase(),
            num(r),
            num(res),
            num(rel),
        ]);
    }
    let n = profile.dimension;
    match profile.exactness {
        deadcore::oracle::Exactness::Exact => report.checks.push(Check::at_most(
            format!("residual[N={n},{label}]"),
            worst_abs,
            1e-10,
            format!("largest relative residual over {} radii", cfg.residual_samples),
        )),
        deadcore::oracle::Exactness::Supersolution => report.checks.push(Check::at_least(
            format!("supersolution[N={n},{label}]"),
            lowest,
            -1e-10,
            format!("smallest relative residual over {} radii", cfg.residual_samples),
        )),
    }
}

/// Every diagnostic computed on one solution.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub label: String,
    pub h: f64,
    pub dim: usize,
    pub gamma: f64,
    pub theta_ref: Option<f64>,
    pub fb_nodes: usize,
    pub dead_nodes: usize,
    pub growth: Result<FitReport, String>,
    pub gradient: Result<FitReport, String>,
    pub c_min: Result<f64, String>,
    /// (max, median) of the Harnack quotient over free-boundary nodes and dyadic radii.
    pub harnack: Result<(f64, f64), String>,
    pub density_min: Result<f64, String>,
    pub porosity: Result<f64, String>,
    /// (min value, support distance, tolerance).
    pub measure: Result<(f64, f64, f64), String>,
    /// (estimate, expected, dimension fit).
    pub perimeter: Option<Result<(f64, f64, FitReport), String>>,
    /// (rho, measure / rho) for rho = 2^-k down to h.
    pub level_ratios: Vec<(f64, f64)>,
    /// Per-node fits at seeded sample nodes: (node, point, growth slope, gradient slope).
    pub node_fits: Vec<(usize, Point, Option<f64>, Option<f64>)>,
}

fn reference_theta(pb: &Problem) -> Option<f64> {
    if let BoundaryData::RadialPower { theta: Some(t), .. } = pb.boundary {
        return Some(t);
    }
    let l = pb.constant_lambda()?;
    theta_constant(pb.dimension(), pb.exponents.p, pb.exponents.q, l).ok()
}

/// Node closest to `target` among the free-boundary nodes.
pub fn nearest_fb_node(sol: &Solution, regions: &RegionMap, target: Point) -> Option<usize> {
    let g = sol.grid();
    regions.fb_nodes.iter().copied().min_by(|&a, &b| {
        g.distance(g.point(a), target).total_cmp(&g.distance(g.point(b), target)).then(a.cmp(&b))
    })
}

fn fb_target(pb: &Problem, sweep: &SweepSpec) -> Option<Point> {
    sweep.fb_point.or_else(|| radial_core(pb).map(|(c, r0)| [c[0] + r0, c[1]]))
}

fn err<T>(r: deadcore::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Runs every geometric diagnostic on a solution.
pub fn analyze(sol: &Solution, label: &str, sweep: &SweepSpec, seed: u64) -> Result<Analysis, String> {
    let g = sol.grid();
    let h = g.h();
    let dim = g.dim();
    let pb = &sol.problem;
    let gamma = err(pb.exponents.gamma())?;
    let regions = err(regions_of(sol))?;
    let target = fb_target(pb, sweep).ok_or("no free-boundary target point: set sweep.fb_point")?;
    let x0 = nearest_fb_node(sol, &regions, target);
    let growth = x0.ok_or_else(|| "free boundary is empty".to_string()).and_then(|x| err(fit_growth_exponent(sol, &regions, x)));
    let gradient =
        x0.ok_or_else(|| "free boundary is empty".to_string()).and_then(|x| err(fit_gradient_exponent(sol, &regions, x)));
    let c_min = err(nondegeneracy_scan(sol, &regions)).map(|(c, _)| c);
    let porosity = err(porosity_estimate(sol, &regions)).map(|(d, _)| d);
    let measure = err(kkt_measure(sol)).map(|m| (m.min_value, m.support_distance, m.tolerance));

    let mut quotients = Vec::new();
    let mut density: Option<f64> = None;
    let mut failure = None;
    for &f in &regions.fb_nodes {
        let x = g.point(f);
        let reach = g.domain().distance_to_boundary(x);
        let mut r = 4.0 * h;
        while 2.0 * r <= reach * (1.0 + 1e-12) {
            match harnack_quotient(sol, x, r) {
                Ok(v) => quotients.push(v),
                Err(e) => failure = Some(e.to_string()),
            }
            r *= 2.0;
        }
        let mut rho = 4.0 * h;
        while rho <= reach * (1.0 + 1e-12) {
            if let Ok(d) = density_fraction(sol, &regions, f, rho) {
                density = Some(density.map_or(d, |m| m.min(d)));
            }
            rho *= 2.0;
        }
    }
    let harnack = if let Some(e) = failure {
        Err(e)
    } else if quotients.is_empty() {
        Err("no admissible Harnack radius".to_string())
    } else {
        quotients.sort_by(f64::total_cmp);
        Ok((*quotients.last().unwrap(), quotients[quotients.len() / 2]))
    };
    let density_min = density.ok_or_else(|| "no admissible density radius".to_string());

    let perimeter = match (dim, radial_core(pb)) {
        (2, Some((c, r0))) if r0 > 0.0 => {
            let reach = g.domain().distance_to_boundary(c);
            let r = r0 + 0.5 * (reach - r0);
            Some(err(boxcount_fb_measure(sol, &regions, g.nearest_node(c), r))
                .map(|(est, fit)| (est, 2.0 * std::f64::consts::PI * r0, fit)))
        }
        _ => None,
    };

    let mut level_ratios = Vec::new();
    let mut rho: f64 = 0.5;
    while rho >= h {
        if let Ok(m) = level_set_measure(sol, &regions, rho) {
            level_ratios.push((rho, m / rho));
        }
        rho *= 0.5;
    }

    let mut node_fits = Vec::new();
    if sweep.fit_samples > 0 && !regions.fb_nodes.is_empty() {
        let n = regions.fb_nodes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = sample(&mut rng, n, sweep.fit_samples.min(n)).into_iter().collect();
        picks.sort_unstable();
        for k in picks {
            let node = regions.fb_nodes[k];
            let gs = fit_growth_exponent(sol, &regions, node).ok().map(|f| f.slope);
            let ds = fit_gradient_exponent(sol, &regions, node).ok().map(|f| f.slope);
            node_fits.push((node, g.point(node), gs, ds));
        }
    }

    Ok(Analysis {
        label: label.to_string(),
        h,
        dim,
        gamma,
        theta_ref: reference_theta(pb),
        fb_nodes: regions.fb_nodes.len(),
        dead_nodes: regions.dead_count(),
        growth,
        gradient,
        c_min,
        harnack,
        density_min,
        porosity,
        measure,
        perimeter,
        level_ratios,
        node_fits,
    })
}

/// Upper bound used for the level-set measure ratio.
pub const LEVEL_RATIO_BOUND: f64 = 10.0;

fn fmt_res<T>(r: &Result<T, String>, f: impl Fn(&T) -> String) -> String {
    r.as_ref().map_or_else(|_| "n/a".to_string(), f)
}

fn analysis_checks(a: &Analysis, tol: f64, report: &mut RunReport) {
    let t = tag(&a.label, a.h);
    let fit_tol = fit_tolerance(a.dim);
    let fail = |name: String, e: &String| Check::holds(name, false, e.clone());
    report.checks.push(match &a.growth {
        Ok(f) => Check::within(format!("growth_exponent{t}"), f.slope, a.gamma, fit_tol, "log-log slope of sup_B_r u"),
        Err(e) => fail(format!("growth_exponent{t}"), e),
    });
    if let Ok(f) = &a.growth {
        report.checks.push(Check::at_least(format!("growth_r2{t}"), f.r_squared, 0.98, "coefficient of determination"));
    }
    report.checks.push(match &a.gradient {
        Ok(f) => Check::within(
            format!("gradient_exponent{t}"),
            f.slope,
            a.gamma - 1.0,
            fit_tol,
            "log-log slope of max_B_r |grad u|",
        ),
        Err(e) => fail(format!("gradient_exponent{t}"), e),
    });
    if let Some(theta) = a.theta_ref {
        report.checks.push(match &a.c_min {
            Ok(c) => Check::at_least(
                format!("nondegeneracy{t}"),
                *c,
                0.5 * theta,
                format!("c_min against half the amplitude {}", num(theta)),
            ),
            Err(e) => fail(format!("nondegeneracy{t}"), e),
        });
    }
    report.checks.push(match &a.harnack {
        Ok((max, med)) => Check::at_most(
            format!("harnack{t}"),
            max / med,
            10.0,
            format!("max {} over median {}", num(*max), num(*med)),
        ),
        Err(e) => fail(format!("harnack{t}"), e),
    });
    let dens_bound = if a.dim == 1 { 0.25 } else { 0.15 };
    report.checks.push(match &a.density_min {
        Ok(d) => Check::at_least(format!("density{t}"), *d, dens_bound, "smallest positive-set fraction"),
        Err(e) => fail(format!("density{t}"), e),
    });
    report.checks.push(match &a.porosity {
        Ok(d) => Check::at_least(format!("porosity{t}"), *d, 0.2, "certified porosity constant"),
        Err(e) => fail(format!("porosity{t}"), e),
    });
    match &a.measure {
        Ok((min, support, _)) => {
            report.checks.push(Check::at_least(format!("measure_min{t}"), *min, -10.0 * tol, "smallest density of mu"));
            report.checks.push(Check::at_most(
                format!("measure_support{t}"),
                *support,
                2.0 * a.h,
                "distance from supp mu to the free boundary",
            ));
        }
        Err(e) => report.checks.push(fail(format!("measure{t}"), e)),
    }
    if let Some(p) = &a.perimeter {
        match p {
            Ok((est, expected, fit)) => {
                report.checks.push(Check::within(
                    format!("perimeter{t}"),
                    est / expected,
                    1.0,
                    0.25,
                    format!("estimate {} over circumference {}", num(*est), num(*expected)),
                ));
                report.checks.push(Check::within(
                    format!("box_dimension{t}"),
                    fit.slope,
                    fit.target_exponent,
                    fit.tolerance,
                    "box-counting slope",
                ));
            }
            Err(e) => report.checks.push(fail(format!("perimeter{t}"), e)),
        }
    }
    let worst = a.level_ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    report.checks.push(Check::at_most(
        format!("level_set{t}"),
        worst,
        LEVEL_RATIO_BOUND,
        format!("largest measure/rho over {} dyadic rho", a.level_ratios.len()),
    ));
}

fn run_sweep(spec: &ExperimentSpec, report: &mut RunReport, full: bool) {
    let sweep = spec.sweep.clone().unwrap_or_default();
    let solved = solve_all(tasks(spec), &spec.solve_options());
    let labels: Vec<String> = spec.case_problems().into_iter().map(|(l, _)| l).collect();
    let analyses: Vec<Result<Analysis, String>> = solved
        .par_iter()
        .enumerate()
        .map(|(k, (_, s))| match &s.outcome {
            Ok(sol) => analyze(sol, &s.label, &sweep, case_seed(spec.seed, k, 2)),
            Err(e) => Err(e.to_string()),
        })
        .collect();

    let mut table = Table::new(
        "sweep",
        &[
            "case", "p", "q", "h", "gamma", "growth_slope", "growth_r2", "growth_c", "gradient_slope", "target_gradient",
            "c_min", "harnack_max", "harnack_median", "density_min", "porosity", "mu_min", "mu_support", "perimeter",
            "box_dimension", "fb_nodes", "dead_nodes", "pass",
        ],
    );
    let mut fits = Table::new("fits", &["case", "h", "quantity", "radius", "value"]);
    let mut node_table = Table::new("fb_fits", &["case", "h", "node", "x", "y", "growth_slope", "gradient_slope"]);
    for ((pb, s), a) in solved.iter().zip(&analyses) {
        record(report, s);
        report.checks.push(convergence_check(s));
        let a = match a {
            Ok(a) => a,
            Err(e) => {
                if s.outcome.is_ok() {
                    report.checks.push(Check::holds(format!("analysis{}", tag(&s.label, s.h)), false, e.clone()));
                }
                continue;
            }
        };
        let before = report.checks.len();
        analysis_checks(a, spec.tolerance, report);
        let pass = report.checks[before..].iter().all(|c| c.pass);
        let slope = |f: &Result<FitReport, String>| fmt_res(f, |f| num(f.slope));
        table.push(vec![
            a.label.clone(),
            num(pb.exponents.p),
            num(pb.exponents.q),
            num(a.h),
            num(a.gamma),
            slope(&a.growth),
            fmt_res(&a.growth, |f| num(f.r_squared)),
            fmt_res(&a.growth, |f| num(f.intercept.exp())),
            slope(&a.gradient),
            num(a.gamma - 1.0),
            fmt_res(&a.c_min, |c| num(*c)),
            fmt_res(&a.harnack, |v| num(v.0)),
            fmt_res(&a.harnack, |v| num(v.1)),
            fmt_res(&a.density_min, |d| num(*d)),
            fmt_res(&a.porosity, |d| num(*d)),
            fmt_res(&a.measure, |m| num(m.0)),
            fmt_res(&a.measure, |m| num(m.1)),
            a.perimeter.as_ref().map_or("n/a".into(), |p| fmt_res(p, |p| num(p.0))),
            a.perimeter.as_ref().map_or("n/a".into(), |p| fmt_res(p, |p| num(p.2.slope))),
            a.fb_nodes.to_string(),
            a.dead_nodes.to_string(),
            pass.to_string(),
        ]);
        for (name, fit) in [("growth", &a.growth), ("gradient", &a.gradient)] {
            if let Ok(f) = fit {
                for (r, v) in f.radii.iter().zip(&f.values) {
                    fits.push(vec![a.label.clone(), num(a.h), name.into(), num(*r), num(*v)]);
                }
            }
        }
        if full {
            for (node, x, gs, ds) in &a.node_fits {
                let o = |v: &Option<f64>| v.map_or_else(|| "n/a".into(), num);
                node_table.push(vec![a.label.clone(), num(a.h), node.to_string(), num(x[0]), num(x[1]), o(gs), o(ds)]);
            }
        }
    }
    // refinement stability between consecutive resolutions of a case
    for label in &labels {
        let rows: Vec<&Analysis> = analyses.iter().flatten().filter(|a| &a.label == label).collect();
        for w in rows.windows(2) {
            let (c, f) = (w[0], w[1]);
            let pair = format!("[{label},h={}->{}]", num(c.h), num(f.h));
            if let (Ok(a), Ok(b)) = (&c.c_min, &f.c_min) {
                report.checks.push(Check::within(
                    format!("nondegeneracy_refinement{pair}"),
                    b / a,
                    1.0,
                    0.1,
                    "ratio of c_min under refinement",
                ));
            }
            if let (Ok(a), Ok(b)) = (&c.porosity, &f.porosity) {
                report.checks.push(Check::within(
                    format!("porosity_refinement{pair}"),
                    b / a,
                    1.0,
                    0.2,
                    "ratio of the porosity constant under refinement",
                ));
            }
        }
    }
    let finest: Vec<&Analysis> = labels
        .iter()
        .filter_map(|l| analyses.iter().flatten().rfind(|a| &a.label == l))
        .collect();
    for (name, title, pick) in [
        ("growth_fit", "sup of u over B_r at the free boundary", 0usize),
        ("gradient_fit", "max |grad u| over B_r at the free boundary", 1),
    ] {
        let series: Vec<Series> = finest
            .iter()
            .filter_map(|a| {
                let f = if pick == 0 { &a.growth } else { &a.gradient };
                f.as_ref().ok().map(|f| Series {
                    label: format!("{} (slope {:.3})", a.label, f.slope),
                    points: f.radii.iter().zip(&f.values).map(|(r, v)| [*r, *v]).collect(),
                })
            })
            .collect();
        if !series.is_empty() {
            report.plots.push(Plot {
                name: name.into(),
                title: title.into(),
                x_label: "r".into(),
                y_label: "value".into(),
                series,
            });
        }
    }
    report.tables.push(table);
    report.tables.push(fits);
    if full {
        report.tables.push(node_table);
    }
}

/// One row of a Liouville sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiouvilleRow {
    pub c: f64,
    pub s: f64,
    pub h: f64,
    /// Distance from the centre to the nearest positive interior node (`s` if none).
    pub rho_dc: f64,
    pub ratio: f64,
    /// `1 - c^((p-1-q)/p)`.
    pub lower_bound: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves on `B_s` with constant data `c Θ s^γ` for every `s` and reports the
/// relative dead-core radius. `c = 0` is accepted (zero data).
pub fn liouville_sweep(
    c: f64,
    template: &Problem,
    s_list: &[f64],
    h: f64,
    opts: &SolveOptions,
) -> deadcore::Result<Vec<LiouvilleRow>> {
    if !(0.0..=1.0).contains(&c) {
        return Err(deadcore::Error::Domain(format!("c must lie in [0, 1], got {c}")));
    }
    let lambda = template
        .constant_lambda()
        .ok_or_else(|| deadcore::Error::Domain("liouville sweep needs a constant lambda".into()))?;
    let e = template.exponents;
    let gamma = e.gamma()?;
    let theta = theta_constant(2, e.p, e.q, lambda)?;
    s_list
        .par_iter()
        .map(|&s| {
            if s < 8.0 * h * (1.0 - 1e-9) {
                return Err(deadcore::Error::Geometry(format!("resolution h={h} too coarse for the ball of radius {s}")));
            }
            let pb = Problem {
                domain: Domain::Disk { center: [0.0, 0.0], radius: s },
                boundary: BoundaryData::Constant { value: c * theta * s.powf(gamma) },
                ..template.clone()
            };
            let sol = solve(&pb, h, opts)?;
            let regions = extract_regions(&sol, Threshold::Auto)?;
            let g = sol.grid();
            let rho_dc = (0..g.len())
                .filter(|&i| regions.class[i] == Region::Positive)
                .map(|i| g.distance(g.point(i), [0.0, 0.0]))
                .fold(s, f64::min);
            Ok(LiouvilleRow {
                c,
                s,
                h,
                rho_dc,
                ratio: rho_dc / s,
                lower_bound: 1.0 - c.powf(e.gap() / e.p),
                converged: sol.converged,
                iterations: sol.iterations,
            })
        })
        .collect()
}

fn run_liouville(spec: &ExperimentSpec, report: &mut RunReport) {
    let l = spec.liouville.as_ref().expect("validated");
    let h = *spec.spacings().last().expect("validated");
    let mut table = Table::new("liouville", &["c", "s", "h", "rho_dc", "ratio", "lower_bound", "converged", "iterations"]);
    for c in l.c.values() {
        let t = Instant::now();
        let rows = liouville_sweep(c, &spec.problem, &l.s_list, h, &spec.solve_options());
        report.wall_times.push(WallTime { label: format!("liouville[c={}]", num(c)), seconds: t.elapsed().as_secs_f64() });
        let rows = match rows {
            Ok(r) => r,
            Err(e) => {
                report.checks.push(Check::holds(format!("liouville[c={}]", num(c)), false, e.to_string()));
                continue;
            }
        };
        for r in rows {
            let t = format!("[c={},s={},h={}]", num(c), num(r.s), num(h));
            report.checks.push(Check::holds(format!("converged{t}"), r.converged, format!("{} sweeps", r.iterations)));
            report.checks.push(Check::at_least(
                format!("liouville_lower{t}"),
                r.ratio,
                r.lower_bound - (0.05 + 2.0 * h / r.s),
                format!("rho_dc/s against 1 - c^((p-1-q)/p) = {} minus slack", num(r.lower_bound)),
            ));
            if c == 1.0 {
                report.checks.push(Check::at_most(
                    format!("liouville_critical{t}"),
                    r.ratio,
                    4.0 * h / r.s,
                    "critical amplitude leaves only a grid-size core",
                ));
            }
            table.push(vec![
                num(c),
                num(r.s),
                num(h),
                num(r.rho_dc),
                num(r.ratio),
                num(r.lower_bound),
                r.converged.to_string(),
                r.iterations.to_string(),
            ]);
        }
    }
    report.tables.push(table);
}

/// One row of a borderline run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderlineRow {
    pub h: f64,
    pub min_u: f64,
    /// Smallest value of the exact solution over the interior nodes.
    pub exact_min: f64,
    pub sup_error: f64,
    /// Interior nodes with `u <= 1e-10`.
    pub dead_nodes: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves a borderline problem and compares with its exact solution.
pub fn borderline_run(problem: &Problem, h: f64, opts: &SolveOptions) -> deadcore::Result<BorderlineRow> {
    if !problem.exponents.borderline {
        return Err(deadcore::Error::Domain("borderline run needs q = p - 1".into()));
    }
    let exact = problem
        .exact_solution()
        .ok_or_else(|| deadcore::Error::Domain("borderline run needs boundary data with a known solution".into()))?;
    let sol = solve(problem, h, opts)?;
    let g = sol.grid();
    let interior: Vec<usize> = (0..g.len()).filter(|&i| g.class(i) == NodeClass::Interior).collect();
    let min_u = interior.iter().map(|&i| sol.field.values[i]).fold(f64::INFINITY, f64::min);
    let exact_min = interior.iter().map(|&i| exact(g.point(i))).fold(f64::INFINITY, f64::min);
    let sup_error = sol.field.active().map(|i| (sol.field.values[i] - exact(g.point(i))).abs()).fold(0.0, f64::max);
    let dead_nodes = interior.iter().filter(|&&i| sol.field.values[i] <= 1e-10).count();
    Ok(BorderlineRow { h, min_u, exact_min, sup_error, dead_nodes, converged: sol.converged, iterations: sol.iterations })
}

fn run_borderline(spec: &ExperimentSpec, report: &mut RunReport) {
    let mut table = Table::new(
        "borderline",
        &["case", "h", "min_u", "exact_min", "sup_error", "dead_nodes", "converged", "iterations"],
    );
    let opts = spec.solve_options();
    let all = tasks(spec);
    let rows: Vec<(String, f64, deadcore::Result<BorderlineRow>, f64)> = all
        .into_par_iter()
        .map(|(label, pb, h)| {
            let t = Instant::now();
            let r = borderline_run(&pb, h, &opts);
            (label, h, r, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut errors: Vec<(String, Vec<[f64; 2]>)> = Vec::new();
    for (label, h, row, seconds) in rows {
        let t = tag(&label, h);
        report.wall_times.push(WallTime { label: format!("borderline{t}"), seconds });
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.checks.push(Check::holds(format!("borderline{t}"), false, e.to_string()));
                continue;
            }
        };
        report.checks.push(Check::holds(format!("converged{t}"), row.converged, format!("{} sweeps", row.iterations)));
        report.checks.push(Check::at_most(
            format!("dead_core_empty{t}"),
            row.dead_nodes as f64,
            0.0,
            "interior nodes with u <= 1e-10",
        ));
        report.checks.push(Check::at_least(
            format!("strict_positivity{t}"),
            row.min_u,
            0.9 * row.exact_min,
            "interior minimum against 0.9 times the exact minimum",
        ));
        table.push(vec![
            label.clone(),
            num(h),
            num(row.min_u),
            num(row.exact_min),
            num(row.sup_error),
            row.dead_nodes.to_string(),
            row.converged.to_string(),
            row.iterations.to_string(),
        ]);
        match errors.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push([h, row.sup_error]),
            None => errors.push((label, vec![[h, row.sup_error]])),
        }
    }
    for (label, errs) in &errors {
        if errs.len() >= 2 {
            let xs: Vec<f64> = errs.iter().map(|e| e[0].ln()).collect();
            let ys: Vec<f64> = errs.iter().map(|e| e[1].max(1e-300).ln()).collect();
            let (order, _, _) = least_squares(&xs, &ys);
            report.checks.push(Check::holds(
                format!("borderline_error_decreasing[{label}]"),
                errs.windows(2).all(|w| w[1][1] < w[0][1]),
                format!("observed order {order:.2}"),
            ));
        }
    }
    if !errors.is_empty() {
        report.plots.push(Plot {
            name: "borderline_error".into(),
            title: "borderline sup-norm error".into(),
            x_label: "h".into(),
            y_label: "error".into(),
            series: errors.into_iter().map(|(label, points)| Series { label, points }).collect(),
        });
    }
    report.tables.push(table);
}

/// Dead-core pair for the stability study: 1D problems on `[-1, 1]` whose
/// exact cores are `[-(1 - σ/2), 1 - σ/2]` and `[-(1 - σ), 1 - σ]`.
pub fn stability_pair(template: &Problem, sigma: f64) -> deadcore::Result<(Problem, Problem)> {
    let e = template.exponents;
    let lambda = template
        .constant_lambda()
        .ok_or_else(|| deadcore::Error::Domain("stability pair needs a constant lambda".into()))?;
    let theta = theta_constant(1, e.p, e.q, lambda)?;
    let gamma = e.gamma()?;
    let make = |r0: f64| Problem {
        domain: Domain::Interval { lo: -1.0, hi: 1.0 },
        boundary: BoundaryData::Constant { value: theta * (1.0 - r0).powf(gamma) },
        ..template.clone()
    };
    Ok((make(1.0 - 0.5 * sigma), make(1.0 - sigma)))
}

fn run_stability(spec: &ExperimentSpec, report: &mut RunReport) {
    let st = spec.stability.as_ref().expect("validated");
    let c_stab = st.c_stab.unwrap_or(C_STAB);
    let opts = spec.solve_options();
    let mut table = Table::new("stability", &["sigma", "h", "measure", "ratio", "sup_gap", "gap_bound", "pass"]);
    let jobs: Vec<(f64, f64)> =
        spec.spacings().iter().flat_map(|&h| st.sigmas.iter().map(move |&s| (h, s))).collect();
    let results: Vec<(f64, f64, deadcore::Result<deadcore::geometry::SymDiff>)> = jobs
        .into_par_iter()
        .map(|(h, sigma)| {
            let r = stability_pair(&spec.problem, sigma).and_then(|(a, b)| {
                let sa = solve(&a, h, &opts)?;
                let sb = solve(&b, h, &opts)?;
                deadcore::geometry::deadcore_symdiff_with(&sa, &sb, sigma, c_stab)
            });
            (h, sigma, r)
        })
        .collect();
    let gamma = spec.problem.exponents.gamma().unwrap_or(f64::NAN);
    for h in spec.spacings() {
        let mut measured = Vec::new();
        for (_, sigma, r) in results.iter().filter(|r| r.0 == h) {
            let t = format!("[sigma={},h={}]", num(*sigma), num(h));
            match r {
                Ok(d) => {
                    report.checks.push(Check::at_most(
                        format!("stability{t}"),
                        d.measure,
                        c_stab * sigma,
                        format!("symmetric difference against c_stab sigma, c_stab = {}", num(c_stab)),
                    ));
                    table.push(vec![
                        num(*sigma),
                        num(h),
                        num(d.measure),
                        num(d.measure / sigma),
                        num(d.sup_gap),
                        num(sigma.powf(gamma)),
                        d.pass.to_string(),
                    ]);
                    measured.push((*sigma, d.measure));
                }
                Err(e) => report.checks.push(Check::holds(format!("stability{t}"), false, e.to_string())),
            }
        }
        measured.sort_by(|a, b| a.0.total_cmp(&b.0));
        if measured.len() >= 2 {
            report.checks.push(Check::holds(
                format!("stability_monotone[h={}]", num(h)),
                measured.windows(2).all(|w| w[0].1 <= w[1].1),
                format!("measures {:?}", measured.iter().map(|m| num(m.1)).collect::<Vec<_>>()),
            ));
        }
    }
    report.tables.push(table);
}
