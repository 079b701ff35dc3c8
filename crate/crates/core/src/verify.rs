//! Property suite run by `fracinv verify`: randomized checks of the building
//! blocks plus the bound and consistency checks on manufactured runs.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::caputo::{discrete_caputo, l1_weights};
use crate::direct::{
    check_apriori_l2, check_stability_bound, march_direct, march_direct_exact, scheme_consistency,
    SolutionField,
};
use crate::error::Result;
use crate::experiments::map_ordered;
use crate::inverse::{identify, IdentifyOptions};
use crate::mesh::{
    build_graded_mesh, build_spatial_grid, rate_optimal_grading, GradedTimeMesh, SpatialGrid,
};
use crate::problems::{manufactured_problem, ObservationSeries, ProblemSpec};
use crate::tridiag::{dense_solve, thomas_solve, TridiagonalSystem};

pub const SUITE_SEED: u64 = 20_250_601;
pub const RANDOM_DRAWS: usize = 100;
pub const MAX_SYSTEM_DIM: usize = 200;
pub const CAPUTO_TOLERANCE: f64 = 1e-12;
pub const SOLVER_TOLERANCE: f64 = 1e-12;
pub const ENVELOPE_CONSTANT: f64 = 10.0;
pub const NONNEGATIVITY_FLOOR: f64 = -1e-12;
pub const SUITE_ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
pub const SUITE_SIZE: usize = 64;
pub const CONSISTENCY_SIZES: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

fn random_mesh(rng: &mut ChaCha8Rng) -> Result<(GradedTimeMesh, f64)> {
    let m = rng.random_range(1..=200usize);
    let r = rng.random_range(1.0..6.0);
    let final_time = rng.random_range(0.5..2.0);
    let alpha = rng.random_range(1..=9u32) as f64 / 10.0;
    Ok((build_graded_mesh(final_time, m, r)?, alpha))
}

/// `d_{k,1} <= ... <= d_{k,k} = tau_k^{-a}` at every level of random meshes.
pub fn check_l1_weights(draws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_identity: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..draws {
        let (mesh, alpha) = random_mesh(&mut rng)?;
        for k in 1..=mesh.intervals() {
            let row = l1_weights(&mesh, k, alpha)?;
            let w = row.as_slice();
            monotone &=
                w.iter().all(|&d| d > 0.0) && w.windows(2).all(|p| p[0] <= p[1] * (1.0 + 1e-14));
            worst_identity =
                worst_identity.max((row.terminal() * mesh.step(k).powf(alpha) - 1.0).abs());
        }
    }
    Ok((
        monotone && worst_identity <= 1e-13,
        format!(
            "{draws} meshes, monotone = {monotone}, max |d_kk tau_k^a - 1| = {worst_identity:.2e}"
        ),
    ))
}

/// The L1 formula reproduces `t^{1-a} / Gamma(2-a)` for `v = t`.
pub fn check_caputo_exactness(draws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let (mesh, alpha) = random_mesh(&mut rng)?;
        let history = mesh.levels();
        for k in 1..=mesh.intervals() {
            let row = l1_weights(&mesh, k, alpha)?;
            let got = discrete_caputo(&history[..=k], &row, alpha)?;
            let exact = mesh.level(k).powf(1.0 - alpha) / gamma(2.0 - alpha);
            worst = worst.max((got - exact).abs() / exact.abs());
        }
    }
    Ok((
        worst <= CAPUTO_TOLERANCE,
        format!("{draws} meshes, max relative error {worst:.2e} (tolerance {CAPUTO_TOLERANCE:e})"),
    ))
}

fn random_dominant_system(rng: &mut ChaCha8Rng, n: usize) -> Result<TridiagonalSystem> {
    let sub: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sup: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let diag = (0..n)
        .map(|i| {
            let off = if i > 0 { sub[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { sup[i].abs() } else { 0.0 };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * (off + rng.random_range(0.1..2.0))
        })
        .collect();
    let rhs = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
    TridiagonalSystem::new(sub, diag, sup, rhs)
}

/// Thomas against dense Gaussian elimination on random strictly dominant systems.
pub fn check_thomas_vs_dense(draws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let n = rng.random_range(2..=MAX_SYSTEM_DIM);
        let sys = random_dominant_system(&mut rng, n)?;
        let fast = thomas_solve(&sys)?;
        let reference = dense_solve(&sys.to_dense(), &sys.rhs)?;
        let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = fast
            .iter()
            .zip(&reference)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    Ok((
        worst <= SOLVER_TOLERANCE,
        format!("{draws} systems up to n = {MAX_SYSTEM_DIM}, max relative gap {worst:.2e}"),
    ))
}

struct SuiteRun {
    label: String,
    spec: ProblemSpec,
    grid: SpatialGrid,
    mesh: GradedTimeMesh,
    field: SolutionField,
}

fn manufactured_runs(threads: usize) -> Result<Vec<SuiteRun>> {
    let cases: Vec<(f64, bool)> = SUITE_ALPHAS
        .iter()
        .flat_map(|&a| [(a, false), (a, true)])
        .collect();
    map_ordered(&cases, threads, |&(alpha, inverse)| -> Result<SuiteRun> {
        let spec = manufactured_problem(alpha)?;
        let grid = build_spatial_grid(spec.length, SUITE_SIZE)?;
        let mesh = build_graded_mesh(spec.final_time, SUITE_SIZE, rate_optimal_grading(alpha))?;
        let field = if inverse {
            let obs = ObservationSeries::sample(&spec, &mesh);
            identify(&spec, &grid, &mesh, &obs, &IdentifyOptions::default())?.field
        } else {
            march_direct_exact(&spec, &grid, &mesh)?
        };
        Ok(SuiteRun {
            label: format!("{} a={alpha}", if inverse { "identify" } else { "direct" }),
            spec,
            grid,
            mesh,
            field,
        })
    })?
    .into_iter()
    .collect()
}

fn check_stability(runs: &[SuiteRun]) -> (bool, String) {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for run in runs {
        let report = check_stability_bound(&run.field, &run.spec, &run.grid, &run.mesh);
        ok &= report.holds();
        worst = worst.min(report.worst_slack());
    }
    (
        ok,
        format!("{} runs, smallest slack {worst:.3e}", runs.len()),
    )
}

fn check_apriori(runs: &[SuiteRun]) -> Result<(bool, String)> {
    let mut ok = true;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for run in runs {
        let report = check_apriori_l2(&run.field, &run.spec, &run.grid, &run.mesh)?;
        if !report.coefficient_nonnegative {
            continue;
        }
        checked += 1;
        ok &= report.holds();
        worst = worst.min(report.worst_slack());
    }
    Ok((
        ok && checked > 0,
        format!("{checked} runs with p >= 0, smallest slack {worst:.3e}"),
    ))
}

/// Truncation residual below `C (k^{-q} + h^2)` with `C = 10`, and both the
/// step-weighted residual and the final-level residual shrink under doubling.
pub fn check_consistency(alphas: &[f64], sizes: &[usize]) -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst_constant: f64 = 0.0;
    for &alpha in alphas {
        let spec = manufactured_problem(alpha)?;
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for &n in sizes {
            let grid = build_spatial_grid(spec.length, n)?;
            let mesh = build_graded_mesh(spec.final_time, n, rate_optimal_grading(alpha))?;
            let (report, weighted) = scheme_consistency(&spec, &grid, &mesh)?;
            let c = report.envelope_constant();
            worst_constant = worst_constant.max(c);
            ok &= c <= ENVELOPE_CONSTANT && weighted < prev.0 && report.final_residual() < prev.1;
            prev = (weighted, report.final_residual());
        }
    }
    Ok((
        ok,
        format!("alphas {alphas:?}, N = M in {sizes:?}, envelope constant {worst_constant:.3} (limit {ENVELOPE_CONSTANT})"),
    ))
}

/// Forward solves with random nonnegative `phi`, `f` and `p`.
pub fn check_nonnegativity(draws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lowest = f64::INFINITY;
    for _ in 0..draws {
        let alpha = rng.random_range(0.05..0.95);
        let amp = rng.random_range(0.0..3.0);
        let src = rng.random_range(0.0..5.0);
        let rate = rng.random_range(0.0..4.0);
        let p0 = rng.random_range(0.0..10.0);
        let spec = ProblemSpec {
            initial: Arc::new(move |x| amp * x * x * (1.0 - x)),
            source: Arc::new(move |x, t| {
                src * (1.0 + (rate * t).sin().abs()) * (3.0 * x).cos().abs()
            }),
            ..manufactured_problem(alpha)?
        };
        let grid = build_spatial_grid(1.0, 32)?;
        let mesh = build_graded_mesh(1.0, 32, rate_optimal_grading(alpha).min(6.0))?;
        let field = march_direct(&spec, &grid, &mesh, |t| p0 * (1.0 + t))?;
        lowest = lowest.min(field.min_value());
    }
    Ok((
        lowest >= NONNEGATIVITY_FLOOR,
        format!("{draws} random nonnegative problems, min u = {lowest:.3e}"),
    ))
}

/// Runs every property; never short-circuits.
pub fn run_property_suite(threads: usize) -> Vec<PropertyOutcome> {
    let mut out = vec![
        PropertyOutcome::from_result(
            "l1_weight_monotonicity",
            check_l1_weights(RANDOM_DRAWS, SUITE_SEED),
        ),
        PropertyOutcome::from_result(
            "caputo_exact_on_linear",
            check_caputo_exactness(RANDOM_DRAWS, SUITE_SEED + 1),
        ),
        PropertyOutcome::from_result(
            "thomas_vs_dense",
            check_thomas_vs_dense(RANDOM_DRAWS, SUITE_SEED + 2),
        ),
    ];
    match manufactured_runs(threads) {
        Ok(runs) => {
            let labels: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
            let (ok, detail) = check_stability(&runs);
            out.push(PropertyOutcome::new(
                "stability_bound",
                ok,
                format!("{detail} ({})", labels.join(", ")),
            ));
            out.push(PropertyOutcome::from_result(
                "apriori_l2_bound",
                check_apriori(&runs),
            ));
        }
        Err(e) => {
            for name in ["stability_bound", "apriori_l2_bound"] {
                out.push(PropertyOutcome::new(
                    name,
                    false,
                    format!("manufactured run failed: {e}"),
                ));
            }
        }
    }
    out.push(PropertyOutcome::from_result(
        "truncation_envelope",
        check_consistency(&SUITE_ALPHAS, &CONSISTENCY_SIZES),
    ));
    out.push(PropertyOutcome::from_result(
        "nonnegativity",
        check_nonnegativity(20, SUITE_SEED + 3),
    ));
    out
}
