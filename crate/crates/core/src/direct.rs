//! Fully implicit L1 / central-difference march for a known coefficient `p(t)`,
//! plus the runtime checks of the maximum-norm stability bound, the L2 a priori
//! estimate and the truncation residual of the scheme.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::caputo::{l1_weights, rl_integral, L1WeightRow};
use crate::error::{invalid, Result};
use crate::mesh::{GradedTimeMesh, SpatialGrid};
use crate::problems::ProblemSpec;
use crate::tridiag::{thomas_solve, TridiagonalSystem};

/// Nodal values `u_i^k` (one row per time level, boundary nodes included) and the
/// coefficient series `p^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub u: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    /// Levels whose system was assembled with a negative coefficient.
    pub negative_coefficient_levels: Vec<usize>,
}

impl SolutionField {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.u[k]
    }

    pub fn final_row(&self) -> &[f64] {
        &self.u[self.u.len() - 1]
    }

    /// Number of time levels `M + 1`.
    pub fn levels(&self) -> usize {
        self.u.len()
    }

    pub fn min_value(&self) -> f64 {
        self.u
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Assembles `A^k u^k = b^k` from an explicit weight row; `history` must hold rows `0..k`.
pub(crate) fn assemble_with_weights(
    weights: &L1WeightRow,
    coefficient: f64,
    history: &[Vec<f64>],
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<TridiagonalSystem> {
    let k = weights.level();
    if history.len() < k {
        return invalid(format!(
            "level {k} needs {k} history rows, got {}",
            history.len()
        ));
    }
    let n = grid.intervals();
    let h = grid.spacing();
    let inv_gamma = 1.0 / gamma(2.0 - spec.alpha);
    let d = weights.as_slice();
    let t = mesh.level(k);

    // b_i = [d_{k,1} u_i^0 + sum_{j=1}^{k-1} (d_{k,j+1} - d_{k,j}) u_i^j] / Gamma(2-a) + f_i^k
    let mut memory: Vec<f64> = history[0][1..n].iter().map(|u0| d[0] * u0).collect();
    for j in 1..k {
        let c = d[j] - d[j - 1];
        for (acc, u) in memory.iter_mut().zip(&history[j][1..n]) {
            *acc += c * u;
        }
    }
    let rhs = memory
        .iter()
        .zip(&grid.nodes()[1..n])
        .map(|(m, &x)| m * inv_gamma + (spec.source)(x, t))
        .collect();

    let off = -1.0 / (h * h);
    let diag = weights.terminal() * inv_gamma + 2.0 / (h * h) + coefficient;
    TridiagonalSystem::new(vec![off; n - 2], vec![diag; n - 1], vec![off; n - 2], rhs)
}

/// Tridiagonal system of level `k` with coefficient value `p_k`.
pub fn assemble_system(
    k: usize,
    p_k: f64,
    history: &[Vec<f64>],
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<TridiagonalSystem> {
    let weights = l1_weights(mesh, k, spec.alpha)?;
    assemble_with_weights(&weights, p_k, history, spec, grid, mesh)
}

/// Embeds interior values into a full row with zero boundary values.
pub(crate) fn with_boundary(interior: Vec<f64>) -> Vec<f64> {
    let mut row = Vec::with_capacity(interior.len() + 2);
    row.push(0.0);
    row.extend(interior);
    row.push(0.0);
    row
}

/// `phi(x_i)` with the boundary entries pinned to zero.
pub fn initial_row(spec: &ProblemSpec, grid: &SpatialGrid) -> Vec<f64> {
    let mut row = grid.sample(|x| (spec.initial)(x));
    let n = grid.intervals();
    row[0] = 0.0;
    row[n] = 0.0;
    row
}

/// Marches levels `1..=M` with the coefficient `p(t_k)` supplied by `coefficient`.
pub fn march_direct(
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
    coefficient: impl Fn(f64) -> f64,
) -> Result<SolutionField> {
    spec.validate()?;
    let m = mesh.intervals();
    let mut u = Vec::with_capacity(m + 1);
    u.push(initial_row(spec, grid));
    let mut p = Vec::with_capacity(m + 1);
    p.push(coefficient(0.0));
    let mut negative = Vec::new();
    for k in 1..=m {
        let p_k = coefficient(mesh.level(k));
        if p_k < 0.0 {
            log::warn!(
                "negative coefficient p = {p_k:e} at level {k}; dominance is not guaranteed"
            );
            negative.push(k);
        }
        let sys = assemble_system(k, p_k, &u, spec, grid, mesh)?;
        u.push(with_boundary(thomas_solve(&sys)?));
        p.push(p_k);
    }
    Ok(SolutionField {
        u,
        p,
        negative_coefficient_levels: negative,
    })
}

/// March with the problem's exact coefficient.
pub fn march_direct_exact(
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<SolutionField> {
    let p = spec.exact_p()?.clone();
    march_direct(spec, grid, mesh, |t| p(t))
}

/// One level of a bound check: `lhs <= rhs` with `slack = rhs - lhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCheck {
    pub level: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl LevelCheck {
    fn new(level: usize, lhs: f64, rhs: f64) -> Self {
        Self {
            level,
            lhs,
            rhs,
            holds: lhs <= rhs + 1e-12 * rhs.abs(),
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `T^a Gamma(1-a)` for the stability bound, `l^2 / (2 pi^2)` for the L2 estimate.
    pub constant: f64,
    pub levels: Vec<LevelCheck>,
    /// Every `p^k >= 0`, the hypothesis of both bounds.
    pub coefficient_nonnegative: bool,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.levels.iter().all(|c| c.holds)
    }

    pub fn worst_slack(&self) -> f64 {
        self.levels
            .iter()
            .map(LevelCheck::slack)
            .fold(f64::INFINITY, f64::min)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `||u^k||_inf <= ||phi||_inf + T^a Gamma(1-a) max_{1<=m<=k} ||f^m||_inf` at every level.
pub fn check_stability_bound(
    field: &SolutionField,
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> BoundReport {
    let alpha = spec.alpha;
    let constant = mesh.final_time().powf(alpha) * gamma(1.0 - alpha);
    let n = grid.intervals();
    let interior = &grid.nodes()[1..n];
    let phi_norm = max_abs(&field.u[0]);
    let mut source_max: f64 = 0.0;
    let levels = (1..field.levels())
        .map(|k| {
            let t = mesh.level(k);
            source_max = interior
                .iter()
                .fold(source_max, |m, &x| m.max((spec.source)(x, t).abs()));
            LevelCheck::new(k, max_abs(&field.u[k]), phi_norm + constant * source_max)
        })
        .collect();
    BoundReport {
        constant,
        levels,
        coefficient_nonnegative: field.p.iter().all(|&p| p >= 0.0),
    }
}

fn discrete_l2_squared(row: &[f64], h: f64) -> f64 {
    h * row.iter().map(|v| v * v).sum::<f64>()
}

/// `||u^k||^2 <= ||phi||^2 + l^2/(2 pi^2) D^{-a} ||f||^2 (t_k)` with h-weighted
/// discrete norms and the product-quadrature fractional integral.
pub fn check_apriori_l2(
    field: &SolutionField,
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<BoundReport> {
    let h = grid.spacing();
    let constant = grid.length().powi(2) / (2.0 * PI * PI);
    let source_norms: Vec<f64> = mesh
        .levels()
        .iter()
        .map(|&t| discrete_l2_squared(&grid.sample(|x| (spec.source)(x, t)), h))
        .collect();
    let integrated = rl_integral(&source_norms, mesh, spec.alpha)?;
    let phi_norm = discrete_l2_squared(&field.u[0], h);
    let levels = (1..field.levels())
        .map(|k| {
            LevelCheck::new(
                k,
                discrete_l2_squared(&field.u[k], h),
                phi_norm + constant * integrated[k],
            )
        })
        .collect();
    Ok(BoundReport {
        constant,
        levels,
        coefficient_nonnegative: field.p.iter().all(|&p| p >= 0.0),
    })
}

/// Residual of the discrete scheme evaluated on the exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// `||xi^k||_inf` for `k = 1..=M`, stored zero-based.
    pub residuals: Vec<f64>,
    /// Temporal exponent `min{2 - a, r a}`.
    pub rate: f64,
    pub spacing: f64,
}

impl ConsistencyReport {
    /// Graded-mesh truncation envelope `k^{-rate} + h^2` at level `k`.
    pub fn envelope(&self, k: usize) -> f64 {
        (k as f64).powf(-self.rate) + self.spacing * self.spacing
    }

    /// `max_k ||xi^k|| / (k^{-rate} + h^2)`.
    pub fn envelope_constant(&self) -> f64 {
        self.residuals
            .iter()
            .enumerate()
            .map(|(i, r)| r / self.envelope(i + 1))
            .fold(0.0, f64::max)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals[self.residuals.len() - 1]
    }
}

/// Inserts the exact nodal values into the left side of the scheme and measures
/// the defect against `f_i^k` level by level. Also returns
/// `max_k Gamma(2-a) tau_k^a ||xi^k||`, the per-level forcing of the error recursion.
pub fn scheme_consistency(
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<(ConsistencyReport, f64)> {
    let exact_u = spec.exact_u()?;
    let exact_p = spec.exact_p()?;
    let alpha = spec.alpha;
    let n = grid.intervals();
    let h2 = grid.spacing().powi(2);
    let g2 = gamma(2.0 - alpha);
    let rows: Vec<Vec<f64>> = mesh
        .levels()
        .iter()
        .map(|&t| grid.sample(|x| exact_u(x, t)))
        .collect();
    let mut residuals = Vec::with_capacity(mesh.intervals());
    let mut weighted: f64 = 0.0;
    for k in 1..=mesh.intervals() {
        let t = mesh.level(k);
        let weights = l1_weights(mesh, k, alpha)?;
        let p = exact_p(t);
        let mut worst: f64 = 0.0;
        for i in 1..n {
            let caputo: f64 = (1..=k)
                .map(|j| weights.weight(j) * (rows[j][i] - rows[j - 1][i]))
                .sum::<f64>()
                / g2;
            let lap = (rows[k][i + 1] - 2.0 * rows[k][i] + rows[k][i - 1]) / h2;
            let defect = caputo - lap + p * rows[k][i] - (spec.source)(grid.nodes()[i], t);
            worst = worst.max(defect.abs());
        }
        weighted = weighted.max(g2 * mesh.step(k).powf(alpha) * worst);
        residuals.push(worst);
    }
    let rate = (2.0 - alpha).min(mesh.grading() * alpha);
    Ok((
        ConsistencyReport {
            residuals,
            rate,
            spacing: grid.spacing(),
        },
        weighted,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_graded_mesh, build_spatial_grid, rate_optimal_grading};
    use crate::problems::{manufactured_problem, zero_problem};
    use crate::tridiag::dense_solve;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn setup(alpha: f64, n: usize, m: usize, r: f64) -> (ProblemSpec, SpatialGrid, GradedTimeMesh) {
        (
            manufactured_problem(alpha).unwrap(),
            build_spatial_grid(1.0, n).unwrap(),
            build_graded_mesh(1.0, m, r).unwrap(),
        )
    }

    #[test]
    fn first_level_has_no_memory_sum() {
        let (spec, grid, mesh) = setup(0.5, 8, 4, 2.0);
        let history = vec![grid.sample(|x| (spec.initial)(x))];
        let sys = assemble_system(1, 0.7, &history, &spec, &grid, &mesh).unwrap();
        let d11 = mesh.step(1).powf(-0.5);
        let g2 = gamma(1.5);
        for i in 1..8 {
            let x = grid.nodes()[i];
            let expected = d11 * (spec.initial)(x) / g2 + (spec.source)(x, mesh.level(1));
            assert_relative_eq!(sys.rhs[i - 1], expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn diagonal_margin_identity() {
        let (spec, grid, mesh) = setup(0.3, 10, 6, 2.5);
        let history = vec![grid.sample(|x| (spec.initial)(x)); 6];
        for k in 1..=6 {
            let p_k = 0.1 * k as f64;
            let sys = assemble_system(k, p_k, &history, &spec, &grid, &mesh).unwrap();
            let expected = mesh.step(k).powf(-0.3) / gamma(1.7) + p_k;
            assert_relative_eq!(sys.dominance_margin(), expected, max_relative = 1e-9);
            let off = -1.0 / (grid.spacing() * grid.spacing());
            assert!(sys.sub.iter().chain(&sys.sup).all(|&v| v == off));
        }
    }

    #[test]
    fn level_out_of_range() {
        let (spec, grid, mesh) = setup(0.5, 8, 4, 1.0);
        let history = vec![vec![0.0; 9]; 5];
        assert!(assemble_system(0, 0.0, &history, &spec, &grid, &mesh).is_err());
        assert!(assemble_system(5, 0.0, &history, &spec, &grid, &mesh).is_err());
        assert!(assemble_system(3, 0.0, &history[..2], &spec, &grid, &mesh).is_err());
    }

    #[test]
    fn memory_sum_telescopes() {
        for &(m, r, alpha) in &[(7usize, 1.0, 0.5), (40, 3.0, 0.25), (100, 1.6, 0.9)] {
            let mesh = build_graded_mesh(1.0, m, r).unwrap();
            for k in 1..=m {
                let w = l1_weights(&mesh, k, alpha).unwrap();
                // Summed in the k - j ordering of the rearranged scheme.
                let sum: f64 = (1..k).map(|j| w.weight(k - j) - w.weight(k - j + 1)).sum();
                let expected = w.weight(1) - w.terminal();
                assert!((sum - expected).abs() <= 1e-12 * w.terminal());
            }
        }
    }

    #[test]
    fn memory_term_matches_direct_l1_rearrangement() {
        // b^k - f^k must equal (d_kk u^k - L1 sum) / Gamma for any history.
        let (spec, grid, mesh) = setup(0.4, 6, 9, 2.0);
        let mut history = Vec::new();
        for k in 0..9 {
            history.push(grid.sample(|x| ((k + 1) as f64 * x).sin() * x * (1.0 - x)));
        }
        let k = 9;
        let zero_source = ProblemSpec {
            source: Arc::new(|_, _| 0.0),
            ..spec.clone()
        };
        let sys = assemble_system(k, 0.0, &history, &zero_source, &grid, &mesh).unwrap();
        let w = l1_weights(&mesh, k, 0.4).unwrap();
        for i in 1..6 {
            // L1 applied to a history whose level-k value is 0 gives -(memory term).
            let mut column: Vec<f64> = history.iter().map(|row| row[i]).collect();
            column.push(0.0);
            let l1 = crate::caputo::discrete_caputo(&column, &w, 0.4).unwrap();
            assert_relative_eq!(sys.rhs[i - 1], -l1, max_relative = 1e-11, epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let spec = zero_problem(0.5).unwrap();
        let grid = build_spatial_grid(1.0, 16).unwrap();
        let mesh = build_graded_mesh(1.0, 16, 3.0).unwrap();
        let field = march_direct(&spec, &grid, &mesh, |_| 0.0).unwrap();
        assert!(field.u.iter().flatten().all(|&v| v == 0.0));
        let stab = check_stability_bound(&field, &spec, &grid, &mesh);
        assert!(stab.holds());
        assert_eq!(stab.worst_slack(), 0.0);
        let apriori = check_apriori_l2(&field, &spec, &grid, &mesh).unwrap();
        assert!(apriori.holds());
        assert_eq!(apriori.worst_slack(), 0.0);
    }

    #[test]
    fn boundary_and_initial_rows() {
        let (spec, grid, mesh) = setup(0.6, 12, 10, 2.0);
        let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
        assert_eq!(field.levels(), 11);
        for row in &field.u {
            assert_eq!(row[0], 0.0);
            assert_eq!(row[12], 0.0);
        }
        for (i, &x) in grid.nodes().iter().enumerate().skip(1).take(11) {
            assert_eq!(field.u[0][i], (spec.initial)(x));
        }
    }

    #[test]
    fn each_level_agrees_with_dense_oracle() {
        let (spec, grid, mesh) = setup(0.5, 16, 12, 3.0);
        let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
        for k in 1..=12 {
            let sys = assemble_system(k, field.p[k], &field.u, &spec, &grid, &mesh).unwrap();
            let dense = dense_solve(&sys.to_dense(), &sys.rhs).unwrap();
            for (a, b) in field.u[k][1..16].iter().zip(&dense) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exact_coefficient_run_is_accurate() {
        let alpha = 0.5;
        let (spec, grid, mesh) = setup(alpha, 128, 1000, rate_optimal_grading(alpha));
        let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
        let u = spec.exact_u().unwrap();
        let err = field
            .final_row()
            .iter()
            .zip(grid.nodes())
            .map(|(v, &x)| (v - u(x, 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 3.0 * 2.402e-4, "final-time error {err:e}");
        assert!(err > 1e-6);
    }

    #[test]
    fn refinement_reduces_error() {
        let err = |n: usize| {
            let (spec, grid, mesh) = setup(0.75, n, n, rate_optimal_grading(0.75));
            let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
            let u = spec.exact_u().unwrap();
            field
                .final_row()
                .iter()
                .zip(grid.nodes())
                .map(|(v, &x)| (v - u(x, 1.0)).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(128) < err(64));
    }

    #[test]
    fn stability_and_apriori_hold_on_manufactured_runs() {
        for &alpha in &[0.25, 0.5, 0.75] {
            let (spec, grid, mesh) = setup(alpha, 64, 64, rate_optimal_grading(alpha));
            let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
            let stab = check_stability_bound(&field, &spec, &grid, &mesh);
            assert!(stab.coefficient_nonnegative);
            assert!(stab.holds());
            assert_eq!(stab.levels.len(), 64);
            let apriori = check_apriori_l2(&field, &spec, &grid, &mesh).unwrap();
            assert!(apriori.holds(), "slack {}", apriori.worst_slack());
        }
    }

    #[test]
    fn bound_constants() {
        let (spec, grid, mesh) = setup(0.5, 8, 8, 1.0);
        let field = march_direct_exact(&spec, &grid, &mesh).unwrap();
        let stab = check_stability_bound(&field, &spec, &grid, &mesh);
        assert_relative_eq!(stab.constant, 1.772_453_850_905_516, max_relative = 1e-13);
        let apriori = check_apriori_l2(&field, &spec, &grid, &mesh).unwrap();
        assert_relative_eq!(
            apriori.constant,
            0.050_660_591_821_168_88,
            max_relative = 1e-14
        );
    }

    #[test]
    fn negative_coefficient_is_recorded_not_fatal() {
        let (spec, grid, mesh) = setup(0.5, 8, 5, 1.0);
        let field =
            march_direct(&spec, &grid, &mesh, |t| if t > 0.5 { -0.1 } else { 0.2 }).unwrap();
        assert_eq!(field.negative_coefficient_levels, vec![3, 4, 5]);
    }

    #[test]
    fn marching_is_deterministic() {
        let (spec, grid, mesh) = setup(0.35, 32, 40, 2.0);
        let a = march_direct_exact(&spec, &grid, &mesh).unwrap();
        let b = march_direct_exact(&spec, &grid, &mesh).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn consistency_residual_is_enveloped_and_shrinks() {
        let alpha = 0.5;
        let r = rate_optimal_grading(alpha);
        let mut prev_weighted = f64::INFINITY;
        let mut prev_final = f64::INFINITY;
        for &n in &[32usize, 64, 128] {
            let (spec, grid, mesh) = setup(alpha, n, n, r);
            let (report, weighted) = scheme_consistency(&spec, &grid, &mesh).unwrap();
            assert!(report.envelope_constant() <= 10.0);
            assert!(weighted < prev_weighted);
            assert!(report.final_residual() < prev_final);
            prev_weighted = weighted;
            prev_final = report.final_residual();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_data_gives_nonnegative_solution(
            amp in 0.0f64..3.0,
            src in 0.0f64..5.0,
            rate in 0.0f64..4.0,
            p0 in 0.0f64..10.0,
            alpha in 0.05f64..0.95,
        ) {
            let spec = ProblemSpec {
                initial: Arc::new(move |x| amp * x * x * (1.0 - x)),
                source: Arc::new(move |x, t| src * (1.0 + (rate * t).sin().abs()) * (3.0 * x).cos().abs()),
                ..manufactured_problem(alpha).unwrap()
            };
            let grid = build_spatial_grid(1.0, 24).unwrap();
            let mesh = build_graded_mesh(1.0, 20, rate_optimal_grading(alpha).min(6.0)).unwrap();
            let field = march_direct(&spec, &grid, &mesh, |t| p0 * (1.0 + t)).unwrap();
            prop_assert!(field.min_value() >= -1e-12);
        }
    }
}
