//! Problem instances: coefficient functions, observation data, the manufactured
//! benchmark, noise injection and the compatibility checks run before identification.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::caputo::caputo_power;
use crate::error::{invalid, Error, Result};
use crate::mesh::GradedTimeMesh;
use crate::quadrature::simpson;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Identifier of the generator behind [`perturb_observations`], recorded with results.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(rand_chacha 0.9, seed_from_u64)";

/// Names accepted by [`ProblemSpec::by_name`].
pub const PROBLEM_NAMES: &[&str] = &["manufactured", "zero"];

/// One direct/inverse problem instance on `[0, l] x [0, T]`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub alpha: f64,
    pub length: f64,
    pub final_time: f64,
    /// Initial data `phi(x)`.
    pub initial: ScalarFn,
    /// Source `f(x, t)`.
    pub source: FieldFn,
    /// Overdetermination weight `omega(x)`.
    pub weight: ScalarFn,
    /// Analytic `omega''(x)`.
    pub weight_dd: ScalarFn,
    /// Observation `g(t) = int_0^l u omega dx`.
    pub observation: ScalarFn,
    /// Analytic Caputo derivative of `g`.
    pub observation_caputo: ScalarFn,
    pub exact_u: Option<FieldFn>,
    pub exact_p: Option<ScalarFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("length", &self.length)
            .field("final_time", &self.final_time)
            .field("exact_u", &self.exact_u.is_some())
            .field("exact_p", &self.exact_p.is_some())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Built-in registry lookup.
    pub fn by_name(name: &str, alpha: f64) -> Result<Self> {
        match name {
            "manufactured" => manufactured_problem(alpha),
            "zero" => zero_problem(alpha),
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.length > 0.0) || !(self.final_time > 0.0) {
            return invalid("domain extents must be positive");
        }
        Ok(())
    }

    /// Same problem with a different domain; `None` keeps the current extent.
    pub fn with_domain(mut self, length: Option<f64>, final_time: Option<f64>) -> Self {
        if let Some(l) = length {
            self.length = l;
        }
        if let Some(t) = final_time {
            self.final_time = t;
        }
        self
    }

    pub fn exact_u(&self) -> Result<&FieldFn> {
        self.exact_u
            .as_ref()
            .ok_or_else(|| Error::MissingExact(self.name.clone(), "solution u"))
    }

    pub fn exact_p(&self) -> Result<&ScalarFn> {
        self.exact_p
            .as_ref()
            .ok_or_else(|| Error::MissingExact(self.name.clone(), "coefficient p"))
    }
}

/// Benchmark with `u = Gamma(2-a)(1 + t^a) sin(pi x)` and `p = 1 / (Gamma(2-a)(1 + t^a))`
/// on the unit square, observed through `omega = sin(pi x)`.
pub fn manufactured_problem(alpha: f64) -> Result<ProblemSpec> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let g2 = gamma(2.0 - alpha);
    let g1a = gamma(1.0 + alpha);
    // d^a/dt^a of (1 + t^a) is Gamma(1 + a), constant in t.
    let amplitude_caputo = caputo_power(alpha, alpha, 1.0)?;
    Ok(ProblemSpec {
        name: "manufactured".into(),
        alpha,
        length: 1.0,
        final_time: 1.0,
        initial: Arc::new(move |x| g2 * (PI * x).sin()),
        source: Arc::new(move |x, t| {
            (PI * x).sin() * (g2 * g1a + PI * PI * g2 * (1.0 + t.powf(alpha)) + 1.0)
        }),
        weight: Arc::new(|x| (PI * x).sin()),
        weight_dd: Arc::new(|x| -PI * PI * (PI * x).sin()),
        observation: Arc::new(move |t| 0.5 * g2 * (1.0 + t.powf(alpha))),
        observation_caputo: Arc::new(move |_| 0.5 * g2 * amplitude_caputo),
        exact_u: Some(Arc::new(move |x, t| {
            g2 * (1.0 + t.powf(alpha)) * (PI * x).sin()
        })),
        exact_p: Some(Arc::new(move |t| 1.0 / (g2 * (1.0 + t.powf(alpha))))),
    })
}

/// All data zero, `p = 0`; the solution is identically zero. Not identifiable
/// (its observation vanishes).
pub fn zero_problem(alpha: f64) -> Result<ProblemSpec> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(ProblemSpec {
        name: "zero".into(),
        alpha,
        length: 1.0,
        final_time: 1.0,
        initial: Arc::new(|_| 0.0),
        source: Arc::new(|_, _| 0.0),
        weight: Arc::new(|x| (PI * x).sin()),
        weight_dd: Arc::new(|x| -PI * PI * (PI * x).sin()),
        observation: Arc::new(|_| 0.0),
        observation_caputo: Arc::new(|_| 0.0),
        exact_u: Some(Arc::new(|_, _| 0.0)),
        exact_p: Some(Arc::new(|_| 0.0)),
    })
}

/// `g` and its Caputo derivative sampled at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub g: Vec<f64>,
    pub g_caputo: Vec<f64>,
    pub noise_level: f64,
    pub seed: u64,
}

impl ObservationSeries {
    /// Clean samples of the problem's observation data on `mesh`.
    pub fn sample(spec: &ProblemSpec, mesh: &GradedTimeMesh) -> Self {
        Self {
            g: mesh
                .levels()
                .iter()
                .map(|&t| (spec.observation)(t))
                .collect(),
            g_caputo: mesh
                .levels()
                .iter()
                .map(|&t| (spec.observation_caputo)(t))
                .collect(),
            noise_level: 0.0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Relative uniform noise: `g_k (1 + delta eps_k)`, `dg_k (1 + delta eps'_k)` with
/// `eps, eps'` i.i.d. on `[-1, 1]`, drawn per level in the order `eps_k, eps'_k`.
pub fn perturb_observations(
    series: &ObservationSeries,
    delta: f64,
    seed: u64,
) -> Result<ObservationSeries> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return invalid(format!("noise level must be nonnegative, got {delta}"));
    }
    if delta == 0.0 {
        return Ok(ObservationSeries {
            seed,
            ..series.clone()
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Vec::with_capacity(series.len());
    let mut g_caputo = Vec::with_capacity(series.len());
    for (&gk, &dgk) in series.g.iter().zip(&series.g_caputo) {
        let eps: f64 = rng.random_range(-1.0..=1.0);
        let eps_caputo: f64 = rng.random_range(-1.0..=1.0);
        g.push(gk * (1.0 + delta * eps));
        g_caputo.push(dgk * (1.0 + delta * eps_caputo));
    }
    Ok(ObservationSeries {
        g,
        g_caputo,
        noise_level: delta,
        seed,
    })
}

/// Intervals used for the `g(0) = (omega, phi)` check, independent of the run grid.
const COMPATIBILITY_QUADRATURE_INTERVALS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `min_k |g(t_k)|` over the sampled levels.
    pub min_abs_g: f64,
    pub g0_floor: f64,
    /// A3: `|g(t_k)| >= g0_floor` at every level.
    pub positivity_ok: bool,
    /// `|g(0) - int omega phi|`.
    pub initial_residual: f64,
    pub initial_tolerance: f64,
    /// A2 with `beta = 0`.
    pub initial_ok: bool,
    /// `phi(0) = phi(l) = 0`.
    pub boundary_ok: bool,
}

impl CompatibilityReport {
    pub fn passed(&self) -> bool {
        self.positivity_ok && self.initial_ok && self.boundary_ok
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.positivity_ok {
            out.push(format!(
                "A3: min |g(t_k)| = {:e} below floor {:e}",
                self.min_abs_g, self.g0_floor
            ));
        }
        if !self.initial_ok {
            out.push(format!(
                "A2: |g(0) - (omega, phi)| = {:e} exceeds {:e}",
                self.initial_residual, self.initial_tolerance
            ));
        }
        if !self.boundary_ok {
            out.push("initial data does not vanish at the boundary".into());
        }
        out
    }
}

/// Runs the A2/A3 and boundary-compatibility checks; never fails.
pub fn check_compatibility(
    spec: &ProblemSpec,
    observations: &ObservationSeries,
    g0_floor: f64,
) -> CompatibilityReport {
    let min_abs_g = observations
        .g
        .iter()
        .map(|g| g.abs())
        .fold(f64::INFINITY, f64::min);
    let positivity_ok = min_abs_g >= g0_floor;

    let n = COMPATIBILITY_QUADRATURE_INTERVALS;
    let h = spec.length / n as f64;
    let integrand: Vec<f64> = (0..=n)
        .map(|i| {
            let x = i as f64 * h;
            (spec.weight)(x) * (spec.initial)(x)
        })
        .collect();
    let moment = simpson(&integrand, h).unwrap_or(f64::NAN);
    let g0 = (spec.observation)(0.0);
    let initial_residual = (g0 - moment).abs();
    let initial_tolerance = 1e-8 * (1.0 + g0.abs());
    let initial_ok = initial_residual <= initial_tolerance;

    let boundary_scale = 1e-12 * (1.0 + (spec.initial)(0.5 * spec.length).abs());
    let boundary_ok = (spec.initial)(0.0).abs() <= boundary_scale
        && (spec.initial)(spec.length).abs() <= boundary_scale;

    CompatibilityReport {
        min_abs_g,
        g0_floor,
        positivity_ok,
        initial_residual,
        initial_tolerance,
        initial_ok,
        boundary_ok,
    }
}

/// Convenience: sample the clean observations on `mesh` and check them.
pub fn check_problem(
    spec: &ProblemSpec,
    mesh: &GradedTimeMesh,
    g0_floor: f64,
) -> CompatibilityReport {
    check_compatibility(spec, &ObservationSeries::sample(spec, mesh), g0_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_graded_mesh, build_spatial_grid, SpatialGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Max residual of `d^a u - u_xx + p u - f` for the manufactured pair
    /// `u = c (1 + t^a) sin(pi x)`; the time derivative comes from `caputo_power`.
    fn manufactured_residual(spec: &ProblemSpec, grid: &SpatialGrid, mesh: &GradedTimeMesh) -> f64 {
        let u = spec.exact_u().unwrap();
        let p = spec.exact_p().unwrap();
        let alpha = spec.alpha;
        let amplitude = gamma(2.0 - alpha);
        let mut worst: f64 = 0.0;
        for &t in mesh.levels() {
            let dt = amplitude * caputo_power(alpha, alpha, t).unwrap();
            for &x in grid.nodes() {
                let caputo = dt * (PI * x).sin();
                let uxx = -PI * PI * u(x, t);
                let residual = caputo - uxx + p(t) * u(x, t) - (spec.source)(x, t);
                worst = worst.max(residual.abs());
            }
        }
        worst
    }

    #[test]
    fn manufactured_coefficient_values() {
        let spec = manufactured_problem(0.5).unwrap();
        let p = spec.exact_p().unwrap();
        assert_relative_eq!(
            p(0.0),
            std::f64::consts::FRAC_2_SQRT_PI,
            max_relative = 1e-13
        );
        assert_relative_eq!(p(1.0), 0.564_189_583_547_756_3, max_relative = 1e-13);
    }

    #[test]
    fn manufactured_initial_observation_matches_moment() {
        for &alpha in &[0.1, 0.35, 0.5, 0.75, 0.95] {
            let spec = manufactured_problem(alpha).unwrap();
            let half_gamma = 0.5 * gamma(2.0 - alpha);
            assert_relative_eq!((spec.observation)(0.0), half_gamma, max_relative = 1e-15);
            let mesh = build_graded_mesh(1.0, 8, 2.0).unwrap();
            let report = check_problem(&spec, &mesh, 1e-12);
            assert!(report.initial_residual < 1e-12);
            assert!(report.passed(), "{:?}", report.failures());
        }
    }

    #[test]
    fn manufactured_observation_derivative_is_constant() {
        let spec = manufactured_problem(0.5).unwrap();
        let expected = 0.5 * gamma(1.5) * gamma(1.5);
        for &t in &[0.0, 0.2, 1.0] {
            assert_relative_eq!((spec.observation_caputo)(t), expected, max_relative = 1e-14);
        }
        assert_relative_eq!((spec.weight_dd)(0.5), -PI * PI, max_relative = 1e-15);
    }

    #[test]
    fn manufactured_pair_satisfies_the_pde() {
        let grid = build_spatial_grid(1.0, 32).unwrap();
        let mesh = build_graded_mesh(1.0, 32, 2.5).unwrap();
        for &alpha in &[0.1, 0.25, 0.5, 0.75, 0.95] {
            let spec = manufactured_problem(alpha).unwrap();
            assert!(manufactured_residual(&spec, &grid, &mesh) < 1e-10);
        }
    }

    #[test]
    fn zero_observation_violates_positivity() {
        let spec = zero_problem(0.5).unwrap();
        let mesh = build_graded_mesh(1.0, 8, 1.0).unwrap();
        let report = check_problem(&spec, &mesh, 1e-12);
        assert!(!report.positivity_ok);
        assert!(report.initial_ok);
        assert!(!report.passed());
    }

    #[test]
    fn nonvanishing_initial_data_fails_boundary_check() {
        let mut spec = manufactured_problem(0.5).unwrap();
        spec.initial = Arc::new(|_| 1.0);
        let mesh = build_graded_mesh(1.0, 8, 1.0).unwrap();
        let report = check_problem(&spec, &mesh, 1e-12);
        assert!(!report.boundary_ok);
        assert!(!report.passed());
        assert_eq!(report.failures().len(), 2);
    }

    #[test]
    fn registry() {
        assert_eq!(
            ProblemSpec::by_name("manufactured", 0.3).unwrap().alpha,
            0.3
        );
        assert!(matches!(
            ProblemSpec::by_name("nope", 0.3),
            Err(Error::UnknownProblem(_))
        ));
        assert!(ProblemSpec::by_name("manufactured", 1.0).is_err());
        assert!(zero_problem(0.5).unwrap().exact_u().is_ok());
    }

    fn clean_series() -> ObservationSeries {
        let spec = manufactured_problem(0.5).unwrap();
        let mesh = build_graded_mesh(1.0, 64, 3.0).unwrap();
        ObservationSeries::sample(&spec, &mesh)
    }

    #[test]
    fn zero_noise_is_identity() {
        let clean = clean_series();
        let out = perturb_observations(&clean, 0.0, 7).unwrap();
        assert_eq!(out.g, clean.g);
        assert_eq!(out.g_caputo, clean.g_caputo);
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let clean = clean_series();
        let a = perturb_observations(&clean, 0.05, 11).unwrap();
        let b = perturb_observations(&clean, 0.05, 11).unwrap();
        assert_eq!(a, b);
        let worst =
            a.g.iter()
                .zip(&clean.g)
                .map(|(n, c)| (n - c).abs() / c.abs())
                .fold(0.0, f64::max);
        assert!(worst <= 0.05 * (1.0 + 1e-12));
        assert!(worst > 0.0);
        let other = perturb_observations(&clean, 0.05, 12).unwrap();
        assert_ne!(a.g, other.g);
    }

    #[test]
    fn negative_noise_rejected() {
        assert!(perturb_observations(&clean_series(), -0.01, 1).is_err());
    }

    proptest! {
        #[test]
        fn moderate_noise_preserves_positivity(seed in any::<u64>(), delta in 0.0f64..=0.05) {
            let clean = clean_series();
            let noisy = perturb_observations(&clean, delta, seed).unwrap();
            for (n, c) in noisy.g.iter().zip(&clean.g) {
                prop_assert!(n.signum() == c.signum());
                prop_assert!((n - c).abs() <= delta * c.abs() * (1.0 + 1e-12));
            }
            let spec = manufactured_problem(0.5).unwrap();
            prop_assert!(check_compatibility(&spec, &noisy, 1e-12).positivity_ok);
        }
    }
}
