//! Simultaneous identification of `{p(t), u(x, t)}` from the integral
//! observation `g(t) = int_0^l u omega dx`.
//!
//! Applying the Caputo derivative to the observation and integrating the PDE
//! against `omega` twice by parts gives, whenever `g(t) != 0`,
//!
//! ```text
//! p = [u_x(l) omega(l) - u_x(0) omega(0) + int u omega'' + int f omega - d^a g] / g
//! ```
//!
//! which is evaluated with one-sided second-order boundary stencils and Simpson
//! quadrature after each implicit step.

use std::str::FromStr;

use crate::caputo::l1_weights;
use crate::direct::{assemble_with_weights, initial_row, with_boundary, SolutionField};
use crate::error::{Error, Result};
use crate::mesh::{GradedTimeMesh, SpatialGrid};
use crate::problems::{check_compatibility, ObservationSeries, ProblemSpec};
use crate::quadrature::{boundary_derivative_left, boundary_derivative_right, simpson};
use crate::tridiag::thomas_solve;

pub const DEFAULT_G_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20;

/// Reconstructs `p(t_k)` from one computed row `u^k`.
pub fn recover_p(
    row: &[f64],
    t: f64,
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    g: f64,
    g_caputo: f64,
    g_floor: f64,
) -> Result<f64> {
    if !(g.abs() >= g_floor) {
        return Err(Error::ObservationTooSmall {
            level: usize::MAX,
            t,
            g,
            floor: g_floor,
        });
    }
    let h = grid.spacing();
    let l = grid.length();
    let flux = boundary_derivative_right(row, h)? * (spec.weight)(l)
        - boundary_derivative_left(row, h)? * (spec.weight)(0.0);
    let curvature: Vec<f64> = row
        .iter()
        .zip(grid.nodes())
        .map(|(u, &x)| u * (spec.weight_dd)(x))
        .collect();
    let forcing: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| (spec.source)(x, t) * (spec.weight)(x))
        .collect();
    let numerator = flux + simpson(&curvature, h)? + simpson(&forcing, h)? - g_caputo;
    Ok(numerator / g)
}

/// Which coefficient value enters `A^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingMode {
    /// One solve per level using `p^{k-1}`.
    #[default]
    Lagged,
    /// Solve and recover repeatedly at each level until `p^k` stops changing.
    Iterated,
}

impl FromStr for CouplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lagged" => Ok(Self::Lagged),
            "iterated" => Ok(Self::Iterated),
            other => Err(Error::InvalidInput(format!(
                "unknown coupling mode `{other}` (expected lagged or iterated)"
            ))),
        }
    }
}

impl std::fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lagged => "lagged",
            Self::Iterated => "iterated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifyOptions {
    pub mode: CouplingMode,
    pub tolerance: f64,
    pub max_iter: usize,
    pub g_floor: f64,
    /// Run even if the compatibility checks fail.
    pub force: bool,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            mode: CouplingMode::Lagged,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            g_floor: DEFAULT_G_FLOOR,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub field: SolutionField,
    /// Linear solves spent on each level `1..=M` (always 1 in lagged mode).
    pub solves_per_level: Vec<usize>,
}

fn recover_at(
    k: usize,
    row: &[f64],
    t: f64,
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    obs: &ObservationSeries,
    g_floor: f64,
) -> Result<f64> {
    recover_p(row, t, spec, grid, obs.g[k], obs.g_caputo[k], g_floor).map_err(|e| match e {
        Error::ObservationTooSmall { t, g, floor, .. } => Error::ObservationTooSmall {
            level: k,
            t,
            g,
            floor,
        },
        other => other,
    })
}

/// Marches the implicit scheme while reconstructing `p^k` after every level.
pub fn identify(
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
    observations: &ObservationSeries,
    options: &IdentifyOptions,
) -> Result<Identification> {
    spec.validate()?;
    let m = mesh.intervals();
    if observations.len() != m + 1 || observations.g_caputo.len() != m + 1 {
        return Err(Error::LengthMismatch {
            expected: m + 1,
            found: observations.len().min(observations.g_caputo.len()),
        });
    }
    let report = check_compatibility(spec, observations, options.g_floor);
    if !report.passed() {
        if !options.force {
            return Err(Error::Incompatible(report.failures().join("; ")));
        }
        log::warn!(
            "compatibility checks failed, continuing: {}",
            report.failures().join("; ")
        );
    }

    let mut u = Vec::with_capacity(m + 1);
    u.push(initial_row(spec, grid));
    let mut p = Vec::with_capacity(m + 1);
    p.push(recover_at(
        0,
        &u[0],
        0.0,
        spec,
        grid,
        observations,
        options.g_floor,
    )?);
    if !p[0].is_finite() {
        return Err(Error::InvalidInput(
            "initial coefficient is not finite; supply a finite d^a g(0)".into(),
        ));
    }

    let mut negative = Vec::new();
    let mut solves = Vec::with_capacity(m);
    for k in 1..=m {
        let t = mesh.level(k);
        let weights = l1_weights(mesh, k, spec.alpha)?;
        let base = assemble_with_weights(&weights, 0.0, &u, spec, grid, mesh)?;
        let solve = |coefficient: f64| -> Result<Vec<f64>> {
            let mut sys = base.clone();
            sys.diag.iter_mut().for_each(|d| *d += coefficient);
            Ok(with_boundary(thomas_solve(&sys)?))
        };
        let lagged = p[k - 1];
        if lagged < 0.0 {
            log::warn!("negative coefficient p = {lagged:e} entering level {k}");
            negative.push(k);
        }

        let (row, p_k, count) = match options.mode {
            CouplingMode::Lagged => {
                let row = solve(lagged)?;
                let p_k = recover_at(k, &row, t, spec, grid, observations, options.g_floor)?;
                (row, p_k, 1)
            }
            CouplingMode::Iterated => iterate_level(
                k,
                lagged,
                &solve,
                |row| recover_at(k, row, t, spec, grid, observations, options.g_floor),
                options,
            )?,
        };
        u.push(row);
        p.push(p_k);
        solves.push(count);
    }

    Ok(Identification {
        field: SolutionField {
            u,
            p,
            negative_coefficient_levels: negative,
        },
        solves_per_level: solves,
    })
}

/// Fixed point `q = recover(solve(q))` started from `p^{k-1}`. After the first
/// plain step the update uses the secant of the fixed-point defect, which
/// converges to the same fixed point in far fewer solves.
fn iterate_level(
    k: usize,
    start: f64,
    solve: &impl Fn(f64) -> Result<Vec<f64>>,
    recover: impl Fn(&[f64]) -> Result<f64>,
    options: &IdentifyOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut q_prev = start;
    let mut row = solve(q_prev)?;
    let mut recovered = recover(&row)?;
    let mut defect_prev = recovered - q_prev;
    let mut count = 1;
    if defect_prev.abs() <= options.tolerance {
        return Ok((row, recovered, count));
    }
    let mut q = recovered;
    loop {
        if count >= options.max_iter {
            return Err(Error::NonConvergent {
                level: k,
                iterations: count,
                residual: defect_prev.abs(),
            });
        }
        row = solve(q)?;
        recovered = recover(&row)?;
        count += 1;
        let defect = recovered - q;
        if defect.abs() <= options.tolerance {
            return Ok((row, recovered, count));
        }
        let slope = defect - defect_prev;
        let next = if slope.abs() > f64::EPSILON * defect.abs().max(1e-300) {
            q - defect * (q - q_prev) / slope
        } else {
            recovered
        };
        q_prev = q;
        defect_prev = defect;
        q = next;
    }
}
