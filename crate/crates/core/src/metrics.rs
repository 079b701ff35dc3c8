//! Error norms and observed convergence orders.

use crate::direct::SolutionField;
use crate::error::{invalid, Error, Result};
use crate::mesh::{GradedTimeMesh, SpatialGrid};
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub max_err: f64,
    pub l2_err: f64,
    /// Index of the node (for `u`) or level (for `p`) where `max_err` occurs.
    pub location: usize,
}

fn max_with_location(errors: &[f64]) -> (f64, usize) {
    errors.iter().enumerate().fold(
        (0.0, 0),
        |(m, at), (i, &e)| if e > m { (e, i) } else { (m, at) },
    )
}

/// Error of the final time slice: max norm and `sqrt(h sum_i e_i^2)`.
pub fn error_u(
    field: &SolutionField,
    spec: &ProblemSpec,
    grid: &SpatialGrid,
    mesh: &GradedTimeMesh,
) -> Result<ErrorReport> {
    let exact = spec.exact_u()?;
    let row = field.final_row();
    if row.len() != grid.intervals() + 1 {
        return Err(Error::LengthMismatch {
            expected: grid.intervals() + 1,
            found: row.len(),
        });
    }
    let t = mesh.final_time();
    let errors: Vec<f64> = row
        .iter()
        .zip(grid.nodes())
        .map(|(u, &x)| (u - exact(x, t)).abs())
        .collect();
    let (max_err, location) = max_with_location(&errors);
    let l2_err = (grid.spacing() * errors.iter().map(|e| e * e).sum::<f64>()).sqrt();
    Ok(ErrorReport {
        max_err,
        l2_err,
        location,
    })
}

/// Error of the recovered coefficient: max over all levels and the
/// step-weighted `sqrt(sum_{k >= 1} tau_k e_k^2)`.
pub fn error_p(
    field: &SolutionField,
    spec: &ProblemSpec,
    mesh: &GradedTimeMesh,
) -> Result<ErrorReport> {
    let exact = spec.exact_p()?;
    if field.p.len() != mesh.intervals() + 1 {
        return Err(Error::LengthMismatch {
            expected: mesh.intervals() + 1,
            found: field.p.len(),
        });
    }
    let errors: Vec<f64> = field
        .p
        .iter()
        .zip(mesh.levels())
        .map(|(p, &t)| (p - exact(t)).abs())
        .collect();
    let (max_err, location) = max_with_location(&errors);
    let l2_err = errors[1..]
        .iter()
        .zip(mesh.steps())
        .map(|(e, tau)| tau * e * e)
        .sum::<f64>()
        .sqrt();
    Ok(ErrorReport {
        max_err,
        l2_err,
        location,
    })
}

/// `log(e_coarse / e_fine) / log(ratio)`.
pub fn convergence_order(coarse: f64, fine: f64, ratio: f64) -> Result<f64> {
    if !(coarse > 0.0 && fine > 0.0) {
        return invalid(format!(
            "errors must be positive to form an order, got {coarse} and {fine}"
        ));
    }
    if !(ratio > 1.0) {
        return invalid(format!("refinement ratio must exceed 1, got {ratio}"));
    }
    Ok((coarse / fine).ln() / ratio.ln())
}
