//! Nonuniform L1 approximation of the Caputo derivative, the Riemann-Liouville
//! fractional integral on a graded mesh, and closed-form Caputo derivatives of
//! powers of `t`.

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::mesh::GradedTimeMesh;

/// `(b + step)^beta - b^beta` without cancellation.
///
/// For `b > 0` this is `b^beta * expm1(beta * ln_1p(step / b))`, which keeps full
/// relative accuracy when `step << b` (early intervals seen from a late level on a
/// strongly graded mesh).
pub(crate) fn power_increment(b: f64, step: f64, beta: f64) -> f64 {
    if b <= 0.0 {
        return step.powf(beta);
    }
    b.powf(beta) * (beta * (step / b).ln_1p()).exp_m1()
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("fractional order must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// L1 weights `d_{k,j}`, `j = 1..=k`, for one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct L1WeightRow {
    level: usize,
    weights: Vec<f64>,
}

impl L1WeightRow {
    pub fn level(&self) -> usize {
        self.level
    }

    /// `d_{k,j}` for `1 <= j <= k`.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j - 1]
    }

    /// `d_{k,k}`, equal to `tau_k^(-alpha)`.
    pub fn terminal(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    /// `d_{k,1}..d_{k,k}` stored zero-based.
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `d_{k,j} = [(t_k - t_{j-1})^(1-alpha) - (t_k - t_j)^(1-alpha)] / tau_j`.
pub fn l1_weights(mesh: &GradedTimeMesh, k: usize, alpha: f64) -> Result<L1WeightRow> {
    check_order(alpha)?;
    if k < 1 || k > mesh.intervals() {
        return invalid(format!(
            "level {k} outside 1..={} for the L1 weights",
            mesh.intervals()
        ));
    }
    let beta = 1.0 - alpha;
    let t = mesh.levels();
    let weights = (1..=k)
        .map(|j| {
            let tau = mesh.step(j);
            if j == k {
                tau.powf(-alpha)
            } else {
                power_increment(t[k] - t[j], tau, beta) / tau
            }
        })
        .collect();
    Ok(L1WeightRow { level: k, weights })
}

/// L1 value of the Caputo derivative at `t_k` from the samples `v^0..v^k`.
pub fn discrete_caputo(history: &[f64], weights: &L1WeightRow, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    if history.len() != weights.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: weights.len() + 1,
            found: history.len(),
        });
    }
    let sum: f64 = weights
        .as_slice()
        .iter()
        .zip(history.windows(2))
        .map(|(d, w)| d * (w[1] - w[0]))
        .sum();
    Ok(sum / gamma(2.0 - alpha))
}

/// Caputo derivative of `t^beta`: `Gamma(beta + 1) / Gamma(beta + 1 - alpha) * t^(beta - alpha)`.
///
/// `beta == alpha` gives the constant `Gamma(1 + alpha)`. At `t = 0` the value is 0
/// for `beta > alpha`; `beta < alpha` is singular there and rejected.
pub fn caputo_power(beta: f64, alpha: f64, t: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(beta > 0.0) {
        return invalid(format!("exponent must be positive, got {beta}"));
    }
    if t < 0.0 {
        return invalid(format!("time must be nonnegative, got {t}"));
    }
    let scale = gamma(beta + 1.0) / gamma(beta + 1.0 - alpha);
    if beta == alpha {
        return Ok(scale);
    }
    if t == 0.0 {
        if beta > alpha {
            return Ok(0.0);
        }
        return invalid(format!(
            "Caputo derivative of t^{beta} with order {alpha} is unbounded at t = 0"
        ));
    }
    Ok(scale * t.powf(beta - alpha))
}

/// Riemann-Liouville integral `D^{-alpha} s` at every mesh level.
///
/// Product quadrature: on `[t_{j-1}, t_j]` the integrand is frozen at its right
/// endpoint value `s_j` and the kernel `(t_k - sigma)^(alpha - 1) / Gamma(alpha)`
/// is integrated exactly, so constant inputs are reproduced exactly.
pub fn rl_integral(series: &[f64], mesh: &GradedTimeMesh, alpha: f64) -> Result<Vec<f64>> {
    check_order(alpha)?;
    let levels = mesh.intervals() + 1;
    if series.len() != levels {
        return Err(Error::LengthMismatch {
            expected: levels,
            found: series.len(),
        });
    }
    if let Some((k, &s)) = series.iter().enumerate().find(|(_, s)| !(**s >= 0.0)) {
        return invalid(format!(
            "fractional integral expects a nonnegative series, entry {k} is {s}"
        ));
    }
    let t = mesh.levels();
    let scale = 1.0 / gamma(alpha + 1.0);
    let mut out = vec![0.0; levels];
    for k in 1..levels {
        let acc: f64 = (1..=k)
            .map(|j| series[j] * power_increment(t[k] - t[j], mesh.step(j), alpha))
            .sum();
        out[k] = scale * acc;
    }
    Ok(out)
}
