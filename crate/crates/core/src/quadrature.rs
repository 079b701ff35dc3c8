//! Composite Simpson quadrature on a uniform grid and second-order one-sided
//! boundary derivatives.

use crate::error::{invalid, Result};

/// Integral of nodal `values` at spacing `h`.
///
/// Even interval counts use composite Simpson. Odd counts use Simpson on the
/// first `N - 3` intervals and the 3/8 rule on the last three.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let intervals = values.len().saturating_sub(1);
    if intervals < 2 {
        return invalid(format!(
            "Simpson quadrature needs at least 2 intervals, got {intervals}"
        ));
    }
    let even_part = |v: &[f64]| -> f64 {
        let n = v.len() - 1;
        if n == 0 {
            return 0.0;
        }
        let odd: f64 = v[1..n].iter().step_by(2).sum();
        let even: f64 = v[2..n].iter().step_by(2).sum();
        h / 3.0 * (v[0] + v[n] + 4.0 * odd + 2.0 * even)
    };
    if intervals.is_multiple_of(2) {
        return Ok(even_part(values));
    }
    let split = intervals - 3;
    let tail = &values[split..];
    let three_eighths = 3.0 * h / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
    Ok(even_part(&values[..=split]) + three_eighths)
}

fn check_row(row: &[f64]) -> Result<()> {
    if row.len() < 3 {
        return invalid(format!(
            "one-sided stencil needs 3 nodes, got {}",
            row.len()
        ));
    }
    Ok(())
}

/// `(-3 u_0 + 4 u_1 - u_2) / (2h)`.
pub fn boundary_derivative_left(row: &[f64], h: f64) -> Result<f64> {
    check_row(row)?;
    Ok((-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h))
}

/// `(3 u_N - 4 u_{N-1} + u_{N-2}) / (2h)`.
pub fn boundary_derivative_right(row: &[f64], h: f64) -> Result<f64> {
    check_row(row)?;
    let n = row.len() - 1;
    Ok((3.0 * row[n] - 4.0 * row[n - 1] + row[n - 2]) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn samples(n: usize, length: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
        let h = length / n as f64;
        ((0..=n).map(|i| f(i as f64 * h)).collect(), h)
    }

    #[test]
    fn square_on_two_intervals() {
        let (v, h) = samples(2, 1.0, |x| x * x);
        assert_relative_eq!(simpson(&v, h).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn sine_on_eight_intervals() {
        let (v, h) = samples(8, 1.0, |x| (PI * x).sin());
        assert!((simpson(&v, h).unwrap() - 2.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn constants_integrate_exactly() {
        for n in 2..=13 {
            let (v, h) = samples(n, 2.5, |_| 1.0);
            assert_relative_eq!(simpson(&v, h).unwrap(), 2.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn three_intervals_is_three_eighths() {
        let (v, h) = samples(3, 1.0, |x| x * x * x);
        assert_relative_eq!(simpson(&v, h).unwrap(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn too_few_nodes() {
        assert!(simpson(&[1.0, 2.0], 1.0).is_err());
        assert!(simpson(&[1.0], 1.0).is_err());
        assert!(boundary_derivative_left(&[1.0, 2.0], 0.5).is_err());
        assert!(boundary_derivative_right(&[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn odd_interval_counts_stay_fourth_order() {
        let exact = 2.0 / PI;
        let (v, h) = samples(15, 1.0, |x| (PI * x).sin());
        let coarse = (simpson(&v, h).unwrap() - exact).abs();
        let (v, h) = samples(31, 1.0, |x| (PI * x).sin());
        let fine = (simpson(&v, h).unwrap() - exact).abs();
        assert!((coarse / fine).log2() > 3.7);
    }

    #[test]
    fn stencils_on_low_degree_polynomials() {
        let (v, h) = samples(10, 1.0, |x| x);
        assert_relative_eq!(
            boundary_derivative_left(&v, h).unwrap(),
            1.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            boundary_derivative_right(&v, h).unwrap(),
            1.0,
            max_relative = 1e-13
        );
        let (v, h) = samples(10, 1.0, |x| x * x);
        assert!(boundary_derivative_left(&v, h).unwrap().abs() < 1e-13);
        assert_relative_eq!(
            boundary_derivative_right(&v, h).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        let zero = vec![0.0; 11];
        assert_eq!(boundary_derivative_right(&zero, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn stencils_on_sine() {
        let (v, h) = samples(64, 1.0, |x| (PI * x).sin());
        let left = boundary_derivative_left(&v, h).unwrap();
        let right = boundary_derivative_right(&v, h).unwrap();
        // Leading error pi^3 h^2 / 3 ~ 2.5e-3.
        assert!((left - PI).abs() < 2.6e-3);
        assert!((right + PI).abs() < 2.6e-3);
    }

    #[test]
    fn stencil_error_decays_at_second_order() {
        let err = |n: usize| {
            let (v, h) = samples(n, 1.0, |x| (PI * x).sin());
            (
                (boundary_derivative_left(&v, h).unwrap() - PI).abs(),
                (boundary_derivative_right(&v, h).unwrap() + PI).abs(),
            )
        };
        for n in [8, 16, 32, 64, 128] {
            let (l0, r0) = err(n);
            let (l1, r1) = err(2 * n);
            assert!((l0 / l1).log2() >= 1.9);
            assert!((r0 / r1).log2() >= 1.9);
        }
    }

    proptest! {
        #[test]
        fn simpson_exact_on_cubics(
            c in proptest::array::uniform4(-5.0f64..5.0),
            half in 1usize..40,
            length in 0.1f64..4.0,
        ) {
            let n = 2 * half;
            let p = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
            let (v, h) = samples(n, length, p);
            let exact = c[0] * length + c[1] * length.powi(2) / 2.0
                + c[2] * length.powi(3) / 3.0 + c[3] * length.powi(4) / 4.0;
            let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>() * length.powi(4).max(length);
            prop_assert!((simpson(&v, h).unwrap() - exact).abs() <= 1e-12 * scale);
        }

        #[test]
        fn stencils_exact_on_quadratics(
            c in proptest::array::uniform3(-5.0f64..5.0),
            n in 2usize..50,
        ) {
            let p = |x: f64| c[0] + c[1] * x + c[2] * x * x;
            let (v, h) = samples(n, 1.0, p);
            let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>() / h;
            prop_assert!((boundary_derivative_left(&v, h).unwrap() - c[1]).abs() <= 1e-12 * scale);
            let right_exact = c[1] + 2.0 * c[2];
            prop_assert!((boundary_derivative_right(&v, h).unwrap() - right_exact).abs() <= 1e-12 * scale);
        }
    }
}
