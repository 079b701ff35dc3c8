//! Uniform spatial grid on `[0, l]` and graded temporal mesh `t_k = T (k/M)^r`.

use crate::error::{invalid, Result};

/// Uniform partition of `[0, l]` into `N` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    length: f64,
    intervals: usize,
    spacing: f64,
    nodes: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(length: f64, intervals: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return invalid(format!("domain length must be positive, got {length}"));
        }
        if intervals < 2 {
            return invalid(format!(
                "spatial grid needs at least 2 intervals for an interior unknown, got {intervals}"
            ));
        }
        let spacing = length / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * spacing).collect();
        nodes[intervals] = length;
        Ok(Self {
            length,
            intervals,
            spacing,
            nodes,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of intervals `N`; there are `N + 1` nodes and `N - 1` unknowns.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Sample `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

pub fn build_spatial_grid(length: f64, intervals: usize) -> Result<SpatialGrid> {
    SpatialGrid::new(length, intervals)
}

/// Rate-optimal grading `(2 - alpha) / alpha`: balances the two exponents in
/// the `min{2 - alpha, r alpha}` temporal rate.
pub fn rate_optimal_grading(alpha: f64) -> f64 {
    (2.0 - alpha) / alpha
}

/// The lighter grading `2 - alpha`.
pub fn algorithm_default_grading(alpha: f64) -> f64 {
    2.0 - alpha
}

/// Graded time levels `t_k = T (k/M)^r`, `k = 0..=M`, with steps `tau_k = t_k - t_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedTimeMesh {
    final_time: f64,
    intervals: usize,
    grading: f64,
    levels: Vec<f64>,
    steps: Vec<f64>,
}

impl GradedTimeMesh {
    pub fn new(final_time: f64, intervals: usize, grading: f64) -> Result<Self> {
        if !(final_time > 0.0) || !final_time.is_finite() {
            return invalid(format!("final time must be positive, got {final_time}"));
        }
        if intervals < 1 {
            return invalid("time mesh needs at least one interval");
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return invalid(format!(
                "grading exponent must satisfy r >= 1, got {grading}"
            ));
        }
        let m = intervals as f64;
        // Closed form per level; no cumulative sums.
        let mut levels: Vec<f64> = (0..=intervals)
            .map(|k| final_time * (k as f64 / m).powf(grading))
            .collect();
        levels[intervals] = final_time;
        let steps = levels.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            final_time,
            intervals,
            grading,
            levels,
            steps,
        })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Number of steps `M`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// All `M + 1` levels `t_0 = 0, ..., t_M = T`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> f64 {
        self.levels[k]
    }

    /// Step `tau_k` for `k = 1..=M`.
    pub fn step(&self, k: usize) -> f64 {
        self.steps[k - 1]
    }

    /// Steps `tau_1..tau_M`, stored zero-based.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }
}

pub fn build_graded_mesh(
    final_time: f64,
    intervals: usize,
    grading: f64,
) -> Result<GradedTimeMesh> {
    GradedTimeMesh::new(final_time, intervals, grading)
}
