use std::sync::Arc;

use crate::error::{arg, Result};

/// Ordered time instants `0 = t_0 < t_1 < ... < t_N = T`.
///
/// The instants live behind an `Arc` so rough paths, controlled paths and
/// integrals built on the same grid share one allocation.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    times: Arc<[f64]>,
    uniform: bool,
}

impl TimeGrid {
    /// `n` equal steps on `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return arg("a grid needs at least one step");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return arg(format!("horizon must be positive and finite, got {horizon}"));
        }
        let times: Vec<f64> = (0..=n)
            .map(|i| if i == n { horizon } else { horizon * i as f64 / n as f64 })
            .collect();
        Self::from_times(times)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return arg("a grid needs at least two instants");
        }
        if times[0] != 0.0 {
            return arg(format!("grid must start at 0, got {}", times[0]));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return arg(format!("grid not strictly increasing at {} -> {}", w[0], w[1]));
            }
        }
        let n = times.len() - 1;
        let horizon = times[n];
        let h = horizon / n as f64;
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * horizon);
        Ok(Self { times: times.into(), uniform })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of instants `N + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// True when both grids hold the same instants.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        Arc::ptr_eq(&self.times, &other.times) || self.times[..] == other.times[..]
    }

    /// Keep every `stride`-th instant. `stride` must divide `N`.
    pub fn restrict(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.steps() % stride != 0 {
            return arg(format!("stride {stride} does not divide {} steps", self.steps()));
        }
        let times: Vec<f64> = self.times.iter().step_by(stride).copied().collect();
        Self::from_times(times)
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i > self.steps() {
            return arg(format!("grid index {i} out of range 0..={}", self.steps()));
        }
        Ok(())
    }
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}
