//! Time grids over which the residual checkers quantify.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("time grid must contain at least one time")]
    EmptyTimes,
    #[error("times must be strictly increasing and finite")]
    NotIncreasing,
    #[error("shifts must be positive and finite")]
    BadShift,
}

/// Finite set of evaluation times plus the shifts `s` tested against them.
///
/// The stationarity criteria quantify over all real times and shifts; the
/// checkers evaluate their residuals on this grid instead, with the caller
/// interpreting grid coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, shifts: Vec<f64>) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::EmptyTimes);
        }
        if !times.iter().all(|t| t.is_finite())
            || times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(GridError::NotIncreasing);
        }
        if shifts.is_empty() || !shifts.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(GridError::BadShift);
        }
        Ok(Self { times, shifts })
    }

    /// Canonical grid: times -2, -1.5, ..., 2 and shifts {0.5, 1}.
    ///
    /// The half-integer spacing straddles the sign change at zero, which is
    /// where the |t| kinks of the two-sided models live, and every value is
    /// dyadic so shifted times incur no rounding.
    pub fn canonical() -> Self {
        let times = (-4..=4).map(|k| k as f64 * 0.5).collect();
        Self::new(times, vec![0.5, 1.0]).expect("canonical grid is valid")
    }

    /// Same times as [`TimeGrid::canonical`] but a single shift.
    pub fn canonical_with_shift(s: f64) -> Self {
        let times = (-4..=4).map(|k| k as f64 * 0.5).collect();
        Self::new(times, vec![s]).expect("valid grid")
    }

    /// Ordered time pairs (t1, t2), including t1 == t2.
    pub fn time_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .flat_map(move |&t1| self.times.iter().map(move |&t2| (t1, t2)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_grid_shape() {
        let g = TimeGrid::canonical();
        assert_eq!(g.times.len(), 9);
        assert_eq!(g.times[0], -2.0);
        assert_eq!(*g.times.last().unwrap(), 2.0);
        assert_eq!(g.shifts, vec![0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![], vec![1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], vec![-1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], vec![]).is_err());
    }
}
