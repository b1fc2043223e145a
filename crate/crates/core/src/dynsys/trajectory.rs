use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Time-stamped states of one system run. Rows of `states` align with `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Initial-condition parameters and other provenance.
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, meta: BTreeMap<String, String>) -> Result<Self> {
        let traj = Self { times, states, meta };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::Shape(format!(
                "{} times but {} states",
                self.times.len(),
                self.states.len()
            )));
        }
        let dim = self.dim();
        for (k, row) in self.states.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!("row {k} has {} entries, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state row {k}")));
            }
        }
        for (k, w) in self.times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(format!("times not strictly increasing at row {}", k + 1)));
            }
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("time".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn column(&self, var: usize) -> Vec<f64> {
        self.states.iter().map(|r| r[var]).collect()
    }

    /// Piecewise-linear state at time `t`, clamped to the covered interval.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.states[lo]
            .iter()
            .zip(&self.states[hi])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}
