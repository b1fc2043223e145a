//! Adaptive backward-Euler reference integrator.
//!
//! Each step solves the implicit Euler equations with Newton's method and is
//! checked by step doubling: one step of size `h` against two of size `h/2`.
//! The accepted state is the Richardson combination `2·y_half − y_full`, which is
//! second order, keeps `R(∞) = 0` and preserves linear invariants exactly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::system::{jacobian_or_fd, StiffSystem};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub tol: f64,
    pub initial_step: Option<f64>,
    pub min_step: f64,
    pub max_newton_iterations: usize,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            initial_step: None,
            min_step: 1e-16,
            max_newton_iterations: 12,
            max_steps: 2_000_000,
        }
    }
}

/// Integrate `system` from `y0` at `t = 0` to `t_end`.
pub fn integrate_reference(system: &dyn StiffSystem, y0: &[f64], t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_reference_with(system, y0, 0.0, t_end, &IntegratorOptions::with_tol(tol))
}

pub fn integrate_reference_with(
    system: &dyn StiffSystem,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if y0.len() != system.dim() {
        return Err(Error::Shape(format!("y0 has {} entries, system {}", y0.len(), system.dim())));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    if !(t_end > t0) {
        return Err(Error::Config(format!("t_end ({t_end}) must exceed t0 ({t0})")));
    }

    let weights = ErrorWeights::new(system.scales(), opts.tol);
    let span = t_end - t0;
    let mut h = opts.initial_step.unwrap_or(span * 1e-6).min(span);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut times = vec![t0];
    let mut states = vec![y.clone()];

    for _ in 0..opts.max_steps {
        if t >= t_end {
            break;
        }
        let last = t + h >= t_end || t_end - (t + h) < 1e-12 * span;
        if last {
            h = t_end - t;
        }
        let full = backward_euler(system, &y, t, h, &weights, opts);
        let half = backward_euler(system, &y, t, 0.5 * h, &weights, opts)
            .and_then(|mid| backward_euler(system, &mid, t + 0.5 * h, 0.5 * h, &weights, opts));
        let (full, half) = match (full, half) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                h *= 0.25;
                if h < opts.min_step {
                    return Err(Error::Integration {
                        t,
                        reason: "Newton iteration failed to converge at minimum step size".into(),
                    });
                }
                continue;
            }
        };
        let err = weights.norm_diff(&half, &full);
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = half.iter().zip(&full).map(|(a, b)| 2.0 * a - b).collect();
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { t, reason: "non-finite state".into() });
            }
            times.push(t);
            states.push(y.clone());
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.5) } else { 4.0 };
        h *= factor.clamp(0.2, 4.0);
        if h < opts.min_step {
            return Err(Error::Integration { t, reason: format!("step size underflow ({h:e})") });
        }
    }
    if t < t_end {
        return Err(Error::Integration { t, reason: "maximum number of steps exceeded".into() });
    }
    Trajectory::new(times, states, BTreeMap::new())
}

struct ErrorWeights {
    scales: Vec<f64>,
    tol: f64,
}

impl ErrorWeights {
    fn new(scales: Vec<f64>, tol: f64) -> Self {
        Self { scales, tol }
    }

    fn weight(&self, i: usize, value: f64) -> f64 {
        self.tol * (self.scales[i] + value.abs())
    }

    fn norm_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| (x - y).abs() / self.weight(i, *x))
            .fold(0.0, f64::max)
    }
}

/// One implicit Euler step `z = y + h·f(z, t + h)` solved by Newton's method.
fn backward_euler(
    system: &dyn StiffSystem,
    y: &[f64],
    t: f64,
    h: f64,
    weights: &ErrorWeights,
    opts: &IntegratorOptions,
) -> Result<Vec<f64>> {
    let n = y.len();
    let t_new = t + h;
    let mut z = y.to_vec();
    for _ in 0..opts.max_newton_iterations {
        let f = system.rhs(&z, t_new)?;
        let jac = jacobian_or_fd(system, &z, t_new)?;
        let residual = DVector::from_iterator(n, (0..n).map(|i| z[i] - y[i] - h * f[i]));
        let lhs = DMatrix::identity(n, n) - jac * h;
        let delta = lhs
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::Integration { t, reason: "singular Newton matrix".into() })?;
        let mut step_norm: f64 = 0.0;
        for i in 0..n {
            z[i] -= delta[i];
            step_norm = step_norm.max(delta[i].abs() / weights.weight(i, z[i]));
        }
        if z.iter().any(|v| !v.is_finite()) {
            break;
        }
        if step_norm < 1e-3 {
            return Ok(z);
        }
    }
    Err(Error::Integration { t, reason: "Newton iteration did not converge".into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::system::{IgnitionSystem, LinearSystem, Robertson};

    #[test]
    fn linear_decay_matches_closed_form() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, -1.0)).unwrap();
        let tol = 1e-6;
        let traj = integrate_reference(&sys, &[1.0], 1.0, tol).unwrap();
        let end = traj.states.last().unwrap()[0];
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        assert!((end - (-1.0f64).exp()).abs() < tol, "{end}");
    }

    #[test]
    fn robertson_conserves_mass() {
        let tol = 1e-6;
        let traj = integrate_reference(&Robertson, &[1.0, 0.0, 0.0], 40.0, tol).unwrap();
        for row in &traj.states {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() <= 10.0 * tol, "{s}");
        }
        assert_eq!(*traj.times.last().unwrap(), 40.0);
    }

    #[test]
    fn ignition_is_monotone() {
        let sys = IgnitionSystem::default();
        let tol = 1e-6;
        let y0 = IgnitionSystem::initial_state(1000.0, 1.0);
        let traj = integrate_reference(&sys, &y0, 8e-3, tol).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1][3] >= w[0][3] - 10.0 * tol * 1000.0, "temperature dropped");
            assert!(w[1][0] <= w[0][0] + 10.0 * tol, "fuel increased");
        }
        // ignition completes within the window
        let end = traj.states.last().unwrap();
        assert!(end[0] < 1e-3);
        assert!((end[3] - (1000.0 + 1500.0 * 0.5)).abs() < 1.0);
    }

    #[test]
    fn halving_tolerance_changes_little() {
        let sys = IgnitionSystem::default();
        let y0 = IgnitionSystem::initial_state(1100.0, 0.8);
        let coarse = integrate_reference(&sys, &y0, 1e-3, 1e-6).unwrap();
        let fine = integrate_reference(&sys, &y0, 1e-3, 5e-7).unwrap();
        let a = coarse.states.last().unwrap();
        let b = fine.states.last().unwrap();
        let scales = sys.scales();
        for i in 0..4 {
            let weighted = (a[i] - b[i]).abs() / (scales[i] + a[i].abs());
            assert!(weighted < 1e-6, "var {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let sys = Robertson;
        assert!(matches!(integrate_reference(&sys, &[1.0, 0.0, 0.0], 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(integrate_reference(&sys, &[f64::NAN, 0.0, 0.0], 1.0, 1e-6), Err(Error::NonFinite(_))));
    }
}
