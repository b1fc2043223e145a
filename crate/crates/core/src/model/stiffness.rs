//! Explicit-step stability and derivative magnitudes of physical versus latent dynamics.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::AENodeModel;
use super::predict::Scaling;
use crate::dynsys::{jacobian_or_fd, StiffSystem, Trajectory};
use crate::error::{Error, Result};
use crate::node::{odesolve, VectorField};

/// `|R(z)|` for the classical RK4 stability polynomial.
pub fn rk4_amplification(z: Complex<f64>) -> f64 {
    let one = Complex::new(1.0, 0.0);
    (one + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0).norm()
}

/// Largest `h` with `|R(hλ)| ≤ 1` on all of `(0, h]`, for one decaying eigenvalue.
fn stable_step_for(lambda: Complex<f64>) -> f64 {
    let scale = lambda.norm();
    // The stability region lies inside |z| < 2.9, so 3/|λ| brackets the boundary.
    let upper = 3.0 / scale;
    let n = 600;
    let mut lo = 0.0;
    let mut hi = upper;
    for k in 1..=n {
        let h = upper * k as f64 / n as f64;
        if rk4_amplification(lambda * h) > 1.0 + 1e-12 {
            hi = h;
            break;
        }
        lo = h;
    }
    if lo == upper {
        return upper;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rk4_amplification(lambda * mid) > 1.0 + 1e-12 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Largest stable RK4 step over the decaying eigenvalues. Modes with non-negative real
/// part (growth or conservation) do not limit stability and are skipped; returns
/// infinity when no mode decays.
pub fn max_stable_rk4_step(eigenvalues: &[Complex<f64>]) -> f64 {
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    eigenvalues
        .iter()
        .filter(|l| l.re < -1e-12 * scale)
        .map(|&l| stable_step_for(l))
        .fold(f64::INFINITY, f64::min)
}

/// Jacobian of the latent vector field at one point, built from one reverse pass per output.
pub fn latent_jacobian(model: &AENodeModel, z: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let field = model.field();
    let n = z.len();
    let y = DMatrix::from_column_slice(n, 1, z.as_slice());
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = DMatrix::zeros(n, 1);
        e[i] = 1.0;
        let v = field.vjp(&y, &[t], &e, &[1.0])?;
        jac.set_row(i, &v.state.column(0).transpose());
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessOptions {
    /// Latent step as a multiple of the largest stable physical step.
    pub step_factor: usize,
    /// Largest tolerated coarse-versus-fine latent deviation, relative to the latent range.
    pub deviation_tolerance: f64,
}

impl Default for StiffnessOptions {
    fn default() -> Self {
        Self { step_factor: 10, deviation_tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessReport {
    /// Largest stable RK4 step of the physical system in normalised time.
    pub physical_stable_step: f64,
    /// Step used for the coarse latent rollout (normalised time).
    pub latent_step: f64,
    /// Smallest stable RK4 step bound along the latent rollouts.
    pub latent_stable_step: f64,
    pub latent_spectrum_stable: bool,
    pub latent_rollout_finite: bool,
    /// Max coarse-versus-fine latent difference over the latent range.
    pub latent_rollout_deviation: f64,
    /// Max over time and variables of `|dy/dτ| / range`.
    pub max_physical_derivative: f64,
    pub max_latent_derivative: f64,
    pub options: StiffnessOptions,
}

impl StiffnessReport {
    pub fn derivative_ratio(&self) -> f64 {
        self.max_physical_derivative / self.max_latent_derivative
    }

    pub fn coarse_step_stable(&self) -> bool {
        self.latent_spectrum_stable
            && self.latent_rollout_finite
            && self.latent_rollout_deviation <= self.options.deviation_tolerance
    }
}

/// Compares the physical system on reference trajectories (physical units, seconds)
/// with the model's latent rollouts started from the same initial states.
pub fn stiffness_report(
    model: &AENodeModel,
    scaling: &Scaling,
    system: &dyn StiffSystem,
    references: &[Trajectory],
    options: &StiffnessOptions,
) -> Result<StiffnessReport> {
    if references.is_empty() {
        return Err(Error::Shape("no reference trajectories".into()));
    }
    if options.step_factor == 0 {
        return Err(Error::Config("step factor must be positive".into()));
    }
    let ts = scaling.time_scale;
    let dim = system.dim();
    let mut physical_step = f64::INFINITY;
    let mut max_phys: f64 = 0.0;
    for tr in references {
        for (t, y) in tr.times.iter().zip(&tr.states) {
            let dy = system.rhs(y, *t)?;
            for i in 0..dim {
                let r = scaling.norm.range(i);
                if !scaling.norm.degenerate[i] && r > 0.0 {
                    max_phys = max_phys.max((dy[i] * ts / r).abs());
                }
            }
            // State scaling is a diagonal similarity, so only the time scale changes the spectrum.
            let jac = jacobian_or_fd(system, y, *t)? * ts;
            let eig: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
            physical_step = physical_step.min(max_stable_rk4_step(&eig));
        }
    }
    if !physical_step.is_finite() {
        return Err(Error::Undefined("physical system has no decaying modes".into()));
    }

    let field = model.field();
    let nl = model.latent_dim();
    let mut fine_paths = Vec::new();
    let mut coarse_paths = Vec::new();
    let mut coarse_finite = true;
    let mut latent_step = 0.0;
    for tr in references {
        let (t0, t1) = (tr.times[0] / ts, tr.times[tr.len() - 1] / ts);
        let horizon = t1 - t0;
        let n_coarse = ((horizon / (options.step_factor as f64 * physical_step)).floor() as usize).max(1);
        latent_step = f64::max(latent_step, horizon / n_coarse as f64);
        let u0 = scaling.norm.normalize(&tr.states[0]);
        let z0 = model.encode(&DMatrix::from_column_slice(u0.len(), 1, &u0))?;
        let z0 = DVector::from_column_slice(z0.as_slice());
        let fine = odesolve(&field, &z0, t0, t1, n_coarse * options.step_factor)?;
        match odesolve(&field, &z0, t0, t1, n_coarse) {
            Ok(c) => coarse_paths.push(c),
            Err(Error::Divergence { .. } | Error::Integration { .. }) => coarse_finite = false,
            Err(e) => return Err(e),
        }
        fine_paths.push(fine);
    }

    let mut lo = vec![f64::INFINITY; nl];
    let mut hi = vec![f64::NEG_INFINITY; nl];
    for p in &fine_paths {
        for k in 0..p.len() {
            for i in 0..nl {
                lo[i] = lo[i].min(p.states[(k, i)]);
                hi[i] = hi[i].max(p.states[(k, i)]);
            }
        }
    }
    let range: Vec<f64> = (0..nl).map(|i| (hi[i] - lo[i]).max(1e-12)).collect();

    let mut max_lat: f64 = 0.0;
    let mut latent_stable = f64::INFINITY;
    for p in &fine_paths {
        for k in 0..p.len() {
            let z = p.state(k);
            let y = DMatrix::from_column_slice(nl, 1, z.as_slice());
            let f = field.eval(&y, &[p.times[k]])?;
            for i in 0..nl {
                max_lat = max_lat.max(f[i].abs() / range[i]);
            }
            let eig: Vec<Complex<f64>> =
                latent_jacobian(model, &z, p.times[k])?.complex_eigenvalues().iter().copied().collect();
            latent_stable = latent_stable.min(max_stable_rk4_step(&eig));
        }
    }

    let mut deviation: f64 = 0.0;
    if coarse_finite {
        for (fine, coarse) in fine_paths.iter().zip(&coarse_paths) {
            for k in 0..coarse.len() {
                for i in 0..nl {
                    let d = (coarse.states[(k, i)] - fine.states[(k * options.step_factor, i)]).abs() / range[i];
                    deviation = deviation.max(d);
                }
            }
        }
    } else {
        deviation = f64::INFINITY;
    }

    Ok(StiffnessReport {
        physical_stable_step: physical_step,
        latent_step,
        latent_stable_step: latent_stable,
        latent_spectrum_stable: latent_stable >= latent_step,
        latent_rollout_finite: coarse_finite,
        latent_rollout_deviation: deviation,
        max_physical_derivative: max_phys,
        max_latent_derivative: max_lat,
        options: options.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_axis_bound() {
        // RK4 real-axis stability limit is about 2.7853.
        let h = max_stable_rk4_step(&[Complex::new(-1.0, 0.0)]);
        assert!((h - 2.785293563).abs() < 1e-6, "{h}");
        let h = max_stable_rk4_step(&[Complex::new(-1000.0, 0.0), Complex::new(-1.0, 0.0)]);
        assert!((h * 1000.0 - 2.785293563).abs() < 1e-6);
    }

    #[test]
    fn near_imaginary_axis_bound() {
        let h = max_stable_rk4_step(&[Complex::new(-1e-3, 1.0)]);
        assert!(h > 2.7 && h < 2.9, "{h}");
    }

    #[test]
    fn growth_and_conserved_modes_ignored() {
        assert_eq!(max_stable_rk4_step(&[Complex::new(0.0, 0.0), Complex::new(3.0, 0.0)]), f64::INFINITY);
        let h = max_stable_rk4_step(&[Complex::new(0.0, 0.0), Complex::new(-2.0, 0.0)]);
        assert!((h * 2.0 - 2.785293563).abs() < 1e-6);
    }

    #[test]
    fn amplification_is_one_at_origin() {
        assert_eq!(rk4_amplification(Complex::new(0.0, 0.0)), 1.0);
    }
}
