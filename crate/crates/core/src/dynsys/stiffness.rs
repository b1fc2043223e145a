use super::system::{jacobian_or_fd, StiffSystem};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Eigenvalues with `|Re λ|` below this fraction of the largest are treated as zero.
const ZERO_EIGENVALUE_REL: f64 = 1e-7;

/// Largest ratio, over the trajectory's points, of the largest to the smallest
/// nonzero `|Re λ|` of the Jacobian.
pub fn stiffness_ratio(system: &dyn StiffSystem, trajectory: &Trajectory) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Config("stiffness ratio of an empty trajectory".into()));
    }
    let mut best: Option<f64> = None;
    for (t, y) in trajectory.times.iter().zip(&trajectory.states) {
        let jac = jacobian_or_fd(system, y, *t)?;
        let re: Vec<f64> = jac.complex_eigenvalues().iter().map(|l| l.re.abs()).collect();
        let largest = re.iter().copied().fold(0.0, f64::max);
        if largest == 0.0 {
            continue;
        }
        let smallest = re
            .iter()
            .copied()
            .filter(|&v| v > ZERO_EIGENVALUE_REL * largest)
            .fold(f64::INFINITY, f64::min);
        let ratio = largest / smallest;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| Error::Undefined("Jacobian is identically zero along the trajectory".into()))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use nalgebra::DMatrix;

    use super::*;
    use crate::dynsys::integrate::integrate_reference;
    use crate::dynsys::system::{LinearSystem, Robertson};

    fn point(y: Vec<f64>) -> Trajectory {
        Trajectory::new(vec![0.0], vec![y], BTreeMap::new()).unwrap()
    }

    #[test]
    fn diagonal_linear_system() {
        let sys = LinearSystem::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -1000.0]))).unwrap();
        let r = stiffness_ratio(&sys, &point(vec![1.0, 1.0])).unwrap();
        assert!((r - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_decay_has_unit_ratio() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_eq!(stiffness_ratio(&sys, &point(vec![1.0])).unwrap(), 1.0);
    }

    #[test]
    fn robertson_is_stiff_near_start() {
        let traj = integrate_reference(&Robertson, &[1.0, 0.0, 0.0], 40.0, 1e-6).unwrap();
        assert!(stiffness_ratio(&Robertson, &traj).unwrap() > 1e4);
    }

    #[test]
    fn zero_jacobian_is_undefined() {
        let sys = LinearSystem::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(stiffness_ratio(&sys, &point(vec![1.0, 2.0])), Err(Error::Undefined(_))));
    }
}
