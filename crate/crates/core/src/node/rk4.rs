use nalgebra::{DMatrix, DVector};

use super::field::VectorField;
use crate::error::{Error, Result};

/// Any state entry beyond this magnitude counts as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e10;

/// Latent states on a time grid; row `k` is the state at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
}

impl LatentTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    pub fn last(&self) -> DVector<f64> {
        self.state(self.len() - 1)
    }
}

fn stage_check<S>(stage: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S>, t: f64) -> Result<()>
where
    S: nalgebra::storage::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
{
    if stage.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration { t, reason: "non-finite stage value".into() })
    }
}

/// One classical RK4 step of `dy/dt = f(y, t)`. Negative `dt` integrates backward.
pub fn rk4_step<F>(f: F, y: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::Domain(format!("step size must be finite and non-zero, got {dt}")));
    }
    let check = |v: DVector<f64>| -> Result<DVector<f64>> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Integration { t, reason: "non-finite stage value".into() })
        }
    };
    let k1 = check(f(y, t)?)?;
    let k2 = check(f(&(y + &k1 * (0.5 * dt)), t + 0.5 * dt)?)?;
    let k3 = check(f(&(y + &k2 * (0.5 * dt)), t + 0.5 * dt)?)?;
    let k4 = check(f(&(y + &k3 * dt), t + dt)?)?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &sj) in out.column_iter_mut().zip(s) {
        col *= sj;
    }
    out
}

/// RK4 step on a batch where column `j` advances from `t[j]` by `dt[j]`.
pub fn rk4_step_batch(field: &dyn VectorField, y: &DMatrix<f64>, t: &[f64], dt: &[f64]) -> Result<DMatrix<f64>> {
    if dt.len() != y.ncols() {
        return Err(Error::Shape(format!("{} step sizes for {} columns", dt.len(), y.ncols())));
    }
    let t0 = t.first().copied().unwrap_or(0.0);
    let half: Vec<f64> = dt.iter().map(|h| 0.5 * h).collect();
    let t_mid: Vec<f64> = t.iter().zip(dt).map(|(a, h)| a + 0.5 * h).collect();
    let t_end: Vec<f64> = t.iter().zip(dt).map(|(a, h)| a + h).collect();
    let k1 = field.eval(y, t)?;
    stage_check(&k1, t0)?;
    let k2 = field.eval(&(y + scale_columns(&k1, &half)), &t_mid)?;
    stage_check(&k2, t0)?;
    let k3 = field.eval(&(y + scale_columns(&k2, &half)), &t_mid)?;
    stage_check(&k3, t0)?;
    let k4 = field.eval(&(y + scale_columns(&k3, dt)), &t_end)?;
    stage_check(&k4, t0)?;
    let sixth: Vec<f64> = dt.iter().map(|h| h / 6.0).collect();
    Ok(y + scale_columns(&(k1 + k2 * 2.0 + k3 * 2.0 + k4), &sixth))
}

fn guard(y: &DMatrix<f64>, step: usize) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
        return Err(Error::Divergence { step, reason: format!("state entry {v:e}") });
    }
    Ok(())
}

fn check_spans(t0: &[f64], t1: &[f64], cols: usize, n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::Config("latent solve needs at least one step".into()));
    }
    if t0.len() != cols || t1.len() != cols {
        return Err(Error::Shape(format!("time spans given for {}/{} of {cols} columns", t0.len(), t1.len())));
    }
    if let Some(j) = (0..cols).find(|&j| !(t1[j] - t0[j]).is_finite() || t1[j] == t0[j]) {
        return Err(Error::Domain(format!("column {j} has an empty or non-finite time span")));
    }
    Ok(())
}

/// Fixed-step RK4 of every column from `t0[j]` to `t1[j]`; returns the end states.
pub fn odesolve_batch(
    field: &dyn VectorField,
    y0: &DMatrix<f64>,
    t0: &[f64],
    t1: &[f64],
    n_steps: usize,
) -> Result<DMatrix<f64>> {
    check_spans(t0, t1, y0.ncols(), n_steps)?;
    let dt: Vec<f64> = t0.iter().zip(t1).map(|(a, b)| (b - a) / n_steps as f64).collect();
    let mut y = y0.clone();
    for k in 0..n_steps {
        let t: Vec<f64> = t0.iter().zip(&dt).map(|(a, h)| a + k as f64 * h).collect();
        y = match rk4_step_batch(field, &y, &t, &dt) {
            Ok(v) => v,
            Err(Error::Integration { reason, .. }) => return Err(Error::Divergence { step: k, reason }),
            Err(e) => return Err(e),
        };
        guard(&y, k + 1)?;
    }
    Ok(y)
}

/// Fixed-step RK4 from `t0` to `t1 > t0`, keeping every step.
pub fn odesolve(field: &dyn VectorField, y0: &DVector<f64>, t0: f64, t1: f64, n_steps: usize) -> Result<LatentTrajectory> {
    if !(t1 > t0) {
        return Err(Error::Domain(format!("forward solve needs t1 > t0, got [{t0}, {t1}]")));
    }
    check_spans(&[t0], &[t1], 1, n_steps)?;
    let dt = (t1 - t0) / n_steps as f64;
    let mut states = DMatrix::zeros(n_steps + 1, y0.len());
    states.set_row(0, &y0.transpose());
    let mut times = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    let mut y = DMatrix::from_column_slice(y0.len(), 1, y0.as_slice());
    guard(&y, 0)?;
    for k in 0..n_steps {
        let t = t0 + k as f64 * dt;
        y = match rk4_step_batch(field, &y, &[t], &[dt]) {
            Ok(v) => v,
            Err(Error::Integration { reason, .. }) => return Err(Error::Divergence { step: k, reason }),
            Err(e) => return Err(e),
        };
        guard(&y, k + 1)?;
        states.set_row(k + 1, &y.column(0).transpose());
        times.push(if k + 1 == n_steps { t1 } else { t0 + (k + 1) as f64 * dt });
    }
    Ok(LatentTrajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::field::LinearField;
    use crate::node::oracle::expm;
    use approx::assert_relative_eq;

    #[test]
    fn constant_field_is_exact() {
        let c = DVector::from_vec(vec![1.5, -2.0]);
        let y = DVector::from_vec(vec![0.3, 0.4]);
        let next = rk4_step(|_, _| Ok(c.clone()), &y, 0.0, 0.25).unwrap();
        assert_eq!(next, &y + &c * 0.25);
    }

    #[test]
    fn exponential_growth_step() {
        let y = DVector::from_element(1, 1.0);
        let next = rk4_step(|v, _| Ok(v.clone()), &y, 0.0, 0.1).unwrap();
        assert_relative_eq!(next[0], 1.10517083, epsilon = 5e-9);
        assert!((next[0] - 0.1f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn decay_is_stable_inside_region() {
        let dt: f64 = 2.5;
        let amp: f64 = 1.0 - dt + dt * dt / 2.0 - dt.powi(3) / 6.0 + dt.powi(4) / 24.0;
        assert!(amp.abs() < 1.0);
        let mut y = DVector::from_element(1, 1.0);
        for _ in 0..200 {
            y = rk4_step(|v, _| Ok(-v), &y, 0.0, dt).unwrap();
        }
        assert!(y[0].abs() < 1e-3);
    }

    #[test]
    fn rejects_zero_step_and_nan_stage() {
        let y = DVector::from_element(1, 1.0);
        assert!(rk4_step(|v, _| Ok(v.clone()), &y, 0.0, 0.0).is_err());
        let r = rk4_step(|v, _| Ok(v * f64::NAN), &y, 0.0, 0.1);
        assert!(matches!(r, Err(Error::Integration { .. })));
    }

    #[test]
    fn zero_field_keeps_state() {
        let field = LinearField { matrix: DMatrix::zeros(3, 3) };
        let y0 = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let tr = odesolve(&field, &y0, 0.0, 1.0, 10).unwrap();
        assert_eq!(tr.len(), 11);
        for k in 0..tr.len() {
            assert_eq!(tr.state(k), y0);
        }
        assert_eq!(tr.times[10], 1.0);
    }

    #[test]
    fn linear_field_matches_matrix_exponential() {
        let w = DMatrix::from_row_slice(3, 3, &[-0.5, 1.0, 0.0, -1.0, -0.5, 0.2, 0.1, 0.0, -1.5]);
        let field = LinearField { matrix: w.clone() };
        let y0 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
        let tr = odesolve(&field, &y0, 0.0, 1.0, 100).unwrap();
        let exact = expm(&w) * &y0;
        assert!((tr.last() - exact).amax() < 1e-6);
    }

    #[test]
    fn convergence_order_is_four() {
        // Nonlinear, non-autonomous smooth problem: y' = -y^2 + cos(t), compared to a very fine solve.
        let f = |y: &DVector<f64>, t: f64| Ok(DVector::from_element(1, -y[0] * y[0] + t.cos()));
        let solve = |n: usize| {
            let dt = 2.0 / n as f64;
            let mut y = DVector::from_element(1, 0.5);
            for k in 0..n {
                y = rk4_step(f, &y, k as f64 * dt, dt).unwrap();
            }
            y[0]
        };
        let fine = solve(1 << 14);
        let e1 = (solve(16) - fine).abs();
        let e2 = (solve(32) - fine).abs();
        let order = (e1 / e2).log2();
        assert!((3.7..=4.3).contains(&order), "order {order}");
    }

    #[test]
    fn batch_solve_matches_single_columns() {
        let w = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let field = LinearField { matrix: w };
        let y0 = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.5, -0.5]);
        let ends = odesolve_batch(&field, &y0, &[0.0, 0.2], &[0.5, 1.0], 8).unwrap();
        for (j, (a, b)) in [(0.0, 0.5), (0.2, 1.0)].into_iter().enumerate() {
            let tr = odesolve(&field, &y0.column(j).into_owned(), a, b, 8).unwrap();
            assert!((tr.last() - ends.column(j)).amax() < 1e-15);
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let field = LinearField { matrix: DMatrix::from_element(1, 1, 50.0) };
        let y0 = DVector::from_element(1, 1.0);
        match odesolve(&field, &y0, 0.0, 1.0, 10) {
            Err(Error::Divergence { step, .. }) => assert!(step > 0 && step <= 10),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
