use nalgebra::{DMatrix, DVector};

use super::field::{check_batch, VectorField};
use super::rk4::LatentTrajectory;
use crate::error::{Error, Result};

/// Augmented state integrated backward in time. Columns are batch members; the
/// parameter accumulator is shared by the whole batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub y: DMatrix<f64>,
    /// `∂L/∂y(t)` per column.
    pub adjoint: DMatrix<f64>,
    pub grad_params: Vec<f64>,
    pub grad_t: Vec<f64>,
}

/// Sensitivities returned by [`adjoint_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointResult {
    pub dl_dy0: DMatrix<f64>,
    pub dl_dparams: Vec<f64>,
    pub dl_dt0: Vec<f64>,
    pub dl_dtn: Vec<f64>,
    /// Initial states recovered by the backward sweep.
    pub y0: DMatrix<f64>,
}

fn augmented_rhs(field: &dyn VectorField, aug: &AdjointState, t: &[f64], weights: &[f64]) -> Result<AdjointState> {
    if aug.adjoint.shape() != aug.y.shape() || aug.grad_t.len() != aug.y.ncols() {
        return Err(Error::Shape("adjoint blocks do not match the state batch".into()));
    }
    if aug.grad_params.len() != field.n_params() {
        return Err(Error::Shape(format!(
            "accumulator has {} entries, field has {} parameters",
            aug.grad_params.len(),
            field.n_params()
        )));
    }
    let v = field.vjp(&aug.y, t, &aug.adjoint, weights)?;
    Ok(AdjointState {
        y: v.value,
        adjoint: -v.state,
        grad_params: v.params.iter().map(|g| -g).collect(),
        grad_t: v.time.iter().map(|g| -g).collect(),
    })
}

/// Time derivative of the augmented state: `[f, -aᵀ∂f/∂y, -aᵀ∂f/∂params, -aᵀ∂f/∂t]`.
pub fn augmented_dynamics(field: &dyn VectorField, aug: &AdjointState, t: &[f64]) -> Result<AdjointState> {
    check_batch(field.dim(), &aug.y, t)?;
    augmented_rhs(field, aug, t, &vec![1.0; t.len()])
}

fn scale_columns(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &sj) in out.column_iter_mut().zip(s) {
        col *= sj;
    }
    out
}

fn advance(base: &AdjointState, d: &AdjointState, h: &[f64]) -> AdjointState {
    AdjointState {
        y: &base.y + scale_columns(&d.y, h),
        adjoint: &base.adjoint + scale_columns(&d.adjoint, h),
        grad_params: base.grad_params.clone(),
        grad_t: base.grad_t.iter().zip(&d.grad_t).zip(h).map(|((g, dg), hj)| g + hj * dg).collect(),
    }
}

/// Backward sweep of the augmented system from `tn` to `t0` with fixed-step RK4.
///
/// Column `j` of `y_tn` is the forward solution at `tn[j]` started at `t0[j]`;
/// `dl_dy_tn` holds `∂L/∂y(tn)`. The state is re-evolved backward alongside the adjoint.
pub fn adjoint_backward(
    field: &dyn VectorField,
    y_tn: &DMatrix<f64>,
    t0: &[f64],
    tn: &[f64],
    n_steps: usize,
    dl_dy_tn: &DMatrix<f64>,
) -> Result<AdjointResult> {
    let b = y_tn.ncols();
    check_batch(field.dim(), y_tn, tn)?;
    if dl_dy_tn.shape() != y_tn.shape() {
        return Err(Error::Shape(format!(
            "loss gradient is {:?}, latent batch is {:?}",
            dl_dy_tn.shape(),
            y_tn.shape()
        )));
    }
    if t0.len() != b {
        return Err(Error::Shape(format!("{} start times for {b} columns", t0.len())));
    }
    if n_steps == 0 {
        return Err(Error::Config("adjoint sweep needs at least one step".into()));
    }
    let f_tn = field.eval(y_tn, tn)?;
    let dl_dtn: Vec<f64> = (0..b).map(|j| dl_dy_tn.column(j).dot(&f_tn.column(j))).collect();
    let dt: Vec<f64> = t0.iter().zip(tn).map(|(a, z)| (a - z) / n_steps as f64).collect();
    let half: Vec<f64> = dt.iter().map(|h| 0.5 * h).collect();
    let mut s = AdjointState {
        y: y_tn.clone(),
        adjoint: dl_dy_tn.clone(),
        grad_params: vec![0.0; field.n_params()],
        grad_t: dl_dtn.iter().map(|g| -g).collect(),
    };
    for k in 0..n_steps {
        let t: Vec<f64> = tn.iter().zip(&dt).map(|(z, h)| z + k as f64 * h).collect();
        let t_mid: Vec<f64> = t.iter().zip(&half).map(|(a, h)| a + h).collect();
        let t_end: Vec<f64> = t.iter().zip(&dt).map(|(a, h)| a + h).collect();
        // Parameter derivatives come back already weighted by each column's step.
        let d1 = augmented_rhs(field, &s, &t, &dt)?;
        let d2 = augmented_rhs(field, &advance(&s, &d1, &half), &t_mid, &dt)?;
        let d3 = augmented_rhs(field, &advance(&s, &d2, &half), &t_mid, &dt)?;
        let d4 = augmented_rhs(field, &advance(&s, &d3, &dt), &t_end, &dt)?;
        let sixth: Vec<f64> = dt.iter().map(|h| h / 6.0).collect();
        let combo = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>| a + b * 2.0 + c * 2.0 + d;
        s.y += scale_columns(&combo(&d1.y, &d2.y, &d3.y, &d4.y), &sixth);
        s.adjoint += scale_columns(&combo(&d1.adjoint, &d2.adjoint, &d3.adjoint, &d4.adjoint), &sixth);
        for j in 0..b {
            s.grad_t[j] += sixth[j] * (d1.grad_t[j] + 2.0 * d2.grad_t[j] + 2.0 * d3.grad_t[j] + d4.grad_t[j]);
        }
        for (i, g) in s.grad_params.iter_mut().enumerate() {
            *g += (d1.grad_params[i] + 2.0 * d2.grad_params[i] + 2.0 * d3.grad_params[i] + d4.grad_params[i]) / 6.0;
        }
        if s.adjoint.iter().chain(s.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Integration { t: t_end[0], reason: "non-finite adjoint state".into() });
        }
    }
    Ok(AdjointResult { dl_dy0: s.adjoint, dl_dparams: s.grad_params, dl_dt0: s.grad_t, dl_dtn, y0: s.y })
}

/// Adjoint sweep over a stored single trajectory, on its own step grid.
pub fn adjoint_backward_trajectory(
    field: &dyn VectorField,
    traj: &LatentTrajectory,
    dl_dy_tn: &DVector<f64>,
) -> Result<AdjointResult> {
    if traj.len() < 2 {
        return Err(Error::Shape("trajectory needs at least two points".into()));
    }
    if dl_dy_tn.len() != traj.width() {
        return Err(Error::Shape(format!(
            "loss gradient has {} entries, trajectory width is {}",
            dl_dy_tn.len(),
            traj.width()
        )));
    }
    let y_tn = DMatrix::from_column_slice(traj.width(), 1, traj.last().as_slice());
    let g = DMatrix::from_column_slice(dl_dy_tn.len(), 1, dl_dy_tn.as_slice());
    adjoint_backward(field, &y_tn, &[traj.times[0]], &[*traj.times.last().unwrap()], traj.len() - 1, &g)
}
