use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::network::AENodeModel;
use crate::dynsys::{Dataset, Normalization, Trajectory};
use crate::error::{Error, Result};
use crate::node::{odesolve, LatentTrajectory};

/// Maps between physical units/seconds and the normalised training space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub norm: Normalization,
    pub time_scale: f64,
}

impl Scaling {
    pub fn of(dataset: &Dataset) -> Self {
        Self { norm: dataset.norm.clone(), time_scale: dataset.time_scale }
    }
}

/// How the latent solve is discretised between output times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LatentStepping {
    /// Fixed number of RK4 steps per output interval.
    PerInterval(usize),
    /// Steps no longer than this, in normalised time.
    MaxStep(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Decoded states in physical units, times in seconds.
    pub physical: Trajectory,
    /// Latent states at the output times (seconds).
    pub latent: LatentTrajectory,
}

/// Encodes `y0` once, integrates the latent state across `t_grid` (seconds) and decodes every output time.
pub fn predict_trajectory(
    model: &AENodeModel,
    scaling: &Scaling,
    y0: &[f64],
    t_grid: &[f64],
    stepping: LatentStepping,
) -> Result<Prediction> {
    if y0.len() != model.physical_dim() {
        return Err(Error::Shape(format!("initial state has {} entries, model expects {}", y0.len(), model.physical_dim())));
    }
    if t_grid.is_empty() {
        return Err(Error::Shape("empty time grid".into()));
    }
    if let Some(k) = t_grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(format!("time grid not strictly increasing at {}", k + 1)));
    }
    let u0 = scaling.norm.normalize(y0);
    let z0 = model.encode(&DMatrix::from_column_slice(u0.len(), 1, &u0))?;
    let nl = model.latent_dim();
    let field = model.field();
    let mut latent = DMatrix::zeros(t_grid.len(), nl);
    latent.set_row(0, &z0.column(0).transpose());
    let mut z = DVector::from_column_slice(z0.as_slice());
    for k in 1..t_grid.len() {
        let (a, b) = (t_grid[k - 1] / scaling.time_scale, t_grid[k] / scaling.time_scale);
        let steps = match stepping {
            LatentStepping::PerInterval(n) => n,
            LatentStepping::MaxStep(h) => {
                if !(h > 0.0) {
                    return Err(Error::Config(format!("latent step must be positive, got {h}")));
                }
                ((b - a) / h).ceil().max(1.0) as usize
            }
        };
        z = match odesolve(&field, &z, a, b, steps) {
            Ok(tr) => tr.last(),
            Err(Error::Divergence { reason, .. }) => {
                return Err(Error::Divergence { step: k, reason: format!("{reason}; last valid output index {}", k - 1) })
            }
            Err(e) => return Err(e),
        };
        latent.set_row(k, &z.transpose());
    }
    let decoded = model.decode(&latent.transpose())?;
    let states = decoded.column_iter().map(|c| scaling.norm.denormalize(c.as_slice())).collect();
    let physical = Trajectory::new(t_grid.to_vec(), states, Default::default())?;
    Ok(Prediction { physical, latent: LatentTrajectory { times: t_grid.to_vec(), states: latent } })
}

/// Per-variable `100 · ‖pred − truth‖ / ‖truth‖`; `None` where the truth is identically zero.
pub fn rrmse(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<Option<f64>>> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Shape(format!("{} predicted rows for {} truth rows", predicted.len(), truth.len())));
    }
    let dim = truth[0].len();
    if predicted.iter().chain(truth).any(|r| r.len() != dim) {
        return Err(Error::Shape("rows differ in width".into()));
    }
    let mut err = vec![0.0; dim];
    let mut norm = vec![0.0; dim];
    for (p, t) in predicted.iter().zip(truth) {
        for i in 0..dim {
            err[i] += (p[i] - t[i]).powi(2);
            norm[i] += t[i] * t[i];
        }
    }
    Ok((0..dim).map(|i| (norm[i] > 0.0).then(|| 100.0 * (err[i] / norm[i]).sqrt())).collect())
}

/// Hidden-layer activations of both stacks for a sequence of physical states.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrajectories {
    /// Encoder hidden layers, input side first; columns follow the input rows.
    pub encoder: Vec<DMatrix<f64>>,
    pub latent: DMatrix<f64>,
    /// Decoder hidden layers, latent side first.
    pub decoder: Vec<DMatrix<f64>>,
}

pub fn layer_trajectories(model: &AENodeModel, scaling: &Scaling, states: &[Vec<f64>]) -> Result<LayerTrajectories> {
    let rows: Vec<Vec<f64>> = states.iter().map(|s| scaling.norm.normalize(s)).collect();
    let y = super::network::columns(&rows, model.physical_dim())?;
    let (enc, dec) = model.autoencode_cached(&y)?;
    Ok(LayerTrajectories {
        encoder: enc.hidden().to_vec(),
        latent: enc.output().clone(),
        decoder: dec.hidden().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::ModelConfig;

    fn scaling() -> Scaling {
        Scaling {
            norm: Normalization { min: vec![0.0; 4], max: vec![1.0, 1.0, 1e-3, 2000.0], degenerate: vec![false; 4] },
            time_scale: 1e-2,
        }
    }

    #[test]
    fn single_point_grid_is_autoencoder() {
        let m = AENodeModel::new(ModelConfig::default(), 2).unwrap();
        let s = scaling();
        let y0 = vec![0.5, 0.1, 1e-4, 1200.0];
        let p = predict_trajectory(&m, &s, &y0, &[0.0], LatentStepping::PerInterval(4)).unwrap();
        let u = s.norm.normalize(&y0);
        let direct = m.decode(&m.encode(&DMatrix::from_column_slice(4, 1, &u)).unwrap()).unwrap();
        assert_eq!(p.physical.states[0], s.norm.denormalize(direct.as_slice()));
        assert_eq!(p.latent.width(), 3);
    }

    #[test]
    fn latent_width_at_every_step() {
        let m = AENodeModel::new(ModelConfig::default(), 2).unwrap();
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 1e-3).collect();
        let p = predict_trajectory(&m, &scaling(), &[0.5, 0.0, 0.0, 1100.0], &grid, LatentStepping::MaxStep(0.01)).unwrap();
        assert_eq!(p.latent.states.nrows(), 11);
        assert_eq!(p.latent.width(), 3);
        assert_eq!(p.physical.len(), 11);
    }

    #[test]
    fn rrmse_values() {
        let truth = vec![vec![1.0, 2.0], vec![3.0, -4.0]];
        assert_eq!(rrmse(&truth, &truth).unwrap(), vec![Some(0.0), Some(0.0)]);
        let scaled: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|v| v * 1.01).collect()).collect();
        for v in rrmse(&scaled, &truth).unwrap() {
            assert!((v.unwrap() - 1.0).abs() < 1e-9);
        }
        let zero = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        assert_eq!(rrmse(&zero, &zero).unwrap()[0], None);
        assert!(rrmse(&truth[..1], &truth).is_err());
    }
}
