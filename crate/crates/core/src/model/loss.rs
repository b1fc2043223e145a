use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::network::{columns, AENodeModel};
use crate::dynsys::PairBatch;
use crate::error::{Error, Result};
use crate::net::{mlp_backward, MlpGrads};
use crate::node::{adjoint_backward, odesolve_batch};

/// Snapshot pairs as column matrices in normalised units.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrices {
    pub current: DMatrix<f64>,
    pub next: DMatrix<f64>,
    /// Start time of each pair.
    pub time: Vec<f64>,
    pub dt: Vec<f64>,
}

impl PairMatrices {
    pub fn from_batch(batch: &PairBatch, width: usize) -> Result<Self> {
        let current = columns(&batch.current, width)?;
        let next = columns(&batch.next, width)?;
        Self::new(current, next, batch.time.clone(), batch.dt.clone())
    }

    pub fn new(current: DMatrix<f64>, next: DMatrix<f64>, time: Vec<f64>, dt: Vec<f64>) -> Result<Self> {
        let b = current.ncols();
        if next.shape() != current.shape() || time.len() != b || dt.len() != b {
            return Err(Error::Shape("pair matrices, times and steps disagree in size".into()));
        }
        if b == 0 {
            return Err(Error::Shape("empty pair batch".into()));
        }
        if let Some(j) = dt.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::Domain(format!("pair {j} has non-positive time step {}", dt[j])));
        }
        Ok(Self { current, next, time, dt })
    }

    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }

    pub fn end_times(&self) -> Vec<f64> {
        self.time.iter().zip(&self.dt).map(|(t, d)| t + d).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.current.select_columns(idx),
            self.next.select_columns(idx),
            idx.iter().map(|&k| self.time[k]).collect(),
            idx.iter().map(|&k| self.dt[k]).collect(),
        )
    }
}

/// Batch-mean Euclidean norms of the three residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    #[serde(with = "super::checkpoint::finite_or_null")]
    pub l1: f64,
    #[serde(with = "super::checkpoint::finite_or_null")]
    pub l2: f64,
    #[serde(with = "super::checkpoint::finite_or_null")]
    pub l3: f64,
}

impl LossComponents {
    pub fn weighted(&self, eps: [f64; 3]) -> f64 {
        eps[0] * self.l1 + eps[1] * self.l2 + eps[2] * self.l3
    }

    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.l2.is_finite() && self.l3.is_finite()
    }
}

/// Batch residual norm scaled to one sample, `‖R‖_F / sqrt(B)`, and its gradient.
fn mean_norm(r: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let b = r.ncols() as f64;
    let loss = r.norm() / b.sqrt();
    if loss > 0.0 {
        (loss, r / (b * loss))
    } else {
        (0.0, DMatrix::zeros(r.nrows(), r.ncols()))
    }
}

fn solve(model: &AENodeModel, z0: &DMatrix<f64>, pairs: &PairMatrices) -> Result<DMatrix<f64>> {
    odesolve_batch(&model.field(), z0, &pairs.time, &pairs.end_times(), model.config.solver_steps)
}

pub fn loss_components(model: &AENodeModel, pairs: &PairMatrices) -> Result<LossComponents> {
    let z_now = model.encode(&pairs.current)?;
    let z_next = model.encode(&pairs.next)?;
    let z_pred = solve(model, &z_now, pairs)?;
    let l1 = mean_norm(&(model.decode(&z_pred)? - &pairs.next)).0;
    let l2 = mean_norm(&(model.decode(&z_next)? - &pairs.next)).0;
    let l3 = mean_norm(&(&z_next - z_pred)).0;
    Ok(LossComponents { l1, l2, l3 })
}

/// L1 with the encoder output of the current states replaced by `z0`.
pub fn l1_from_latent(model: &AENodeModel, z0: &DMatrix<f64>, pairs: &PairMatrices) -> Result<f64> {
    let z_pred = solve(model, z0, pairs)?;
    Ok(mean_norm(&(model.decode(&z_pred)? - &pairs.next)).0)
}

/// L3 with the encoder output of the current states replaced by `z0`.
pub fn l3_from_latent(model: &AENodeModel, z0: &DMatrix<f64>, pairs: &PairMatrices) -> Result<f64> {
    let z_pred = solve(model, z0, pairs)?;
    Ok(mean_norm(&(model.encode(&pairs.next)? - z_pred)).0)
}

/// One loss term with the gradients of the networks it touches.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub encoder: Option<MlpGrads>,
    pub node: Option<MlpGrads>,
    pub decoder: Option<MlpGrads>,
    /// `∂L/∂ŷ(t0)` per pair, when the term runs through the latent solve.
    pub dl_dlatent0: Option<DMatrix<f64>>,
    pub dl_dt0: Vec<f64>,
    pub dl_dtn: Vec<f64>,
}

/// Combined path: decoder backprop, adjoint sweep through the latent solve, encoder backprop.
pub fn l1_gradient(model: &AENodeModel, pairs: &PairMatrices) -> Result<LossGradient> {
    let (z_now, enc_cache) = model.encoder.forward_cached(&pairs.current)?;
    let tn = pairs.end_times();
    let z_pred = solve(model, &z_now, pairs)?;
    let (y_pred, dec_cache) = model.decoder.forward_cached(&z_pred)?;
    let (loss, g_out) = mean_norm(&(y_pred - &pairs.next));
    let (g_dec, g_zpred) = mlp_backward(&model.decoder, &dec_cache, &g_out)?;
    let adj = adjoint_backward(&model.field(), &z_pred, &pairs.time, &tn, model.config.solver_steps, &g_zpred)?;
    let (g_enc, _) = mlp_backward(&model.encoder, &enc_cache, &adj.dl_dy0)?;
    Ok(LossGradient {
        loss,
        encoder: Some(g_enc),
        node: Some(MlpGrads::from_flat(&model.node, &adj.dl_dparams)?),
        decoder: Some(g_dec),
        dl_dlatent0: Some(adj.dl_dy0),
        dl_dt0: adj.dl_dt0,
        dl_dtn: adj.dl_dtn,
    })
}

/// Autoencoder path on the next states.
pub fn l2_gradient(model: &AENodeModel, pairs: &PairMatrices) -> Result<LossGradient> {
    let (z, enc_cache) = model.encoder.forward_cached(&pairs.next)?;
    let (y, dec_cache) = model.decoder.forward_cached(&z)?;
    let (loss, g_out) = mean_norm(&(y - &pairs.next));
    let (g_dec, g_z) = mlp_backward(&model.decoder, &dec_cache, &g_out)?;
    let (g_enc, _) = mlp_backward(&model.encoder, &enc_cache, &g_z)?;
    Ok(LossGradient {
        loss,
        encoder: Some(g_enc),
        node: None,
        decoder: Some(g_dec),
        dl_dlatent0: None,
        dl_dt0: vec![0.0; pairs.len()],
        dl_dtn: vec![0.0; pairs.len()],
    })
}

/// Latent path: adjoint sweep to the encoded current state, plus the encoded target.
pub fn l3_gradient(model: &AENodeModel, pairs: &PairMatrices) -> Result<LossGradient> {
    let (z_now, now_cache) = model.encoder.forward_cached(&pairs.current)?;
    let (z_next, next_cache) = model.encoder.forward_cached(&pairs.next)?;
    let tn = pairs.end_times();
    let z_pred = solve(model, &z_now, pairs)?;
    let (loss, g_pred) = mean_norm(&(&z_pred - z_next));
    let adj = adjoint_backward(&model.field(), &z_pred, &pairs.time, &tn, model.config.solver_steps, &g_pred)?;
    let (mut g_enc, _) = mlp_backward(&model.encoder, &now_cache, &adj.dl_dy0)?;
    let (g_target, _) = mlp_backward(&model.encoder, &next_cache, &(-g_pred))?;
    g_enc.axpy(1.0, &g_target);
    Ok(LossGradient {
        loss,
        encoder: Some(g_enc),
        node: Some(MlpGrads::from_flat(&model.node, &adj.dl_dparams)?),
        decoder: None,
        dl_dlatent0: Some(adj.dl_dy0),
        dl_dt0: adj.dl_dt0,
        dl_dtn: adj.dl_dtn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::ModelConfig;
    use crate::net::{Layer, MlpParams};
    use nalgebra::DVector;

    fn scalar_net(w: f64) -> MlpParams {
        MlpParams::new(
            vec![Layer { weights: DMatrix::from_element(1, 1, w), bias: DVector::zeros(1) }],
            1.0,
        )
        .unwrap()
    }

    fn hand_model() -> AENodeModel {
        let config = ModelConfig { physical_dim: 1, latent_dim: 1, width: 1, depth: 0, time_input: false, solver_steps: 3 };
        AENodeModel::from_parts(config, scalar_net(2.0), scalar_net(0.0), scalar_net(0.5)).unwrap()
    }

    fn one_pair(a: f64, b: f64) -> PairMatrices {
        PairMatrices::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), vec![0.0], vec![0.1]).unwrap()
    }

    #[test]
    fn hand_built_linear_model() {
        let m = hand_model();
        let l = loss_components(&m, &one_pair(1.0, 1.0)).unwrap();
        assert_eq!((l.l1, l.l2, l.l3), (0.0, 0.0, 0.0));
        let l = loss_components(&m, &one_pair(1.0, 2.0)).unwrap();
        assert_eq!((l.l1, l.l2, l.l3), (1.0, 0.0, 2.0));
    }

    #[test]
    fn losses_non_negative() {
        let m = AENodeModel::new(ModelConfig { width: 8, depth: 2, ..Default::default() }, 1).unwrap();
        let p = PairMatrices::new(
            DMatrix::from_fn(4, 5, |i, j| (i * j) as f64 * 0.1),
            DMatrix::from_fn(4, 5, |i, j| (i + j) as f64 * 0.1),
            vec![0.0, 0.1, 0.2, 0.3, 0.4],
            vec![0.05; 5],
        )
        .unwrap();
        let l = loss_components(&m, &p).unwrap();
        assert!(l.l1 >= 0.0 && l.l2 >= 0.0 && l.l3 >= 0.0);
    }

    #[test]
    fn zero_residual_has_zero_gradient() {
        let m = hand_model();
        let g = l2_gradient(&m, &one_pair(1.0, 1.0)).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.encoder.unwrap().to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_pairs() {
        assert!(PairMatrices::new(DMatrix::zeros(2, 1), DMatrix::zeros(2, 1), vec![0.0], vec![0.0]).is_err());
        assert!(PairMatrices::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), vec![0.0], vec![0.1]).is_err());
    }
}
