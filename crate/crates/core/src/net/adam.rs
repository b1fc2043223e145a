use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        let n = params.n_params();
        Self { config, step: 0, first_moment: vec![0.0; n], second_moment: vec![0.0; n] }
    }

    /// Applies one bias-corrected update. On a non-finite gradient nothing is changed.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        adam_step(self, params, grads)
    }

    /// Update with the learning rate multiplied by `lr_scale`.
    pub fn step_scaled(&mut self, params: &mut MlpParams, grads: &MlpGrads, lr_scale: f64) -> Result<()> {
        adam_step_scaled(self, params, grads, lr_scale)
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
    adam_step_scaled(state, params, grads, 1.0)
}

fn adam_step_scaled(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads, lr_scale: f64) -> Result<()> {
    let g = grads.to_flat();
    let n = params.n_params();
    if g.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(Error::Shape(format!(
            "optimizer state for {} parameters, gradient has {}, network has {n}",
            state.first_moment.len(),
            g.len()
        )));
    }
    if let Some(k) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {k}")));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    let learning_rate = learning_rate * lr_scale;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut p = params.to_flat();
    for k in 0..n {
        let m = beta1 * state.first_moment[k] + (1.0 - beta1) * g[k];
        let v = beta2 * state.second_moment[k] + (1.0 - beta2) * g[k] * g[k];
        state.first_moment[k] = m;
        state.second_moment[k] = v;
        p[k] -= learning_rate * (m / c1) / ((v / c2).sqrt() + epsilon);
    }
    params.set_flat(&p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    fn constant_grads(p: &MlpParams, g: f64) -> MlpGrads {
        let mut grads = MlpGrads::zeros_like(p);
        for l in &mut grads.layers {
            l.weights.fill(g);
            l.bias.fill(g);
        }
        grads
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = init_params(&[3, 4, 2], 0).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        s.step(&mut p, &MlpGrads::zeros_like(&before)).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = init_params(&[3, 4, 2], 0).unwrap();
        let before = p.to_flat();
        let cfg = AdamConfig { learning_rate: 0.01, epsilon: 0.0, ..Default::default() };
        let mut s = AdamState::new(&p, cfg);
        let g = constant_grads(&p, 2.5);
        s.step(&mut p, &g).unwrap();
        for (a, b) in p.to_flat().iter().zip(&before) {
            assert!(((b - a) - 0.01).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_calls_identical_results() {
        let p0 = init_params(&[2, 5, 2], 3).unwrap();
        let g = constant_grads(&p0, -0.7);
        let run = || {
            let mut p = p0.clone();
            let mut s = AdamState::new(&p, AdamConfig::default());
            for _ in 0..5 {
                s.step(&mut p, &g).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_rejected_without_change() {
        let mut p = init_params(&[2, 3, 1], 3).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        let mut g = constant_grads(&p, 1.0);
        g.layers[1].bias[0] = f64::NAN;
        assert!(matches!(s.step(&mut p, &g), Err(Error::NonFinite(_))));
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }
}
