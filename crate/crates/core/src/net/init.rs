use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Layer, MlpParams, DEFAULT_ELU_ALPHA};
use crate::error::{Error, Result};

/// Glorot-uniform weights and zero biases, reproducible per seed.
pub fn init_params(dims: &[usize], seed: u64) -> Result<MlpParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(dims, &mut rng)
}

pub fn init_params_with<R: Rng>(dims: &[usize], rng: &mut R) -> Result<MlpParams> {
    if dims.len() < 2 {
        return Err(Error::Config(format!("need input and output widths, got {dims:?}")));
    }
    if let Some(k) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Config(format!("layer {k} has zero width in {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // Column-major fill so the draw order matches the flat layout.
            let weights = DMatrix::from_iterator(
                fan_out,
                fan_in,
                (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)),
            );
            Layer { weights, bias: DVector::zeros(fan_out) }
        })
        .collect();
    MlpParams::new(layers, DEFAULT_ELU_ALPHA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        assert_eq!(init_params(&[4, 8, 3], 17).unwrap(), init_params(&[4, 8, 3], 17).unwrap());
        assert_ne!(init_params(&[4, 8, 3], 17).unwrap(), init_params(&[4, 8, 3], 18).unwrap());
    }

    #[test]
    fn biases_zero_and_weights_bounded() {
        let p = init_params(&[5, 7, 2], 1).unwrap();
        for l in &p.layers {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let limit = (6.0 / (l.fan_in() + l.fan_out()) as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn weight_mean_within_three_standard_errors() {
        let p = init_params(&[400, 250], 123).unwrap();
        let w: Vec<f64> = p.layers[0].weights.iter().copied().collect();
        assert_eq!(w.len(), 100_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
        let limit: f64 = (6.0f64 / 650.0).sqrt();
        assert!((var - limit * limit / 3.0).abs() < 0.02 * limit * limit);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(matches!(init_params(&[3], 0), Err(Error::Config(_))));
        assert!(matches!(init_params(&[3, 0, 2], 0), Err(Error::Config(_))));
    }
}
