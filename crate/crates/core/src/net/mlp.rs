use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_ELU_ALPHA: f64 = 1.0;

/// Exponential linear unit.
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`] with respect to its input.
pub fn elu_derivative(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

/// One affine map `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { weights: DMatrix::zeros(rows, cols), bias: DVector::zeros(rows) }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

/// Fully connected network: ELU on hidden layers, identity on the output layer.
///
/// Batches are stored column-wise, so an input batch is `width × batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub alpha: f64,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, alpha: f64) -> Result<Self> {
        let p = Self { layers, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("ELU alpha must be positive, got {}", self.alpha)));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::Shape(format!(
                    "layer {l}: bias has {} entries for {} outputs",
                    layer.bias.len(),
                    layer.fan_out()
                )));
            }
            if l > 0 && self.layers[l - 1].fan_out() != layer.fan_in() {
                return Err(Error::Shape(format!(
                    "layer {l} expects {} inputs but layer {} produces {}",
                    layer.fan_in(),
                    l - 1,
                    self.layers[l - 1].fan_out()
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    /// Layer widths including the input width.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Layer::fan_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::fan_out)
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Parameters as one vector: per layer, weights column-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.n_params())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(mlp_forward(self, input, false)?.0)
    }

    pub fn forward_cached(&self, input: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        let (out, cache) = mlp_forward(self, input, true)?;
        Ok((out, cache.expect("record requested")))
    }
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: DMatrix<f64>,
    /// Affine outputs per layer.
    pub pre: Vec<DMatrix<f64>>,
    /// Activated outputs per layer; the last entry is the network output.
    pub post: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.ncols()
    }

    /// Hidden-layer activations, input side first.
    pub fn hidden(&self) -> &[DMatrix<f64>] {
        &self.post[..self.post.len() - 1]
    }

    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("non-empty cache")
    }
}

pub fn mlp_forward(
    params: &MlpParams,
    input: &DMatrix<f64>,
    record: bool,
) -> Result<(DMatrix<f64>, Option<ForwardCache>)> {
    if input.nrows() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} rows, network expects {}",
            input.nrows(),
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut pre_all = Vec::new();
    let mut post_all = Vec::new();
    let mut act = input.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = &layer.weights * &act;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        let a = if l == last { z.clone() } else { z.map(|v| elu(v, params.alpha)) };
        if record {
            pre_all.push(z);
            post_all.push(a.clone());
        }
        act = a;
    }
    let cache = record.then(|| ForwardCache { input: input.clone(), pre: pre_all, post: post_all });
    Ok((act, cache))
}

/// Gradients shaped like an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self { layers: params.layers.iter().map(|l| Layer::zeros(l.fan_out(), l.fan_in())).collect() }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights * scale;
            a.bias += &b.bias * scale;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights *= s;
            l.bias *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn from_flat(params: &MlpParams, flat: &[f64]) -> Result<Self> {
        let mut g = Self::zeros_like(params);
        let n: usize = g.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if flat.len() != n {
            return Err(Error::Shape(format!("{} values for {n} gradient entries", flat.len())));
        }
        let mut k = 0;
        for l in &mut g.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = flat[k];
                k += 1;
            }
        }
        Ok(g)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Reverse pass through a recorded forward call.
///
/// `grad_output` is `∂L/∂output` with the same shape as the network output.
/// Returns parameter gradients and `∂L/∂input`.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &DMatrix<f64>,
) -> Result<(MlpGrads, DMatrix<f64>)> {
    mlp_backward_weighted(params, cache, grad_output, None)
}

/// Like [`mlp_backward`], but batch column `j` contributes to the parameter
/// gradients with weight `column_weights[j]`. The input gradient is unweighted.
pub fn mlp_backward_weighted(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &DMatrix<f64>,
    column_weights: Option<&[f64]>,
) -> Result<(MlpGrads, DMatrix<f64>)> {
    let n = params.layers.len();
    if cache.pre.len() != n || cache.post.len() != n {
        return Err(Error::Shape(format!("cache has {} layers, network has {n}", cache.pre.len())));
    }
    let batch = cache.batch_size();
    if grad_output.nrows() != params.output_dim() || grad_output.ncols() != batch {
        return Err(Error::Shape(format!(
            "output gradient is {}x{}, expected {}x{batch}",
            grad_output.nrows(),
            grad_output.ncols(),
            params.output_dim()
        )));
    }
    for (l, layer) in params.layers.iter().enumerate() {
        if cache.pre[l].nrows() != layer.fan_out() || cache.pre[l].ncols() != batch {
            return Err(Error::Shape(format!("cache layer {l} does not match network")));
        }
    }
    if let Some(w) = column_weights {
        if w.len() != batch {
            return Err(Error::Shape(format!("{} column weights for batch of {batch}", w.len())));
        }
    }
    let mut grads = MlpGrads::zeros_like(params);
    let mut delta = grad_output.clone();
    for l in (0..n).rev() {
        if l + 1 < n {
            let alpha = params.alpha;
            delta.zip_apply(&cache.pre[l], |d, z| *d *= elu_derivative(z, alpha));
        }
        let prev = if l == 0 { &cache.input } else { &cache.post[l - 1] };
        match column_weights {
            None => {
                grads.layers[l].weights = &delta * prev.transpose();
                grads.layers[l].bias = delta.column_sum();
            }
            Some(w) => {
                let mut scaled = delta.clone();
                for (mut col, &wj) in scaled.column_iter_mut().zip(w) {
                    col *= wj;
                }
                grads.layers[l].weights = &scaled * prev.transpose();
                grads.layers[l].bias = scaled.column_sum();
            }
        }
        delta = params.layers[l].weights.transpose() * &delta;
    }
    Ok((grads, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0, 1.0), 0.0);
        assert_eq!(elu(3.0, 1.0), 3.0);
        assert_relative_eq!(elu(-1.0, 1.0), (-1.0f64).exp() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(elu(-1.0, 1.0), -0.632121, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn elu_strictly_increasing(a in -30.0f64..30.0, d in 1e-6f64..5.0) {
            prop_assert!(elu(a + d, 1.0) > elu(a, 1.0));
        }
    }

    #[test]
    fn elu_derivative_continuous_at_zero() {
        let left = elu_derivative(-1e-12, 1.0);
        let right = elu_derivative(1e-12, 1.0);
        assert!((left - right).abs() < 1e-11);
    }

    fn single(weights: DMatrix<f64>, bias: DVector<f64>) -> MlpParams {
        MlpParams::new(vec![Layer { weights, bias }], 1.0).unwrap()
    }

    #[test]
    fn identity_layer_passes_input() {
        let p = single(DMatrix::identity(3, 3), DVector::zeros(3));
        let x = DMatrix::from_column_slice(3, 2, &[0.5, 1.0, 2.0, 3.0, 0.1, 0.2]);
        assert_eq!(p.forward(&x).unwrap(), x);
        let g = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 4.0, -1.0]);
        let (_, cache) = p.forward_cached(&x).unwrap();
        let (_, gin) = mlp_backward(&p, &cache, &g).unwrap();
        assert_eq!(gin, g);
    }

    #[test]
    fn zero_weights_give_bias() {
        let b = DVector::from_vec(vec![0.3, -2.0]);
        let p = single(DMatrix::zeros(2, 3), b.clone());
        let x = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64 - 1.0);
        let y = p.forward(&x).unwrap();
        for col in y.column_iter() {
            assert_eq!(col, b);
        }
    }

    #[test]
    fn two_layer_hand_computation() {
        let l1 = Layer {
            weights: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 1.0]),
            bias: DVector::from_vec(vec![0.0, 0.25]),
        };
        let l2 = Layer { weights: DMatrix::from_row_slice(1, 2, &[2.0, -1.0]), bias: DVector::from_vec(vec![0.5]) };
        let p = MlpParams::new(vec![l1, l2], 1.0).unwrap();
        let x = DMatrix::from_column_slice(2, 1, &[0.5, -0.5]);
        // hidden pre-activations: (0.5 - 1.0, -0.5 - 0.5 + 0.25) = (-0.5, -0.75)
        let h = [(-0.5f64).exp_m1(), (-0.75f64).exp_m1()];
        let expected = 2.0 * h[0] - h[1] + 0.5;
        assert_relative_eq!(p.forward(&x).unwrap()[(0, 0)], expected, epsilon = 1e-15);
    }

    #[test]
    fn linear_layer_weight_gradient() {
        let p = single(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 0.5, 0.0]), DVector::zeros(2));
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 0.0, 0.5]);
        let g = DMatrix::from_column_slice(2, 2, &[0.1, 0.2, -0.3, 0.4]);
        let (_, cache) = p.forward_cached(&x).unwrap();
        let (grads, _) = mlp_backward(&p, &cache, &g).unwrap();
        assert_eq!(grads.layers[0].weights, &g * x.transpose());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let p = init_params(&[3, 4, 2], 1).unwrap();
        assert!(matches!(p.forward(&DMatrix::zeros(2, 1)), Err(Error::Shape(_))));
        let (_, cache) = p.forward_cached(&DMatrix::zeros(3, 5)).unwrap();
        assert!(mlp_backward(&p, &cache, &DMatrix::zeros(2, 4)).is_err());
        let other = init_params(&[3, 6, 2], 1).unwrap();
        assert!(mlp_backward(&other, &cache, &DMatrix::zeros(2, 5)).is_err());
    }

    #[test]
    fn cache_exposes_hidden_layers() {
        let p = init_params(&[3, 5, 5, 5, 2], 4).unwrap();
        let (_, cache) = p.forward_cached(&DMatrix::from_element(3, 7, 0.3)).unwrap();
        assert_eq!(cache.hidden().len(), 3);
        assert_eq!(cache.hidden().len(), p.hidden_count());
        assert!(cache.hidden().iter().all(|h| h.ncols() == 7));
    }

    fn scalar_loss(p: &MlpParams, x: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
        let y = p.forward(x).unwrap();
        (y - target).map(|v| v * v).sum() * 0.5 + p.forward(x).unwrap().map(f64::sin).sum()
    }

    fn check_gradients(p: &MlpParams, x: &DMatrix<f64>, target: &DMatrix<f64>, tol: f64) {
        let (y, cache) = p.forward_cached(x).unwrap();
        let gout = (&y - target) + y.map(f64::cos);
        let (grads, gin) = mlp_backward(p, &cache, &gout).unwrap();
        let h = 1e-5;
        let analytic = grads.to_flat();
        let base = p.to_flat();
        let mut probe = p.clone();
        for k in 0..base.len() {
            let mut v = base.clone();
            v[k] += h;
            probe.set_flat(&v).unwrap();
            let up = scalar_loss(&probe, x, target);
            v[k] -= 2.0 * h;
            probe.set_flat(&v).unwrap();
            let down = scalar_loss(&probe, x, target);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
            assert!(err < tol, "param {k}: fd {fd} analytic {}", analytic[k]);
        }
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let up = scalar_loss(p, &xp, target);
            xp[k] -= 2.0 * h;
            let down = scalar_loss(p, &xp, target);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - gin[k]).abs() / fd.abs().max(gin[k].abs()).max(1e-3);
            assert!(err < tol, "input {k}: fd {fd} analytic {}", gin[k]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = init_params(&[3, 4, 2], 11).unwrap();
        let x = DMatrix::from_column_slice(3, 3, &[0.2, -0.7, 1.1, 0.9, 0.3, -0.4, -1.2, 0.05, 0.6]);
        let target = DMatrix::from_column_slice(2, 3, &[0.1, 0.2, 0.3, -0.4, 0.5, 0.0]);
        check_gradients(&p, &x, &target, 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_net_gradients(seed in 0u64..10_000, width in 1usize..6, depth in 1usize..4, batch in 1usize..4) {
            let mut dims = vec![2];
            dims.extend(std::iter::repeat(width).take(depth));
            dims.push(3);
            let p = init_params(&dims, seed).unwrap();
            let x = DMatrix::from_fn(2, batch, |i, j| ((seed as usize + 3 * i + 7 * j) % 13) as f64 / 6.0 - 1.0);
            let target = DMatrix::from_fn(3, batch, |i, j| (i as f64 - j as f64) * 0.3);
            check_gradients(&p, &x, &target, 1e-4);
        }
    }

    #[test]
    fn weighted_backward_scales_columns() {
        let p = init_params(&[2, 5, 3], 21).unwrap();
        let x = DMatrix::from_fn(2, 3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.2);
        let g = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 0.4);
        let w = [0.5, -2.0, 3.0];
        let (_, cache) = p.forward_cached(&x).unwrap();
        let (weighted, gin) = mlp_backward_weighted(&p, &cache, &g, Some(&w)).unwrap();
        let mut expected = MlpGrads::zeros_like(&p);
        for j in 0..3 {
            let (_, c) = p.forward_cached(&x.columns(j, 1).into_owned()).unwrap();
            let (gj, _) = mlp_backward(&p, &c, &g.columns(j, 1).into_owned()).unwrap();
            expected.axpy(w[j], &gj);
        }
        for (a, b) in weighted.to_flat().iter().zip(expected.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(gin, mlp_backward(&p, &cache, &g).unwrap().1);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let p = init_params(&[4, 16, 16, 3], 2).unwrap();
        let x = DMatrix::from_fn(4, 9, |i, j| (i as f64 * 0.37 - j as f64 * 0.11).sin());
        assert_eq!(p.forward(&x).unwrap(), p.forward(&x).unwrap());
    }

    #[test]
    fn batch_columns_are_independent() {
        let p = init_params(&[3, 8, 2], 5).unwrap();
        let x = DMatrix::from_fn(3, 6, |i, j| (i + 2 * j) as f64 * 0.1 - 0.4);
        let all = p.forward(&x).unwrap();
        for j in 0..6 {
            let one = p.forward(&x.columns(j, 1).into_owned()).unwrap();
            assert!((one.column(0) - all.column(j)).amax() < 1e-14);
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut p = init_params(&[3, 4, 2], 9).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_params());
        let before = p.clone();
        p.set_flat(&flat).unwrap();
        assert_eq!(p, before);
        assert!(p.set_flat(&flat[1..]).is_err());
    }
}
