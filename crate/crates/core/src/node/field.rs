use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::net::{mlp_backward_weighted, MlpParams};

/// Value and vector-Jacobian products of a field at one batch of points.
#[derive(Debug, Clone)]
pub struct Vjp {
    /// `f(y, t)` per column.
    pub value: DMatrix<f64>,
    /// `cotᵀ ∂f/∂y` per column.
    pub state: DMatrix<f64>,
    /// `cotᵀ ∂f/∂t` per column.
    pub time: Vec<f64>,
    /// `Σ_j w_j cot_jᵀ ∂f_j/∂params`, flattened like the field's parameters.
    pub params: Vec<f64>,
}

/// Latent vector field evaluated column-wise on a batch; each column has its own time.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    fn n_params(&self) -> usize;

    fn eval(&self, y: &DMatrix<f64>, t: &[f64]) -> Result<DMatrix<f64>>;

    /// `weights` scale each column's contribution to the parameter products.
    fn vjp(&self, y: &DMatrix<f64>, t: &[f64], cot: &DMatrix<f64>, weights: &[f64]) -> Result<Vjp>;
}

pub(crate) fn check_batch(dim: usize, y: &DMatrix<f64>, t: &[f64]) -> Result<()> {
    if y.nrows() != dim {
        return Err(Error::Shape(format!("state has {} rows, field dimension is {dim}", y.nrows())));
    }
    if t.len() != y.ncols() {
        return Err(Error::Shape(format!("{} times for {} columns", t.len(), y.ncols())));
    }
    Ok(())
}

/// `f(y) = W y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    pub matrix: DMatrix<f64>,
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn n_params(&self) -> usize {
        self.matrix.len()
    }

    fn eval(&self, y: &DMatrix<f64>, t: &[f64]) -> Result<DMatrix<f64>> {
        check_batch(self.dim(), y, t)?;
        Ok(&self.matrix * y)
    }

    fn vjp(&self, y: &DMatrix<f64>, t: &[f64], cot: &DMatrix<f64>, weights: &[f64]) -> Result<Vjp> {
        check_batch(self.dim(), y, t)?;
        if cot.shape() != y.shape() || weights.len() != y.ncols() {
            return Err(Error::Shape("cotangent or weights do not match the batch".into()));
        }
        let mut scaled = cot.clone();
        for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
            col *= w;
        }
        let grad_w = scaled * y.transpose();
        Ok(Vjp {
            value: &self.matrix * y,
            state: self.matrix.transpose() * cot,
            time: vec![0.0; y.ncols()],
            params: grad_w.iter().copied().collect(),
        })
    }
}

/// Neural vector field backed by an MLP, optionally fed the time as an extra input.
#[derive(Debug, Clone, Copy)]
pub struct NodeField<'a> {
    pub params: &'a MlpParams,
    pub time_input: bool,
}

impl<'a> NodeField<'a> {
    pub fn new(params: &'a MlpParams, time_input: bool) -> Result<Self> {
        let extra = usize::from(time_input);
        if params.input_dim() != params.output_dim() + extra {
            return Err(Error::Shape(format!(
                "vector field maps {} inputs to {} outputs; time input {}",
                params.input_dim(),
                params.output_dim(),
                if time_input { "on" } else { "off" }
            )));
        }
        Ok(Self { params, time_input })
    }

    fn input(&self, y: &DMatrix<f64>, t: &[f64]) -> DMatrix<f64> {
        if !self.time_input {
            return y.clone();
        }
        let mut x = y.clone().insert_row(y.nrows(), 0.0);
        let last = y.nrows();
        for (j, &tj) in t.iter().enumerate() {
            x[(last, j)] = tj;
        }
        x
    }
}

impl VectorField for NodeField<'_> {
    fn dim(&self) -> usize {
        self.params.output_dim()
    }

    fn n_params(&self) -> usize {
        self.params.n_params()
    }

    fn eval(&self, y: &DMatrix<f64>, t: &[f64]) -> Result<DMatrix<f64>> {
        check_batch(self.dim(), y, t)?;
        self.params.forward(&self.input(y, t))
    }

    fn vjp(&self, y: &DMatrix<f64>, t: &[f64], cot: &DMatrix<f64>, weights: &[f64]) -> Result<Vjp> {
        check_batch(self.dim(), y, t)?;
        let (value, cache) = self.params.forward_cached(&self.input(y, t))?;
        let (grads, gin) = mlp_backward_weighted(self.params, &cache, cot, Some(weights))?;
        let d = self.dim();
        let time = if self.time_input { gin.row(d).iter().copied().collect() } else { vec![0.0; y.ncols()] };
        Ok(Vjp { value, state: gin.rows(0, d).into_owned(), time, params: grads.to_flat() })
    }
}
