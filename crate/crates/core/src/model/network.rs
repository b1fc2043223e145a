use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{init_params_with, ForwardCache, MlpParams, MlpRecord};
use crate::node::NodeField;

/// Architecture of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Physical state width.
    pub physical_dim: usize,
    pub latent_dim: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    /// Hidden layers per network.
    pub depth: usize,
    /// Feed normalised time to the vector field as an extra input.
    pub time_input: bool,
    /// RK4 steps across one snapshot interval.
    pub solver_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { physical_dim: 4, latent_dim: 3, width: 32, depth: 3, time_input: false, solver_steps: 4 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.physical_dim == 0 || self.latent_dim == 0 || self.width == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.solver_steps == 0 {
            return Err(Error::Config("solver_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn stack(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.width).take(self.depth));
        dims.push(output);
        dims
    }
}

/// Encoder, latent vector field and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AENodeModel {
    pub config: ModelConfig,
    pub encoder: MlpParams,
    pub node: MlpParams,
    pub decoder: MlpParams,
}

impl AENodeModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, l) = (config.physical_dim, config.latent_dim);
        let encoder = init_params_with(&config.stack(p, l), &mut rng)?;
        let node = init_params_with(&config.stack(l + usize::from(config.time_input), l), &mut rng)?;
        let decoder = init_params_with(&config.stack(l, p), &mut rng)?;
        Ok(Self { config, encoder, node, decoder })
    }

    pub fn from_parts(config: ModelConfig, encoder: MlpParams, node: MlpParams, decoder: MlpParams) -> Result<Self> {
        config.validate()?;
        let (p, l) = (config.physical_dim, config.latent_dim);
        let t = usize::from(config.time_input);
        let ok = encoder.input_dim() == p
            && encoder.output_dim() == l
            && node.input_dim() == l + t
            && node.output_dim() == l
            && decoder.input_dim() == l
            && decoder.output_dim() == p;
        if !ok {
            return Err(Error::Shape(format!(
                "networks do not chain as {p} -> {l} -> {l} -> {p} (encoder {:?}, node {:?}, decoder {:?})",
                encoder.dims(),
                node.dims(),
                decoder.dims()
            )));
        }
        Ok(Self { config, encoder, node, decoder })
    }

    pub fn physical_dim(&self) -> usize {
        self.config.physical_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn field(&self) -> NodeField<'_> {
        NodeField { params: &self.node, time_input: self.config.time_input }
    }

    /// Samples are columns: `physical_dim × batch` in, `latent_dim × batch` out.
    pub fn encode(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder.forward(y)
    }

    pub fn decode(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.decoder.forward(z)
    }

    /// Forward pass of the autoencoder path keeping every layer.
    pub fn autoencode_cached(&self, y: &DMatrix<f64>) -> Result<(ForwardCache, ForwardCache)> {
        let (z, enc) = self.encoder.forward_cached(y)?;
        let (_, dec) = self.decoder.forward_cached(&z)?;
        Ok((enc, dec))
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.node.is_finite() && self.decoder.is_finite()
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.node.n_params() + self.decoder.n_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub config: ModelConfig,
    pub encoder: MlpRecord,
    pub node: MlpRecord,
    pub decoder: MlpRecord,
}

impl From<&AENodeModel> for ModelRecord {
    fn from(m: &AENodeModel) -> Self {
        Self {
            config: m.config.clone(),
            encoder: (&m.encoder).into(),
            node: (&m.node).into(),
            decoder: (&m.decoder).into(),
        }
    }
}

impl TryFrom<&ModelRecord> for AENodeModel {
    type Error = Error;

    fn try_from(r: &ModelRecord) -> Result<Self> {
        AENodeModel::from_parts(
            r.config.clone(),
            MlpParams::try_from(&r.encoder)?,
            MlpParams::try_from(&r.node)?,
            MlpParams::try_from(&r.decoder)?,
        )
    }
}

/// Column-per-sample matrix from row vectors.
pub fn columns(rows: &[Vec<f64>], width: usize) -> Result<DMatrix<f64>> {
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Shape(format!("sample {k} has {} entries, expected {width}", rows[k].len())));
    }
    Ok(DMatrix::from_fn(width, rows.len(), |i, j| rows[j][i]))
}
