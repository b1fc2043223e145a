use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::renyi::{apply_floor, gram_for, renyi_entropy_matrix, renyi_mi_gram, MIConfig, NpdMatrix};
use crate::error::{Error, Result};
use crate::model::AENodeModel;

/// One point of an information plane: information about the input and about the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiPoint {
    pub input: f64,
    pub output: f64,
}

/// Mutual-information coordinates of every hidden layer for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoPlaneRecord {
    pub epoch: usize,
    /// Encoder hidden layers, input side first: `(I(Y;T), I(T;Ỹ))`.
    pub encoder: Vec<MiPoint>,
    /// Decoder hidden layers, output side first: `(I(Y;T), I(T;Ỹ))`.
    pub decoder: Vec<MiPoint>,
    /// The latent layer: `(I(Y;Ŷ), I(Ŷ;Ỹ))`.
    pub bottleneck: MiPoint,
    /// `I(T^E_l; T^D_l)` per depth, outermost pair first.
    pub layer_pairs: Vec<f64>,
    /// `I(Y;Ỹ)`, upper end of the layer-pair chain.
    pub outer: f64,
    /// `H(Ŷ)`, lower end of the layer-pair chain.
    pub latent_entropy: f64,
}

/// Activations of every layer for a probe set; samples are columns.
struct LayerStack {
    input: DMatrix<f64>,
    encoder: Vec<DMatrix<f64>>,
    latent: DMatrix<f64>,
    /// Output side first.
    decoder: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

fn layer_stack(model: &AENodeModel, probe: &DMatrix<f64>) -> Result<LayerStack> {
    if probe.nrows() != model.physical_dim() {
        return Err(Error::Shape(format!(
            "probe has {} variables, model expects {}",
            probe.nrows(),
            model.physical_dim()
        )));
    }
    let (enc, dec) = model.autoencode_cached(probe)?;
    let mut decoder = dec.hidden().to_vec();
    decoder.reverse();
    Ok(LayerStack {
        input: probe.clone(),
        encoder: enc.hidden().to_vec(),
        latent: enc.output().clone(),
        decoder,
        output: dec.output().clone(),
    })
}

struct Grams {
    input: NpdMatrix,
    encoder: Vec<NpdMatrix>,
    latent: NpdMatrix,
    decoder: Vec<NpdMatrix>,
    output: NpdMatrix,
}

fn grams(stack: &LayerStack, config: &MIConfig) -> Result<Grams> {
    let all: Vec<&DMatrix<f64>> = std::iter::once(&stack.input)
        .chain(&stack.encoder)
        .chain(std::iter::once(&stack.latent))
        .chain(&stack.decoder)
        .chain(std::iter::once(&stack.output))
        .collect();
    let mut g = all.par_iter().map(|m| gram_for(m, config)).collect::<Result<Vec<_>>>()?.into_iter();
    let depth = stack.encoder.len();
    let input = g.next().expect("input gram");
    let encoder = g.by_ref().take(depth).collect();
    let latent = g.next().expect("latent gram");
    let decoder = g.by_ref().take(stack.decoder.len()).collect();
    let output = g.next().expect("output gram");
    Ok(Grams { input, encoder, latent, decoder, output })
}

/// Both information planes for one model snapshot on a fixed probe set (normalised
/// states as columns).
pub fn info_plane_record(model: &AENodeModel, probe: &DMatrix<f64>, epoch: usize, config: &MIConfig) -> Result<InfoPlaneRecord> {
    config.validate()?;
    let stack = layer_stack(model, probe)?;
    let g = grams(&stack, config)?;
    let alpha = config.alpha;
    let mi = |a: &NpdMatrix, b: &NpdMatrix| renyi_mi_gram(a, b, alpha, false).map(|v| apply_floor(v, config));
    // Independent estimates, evaluated in a fixed order.
    let mut jobs: Vec<(&NpdMatrix, &NpdMatrix)> = Vec::new();
    for t in g.encoder.iter().chain(&g.decoder).chain(std::iter::once(&g.latent)) {
        jobs.push((&g.input, t));
        jobs.push((t, &g.output));
    }
    for (e, d) in g.encoder.iter().zip(&g.decoder) {
        jobs.push((e, d));
    }
    jobs.push((&g.input, &g.output));
    let vals = jobs.par_iter().map(|(a, b)| mi(a, b)).collect::<Result<Vec<f64>>>()?;
    let depth = g.encoder.len();
    let point = |k: usize| MiPoint { input: vals[2 * k], output: vals[2 * k + 1] };
    let n_dec = g.decoder.len();
    let pair_start = 2 * (depth + n_dec + 1);
    Ok(InfoPlaneRecord {
        epoch,
        encoder: (0..depth).map(point).collect(),
        decoder: (depth..depth + n_dec).map(point).collect(),
        bottleneck: point(depth + n_dec),
        layer_pairs: vals[pair_start..pair_start + depth.min(n_dec)].to_vec(),
        outer: vals[pair_start + depth.min(n_dec)],
        latent_entropy: renyi_entropy_matrix(&g.latent, alpha)?,
    })
}

/// Information-plane records for a sequence of `(epoch, model)` snapshots.
pub fn info_planes(snapshots: &[(usize, AENodeModel)], probe: &DMatrix<f64>, config: &MIConfig) -> Result<Vec<InfoPlaneRecord>> {
    snapshots.par_iter().map(|(epoch, m)| info_plane_record(m, probe, *epoch, config)).collect()
}

/// IP-1 rows `epoch,stack,layer,I_in,I_out`. Layers count from the physical side;
/// the latent layer is reported as `bottleneck` with index `depth + 1`.
pub fn ip1_rows(records: &[InfoPlaneRecord]) -> Vec<(usize, &'static str, usize, f64, f64)> {
    let mut rows = Vec::new();
    for r in records {
        for (l, p) in r.encoder.iter().enumerate() {
            rows.push((r.epoch, "encoder", l + 1, p.input, p.output));
        }
        for (l, p) in r.decoder.iter().enumerate() {
            rows.push((r.epoch, "decoder", l + 1, p.input, p.output));
        }
        rows.push((r.epoch, "bottleneck", r.encoder.len() + 1, r.bottleneck.input, r.bottleneck.output));
    }
    rows
}

/// IP-2 rows `epoch,depth,I_pair,bound_low,bound_high`.
pub fn ip2_rows(records: &[InfoPlaneRecord]) -> Vec<(usize, usize, f64, f64, f64)> {
    records
        .iter()
        .flat_map(|r| r.layer_pairs.iter().enumerate().map(move |(l, &v)| (r.epoch, l + 1, v, r.latent_entropy, r.outer)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn probe(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(4, n, |i, j| (((i + 1) * (j * 7 + 3)) % 17) as f64 / 17.0)
    }

    #[test]
    fn bookkeeping_for_five_hidden_layers() {
        let m = AENodeModel::new(ModelConfig { depth: 5, width: 8, ..Default::default() }, 1).unwrap();
        let r = info_plane_record(&m, &probe(32), 0, &MIConfig::default()).unwrap();
        assert_eq!((r.encoder.len(), r.decoder.len(), r.layer_pairs.len()), (5, 5, 5));
        assert_eq!(ip1_rows(std::slice::from_ref(&r)).len(), 11);
    }

    #[test]
    fn single_hidden_layer_has_one_pair() {
        let m = AENodeModel::new(ModelConfig { depth: 1, width: 6, ..Default::default() }, 1).unwrap();
        let r = info_plane_record(&m, &probe(24), 3, &MIConfig::default()).unwrap();
        assert_eq!(ip2_rows(&[r]).len(), 1);
    }

    #[test]
    fn deterministic_and_bounded() {
        let m = AENodeModel::new(ModelConfig { width: 8, ..Default::default() }, 2).unwrap();
        let cfg = MIConfig::default();
        let a = info_plane_record(&m, &probe(40), 0, &cfg).unwrap();
        let b = info_plane_record(&m, &probe(40), 0, &cfg).unwrap();
        assert_eq!(a, b);
        let cap = 40f64.log2();
        for p in a.encoder.iter().chain(&a.decoder) {
            assert!(p.input >= 0.0 && p.output >= 0.0 && p.input <= cap && p.output <= cap);
        }
    }

    #[test]
    fn probe_width_mismatch() {
        let m = AENodeModel::new(ModelConfig { width: 8, ..Default::default() }, 2).unwrap();
        assert!(info_plane_record(&m, &DMatrix::zeros(3, 10), 0, &MIConfig::default()).is_err());
    }
}
