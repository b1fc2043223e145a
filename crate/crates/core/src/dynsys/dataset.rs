//! Normalised snapshot datasets built from reference trajectories.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate_reference_with, IntegratorOptions};
use super::system::StiffSystem;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Per-variable min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Variables with `min == max`; these normalise to the constant 0.
    pub degenerate: Vec<bool>,
}

impl Normalization {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut any = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape(format!("row of width {} in dataset of width {dim}", row.len())));
            }
            any = true;
            for (i, &v) in row.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if !any {
            return Err(Error::Config("cannot normalise an empty dataset".into()));
        }
        let degenerate: Vec<bool> = min.iter().zip(&max).map(|(a, b)| a == b).collect();
        for (i, d) in degenerate.iter().enumerate() {
            if *d {
                log::warn!("variable {i} is constant ({}); normalising it to 0", min[i]);
            }
        }
        Ok(Self { min, max, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn has_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| if self.degenerate[i] { 0.0 } else { (v - self.min[i]) / (self.max[i] - self.min[i]) })
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, &v)| if self.degenerate[i] { self.min[i] } else { self.min[i] + v * (self.max[i] - self.min[i]) })
            .collect()
    }

    pub fn range(&self, i: usize) -> f64 {
        self.max[i] - self.min[i]
    }
}

/// Consecutive snapshots `(index, index + 1)` of trajectory `traj`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotPair {
    pub traj: usize,
    pub index: usize,
}

/// Snapshot trajectories in normalised units plus the train/test split of their
/// consecutive pairs.
///
/// States are min-max normalised; times are divided by `time_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: String,
    pub variable_names: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub norm: Normalization,
    pub time_scale: f64,
    pub pairs: Vec<SnapshotPair>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub split_ratio: f64,
    pub seed: u64,
}

/// Dense matrices of a set of pairs, one sample per entry.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub current: Vec<Vec<f64>>,
    pub next: Vec<Vec<f64>>,
    /// Normalised time of `current`.
    pub time: Vec<f64>,
    pub dt: Vec<f64>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt.is_empty()
    }
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn batch(&self, pair_indices: &[usize]) -> PairBatch {
        let mut b = PairBatch { current: Vec::new(), next: Vec::new(), time: Vec::new(), dt: Vec::new() };
        for &p in pair_indices {
            let SnapshotPair { traj, index } = self.pairs[p];
            let tr = &self.trajectories[traj];
            b.current.push(tr.states[index].clone());
            b.next.push(tr.states[index + 1].clone());
            b.time.push(tr.times[index]);
            b.dt.push(tr.times[index + 1] - tr.times[index]);
        }
        b
    }

    pub fn train_batch(&self) -> PairBatch {
        self.batch(&self.train)
    }

    pub fn test_batch(&self) -> PairBatch {
        self.batch(&self.test)
    }

    /// Trajectory `i` mapped back to physical units and seconds.
    pub fn physical_trajectory(&self, i: usize) -> Trajectory {
        let tr = &self.trajectories[i];
        Trajectory {
            times: tr.times.iter().map(|t| t * self.time_scale).collect(),
            states: tr.states.iter().map(|r| self.norm.denormalize(r)).collect(),
            meta: tr.meta.clone(),
        }
    }

    /// Build a dataset from physical snapshot trajectories. Times are scaled by
    /// `time_scale`; the normalisation is fitted on all snapshots.
    pub fn from_snapshots(
        system: &str,
        variable_names: Vec<String>,
        snapshots: Vec<Trajectory>,
        time_scale: f64,
        split_ratio: f64,
        seed: u64,
    ) -> Result<Self> {
        let dim = snapshots.first().map(Trajectory::dim).unwrap_or(0);
        let norm = Normalization::fit(snapshots.iter().flat_map(|t| t.states.iter().map(Vec::as_slice)), dim)?;
        Self::with_normalization(system, variable_names, snapshots, norm, time_scale, split_ratio, seed)
    }

    pub fn with_normalization(
        system: &str,
        variable_names: Vec<String>,
        snapshots: Vec<Trajectory>,
        norm: Normalization,
        time_scale: f64,
        split_ratio: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must lie in (0, 1), got {split_ratio}")));
        }
        if !(time_scale > 0.0) {
            return Err(Error::Config(format!("time scale must be positive, got {time_scale}")));
        }
        let trajectories: Vec<Trajectory> = snapshots
            .into_iter()
            .map(|tr| Trajectory {
                times: tr.times.iter().map(|t| t / time_scale).collect(),
                states: tr.states.iter().map(|r| norm.normalize(r)).collect(),
                meta: tr.meta,
            })
            .collect();
        let pairs: Vec<SnapshotPair> = trajectories
            .iter()
            .enumerate()
            .flat_map(|(traj, tr)| (0..tr.len().saturating_sub(1)).map(move |index| SnapshotPair { traj, index }))
            .collect();
        let (train, test) = split_indices(pairs.len(), split_ratio, seed);
        Ok(Self {
            system: system.to_string(),
            variable_names,
            trajectories,
            norm,
            time_scale,
            pairs,
            train,
            test,
            split_ratio,
            seed,
        })
    }
}

/// Shuffle `0..n` with `seed` and cut it at `round(ratio · n)`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((ratio * n as f64).round() as usize).min(n);
    let test = idx.split_off(cut);
    (idx, test)
}

/// One point of an initial-condition sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub state: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

/// Grid over initial temperature and mixture parameter for the ignition system.
pub fn ignition_sweep(t_init: &[f64], phi: &[f64]) -> Vec<InitialCondition> {
    let mut out = Vec::with_capacity(t_init.len() * phi.len());
    for &t in t_init {
        for &p in phi {
            out.push(InitialCondition {
                state: super::system::IgnitionSystem::initial_state(t, p),
                meta: BTreeMap::from([("t_init".to_string(), t.to_string()), ("phi".to_string(), p.to_string())]),
            });
        }
    }
    out
}

/// Inclusive arithmetic range `start, start + step, ..., <= stop`, robust to rounding.
pub fn stepped_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Config(format!("invalid range {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    /// Integration horizon in seconds, shared by all trajectories.
    pub t_end: f64,
    pub tol: f64,
    /// Uniformly spaced snapshots per trajectory before densification.
    pub samples_per_traj: usize,
    /// Largest allowed change of any normalised variable between snapshots.
    pub densify_threshold: f64,
    /// Maximum number of interval bisections during densification.
    pub max_refinement: u32,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            t_end: 6e-3,
            tol: 1e-6,
            samples_per_traj: 41,
            densify_threshold: 0.01,
            max_refinement: 6,
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

/// Integrate every initial condition, normalise over the whole sweep, sample
/// snapshots and split the snapshot pairs.
pub fn generate_dataset(system: &dyn StiffSystem, sweep: &[InitialCondition], opts: &DatasetOptions) -> Result<Dataset> {
    let (norm, snapshots) = generate_snapshots(system, sweep, opts)?;
    Dataset::with_normalization(
        system.name(),
        system.variable_names(),
        snapshots,
        norm,
        opts.t_end,
        opts.split_ratio,
        opts.seed,
    )
}

/// The physical snapshot trajectories behind [`generate_dataset`] and the normalisation
/// fitted on the underlying reference solutions.
pub fn generate_snapshots(
    system: &dyn StiffSystem,
    sweep: &[InitialCondition],
    opts: &DatasetOptions,
) -> Result<(Normalization, Vec<Trajectory>)> {
    if sweep.is_empty() {
        return Err(Error::Config("initial-condition sweep is empty".into()));
    }
    if opts.samples_per_traj < 2 {
        return Err(Error::Config("need at least two samples per trajectory".into()));
    }
    let int_opts = IntegratorOptions::with_tol(opts.tol);
    let references: Vec<Trajectory> = sweep
        .par_iter()
        .map(|ic| {
            integrate_reference_with(system, &ic.state, 0.0, opts.t_end, &int_opts).map(|mut tr| {
                tr.meta = ic.meta.clone();
                tr
            })
        })
        .collect::<Result<_>>()?;
    let norm = Normalization::fit(references.iter().flat_map(|t| t.states.iter().map(Vec::as_slice)), system.dim())?;
    let snapshots: Vec<Trajectory> =
        references.iter().map(|r| sample_snapshots(r, &norm, opts)).collect::<Result<_>>()?;
    Ok((norm, snapshots))
}

/// Uniform snapshots, with intervals bisected while any normalised variable
/// changes by more than the densification threshold across them.
pub fn sample_snapshots(reference: &Trajectory, norm: &Normalization, opts: &DatasetOptions) -> Result<Trajectory> {
    let t0 = reference.times[0];
    let t1 = *reference.times.last().expect("non-empty reference");
    let n = opts.samples_per_traj;
    let uniform: Vec<f64> = (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect();
    let mut times = vec![uniform[0]];
    for w in uniform.windows(2) {
        refine(reference, norm, w[0], w[1], opts.densify_threshold, opts.max_refinement, &mut times);
    }
    let states = times.iter().map(|&t| reference.interpolate(t)).collect();
    Trajectory::new(times, states, reference.meta.clone())
}

fn refine(reference: &Trajectory, norm: &Normalization, a: f64, b: f64, threshold: f64, depth: u32, out: &mut Vec<f64>) {
    if depth > 0 {
        let ya = norm.normalize(&reference.interpolate(a));
        let yb = norm.normalize(&reference.interpolate(b));
        let change = ya.iter().zip(&yb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if change > threshold {
            let mid = 0.5 * (a + b);
            refine(reference, norm, a, mid, threshold, depth - 1, out);
            refine(reference, norm, mid, b, threshold, depth - 1, out);
            return;
        }
    }
    out.push(b);
}
