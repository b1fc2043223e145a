use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A deterministic autonomous-or-not ODE system `dy/dt = f(y, t)`.
pub trait StiffSystem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn rhs(&self, y: &[f64], t: f64) -> Result<Vec<f64>>;

    /// Analytic Jacobian `df/dy`, when the system provides one.
    fn jacobian(&self, _y: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        None
    }

    /// Typical magnitude of each variable; used as the absolute part of error weights.
    fn scales(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }

    fn variable_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("y{i}")).collect()
    }

    /// Parameters written into trajectory file headers.
    fn parameters(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Jacobian of `system` at `(y, t)`: analytic when available, central differences otherwise.
pub fn jacobian_or_fd(system: &dyn StiffSystem, y: &[f64], t: f64) -> Result<DMatrix<f64>> {
    if let Some(j) = system.jacobian(y, t) {
        return Ok(j);
    }
    let n = y.len();
    let scales = system.scales();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = y.to_vec();
    for k in 0..n {
        let h = 1e-6 * y[k].abs().max(scales[k]).max(1e-12);
        probe[k] = y[k] + h;
        let fp = system.rhs(&probe, t)?;
        probe[k] = y[k] - h;
        let fm = system.rhs(&probe, t)?;
        probe[k] = y[k];
        for i in 0..n {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Rate constants of the one-step Arrhenius ignition model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IgnitionParams {
    /// Pre-exponential factor of fuel breakdown (1/s).
    pub pre_exponential: f64,
    /// Activation temperature (K).
    pub activation_temperature: f64,
    /// Temperature rise per unit mass fraction of product formed (K).
    pub heat_release: f64,
    /// First-order recombination rate of the radical into product (1/s).
    pub radical_decay: f64,
}

impl Default for IgnitionParams {
    fn default() -> Self {
        Self {
            pre_exponential: 1e8,
            activation_temperature: 15_000.0,
            heat_release: 1_500.0,
            radical_decay: 1e7,
        }
    }
}

/// Right-hand side of the ignition model with state `[fuel, product, radical, temperature]`.
///
/// Fuel breaks down into the radical at `A·fuel·exp(-Ta/T)`; the radical recombines
/// into product at `k·radical`, releasing heat. Mass fractions sum to a constant and
/// `T - q·product` is conserved.
pub fn ignition_rhs(state: &[f64], params: &IgnitionParams) -> Result<[f64; 4]> {
    if state.len() != 4 {
        return Err(Error::Shape(format!("ignition state has {} entries, expected 4", state.len())));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite ignition state {state:?}")));
    }
    let (fuel, radical, temp) = (state[0], state[2], state[3]);
    if temp <= 0.0 {
        return Err(Error::Domain(format!("temperature must be positive, got {temp}")));
    }
    let breakdown = params.pre_exponential * fuel * (-params.activation_temperature / temp).exp();
    let recombination = params.radical_decay * radical;
    Ok([
        -breakdown,
        recombination,
        breakdown - recombination,
        params.heat_release * recombination,
    ])
}

#[derive(Debug, Clone, Default)]
pub struct IgnitionSystem {
    pub params: IgnitionParams,
}

impl IgnitionSystem {
    pub fn new(params: IgnitionParams) -> Self {
        Self { params }
    }

    /// Unreacted initial state for initial temperature `t_init` (K) and mixture
    /// parameter `phi`; the fuel mass fraction is `phi / 2`.
    pub fn initial_state(t_init: f64, phi: f64) -> Vec<f64> {
        vec![0.5 * phi, 0.0, 0.0, t_init]
    }
}

impl StiffSystem for IgnitionSystem {
    fn name(&self) -> &str {
        "ignition"
    }

    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, y: &[f64], _t: f64) -> Result<Vec<f64>> {
        ignition_rhs(y, &self.params).map(|d| d.to_vec())
    }

    fn jacobian(&self, y: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let p = &self.params;
        let (fuel, temp) = (y[0], y[3]);
        let arr = p.pre_exponential * (-p.activation_temperature / temp).exp();
        let d_dfuel = arr;
        let d_dtemp = arr * fuel * p.activation_temperature / (temp * temp);
        let k = p.radical_decay;
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(4, 4, &[
            -d_dfuel, 0.0, 0.0,               -d_dtemp,
            0.0,      0.0, k,                 0.0,
            d_dfuel,  0.0, -k,                d_dtemp,
            0.0,      0.0, p.heat_release * k, 0.0,
        ]);
        Some(j)
    }

    fn scales(&self) -> Vec<f64> {
        vec![1.0, 1.0, 1e-3, 1000.0]
    }

    fn variable_names(&self) -> Vec<String> {
        ["fuel", "product", "radical", "temperature"].iter().map(|s| s.to_string()).collect()
    }

    fn parameters(&self) -> BTreeMap<String, String> {
        let p = &self.params;
        BTreeMap::from([
            ("A".to_string(), p.pre_exponential.to_string()),
            ("Ta".to_string(), p.activation_temperature.to_string()),
            ("q".to_string(), p.heat_release.to_string()),
            ("k_rad".to_string(), p.radical_decay.to_string()),
        ])
    }
}

pub const ROBERTSON_K1: f64 = 0.04;
pub const ROBERTSON_K2: f64 = 3e7;
pub const ROBERTSON_K3: f64 = 1e4;

/// The classic Robertson kinetics benchmark.
pub fn robertson_rhs(y: &[f64; 3]) -> [f64; 3] {
    let [y1, y2, y3] = *y;
    let a = ROBERTSON_K1 * y1;
    let b = ROBERTSON_K3 * y2 * y3;
    let c = ROBERTSON_K2 * y2 * y2;
    [-a + b, a - b - c, c]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Robertson;

impl StiffSystem for Robertson {
    fn name(&self) -> &str {
        "robertson"
    }

    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, y: &[f64], _t: f64) -> Result<Vec<f64>> {
        let arr: [f64; 3] = y
            .try_into()
            .map_err(|_| Error::Shape(format!("robertson state has {} entries", y.len())))?;
        Ok(robertson_rhs(&arr).to_vec())
    }

    fn jacobian(&self, y: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        let (k1, k2, k3) = (ROBERTSON_K1, ROBERTSON_K2, ROBERTSON_K3);
        let (y2, y3) = (y[1], y[2]);
        #[rustfmt::skip]
        let j = DMatrix::from_row_slice(3, 3, &[
            -k1, k3 * y3,                     k3 * y2,
            k1,  -k3 * y3 - 2.0 * k2 * y2,    -k3 * y2,
            0.0, 2.0 * k2 * y2,               0.0,
        ]);
        Some(j)
    }
}

/// `dy/dt = M·y` for a constant square matrix.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Shape("linear system matrix must be square and non-empty".into()));
        }
        Ok(Self { matrix })
    }
}

impl StiffSystem for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn rhs(&self, y: &[f64], _t: f64) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::Shape(format!("state has {} entries, system {}", y.len(), self.dim())));
        }
        Ok((0..self.dim())
            .map(|i| (0..self.dim()).map(|k| self.matrix[(i, k)] * y[k]).sum())
            .collect())
    }

    fn jacobian(&self, _y: &[f64], _t: f64) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_chemistry_at_room_temperature() {
        let p = IgnitionParams::default();
        let d = ignition_rhs(&[1.0, 0.0, 0.0, 300.0], &p).unwrap();
        assert!(d[0].abs() < 1e-10 * p.pre_exponential);
    }

    #[test]
    fn no_fuel_no_reaction() {
        let p = IgnitionParams::default();
        for t in [300.0, 1000.0, 2500.0] {
            let d = ignition_rhs(&[0.0, 0.6, 0.0, t], &p).unwrap();
            assert_eq!(d, [0.0; 4]);
        }
    }

    #[test]
    fn fuel_consumption_rate_at_1000k() {
        let p = IgnitionParams::default();
        let d = ignition_rhs(&[1.0, 0.0, 0.0, 1000.0], &p).unwrap();
        // 1e8 * exp(-15)
        assert!((d[0] + 30.590_232_050_182_58).abs() < 1e-9, "{}", d[0]);
    }

    #[test]
    fn ignition_sign_structure_and_conservation() {
        let p = IgnitionParams::default();
        for state in [[0.4, 0.2, 1e-3, 1400.0], [0.9, 0.0, 0.0, 1000.0], [0.05, 0.6, 2e-4, 2100.0]] {
            let d = ignition_rhs(&state, &p).unwrap();
            assert!(d[0] <= 0.0);
            assert!(d[3] >= 0.0);
            let mass = d[0] + d[1] + d[2];
            assert!(mass.abs() <= 1e-12 * d.iter().map(|v| v.abs()).fold(1.0, f64::max));
        }
    }

    #[test]
    fn ignition_rejects_bad_states() {
        let p = IgnitionParams::default();
        assert!(matches!(ignition_rhs(&[f64::NAN, 0.0, 0.0, 1000.0], &p), Err(Error::Domain(_))));
        assert!(matches!(ignition_rhs(&[1.0, 0.0, 0.0, 0.0], &p), Err(Error::Domain(_))));
    }

    #[test]
    fn ignition_jacobian_matches_finite_differences() {
        struct NoJac(IgnitionSystem);
        impl StiffSystem for NoJac {
            fn name(&self) -> &str {
                "nojac"
            }
            fn dim(&self) -> usize {
                4
            }
            fn rhs(&self, y: &[f64], t: f64) -> Result<Vec<f64>> {
                self.0.rhs(y, t)
            }
            fn scales(&self) -> Vec<f64> {
                self.0.scales()
            }
        }
        let sys = IgnitionSystem::default();
        let y = [0.3, 0.2, 2e-3, 1500.0];
        let exact = sys.jacobian(&y, 0.0).unwrap();
        let fd = jacobian_or_fd(&NoJac(sys), &y, 0.0).unwrap();
        for (a, b) in exact.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn robertson_values() {
        assert_eq!(robertson_rhs(&[1.0, 0.0, 0.0]), [-0.04, 0.04, 0.0]);
        assert_eq!(robertson_rhs(&[0.0, 0.0, 1.0]), [0.0, 0.0, 0.0]);
    }

    proptest::proptest! {
        #[test]
        fn robertson_conserves_mass(y1 in 0.0f64..1.0, y2 in 0.0f64..1e-4, y3 in 0.0f64..1.0) {
            let d = robertson_rhs(&[y1, y2, y3]);
            let scale = d.iter().map(|v| v.abs()).fold(1e-300, f64::max);
            proptest::prop_assert!((d[0] + d[1] + d[2]).abs() <= 1e-12 * scale);
        }
    }
}
