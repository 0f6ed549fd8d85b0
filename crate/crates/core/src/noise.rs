//! Decoherence models of the experiment.
//!
//! Three mechanisms degrade the Bell violation:
//!
//! * source-entanglement degradation — the path-entangled pair decays toward
//!   a classical mixture of `|00>` and `|11>` as the two-photon visibility
//!   drops,
//! * order-coherence degradation — reduced interferometer visibility
//!   dephases each control qubit, turning the superposition of gate orders
//!   into a classical mixture,
//! * Gaussian phase jitter — slow phase drifts in the source and the
//!   interferometers, resampled shot by shot for Monte Carlo error bars.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, DensityOperator, StateVector};

/// Entangled-source parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Two-photon visibility of the entangled state in its anti-correlated
    /// basis; 1 is the pure Bell state, 0 a classical mixture.
    pub visibility: f64,
    /// Relative phase applied to the `|11>` amplitude, radians.
    #[serde(default, rename = "phase_offset_rad")]
    pub phase_offset: f64,
    /// Standard deviation of the source phase jitter, degrees.
    #[serde(default)]
    pub jitter_deg: f64,
}

impl SourceConfig {
    pub fn ideal() -> Self {
        Self {
            visibility: 1.0,
            phase_offset: 0.0,
            jitter_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::Config(format!(
                "source visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        if self.jitter_deg < 0.0 {
            return Err(Error::Config("negative phase jitter".into()));
        }
        Ok(())
    }
}

/// Per-SWITCH interferometer visibilities plus phase-jitter magnitude.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub vis1: f64,
    pub vis2: f64,
    /// Standard deviation of the interferometer phase jitter, degrees.
    #[serde(default, rename = "jitter_deg")]
    pub phase_jitter_deg: f64,
}

impl InterferometerConfig {
    pub fn ideal() -> Self {
        Self {
            vis1: 1.0,
            vis2: 1.0,
            phase_jitter_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("vis1", self.vis1), ("vis2", self.vis2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.phase_jitter_deg < 0.0 {
            return Err(Error::Config("negative phase jitter".into()));
        }
        Ok(())
    }
}

/// Build the control-pair source state on tags `[C1, C2]`:
/// `v |Phi-><Phi-| + (1-v)/2 (|00><00| + |11><11|)`, with the configured
/// relative phase on the `|11>` amplitude of the coherent part.
pub fn make_source_state(cfg: &SourceConfig) -> Result<DensityOperator> {
    cfg.validate()?;
    let coherent = StateVector::phi_minus("C1", "C2", cfg.phase_offset).to_density();
    let mut m = coherent.matrix() * c(cfg.visibility, 0.0);
    let w = (1.0 - cfg.visibility) / 2.0;
    m[(0, 0)] += c(w, 0.0);
    m[(3, 3)] += c(w, 0.0);
    DensityOperator::new(m, vec!["C1".into(), "C2".into()])
}

/// Dephase the two control qubits in the computational basis: coherences
/// across control `C1` are scaled by `vis1`, across `C2` by `vis2`.
pub fn dephase_orders(
    state: &DensityOperator,
    cfg: &InterferometerConfig,
) -> Result<DensityOperator> {
    cfg.validate()?;
    dephase_qubit(&dephase_qubit(state, "C1", cfg.vis1)?, "C2", cfg.vis2)
}

/// Dephasing channel on one tagged qubit with coherence factor `vis`.
pub fn dephase_qubit(state: &DensityOperator, label: &str, vis: f64) -> Result<DensityOperator> {
    let pos = state
        .labels()
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownTag(label.to_string()))?;
    let n = state.n_qubits();
    let bit = n - 1 - pos;
    let dim = state.dim();
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let v = state.matrix()[(i, j)];
        if (i >> bit) & 1 != (j >> bit) & 1 {
            v * c(vis, 0.0)
        } else {
            v
        }
    });
    DensityOperator::new(m, state.labels().to_vec())
}

/// One Gaussian phase sample in radians for a jitter magnitude in degrees.
/// Deterministic for a fixed seed.
pub fn sample_phase_jitter(rng_seed: u64, sigma_deg: f64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    phase_jitter(&mut rng, sigma_deg)
}

/// Draw a phase-jitter sample from an existing stream.
pub fn phase_jitter(rng: &mut impl Rng, sigma_deg: f64) -> f64 {
    if sigma_deg == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma_deg.to_radians()).expect("sigma >= 0");
    normal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::correlation_tensor;
    use crate::switch::{entangled_switch, nominal_input, SwitchGates};
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_visibility_is_pure_phi_minus() {
        let rho = make_source_state(&SourceConfig::ideal()).unwrap();
        let phi = StateVector::phi_minus("C1", "C2", 0.0);
        assert_abs_diff_eq!(rho.fidelity(&phi).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_visibility_is_classical_mixture() {
        let rho = make_source_state(&SourceConfig {
            visibility: 0.0,
            phase_offset: 0.0,
            jitter_deg: 0.0,
        })
        .unwrap();
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.matrix()[(3, 3)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.matrix()[(0, 3)].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.concurrence().unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn half_visibility_correlation_tensor() {
        let rho = make_source_state(&SourceConfig {
            visibility: 0.5,
            phase_offset: 0.0,
            jitter_deg: 0.0,
        })
        .unwrap();
        let t = correlation_tensor(&rho).unwrap();
        assert_abs_diff_eq!(t.matrix()[(2, 2)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix()[(0, 0)], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn source_marginals_are_maximally_mixed() {
        for v in [0.0, 0.25, 0.5, 0.815, 1.0] {
            let rho = make_source_state(&SourceConfig {
                visibility: v,
                phase_offset: 0.3,
                jitter_deg: 0.0,
            })
            .unwrap();
            for tag in ["C1", "C2"] {
                let red = rho.partial_trace(&[tag]).unwrap();
                assert_abs_diff_eq!(red.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
                assert_abs_diff_eq!(red.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn full_visibility_dephasing_is_identity() {
        let (controls, targets) = nominal_input();
        let g = SwitchGates::entangling();
        let rho = entangled_switch(&controls, &targets, &g, &g).unwrap();
        let out = dephase_orders(&rho, &InterferometerConfig::ideal()).unwrap();
        let dev = (out.matrix() - rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        assert!(dev < 1e-14);
    }

    #[test]
    fn zero_visibility_yields_branch_mixture() {
        let (controls, targets) = nominal_input();
        let g = SwitchGates::entangling();
        let rho = entangled_switch(&controls, &targets, &g, &g).unwrap();
        let cfg = InterferometerConfig {
            vis1: 0.0,
            vis2: 0.0,
            phase_jitter_deg: 0.0,
        };
        let out = dephase_orders(&rho, &cfg).unwrap();
        // Equal mixture of the two fixed-order branch states.
        let b0 = StateVector::ket_l("T1")
            .tensor(&StateVector::ket0("C1"))
            .unwrap()
            .tensor(&StateVector::ket_l("T2"))
            .unwrap()
            .tensor(&StateVector::ket0("C2"))
            .unwrap();
        let b1 = StateVector::ket_r("T1")
            .tensor(&StateVector::ket1("C1"))
            .unwrap()
            .tensor(&StateVector::ket_r("T2"))
            .unwrap()
            .tensor(&StateVector::ket1("C2"))
            .unwrap();
        let expect = (b0.to_density().matrix() + b1.to_density().matrix()) * c(0.5, 0.0);
        let dev = (out.matrix() - expect)
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        assert!(dev < 1e-12, "deviation {dev}");
        // Idempotent at vis = 0.
        let twice = dephase_orders(&out, &cfg).unwrap();
        let dev = (twice.matrix() - out.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        assert!(dev < 1e-14);
    }

    #[test]
    fn dephasing_preserves_trace_and_hermiticity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let (controls, targets) = nominal_input();
        let g = SwitchGates::entangling();
        let rho = entangled_switch(&controls, &targets, &g, &g).unwrap();
        for _ in 0..25 {
            let cfg = InterferometerConfig {
                vis1: rng.random::<f64>(),
                vis2: rng.random::<f64>(),
                phase_jitter_deg: 0.0,
            };
            let out = dephase_orders(&rho, &cfg).unwrap();
            assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-10);
            // Hermiticity is enforced by the DensityOperator constructor.
        }
    }

    #[test]
    fn zero_sigma_jitter_is_exactly_zero() {
        assert_eq!(sample_phase_jitter(42, 0.0), 0.0);
    }

    #[test]
    fn jitter_sample_std_matches_sigma() {
        let mut rng = ChaCha12Rng::seed_from_u64(1234);
        let sigma = 1.9_f64;
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| phase_jitter(&mut rng, sigma)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let std_deg = var.sqrt().to_degrees();
        assert!(
            (std_deg - sigma).abs() / sigma < 0.02,
            "sample std {std_deg} vs {sigma}"
        );
    }

    #[test]
    fn jitter_is_deterministic_per_seed() {
        let a = sample_phase_jitter(99, 0.97);
        let b = sample_phase_jitter(99, 0.97);
        assert_eq!(a, b);
        assert_ne!(a, sample_phase_jitter(100, 0.97));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(make_source_state(&SourceConfig {
            visibility: 1.2,
            phase_offset: 0.0,
            jitter_deg: 0.0,
        })
        .is_err());
        let bad = InterferometerConfig {
            vis1: -0.1,
            vis2: 1.0,
            phase_jitter_deg: 0.0,
        };
        assert!(bad.validate().is_err());
    }
}
