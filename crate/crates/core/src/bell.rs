//! CHSH machinery: correlation tensors, the CHSH parameter for given
//! settings or counts, and the maximal violation criterion
//! `S_max = 2 sqrt(t1^2 + t2^2)` from the two largest singular values of the
//! correlation tensor, together with the maximizing settings.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{pauli, DensityOperator};
use crate::measurement::{correlation, correlation_error, efficiency_correct, CountsTable};
use crate::tol;

/// The four CHSH measurement axes: a, a' for the first party, b, b' for the
/// second.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshSettings {
    pub a: Vector3<f64>,
    pub a_prime: Vector3<f64>,
    pub b: Vector3<f64>,
    pub b_prime: Vector3<f64>,
}

impl ChshSettings {
    pub fn new(
        a: Vector3<f64>,
        a_prime: Vector3<f64>,
        b: Vector3<f64>,
        b_prime: Vector3<f64>,
    ) -> Result<Self> {
        for (name, v) in [("a", &a), ("a'", &a_prime), ("b", &b), ("b'", &b_prime)] {
            if (v.norm() - 1.0).abs() > tol::ALGEBRAIC {
                return Err(Error::Config(format!(
                    "CHSH axis {name} has norm {}",
                    v.norm()
                )));
            }
        }
        Ok(Self {
            a,
            a_prime,
            b,
            b_prime,
        })
    }

    /// The four (first-party axis, second-party axis) pairs in the order
    /// their correlations enter `S = |C1 + C2 + C3 - C4|`.
    pub fn pairs(&self) -> [(Vector3<f64>, Vector3<f64>); 4] {
        [
            (self.a, self.b),
            (self.a_prime, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// Real 3x3 correlation tensor `T[i][j] = tr(rho sigma_i (x) sigma_j)` in
/// (x, y, z) order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTensor {
    matrix: Matrix3<f64>,
}

impl CorrelationTensor {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if matrix.iter().any(|&t| t.abs() > 1.0 + tol::ALGEBRAIC) {
            return Err(Error::InvalidState(
                "correlation tensor entry outside [-1, 1]".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }
}

/// Compute the correlation tensor of a two-qubit state.
pub fn correlation_tensor(rho: &DensityOperator) -> Result<CorrelationTensor> {
    if rho.n_qubits() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected a 2-qubit state, got {} qubits",
            rho.n_qubits()
        )));
    }
    let mut t = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let op = pauli(i + 1).kronecker(&pauli(j + 1));
            let dyn_op = nalgebra::DMatrix::from_fn(4, 4, |r, c| op[(r, c)]);
            t[(i, j)] = rho.expectation(&dyn_op);
        }
    }
    CorrelationTensor::new(t)
}

/// CHSH parameter `|a.Tb + a'.Tb + a.Tb' - a'.Tb'|` for explicit settings.
pub fn chsh_value(rho: &DensityOperator, settings: &ChshSettings) -> Result<f64> {
    let t = correlation_tensor(rho)?;
    Ok(chsh_of_tensor(t.matrix(), settings))
}

pub fn chsh_of_tensor(t: &Matrix3<f64>, s: &ChshSettings) -> f64 {
    (s.a.dot(&(t * s.b)) + s.a_prime.dot(&(t * s.b)) + s.a.dot(&(t * s.b_prime))
        - s.a_prime.dot(&(t * s.b_prime)))
    .abs()
}

/// Maximal CHSH value over all settings, `2 sqrt(t1^2 + t2^2)` from the two
/// largest singular values, plus the settings that attain it.
///
/// Settings construction: with singular triples (t1, u1, v1), (t2, u2, v2)
/// and theta = atan2(t2, t1), take a = u1, a' = u2,
/// b = cos(theta) v1 + sin(theta) v2, b' = cos(theta) v1 - sin(theta) v2.
/// Degenerate singular values are resolved deterministically by fixing each
/// u_i's first nonzero component positive (flipping v_i alongside).
pub fn chsh_max(t: &CorrelationTensor) -> Result<(f64, ChshSettings)> {
    let m = *t.matrix();
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let s = svd.singular_values;
    // nalgebra returns singular values sorted descending.
    let (t1, t2) = (s[0], s[1]);
    let smax = 2.0 * (t1 * t1 + t2 * t2).sqrt();

    let mut u1 = u.column(0).into_owned();
    let mut v1 = v_t.row(0).transpose();
    let mut u2 = u.column(1).into_owned();
    let mut v2 = v_t.row(1).transpose();
    fix_sign(&mut u1, &mut v1);
    fix_sign(&mut u2, &mut v2);

    let theta = t2.atan2(t1);
    let (c, sn) = (theta.cos(), theta.sin());
    let b = c * v1 + sn * v2;
    let b_prime = c * v1 - sn * v2;
    let norm_or_z = |v: Vector3<f64>| {
        let n = v.norm();
        if n > tol::ALGEBRAIC {
            v / n
        } else {
            Vector3::z()
        }
    };
    let settings = ChshSettings::new(
        norm_or_z(u1),
        norm_or_z(u2),
        norm_or_z(b),
        norm_or_z(b_prime),
    )?;
    Ok((smax, settings))
}

fn fix_sign(u: &mut Vector3<f64>, v: &mut Vector3<f64>) {
    for k in 0..3 {
        if u[k].abs() > tol::ALGEBRAIC {
            if u[k] < 0.0 {
                *u = -*u;
                *v = -*v;
            }
            return;
        }
    }
}

/// CHSH parameter with a statistical error bar from four counts tables, one
/// per settings pair, in the order (a,b), (a',b), (a,b'), (a',b').
/// Counts are efficiency-corrected before the correlations are formed.
pub fn chsh_from_counts(tables: &[CountsTable; 4]) -> Result<(f64, f64)> {
    let mut s = 0.0;
    let mut var = 0.0;
    for (k, table) in tables.iter().enumerate() {
        let corrected = efficiency_correct(table)?;
        let c = correlation(&corrected)?;
        let e = correlation_error(&corrected)?;
        let sign = if k == 3 { -1.0 } else { 1.0 };
        s += sign * c;
        var += e * e;
    }
    Ok((s.abs(), var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{testutil, StateVector};
    use crate::measurement::{born_probabilities, simulate_counts, MeasurementSetting};
    use crate::noise::{make_source_state, SourceConfig};
    use crate::switch::ideal_output_state;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    const SQRT8: f64 = 2.0 * std::f64::consts::SQRT_2;

    #[test]
    fn phi_minus_tensor_is_diagonal() {
        let rho = StateVector::phi_minus("a", "b", 0.0).to_density();
        let t = correlation_tensor(&rho).unwrap();
        let expect = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert_abs_diff_eq!((t.matrix() - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn product_and_mixed_tensors() {
        let rho = StateVector::ket0("a")
            .tensor(&StateVector::ket0("b"))
            .unwrap()
            .to_density();
        let t = correlation_tensor(&rho).unwrap();
        assert_abs_diff_eq!(t.matrix()[(2, 2)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix().norm(), 1.0, epsilon = 1e-12);

        let mixed = DensityOperator::maximally_mixed(&["a", "b"]);
        let tm = correlation_tensor(&mixed).unwrap();
        assert_abs_diff_eq!(tm.matrix().norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ideal_output_reaches_tsirelson() {
        let rho = ideal_output_state().to_density();
        let t = correlation_tensor(&rho).unwrap();
        let (smax, settings) = chsh_max(&t).unwrap();
        assert_abs_diff_eq!(smax, SQRT8, epsilon = 1e-9);
        // The returned settings attain the bound.
        let s = chsh_value(&rho, &settings).unwrap();
        assert_abs_diff_eq!(s, SQRT8, epsilon = 1e-9);
    }

    #[test]
    fn product_states_respect_local_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..50 {
            let rho = testutil::random_pure_state(&mut rng, &["a"])
                .to_density()
                .tensor(&testutil::random_pure_state(&mut rng, &["b"]).to_density())
                .unwrap();
            let t = correlation_tensor(&rho).unwrap();
            let (smax, _) = chsh_max(&t).unwrap();
            assert!(smax <= 2.0 + 1e-9, "product state smax {smax}");
        }
    }

    #[test]
    fn source_family_matches_horodecki_closed_form() {
        for v in [0.0, 0.3, 0.5, 0.8155, 1.0] {
            let rho = make_source_state(&SourceConfig {
                visibility: v,
                phase_offset: 0.0,
                jitter_deg: 0.0,
            })
            .unwrap();
            let t = correlation_tensor(&rho).unwrap();
            let (smax, settings) = chsh_max(&t).unwrap();
            assert_abs_diff_eq!(smax, 2.0 * (1.0 + v * v).sqrt(), epsilon = 1e-9);
            let s = chsh_value(&rho, &settings).unwrap();
            assert_abs_diff_eq!(s, smax, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_tensor_gives_zero() {
        let t = CorrelationTensor::new(Matrix3::zeros()).unwrap();
        let (smax, _) = chsh_max(&t).unwrap();
        assert_abs_diff_eq!(smax, 0.0, epsilon = 1e-12);
    }

    /// Brute-force maximization: coarse sphere grid over the first party's
    /// axes with the closed-form inner maximum over b, b', then a few rounds
    /// of alternating ascent.
    fn grid_oracle(t: &Matrix3<f64>) -> f64 {
        let dirs = fibonacci_sphere(120);
        let inner = |a: &Vector3<f64>, ap: &Vector3<f64>| -> f64 {
            // max over b, b' of a.Tb + a'.Tb + a.Tb' - a'.Tb'
            //   = |T^t (a + a')| + |T^t (a - a')|
            (t.transpose() * (a + ap)).norm() + (t.transpose() * (a - ap)).norm()
        };
        let mut best = 0.0_f64;
        let mut best_pair = (Vector3::z(), Vector3::x());
        for a in &dirs {
            for ap in &dirs {
                let s = inner(a, ap);
                if s > best {
                    best = s;
                    best_pair = (*a, *ap);
                }
            }
        }
        // Alternating ascent from the best grid point.
        let (mut a, mut ap) = best_pair;
        for _ in 0..60 {
            let bp = t.transpose() * (a + ap);
            let bm = t.transpose() * (a - ap);
            let b = safe_unit(bp);
            let b2 = safe_unit(bm);
            let anew = safe_unit(t * (b + b2));
            let apnew = safe_unit(t * (b - b2));
            a = anew;
            ap = apnew;
        }
        best.max(inner(&a, &ap))
    }

    fn safe_unit(v: Vector3<f64>) -> Vector3<f64> {
        let n = v.norm();
        if n > 1e-12 {
            v / n
        } else {
            Vector3::z()
        }
    }

    fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Vector3::new(r * th.cos(), y, r * th.sin())
            })
            .collect()
    }

    #[test]
    fn chsh_max_matches_grid_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..50 {
            let rho = testutil::random_two_qubit_state(&mut rng);
            let t = correlation_tensor(&rho).unwrap();
            let (smax, settings) = chsh_max(&t).unwrap();
            let oracle = grid_oracle(t.matrix());
            assert!(
                (smax - oracle).abs() < 1e-3,
                "smax {smax} vs oracle {oracle}"
            );
            // Tightness: the returned settings attain the maximum.
            let attained = chsh_of_tensor(t.matrix(), &settings);
            assert_abs_diff_eq!(attained, smax, epsilon = 1e-9);
        }
    }

    #[test]
    fn chsh_value_never_exceeds_chsh_max() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..100 {
            let rho = testutil::random_two_qubit_state(&mut rng);
            let t = correlation_tensor(&rho).unwrap();
            let (smax, _) = chsh_max(&t).unwrap();
            for _ in 0..3 {
                let rand_axis = |rng: &mut ChaCha12Rng| {
                    safe_unit(Vector3::new(
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                        rng.random::<f64>() - 0.5,
                    ))
                };
                let s = ChshSettings::new(
                    rand_axis(&mut rng),
                    rand_axis(&mut rng),
                    rand_axis(&mut rng),
                    rand_axis(&mut rng),
                )
                .unwrap();
                assert!(chsh_value(&rho, &s).unwrap() <= smax + 1e-9);
            }
        }
    }

    #[test]
    fn chsh_max_invariant_under_local_unitaries() {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        for _ in 0..100 {
            let rho = testutil::random_two_qubit_state(&mut rng);
            let u1 = testutil::random_unitary(&mut rng);
            let u2 = testutil::random_unitary(&mut rng);
            let rotated = rho
                .apply_gate(&u1, rho.labels()[0].clone().as_str())
                .unwrap()
                .apply_gate(&u2, rho.labels()[1].clone().as_str())
                .unwrap();
            let (s1, _) = chsh_max(&correlation_tensor(&rho).unwrap()).unwrap();
            let (s2, _) = chsh_max(&correlation_tensor(&rotated).unwrap()).unwrap();
            assert_abs_diff_eq!(s1, s2, epsilon = 1e-9);
        }
    }

    #[test]
    fn local_transformations_never_increase_chsh_max() {
        let mut rng = ChaCha12Rng::seed_from_u64(211);
        for _ in 0..200 {
            let rho = testutil::random_two_qubit_state(&mut rng);
            let u1 = testutil::random_unitary(&mut rng);
            let u2 = testutil::random_unitary(&mut rng);
            let transformed = rho
                .apply_gate(&u1, rho.labels()[0].clone().as_str())
                .unwrap()
                .apply_gate(&u2, rho.labels()[1].clone().as_str())
                .unwrap();
            let (before, _) = chsh_max(&correlation_tensor(&rho).unwrap()).unwrap();
            let (after, _) = chsh_max(&correlation_tensor(&transformed).unwrap()).unwrap();
            assert!(after <= before + 1e-9);
        }
    }

    #[test]
    fn tsirelson_bound_holds() {
        let mut rng = ChaCha12Rng::seed_from_u64(307);
        for _ in 0..100 {
            let rho = testutil::random_two_qubit_state(&mut rng);
            let (smax, _) = chsh_max(&correlation_tensor(&rho).unwrap()).unwrap();
            assert!(smax <= SQRT8 + 1e-9);
        }
    }

    #[test]
    fn chsh_from_simulated_ideal_counts() {
        let rho = ideal_output_state().to_density();
        let t = correlation_tensor(&rho).unwrap();
        let (_, settings) = chsh_max(&t).unwrap();
        let n = 100_000;
        let mut tables = Vec::new();
        for (k, (a1, a2)) in settings.pairs().into_iter().enumerate() {
            let ms = MeasurementSetting::new(a1, a2).unwrap();
            let p = born_probabilities(&rho, &ms).unwrap();
            tables.push(
                simulate_counts(&ms, format!("s{k}"), &p, n, [0.85, 0.9, 0.95, 1.0], 1000 + k as u64)
                    .unwrap(),
            );
        }
        let arr: [CountsTable; 4] = tables.try_into().unwrap();
        let (s, sigma) = chsh_from_counts(&arr).unwrap();
        assert!(
            (s - SQRT8).abs() < 3.0 * sigma,
            "S = {s} +- {sigma}, expected near {SQRT8}"
        );
    }

    #[test]
    fn chsh_from_product_counts_stays_local() {
        let rho = StateVector::ket0("a")
            .tensor(&StateVector::ket0("b"))
            .unwrap()
            .to_density();
        let t = correlation_tensor(&rho).unwrap();
        let (_, settings) = chsh_max(&t).unwrap();
        let mut tables = Vec::new();
        for (k, (a1, a2)) in settings.pairs().into_iter().enumerate() {
            let ms = MeasurementSetting::new(a1, a2).unwrap();
            let p = born_probabilities(&rho, &ms).unwrap();
            tables.push(
                simulate_counts(&ms, format!("p{k}"), &p, 100_000, [1.0; 4], 2000 + k as u64)
                    .unwrap(),
            );
        }
        let arr: [CountsTable; 4] = tables.try_into().unwrap();
        let (s, sigma) = chsh_from_counts(&arr).unwrap();
        assert!(s <= 2.0 + 3.0 * sigma, "S = {s} +- {sigma}");
    }
}
