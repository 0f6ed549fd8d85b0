//! Dense complex linear algebra for small qubit registers.
//!
//! States carry an ordered list of subsystem tags (`T1`, `C1`, ...). Tags are
//! authoritative: the internal index order is the tensor-argument order, and
//! tag-based reordering is provided because the SWITCH output interleaves
//! `T1, C1, T2, C2` while measurements group the targets and the controls.
//!
//! Basis convention: `|0> = |H>`, `|1> = |V>`. Tag `k` of an `n`-qubit
//! register owns the bit of weight `2^(n-1-k)`.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector, Matrix2, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = Complex64;

/// Shorthand complex constructor.
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_labels(labels: &[String]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::DuplicateTag(l.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pauli matrices and Bloch-axis operators
// ---------------------------------------------------------------------------

pub fn identity2() -> Matrix2<C64> {
    Matrix2::identity()
}

pub fn sigma_x() -> Matrix2<C64> {
    Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn sigma_y() -> Matrix2<C64> {
    Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn sigma_z() -> Matrix2<C64> {
    Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// Pauli by index: 1 = x, 2 = y, 3 = z.
pub fn pauli(i: usize) -> Matrix2<C64> {
    match i {
        0 => identity2(),
        1 => sigma_x(),
        2 => sigma_y(),
        3 => sigma_z(),
        _ => panic!("pauli index out of range: {i}"),
    }
}

/// The operator `a . sigma` for a Bloch axis `a`.
pub fn axis_operator(axis: &Vector3<f64>) -> Matrix2<C64> {
    sigma_x() * c(axis.x, 0.0) + sigma_y() * c(axis.y, 0.0) + sigma_z() * c(axis.z, 0.0)
}

/// Projector onto the `+1` (sign = true) or `-1` eigenstate of `a . sigma`.
pub fn axis_projector(axis: &Vector3<f64>, positive: bool) -> Matrix2<C64> {
    let s = if positive { 1.0 } else { -1.0 };
    (identity2() + axis_operator(axis) * c(s, 0.0)) * c(0.5, 0.0)
}

// ---------------------------------------------------------------------------
// GateSpec
// ---------------------------------------------------------------------------

/// A named single-qubit unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    name: String,
    matrix: Matrix2<C64>,
}

impl GateSpec {
    /// Build a gate, verifying unitarity to within the algebraic tolerance.
    pub fn new(name: impl Into<String>, matrix: Matrix2<C64>) -> Result<Self> {
        let name = name.into();
        let u = matrix.adjoint() * matrix;
        let dev = (u - Matrix2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if dev > tol::ALGEBRAIC {
            return Err(Error::NotUnitary(name));
        }
        Ok(Self { name, matrix })
    }

    pub fn identity() -> Self {
        Self::new("identity", Matrix2::identity()).unwrap()
    }

    pub fn sigma_x() -> Self {
        Self::new("sigma_x", sigma_x()).unwrap()
    }

    pub fn sigma_y() -> Self {
        Self::new("sigma_y", sigma_y()).unwrap()
    }

    pub fn sigma_z() -> Self {
        Self::new("sigma_z", sigma_z()).unwrap()
    }

    pub fn hadamard() -> Self {
        let h = Matrix2::new(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0))
            * c(FRAC_1_SQRT_2, 0.0);
        Self::new("hadamard", h).unwrap()
    }

    /// `(1 + i sigma_x)/sqrt(2)`, the second SWITCH gate of the experiment.
    pub fn sqrt_ix() -> Self {
        let m = (identity2() + sigma_x() * c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0);
        Self::new("sqrt_iX", m).unwrap()
    }

    /// Rotation about z by `phi`: `diag(1, e^{i phi})`.
    pub fn phase(phi: f64) -> Self {
        let m = Matrix2::new(
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            C64::from_polar(1.0, phi),
        );
        Self::new(format!("phase({phi:.6})"), m).unwrap()
    }

    /// Look up a preset gate by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity()),
            "sigma_x" => Ok(Self::sigma_x()),
            "sigma_y" => Ok(Self::sigma_y()),
            "sigma_z" => Ok(Self::sigma_z()),
            "hadamard" => Ok(Self::hadamard()),
            "sqrt_iX" => Ok(Self::sqrt_ix()),
            other => Err(Error::Config(format!("unknown gate preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.matrix
    }
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

/// A pure state on a small tagged qubit register.
#[derive(Debug, Clone)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    labels: Vec<String>,
}

impl StateVector {
    pub fn new(amplitudes: DVector<C64>, labels: Vec<String>) -> Result<Self> {
        check_labels(&labels)?;
        if amplitudes.len() != 1 << labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} qubits",
                amplitudes.len(),
                labels.len()
            )));
        }
        Ok(Self { amplitudes, labels })
    }

    /// Single qubit `a0 |0> + a1 |1>`.
    pub fn qubit(label: impl Into<String>, a0: C64, a1: C64) -> Self {
        Self {
            amplitudes: DVector::from_vec(vec![a0, a1]),
            labels: vec![label.into()],
        }
    }

    pub fn ket0(label: impl Into<String>) -> Self {
        Self::qubit(label, c(1.0, 0.0), c(0.0, 0.0))
    }

    pub fn ket1(label: impl Into<String>) -> Self {
        Self::qubit(label, c(0.0, 0.0), c(1.0, 0.0))
    }

    pub fn plus(label: impl Into<String>) -> Self {
        Self::qubit(label, c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0))
    }

    pub fn minus(label: impl Into<String>) -> Self {
        Self::qubit(label, c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0))
    }

    /// `|l> = (|0> + i|1>)/sqrt(2)` (left-circular polarization).
    pub fn ket_l(label: impl Into<String>) -> Self {
        Self::qubit(label, c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2))
    }

    /// `|r> = (|0> - i|1>)/sqrt(2)` (right-circular polarization).
    pub fn ket_r(label: impl Into<String>) -> Self {
        Self::qubit(label, c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2))
    }

    /// `(|00> - e^{i phase} |11>)/sqrt(2)` on two fresh tags.
    pub fn phi_minus(l1: impl Into<String>, l2: impl Into<String>, phase: f64) -> Self {
        let s = FRAC_1_SQRT_2;
        let a11 = -C64::from_polar(s, phase);
        Self {
            amplitudes: DVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), a11]),
            labels: vec![l1.into(), l2.into()],
        }
    }

    /// Computational basis state with the given bits.
    pub fn basis_state(labels: &[&str], bits: &[u8]) -> Result<Self> {
        assert_eq!(labels.len(), bits.len());
        let n = labels.len();
        let mut idx = 0usize;
        for (k, &b) in bits.iter().enumerate() {
            idx |= (b as usize & 1) << (n - 1 - k);
        }
        let mut amps = DVector::from_element(1 << n, c(0.0, 0.0));
        amps[idx] = c(1.0, 0.0);
        Self::new(amps, labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < 1e-12
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n < tol::UNREACHABLE_BRANCH {
            return Err(Error::InvalidState("cannot normalize zero vector".into()));
        }
        Ok(Self {
            amplitudes: &self.amplitudes / c(n, 0.0),
            labels: self.labels.clone(),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Tensor product; operands must not share tags.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        for l in other.labels() {
            if self.labels.contains(l) {
                return Err(Error::DuplicateTag(l.clone()));
            }
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(other.labels());
        Ok(Self {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            labels,
        })
    }

    fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownTag(label.to_string()))
    }

    /// Permute the register into `new_labels` order.
    pub fn reorder(&self, new_labels: &[&str]) -> Result<Self> {
        let n = self.n_qubits();
        if new_labels.len() != n {
            return Err(Error::DimensionMismatch("reorder label count".into()));
        }
        let old_pos: Vec<usize> = new_labels
            .iter()
            .map(|l| self.label_index(l))
            .collect::<Result<_>>()?;
        check_labels(&new_labels.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
        let mut amps = DVector::from_element(self.dim(), c(0.0, 0.0));
        for new_idx in 0..self.dim() {
            let mut old_idx = 0usize;
            for (new_k, &old_k) in old_pos.iter().enumerate() {
                let bit = (new_idx >> (n - 1 - new_k)) & 1;
                old_idx |= bit << (n - 1 - old_k);
            }
            amps[new_idx] = self.amplitudes[old_idx];
        }
        Self::new(amps, new_labels.iter().map(|s| s.to_string()).collect())
    }

    /// Apply a single-qubit gate to the tagged qubit.
    pub fn apply_gate(&self, gate: &GateSpec, label: &str) -> Result<Self> {
        let pos = self.label_index(label)?;
        let full = embed_single_qubit(gate.matrix(), pos, self.n_qubits());
        Ok(Self {
            amplitudes: &full * &self.amplitudes,
            labels: self.labels.clone(),
        })
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
            labels: self.labels.clone(),
        }
    }
}

/// Embed a 2x2 operator at qubit position `pos` of an `n`-qubit register.
pub fn embed_single_qubit(op: &Matrix2<C64>, pos: usize, n: usize) -> DMatrix<C64> {
    let mut full = DMatrix::identity(1, 1);
    for k in 0..n {
        let factor = if k == pos {
            DMatrix::from_fn(2, 2, |i, j| op[(i, j)])
        } else {
            DMatrix::identity(2, 2)
        };
        full = full.kronecker(&factor);
    }
    full
}

// ---------------------------------------------------------------------------
// DensityOperator
// ---------------------------------------------------------------------------

/// A mixed state (or unnormalized positive operator) on a tagged register.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
    labels: Vec<String>,
}

impl DensityOperator {
    /// Build from a matrix, verifying shape and Hermiticity.
    pub fn new(matrix: DMatrix<C64>, labels: Vec<String>) -> Result<Self> {
        check_labels(&labels)?;
        let dim = 1 << labels.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for {} qubits",
                matrix.nrows(),
                matrix.ncols(),
                labels.len()
            )));
        }
        let herm_dev = (&matrix - matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        if herm_dev > tol::ALGEBRAIC {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max deviation {herm_dev:.3e})"
            )));
        }
        Ok(Self { matrix, labels })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.to_density()
    }

    pub fn maximally_mixed(labels: &[&str]) -> Self {
        let dim = 1 << labels.len();
        Self {
            matrix: DMatrix::identity(dim, dim) * c(1.0 / dim as f64, 0.0),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_qubits(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownTag(label.to_string()))
    }

    /// Eigenvalues of the (Hermitian) matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }

    /// Full density-operator validation: Hermitian, unit trace, PSD.
    pub fn validate_normalized(&self) -> Result<()> {
        if (self.trace() - 1.0).abs() > tol::ALGEBRAIC {
            return Err(Error::InvalidState(format!("trace {} != 1", self.trace())));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < tol::PSD_FLOOR {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Clip eigenvalues below the PSD floor to zero and renormalize.
    /// The flag reports whether any clipping actually happened.
    pub fn psd_clipped(&self) -> (Self, bool) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let clipped = eig.eigenvalues.iter().any(|&v| v < 0.0);
        if !clipped {
            return (self.clone(), false);
        }
        let vals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        let mut m = DMatrix::from_element(self.dim(), self.dim(), c(0.0, 0.0));
        for (k, &v) in vals.iter().enumerate() {
            let col = eig.eigenvectors.column(k);
            m += (col * col.adjoint()) * c(v / total, 0.0);
        }
        (
            Self {
                matrix: m,
                labels: self.labels.clone(),
            },
            true,
        )
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        for l in other.labels() {
            if self.labels.contains(l) {
                return Err(Error::DuplicateTag(l.clone()));
            }
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(other.labels());
        Ok(Self {
            matrix: self.matrix.kronecker(&other.matrix),
            labels,
        })
    }

    /// Trace out everything except the `keep` tags, preserving their original
    /// order of appearance.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::DimensionMismatch("empty keep set".into()));
        }
        for l in keep {
            self.label_index(l)?;
        }
        let n = self.n_qubits();
        let kept_pos: Vec<usize> = (0..n)
            .filter(|&k| keep.contains(&self.labels[k].as_str()))
            .collect();
        let traced_pos: Vec<usize> = (0..n).filter(|k| !kept_pos.contains(k)).collect();
        let kd = 1 << kept_pos.len();
        let td = 1 << traced_pos.len();

        let full_index = |kept_bits: usize, traced_bits: usize| -> usize {
            let mut idx = 0usize;
            for (a, &k) in kept_pos.iter().enumerate() {
                let bit = (kept_bits >> (kept_pos.len() - 1 - a)) & 1;
                idx |= bit << (n - 1 - k);
            }
            for (a, &k) in traced_pos.iter().enumerate() {
                let bit = (traced_bits >> (traced_pos.len() - 1 - a)) & 1;
                idx |= bit << (n - 1 - k);
            }
            idx
        };

        let mut out = DMatrix::from_element(kd, kd, c(0.0, 0.0));
        for i in 0..kd {
            for j in 0..kd {
                let mut sum = c(0.0, 0.0);
                for t in 0..td {
                    sum += self.matrix[(full_index(i, t), full_index(j, t))];
                }
                out[(i, j)] = sum;
            }
        }
        let labels: Vec<String> = kept_pos.iter().map(|&k| self.labels[k].clone()).collect();
        Ok(Self {
            matrix: out,
            labels,
        })
    }

    pub fn reorder(&self, new_labels: &[&str]) -> Result<Self> {
        let n = self.n_qubits();
        if new_labels.len() != n {
            return Err(Error::DimensionMismatch("reorder label count".into()));
        }
        let old_pos: Vec<usize> = new_labels
            .iter()
            .map(|l| self.label_index(l))
            .collect::<Result<_>>()?;
        let map_index = |new_idx: usize| -> usize {
            let mut old_idx = 0usize;
            for (new_k, &old_k) in old_pos.iter().enumerate() {
                let bit = (new_idx >> (n - 1 - new_k)) & 1;
                old_idx |= bit << (n - 1 - old_k);
            }
            old_idx
        };
        let dim = self.dim();
        let m = DMatrix::from_fn(dim, dim, |i, j| self.matrix[(map_index(i), map_index(j))]);
        Self::new(m, new_labels.iter().map(|s| s.to_string()).collect())
    }

    /// Conjugate by an arbitrary operator on the full register: `U rho U^dag`.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("operator size".into()));
        }
        Ok(Self {
            matrix: u * &self.matrix * u.adjoint(),
            labels: self.labels.clone(),
        })
    }

    pub fn apply_gate(&self, gate: &GateSpec, label: &str) -> Result<Self> {
        let pos = self.label_index(label)?;
        let full = embed_single_qubit(gate.matrix(), pos, self.n_qubits());
        self.conjugate_by(&full)
    }

    /// `tr(rho O)` for a Hermitian observable, returning the real part.
    pub fn expectation(&self, op: &DMatrix<C64>) -> f64 {
        (&self.matrix * op).trace().re
    }

    /// `<target| rho |target>`.
    pub fn fidelity(&self, target: &StateVector) -> Result<f64> {
        if target.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                target.dim(),
                self.dim()
            )));
        }
        let v = target.amplitudes();
        let f = (v.adjoint() * &self.matrix * v)[(0, 0)].re;
        Ok(f.clamp(0.0, 1.0))
    }

    /// Wootters concurrence of a two-qubit state.
    ///
    /// Computed through the spin-flip spectrum: with
    /// `rho~ = (sy x sy) rho* (sy x sy)`, the concurrence is
    /// `max(0, l1 - l2 - l3 - l4)` where `l_i` are the square roots of the
    /// eigenvalues of `sqrt(rho) rho~ sqrt(rho)` in decreasing order.
    pub fn concurrence(&self) -> Result<f64> {
        if self.dim() != 4 {
            return Err(Error::DimensionMismatch(
                "concurrence requires a two-qubit state".into(),
            ));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < tol::PSD_FLOOR {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        let yy = {
            let sy = sigma_y();
            DMatrix::from_fn(2, 2, |i, j| sy[(i, j)])
                .kronecker(&DMatrix::from_fn(2, 2, |i, j| sy[(i, j)]))
        };
        let conj = self.matrix.map(|z| z.conj());
        let flipped = &yy * conj * &yy;

        // Hermitian square root of rho, clipping spectral noise below zero.
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut sqrt_rho = DMatrix::from_element(4, 4, c(0.0, 0.0));
        for k in 0..4 {
            let v = eig.eigenvalues[k].max(0.0).sqrt();
            let col = eig.eigenvectors.column(k);
            sqrt_rho += (col * col.adjoint()) * c(v, 0.0);
        }

        let m = &sqrt_rho * flipped * &sqrt_rho;
        let herm = (&m + m.adjoint()) * c(0.5, 0.0);
        let mut lambdas: Vec<f64> = SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .map(|&v| v.max(0.0).sqrt())
            .collect();
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hh() -> StateVector {
        StateVector::ket0("T1").tensor(&StateVector::ket0("T2")).unwrap()
    }

    #[test]
    fn tensor_of_basis_kets() {
        let s = StateVector::ket0("A").tensor(&StateVector::ket1("B")).unwrap();
        let amps: Vec<f64> = s.amplitudes().iter().map(|z| z.re).collect();
        assert_eq!(amps, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn tensor_rejects_duplicate_tags() {
        let a = StateVector::ket0("A");
        assert!(matches!(
            a.tensor(&StateVector::ket1("A")),
            Err(Error::DuplicateTag(_))
        ));
    }

    #[test]
    fn four_qubit_input_state() {
        // |H>|H> x |Phi->: target product state, controls entangled.
        let targets = hh();
        let controls = StateVector::phi_minus("C1", "C2", 0.0);
        let input = targets.tensor(&controls).unwrap();
        assert_eq!(input.labels(), &["T1", "T2", "C1", "C2"]);
        assert_abs_diff_eq!(input.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(input.amplitudes()[3].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(input.is_normalized());
    }

    #[test]
    fn tensor_of_mixed_states_has_unit_trace() {
        let a = DensityOperator::maximally_mixed(&["A"]);
        let b = DensityOperator::maximally_mixed(&["B"]);
        let ab = a.tensor(&b).unwrap();
        assert_abs_diff_eq!(ab.trace(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ab.matrix()[(0, 0)].re, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn bell_state_marginal_is_maximally_mixed() {
        let phi = StateVector::phi_minus("C1", "C2", 0.0).to_density();
        let red = phi.partial_trace(&["C1"]).unwrap();
        assert_abs_diff_eq!(red.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(red.matrix()[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(red.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(red.trace(), phi.trace(), epsilon = 1e-10);
    }

    #[test]
    fn product_state_factorizes_under_partial_trace() {
        let zero = StateVector::ket0("T");
        let plus = StateVector::plus("P");
        let rho = zero.tensor(&plus).unwrap().to_density();
        let red = rho.partial_trace(&["P"]).unwrap();
        let expect = StateVector::plus("P").to_density();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    red.matrix()[(i, j)].re,
                    expect.matrix()[(i, j)].re,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn partial_trace_unknown_tag_errors() {
        let rho = DensityOperator::maximally_mixed(&["A", "B"]);
        assert!(matches!(
            rho.partial_trace(&["Z"]),
            Err(Error::UnknownTag(_))
        ));
    }

    #[test]
    fn fidelity_of_pure_state_with_itself() {
        let rho = hh().to_density();
        assert_abs_diff_eq!(rho.fidelity(&hh()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_of_maximally_mixed_two_qubit() {
        let rho = DensityOperator::maximally_mixed(&["T1", "T2"]);
        assert_abs_diff_eq!(rho.fidelity(&hh()).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let rho = DensityOperator::maximally_mixed(&["A"]);
        assert!(rho.fidelity(&hh()).is_err());
    }

    #[test]
    fn fidelity_completeness_over_basis() {
        // Fidelities against a full orthonormal basis sum to the trace.
        let rho = StateVector::phi_minus("A", "B", 0.3).to_density();
        let mut total = 0.0;
        for bits in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let psi = StateVector::basis_state(&["A", "B"], &bits).unwrap();
            total += rho.fidelity(&psi).unwrap();
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn concurrence_of_product_state_is_zero() {
        let rho = hh().to_density();
        assert_abs_diff_eq!(rho.concurrence().unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn concurrence_of_bell_state_is_one() {
        let rho = StateVector::phi_minus("A", "B", 0.0).to_density();
        assert_abs_diff_eq!(rho.concurrence().unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn concurrence_invariant_under_local_unitaries() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let rho = random_two_qubit_state(&mut rng);
            let base = rho.concurrence().unwrap();
            let u1 = random_unitary(&mut rng);
            let u2 = random_unitary(&mut rng);
            let rotated = rho
                .apply_gate(&u1, "A")
                .unwrap()
                .apply_gate(&u2, "B")
                .unwrap();
            let angle: f64 = rng.random();
            let _ = angle; // keep rng advancing irregularly
            assert_abs_diff_eq!(rotated.concurrence().unwrap(), base, epsilon = 1e-9);
        }
    }

    #[test]
    fn gate_preserves_norm_and_trace() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = random_unitary(&mut rng);
            let psi = random_pure_state(&mut rng, &["A", "B"]);
            let out = psi.apply_gate(&g, "A").unwrap();
            assert_abs_diff_eq!(out.norm(), psi.norm(), epsilon = 1e-10);
            let rho = random_two_qubit_state(&mut rng);
            let out = rho.apply_gate(&g, "B").unwrap();
            assert_abs_diff_eq!(out.trace(), rho.trace(), epsilon = 1e-10);
        }
    }

    #[test]
    fn tensor_then_partial_trace_roundtrip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = random_pure_state(&mut rng, &["A"]).to_density();
            let b = random_pure_state(&mut rng, &["B"]).to_density();
            let ab = a.tensor(&b).unwrap();
            let back = ab.partial_trace(&["A"]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let d = (back.matrix()[(i, j)] - a.matrix()[(i, j)]).norm();
                    assert!(d < 1e-10, "roundtrip deviation {d}");
                }
            }
        }
    }

    #[test]
    fn reorder_is_an_involution_on_swapped_labels() {
        let s = StateVector::ket0("A").tensor(&StateVector::ket1("B")).unwrap();
        let swapped = s.reorder(&["B", "A"]).unwrap();
        let amps: Vec<f64> = swapped.amplitudes().iter().map(|z| z.re).collect();
        assert_eq!(amps, vec![0.0, 0.0, 1.0, 0.0]); // |1>_B |0>_A
        let back = swapped.reorder(&["A", "B"]).unwrap();
        assert_eq!(back.amplitudes()[1].re, 1.0);
    }

    #[test]
    fn preset_gates_are_unitary() {
        for name in ["identity", "sigma_z", "sqrt_iX", "hadamard"] {
            GateSpec::from_name(name).unwrap();
        }
        assert!(GateSpec::from_name("bogus").is_err());
    }

    #[test]
    fn non_unitary_gate_rejected() {
        let m = Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0));
        assert!(matches!(GateSpec::new("bad", m), Err(Error::NotUnitary(_))));
    }

}
