//! The quantum SWITCH as an explicit controlled-composition isometry.
//!
//! One SWITCH applies its two gates to the target in an order governed by a
//! control qubit: control `|0>` routes the target through Alice then Bob,
//! control `|1>` through Bob then Alice. Two SWITCHes with entangled controls
//! make the orders themselves entangled; measuring both controls in the
//! `{|+>, |->}` basis then leaves the targets in a (possibly entangled)
//! conditional state.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, embed_single_qubit, DensityOperator, GateSpec, StateVector, FRAC_1_SQRT_2};
use crate::tol;

/// The pair of gates applied inside one SWITCH.
#[derive(Debug, Clone)]
pub struct SwitchGates {
    /// Alice's unitary (applied first when the control is `|0>`).
    pub alice: GateSpec,
    /// Bob's unitary.
    pub bob: GateSpec,
}

impl SwitchGates {
    pub fn new(alice: GateSpec, bob: GateSpec) -> Self {
        Self { alice, bob }
    }

    /// The gate choice that transfers the control entanglement maximally:
    /// Alice applies `sigma_z`, Bob applies `(1 + i sigma_x)/sqrt(2)`.
    pub fn entangling() -> Self {
        Self::new(GateSpec::sigma_z(), GateSpec::sqrt_ix())
    }

    /// Alice-then-Bob composition `U_B U_A`.
    pub fn forward(&self) -> Matrix2<Complex64> {
        self.bob.matrix() * self.alice.matrix()
    }

    /// Bob-then-Alice composition `U_A U_B`.
    pub fn reverse(&self) -> Matrix2<Complex64> {
        self.alice.matrix() * self.bob.matrix()
    }
}

/// Sign of a control measurement outcome in the `{|+>, |->}` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// One joint outcome of the two control measurements. `basis_phase`
/// generalizes `{|+>, |->}` to `{(|0> +- e^{-i phi}|1>)/sqrt(2)}`.
#[derive(Debug, Clone, Copy)]
pub struct PostselectionOutcome {
    pub c1: Sign,
    pub c2: Sign,
    pub basis_phase: f64,
}

impl PostselectionOutcome {
    pub fn new(c1: Sign, c2: Sign) -> Self {
        Self {
            c1,
            c2,
            basis_phase: 0.0,
        }
    }

    pub fn with_phase(c1: Sign, c2: Sign, basis_phase: f64) -> Self {
        Self {
            c1,
            c2,
            basis_phase: basis_phase.rem_euclid(std::f64::consts::TAU),
        }
    }

    pub fn all() -> [Self; 4] {
        [
            Self::new(Sign::Plus, Sign::Plus),
            Self::new(Sign::Plus, Sign::Minus),
            Self::new(Sign::Minus, Sign::Plus),
            Self::new(Sign::Minus, Sign::Minus),
        ]
    }
}

/// `(|0> +- e^{-i phi}|1>)/sqrt(2)` as a measurement vector.
fn postselection_ket(sign: Sign, phase: f64) -> DVector<Complex64> {
    let s = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    DVector::from_vec(vec![
        c(FRAC_1_SQRT_2, 0.0),
        Complex64::from_polar(FRAC_1_SQRT_2 * s, -phase),
    ])
}

/// The controlled-order operator of one SWITCH on its (target, control) pair,
/// in `[T, C]` qubit order.
fn switch_operator(gates: &SwitchGates) -> DMatrix<Complex64> {
    let fwd = gates.forward();
    let rev = gates.reverse();
    let p0 = DMatrix::from_fn(2, 2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let p1 = DMatrix::from_fn(2, 2, |i, j| if i == 1 && j == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let fwd = DMatrix::from_fn(2, 2, |i, j| fwd[(i, j)]);
    let rev = DMatrix::from_fn(2, 2, |i, j| rev[(i, j)]);
    fwd.kronecker(&p0) + rev.kronecker(&p1)
}

/// Run one SWITCH on pure single-qubit control and target states.
///
/// Returns the `[target, control]` two-qubit state
/// `alpha (U_B U_A |t>) x |0> + beta (U_A U_B |t>) x |1>`
/// for `|c> = alpha |0> + beta |1>`.
pub fn single_switch(
    control: &StateVector,
    target: &StateVector,
    gates: &SwitchGates,
) -> Result<StateVector> {
    if control.n_qubits() != 1 || target.n_qubits() != 1 {
        return Err(Error::DimensionMismatch(
            "single_switch expects one control and one target qubit".into(),
        ));
    }
    let joint = target.tensor(control)?;
    let w = switch_operator(gates);
    StateVector::new(&w * joint.amplitudes(), joint.labels().to_vec())
}

/// Run the entangled double SWITCH.
///
/// `control_joint` carries tags `[C1, C2]`, `target_joint` tags `[T1, T2]`.
/// The output is the four-qubit operator with tags `[T1, C1, T2, C2]`.
pub fn entangled_switch(
    control_joint: &DensityOperator,
    target_joint: &DensityOperator,
    g1: &SwitchGates,
    g2: &SwitchGates,
) -> Result<DensityOperator> {
    if control_joint.n_qubits() != 2 || target_joint.n_qubits() != 2 {
        return Err(Error::DimensionMismatch(
            "entangled_switch expects two-qubit control and target operators".into(),
        ));
    }
    let t = target_joint.labels().to_vec();
    let cq = control_joint.labels().to_vec();
    let joint = target_joint.tensor(control_joint)?;
    let interleaved = [t[0].as_str(), cq[0].as_str(), t[1].as_str(), cq[1].as_str()];
    let joint = joint.reorder(&interleaved)?;

    let w = switch_operator(g1).kronecker(&switch_operator(g2));
    joint.conjugate_by(&w)
}

/// Project the two control qubits onto a post-selection outcome.
///
/// Returns the normalized conditional target state (tags `[T1, T2]` order of
/// appearance) and the outcome probability. Outcomes with probability below
/// the unreachable-branch threshold are rejected.
pub fn postselect_controls(
    state: &DensityOperator,
    outcome: &PostselectionOutcome,
) -> Result<(DensityOperator, f64)> {
    let labels = state.labels().to_vec();
    let c1_pos = labels
        .iter()
        .position(|l| l == "C1")
        .ok_or_else(|| Error::UnknownTag("C1".into()))?;
    let c2_pos = labels
        .iter()
        .position(|l| l == "C2")
        .ok_or_else(|| Error::UnknownTag("C2".into()))?;

    let v1 = postselection_ket(outcome.c1, outcome.basis_phase);
    let v2 = postselection_ket(outcome.c2, outcome.basis_phase);
    let proj = |v: &DVector<Complex64>| {
        let m = v * v.adjoint();
        Matrix2::from_fn(|i, j| m[(i, j)])
    };

    let n = state.n_qubits();
    let p1 = embed_single_qubit(&proj(&v1), c1_pos, n);
    let p2 = embed_single_qubit(&proj(&v2), c2_pos, n);
    let projected = state.conjugate_by(&(p1 * p2))?;
    let prob = projected.trace();
    if prob < tol::UNREACHABLE_BRANCH {
        return Err(Error::UnreachableBranch(prob));
    }

    let keep: Vec<&str> = labels
        .iter()
        .filter(|l| l.as_str() != "C1" && l.as_str() != "C2")
        .map(|l| l.as_str())
        .collect();
    let target = projected.partial_trace(&keep)?;
    let normalized = DensityOperator::new(
        target.matrix() / c(prob, 0.0),
        target.labels().to_vec(),
    )?;
    Ok((normalized, prob))
}

/// The nominal experiment input: targets in `|H>|H>`, controls in
/// `(|00> - |11>)/sqrt(2)`.
pub fn nominal_input() -> (DensityOperator, DensityOperator) {
    let targets = StateVector::ket0("T1")
        .tensor(&StateVector::ket0("T2"))
        .unwrap()
        .to_density();
    let controls = StateVector::phi_minus("C1", "C2", 0.0).to_density();
    (controls, targets)
}

/// The ideal post-selected output `(|ll> - |rr>)/sqrt(2)` on `[T1, T2]`.
pub fn ideal_output_state() -> StateVector {
    let ll = StateVector::ket_l("T1").tensor(&StateVector::ket_l("T2")).unwrap();
    let rr = StateVector::ket_r("T1").tensor(&StateVector::ket_r("T2")).unwrap();
    let amps = ll.amplitudes() * c(FRAC_1_SQRT_2, 0.0)
        - rr.amplitudes() * c(FRAC_1_SQRT_2, 0.0);
    StateVector::new(amps, vec!["T1".into(), "T2".into()]).unwrap()
}
