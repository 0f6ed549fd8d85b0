//! Causal-model verifier for the SWITCH's three-party behavior.
//!
//! Alice and Bob act inside the SWITCH with instruments (Kraus branches per
//! setting), Charlie measures the control afterwards. The resulting behavior
//! p(a,b,c|x,y,z) always admits the decomposition
//! `p = zeta * p^{A<B<C} + (1-zeta) * p^{B<A<C}`, where the ordered
//! behaviors share Charlie's conditional with the SWITCH itself and zeta is
//! the weight of the control on |0>.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linalg::{c, C64, StateVector};
use crate::tol;

/// One party's laboratory operation: per setting, a list of Kraus branches
/// (one per outcome). Branches must resolve the identity per setting.
#[derive(Debug, Clone)]
pub struct Instrument {
    branches: Vec<Vec<Matrix2<C64>>>,
}

impl Instrument {
    pub fn new(branches: Vec<Vec<Matrix2<C64>>>) -> Result<Self> {
        for (x, setting) in branches.iter().enumerate() {
            if setting.is_empty() {
                return Err(Error::InvalidInstrument(x));
            }
            let mut sum = Matrix2::from_element(c(0.0, 0.0));
            for k in setting {
                sum += k.adjoint() * k;
            }
            if (sum - Matrix2::identity()).norm() > tol::ALGEBRAIC {
                return Err(Error::InvalidInstrument(x));
            }
        }
        Ok(Self { branches })
    }

    /// Single-setting, single-branch unitary instrument.
    pub fn unitary(gate: &crate::linalg::GateSpec) -> Self {
        Self {
            branches: vec![vec![*gate.matrix()]],
        }
    }

    /// Projective z-basis measurement (measure and keep).
    pub fn projective_z() -> Self {
        let p0 = Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0));
        let p1 = Matrix2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        Self {
            branches: vec![vec![p0, p1]],
        }
    }

    /// Projective x-basis measurement.
    pub fn projective_x() -> Self {
        let h = 0.5;
        let pp = Matrix2::new(c(h, 0.0), c(h, 0.0), c(h, 0.0), c(h, 0.0));
        let pm = Matrix2::new(c(h, 0.0), c(-h, 0.0), c(-h, 0.0), c(h, 0.0));
        Self {
            branches: vec![vec![pp, pm]],
        }
    }

    /// Measure in an orthonormal basis and reprepare arbitrary pure states:
    /// K_k = |phi_k><m_k|.
    pub fn measure_reprepare(
        basis: [Vector2<C64>; 2],
        reprepared: [Vector2<C64>; 2],
    ) -> Result<Self> {
        let branches = vec![vec![
            reprepared[0] * basis[0].adjoint(),
            reprepared[1] * basis[1].adjoint(),
        ]];
        Self::new(branches)
    }

    pub fn n_settings(&self) -> usize {
        self.branches.len()
    }

    pub fn n_outcomes(&self, x: usize) -> usize {
        self.branches[x].len()
    }

    pub fn branch(&self, x: usize, outcome: usize) -> &Matrix2<C64> {
        &self.branches[x][outcome]
    }
}

/// An orthonormal basis for Charlie's control measurement.
#[derive(Debug, Clone)]
pub struct CharlieBasis {
    pub states: [Vector2<C64>; 2],
}

impl CharlieBasis {
    pub fn new(states: [Vector2<C64>; 2]) -> Result<Self> {
        let g00 = (states[0].adjoint() * states[0])[(0, 0)];
        let g11 = (states[1].adjoint() * states[1])[(0, 0)];
        let g01 = (states[0].adjoint() * states[1])[(0, 0)];
        if (g00.re - 1.0).abs() > tol::ALGEBRAIC
            || (g11.re - 1.0).abs() > tol::ALGEBRAIC
            || g01.norm() > tol::ALGEBRAIC
        {
            return Err(Error::NotOrthogonal);
        }
        Ok(Self { states })
    }

    pub fn plus_minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            states: [
                Vector2::new(c(s, 0.0), c(s, 0.0)),
                Vector2::new(c(s, 0.0), c(-s, 0.0)),
            ],
        }
    }

    /// Basis (cos t |0> + e^{i phi} sin t |1>, sin t |0> - e^{i phi} cos t |1>).
    pub fn rotated(theta: f64, phi: f64) -> Self {
        let e = c(phi.cos(), phi.sin());
        Self {
            states: [
                Vector2::new(c(theta.cos(), 0.0), e * c(theta.sin(), 0.0)),
                Vector2::new(c(theta.sin(), 0.0), -e * c(theta.cos(), 0.0)),
            ],
        }
    }

    /// Default Charlie settings: the +/- basis plus one rotated basis so the
    /// z-dependence of the behavior is exercised nontrivially.
    pub fn default_settings() -> Vec<Self> {
        vec![Self::plus_minus(), Self::rotated(0.4, 0.9)]
    }
}

/// Which fixed order an ordered behavior follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalOrder {
    AliceFirst,
    BobFirst,
}

/// Conditional probabilities p(a,b,c|x,y,z) with binary outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTable {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    data: Vec<f64>,
}

impl BehaviorTable {
    pub fn zeros(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            data: vec![0.0; nx * ny * nz * 8],
        }
    }

    fn idx(&self, x: usize, y: usize, z: usize, a: usize, b: usize, cc: usize) -> usize {
        ((((x * self.ny + y) * self.nz + z) * 2 + a) * 2 + b) * 2 + cc
    }

    pub fn get(&self, x: usize, y: usize, z: usize, a: usize, b: usize, cc: usize) -> f64 {
        self.data[self.idx(x, y, z, a, b, cc)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, a: usize, b: usize, cc: usize, p: f64) {
        let i = self.idx(x, y, z, a, b, cc);
        self.data[i] = p;
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// Normalization per (x,y,z) slice and no-signaling from Charlie's
    /// setting to Alice and Bob's marginal.
    pub fn validate(&self) -> Result<()> {
        for x in 0..self.nx {
            for y in 0..self.ny {
                for z in 0..self.nz {
                    let mut sum = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            for cc in 0..2 {
                                let p = self.get(x, y, z, a, b, cc);
                                if p < -1e-12 {
                                    return Err(Error::InvalidState(format!(
                                        "negative probability {p}"
                                    )));
                                }
                                sum += p;
                            }
                        }
                    }
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidState(format!(
                            "slice ({x},{y},{z}) sums to {sum}"
                        )));
                    }
                    // Marginal over c must not depend on z.
                    for a in 0..2 {
                        for b in 0..2 {
                            let m0: f64 =
                                (0..2).map(|cc| self.get(x, y, 0, a, b, cc)).sum();
                            let mz: f64 =
                                (0..2).map(|cc| self.get(x, y, z, a, b, cc)).sum();
                            if (m0 - mz).abs() > 1e-9 {
                                return Err(Error::InvalidState(format!(
                                    "signaling from z: marginal ({x},{y},a={a},b={b}) \
                                     differs between z=0 and z={z}"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,a,b,c,p\n");
        for x in 0..self.nx {
            for y in 0..self.ny {
                for z in 0..self.nz {
                    for a in 0..2 {
                        for b in 0..2 {
                            for cc in 0..2 {
                                out.push_str(&format!(
                                    "{x},{y},{z},{a},{b},{cc},{}\n",
                                    self.get(x, y, z, a, b, cc)
                                ));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dims = (0usize, 0usize, 0usize);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || (idx == 0 && trimmed.starts_with('x')) {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 7 fields, found {}", fields.len()),
                });
            }
            let int = |s: &str| -> Result<usize> {
                s.trim().parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad index `{s}`: {e}"),
                })
            };
            let x = int(fields[0])?;
            let y = int(fields[1])?;
            let z = int(fields[2])?;
            let a = int(fields[3])?;
            let b = int(fields[4])?;
            let cc = int(fields[5])?;
            if a > 1 || b > 1 || cc > 1 {
                return Err(Error::Parse {
                    line,
                    msg: "outcomes must be binary".into(),
                });
            }
            let p: f64 = fields[6].trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad probability `{}`: {e}", fields[6]),
            })?;
            dims.0 = dims.0.max(x + 1);
            dims.1 = dims.1.max(y + 1);
            dims.2 = dims.2.max(z + 1);
            rows.push((x, y, z, a, b, cc, p));
        }
        let mut table = Self::zeros(dims.0, dims.1, dims.2);
        for (x, y, z, a, b, cc, p) in rows {
            table.set(x, y, z, a, b, cc, p);
        }
        Ok(table)
    }
}

fn state_amplitudes(state: &StateVector) -> Result<Vector2<C64>> {
    if state.n_qubits() != 1 {
        return Err(Error::DimensionMismatch(
            "expected a single-qubit state".into(),
        ));
    }
    Ok(Vector2::new(state.amplitudes()[0], state.amplitudes()[1]))
}

/// The SWITCH's behavior: Alice and Bob act in a control-dependent order,
/// Charlie then measures the control in basis z. For control
/// alpha|0> + beta|1>,
/// `p(a,b,c|x,y,z) = || alpha <q_c|0> K_b K_a |t> + beta <q_c|1> K_a K_b |t> ||^2`.
pub fn switch_behavior(
    alice: &Instrument,
    bob: &Instrument,
    control_in: &StateVector,
    target_in: &StateVector,
    charlie_settings: &[CharlieBasis],
) -> Result<BehaviorTable> {
    let control = state_amplitudes(control_in)?;
    let target = state_amplitudes(target_in)?;
    let (alpha, beta) = (control[0], control[1]);
    let mut table = BehaviorTable::zeros(
        alice.n_settings(),
        bob.n_settings(),
        charlie_settings.len(),
    );
    for x in 0..alice.n_settings() {
        for y in 0..bob.n_settings() {
            for a in 0..alice.n_outcomes(x).min(2) {
                for b in 0..bob.n_outcomes(y).min(2) {
                    let ka = alice.branch(x, a);
                    let kb = bob.branch(y, b);
                    let v_ab = kb * ka * target;
                    let v_ba = ka * kb * target;
                    for (z, basis) in charlie_settings.iter().enumerate() {
                        for (cc, q) in basis.states.iter().enumerate() {
                            let w0 = q[0].conj(); // <q_c|0>
                            let w1 = q[1].conj(); // <q_c|1>
                            let amp = v_ab * (alpha * w0) + v_ba * (beta * w1);
                            let p = amp.norm_squared();
                            table.set(x, y, z, a, b, cc, p);
                        }
                    }
                }
            }
        }
    }
    table.validate()?;
    Ok(table)
}

/// A fixed-order behavior: Alice and Bob act sequentially in the given
/// order, and Charlie's conditional outcome distribution is inherited from
/// the SWITCH run (his measurement happens after both and may depend on
/// everything before it). Where the SWITCH never produces an (a,b) pair,
/// Charlie's conditional falls back to measuring the untouched control.
pub fn ordered_behavior(
    order: CausalOrder,
    alice: &Instrument,
    bob: &Instrument,
    control_in: &StateVector,
    target_in: &StateVector,
    charlie_settings: &[CharlieBasis],
) -> Result<BehaviorTable> {
    let control = state_amplitudes(control_in)?;
    let target = state_amplitudes(target_in)?;
    let switch = switch_behavior(alice, bob, control_in, target_in, charlie_settings)?;
    let mut table = BehaviorTable::zeros(
        alice.n_settings(),
        bob.n_settings(),
        charlie_settings.len(),
    );
    for x in 0..alice.n_settings() {
        for y in 0..bob.n_settings() {
            for a in 0..alice.n_outcomes(x).min(2) {
                for b in 0..bob.n_outcomes(y).min(2) {
                    let ka = alice.branch(x, a);
                    let kb = bob.branch(y, b);
                    let v = match order {
                        CausalOrder::AliceFirst => kb * ka * target,
                        CausalOrder::BobFirst => ka * kb * target,
                    };
                    let p_ab = v.norm_squared();
                    for (z, basis) in charlie_settings.iter().enumerate() {
                        let marg: f64 = (0..2).map(|cc| switch.get(x, y, z, a, b, cc)).sum();
                        for (cc, q) in basis.states.iter().enumerate() {
                            let cond = if marg > tol::UNREACHABLE_BRANCH {
                                switch.get(x, y, z, a, b, cc) / marg
                            } else {
                                (q.adjoint() * control)[(0, 0)].norm_sqr()
                            };
                            table.set(x, y, z, a, b, cc, p_ab * cond);
                        }
                    }
                }
            }
        }
    }
    table.validate()?;
    Ok(table)
}

/// Outcome of a decomposition attempt.
#[derive(Debug, Clone, Copy)]
pub struct Decomposition {
    pub zeta: f64,
    /// Largest absolute per-entry residual of the two-term mixture.
    pub residual: f64,
    pub feasible: bool,
}

/// Find zeta minimizing the squared residual of
/// `p = zeta * p_a + (1 - zeta) * p_b` and check feasibility.
/// When the two candidates coincide any zeta fits; the tie breaks to 1/2.
pub fn find_causal_decomposition(
    p: &BehaviorTable,
    p_a: &BehaviorTable,
    p_b: &BehaviorTable,
) -> Result<Decomposition> {
    if p.entries().len() != p_a.entries().len() || p.entries().len() != p_b.entries().len() {
        return Err(Error::TableMismatch(
            "behavior tables have different shapes".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&pi, &ai), &bi) in p.entries().iter().zip(p_a.entries()).zip(p_b.entries()) {
        num += (pi - bi) * (ai - bi);
        den += (ai - bi) * (ai - bi);
    }
    let zeta = if den > 1e-18 { num / den } else { 0.5 };
    let mut residual = 0.0_f64;
    for ((&pi, &ai), &bi) in p.entries().iter().zip(p_a.entries()).zip(p_b.entries()) {
        residual = residual.max((pi - (zeta * ai + (1.0 - zeta) * bi)).abs());
    }
    let feasible = residual < 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&zeta);
    Ok(Decomposition {
        zeta,
        residual,
        feasible,
    })
}

/// Convenience driver: build the three behaviors and decompose.
pub fn decompose_switch(
    alice: &Instrument,
    bob: &Instrument,
    control_in: &StateVector,
    target_in: &StateVector,
    charlie_settings: &[CharlieBasis],
) -> Result<Decomposition> {
    let p = switch_behavior(alice, bob, control_in, target_in, charlie_settings)?;
    let pa = ordered_behavior(
        CausalOrder::AliceFirst,
        alice,
        bob,
        control_in,
        target_in,
        charlie_settings,
    )?;
    let pb = ordered_behavior(
        CausalOrder::BobFirst,
        alice,
        bob,
        control_in,
        target_in,
        charlie_settings,
    )?;
    find_causal_decomposition(&p, &pa, &pb)
}
