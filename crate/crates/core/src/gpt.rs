//! Theory-independent layer: binary-system GPT states (two local Bloch-like
//! vectors plus a correlation tensor), the joint probability rule
//! `p = 1/4 (1 + w1.e1 + w2.e2 + e1.T e2)`, local transformations, and the
//! RMS product-distance tests used to certify that measured tables are
//! consistent with product states.
//!
//! The global parameter of a general bipartite GPT state carries no
//! operational consequence for pairs of local measurements, so it is
//! deliberately not represented.

use nalgebra::{Matrix3, Vector3};

use crate::bell::correlation_tensor;
use crate::error::{Error, Result};
use crate::linalg::DensityOperator;
use crate::measurement::{efficiency_correct, CountsTable};
use crate::tol;

/// Bipartite binary-system GPT state.
#[derive(Debug, Clone, PartialEq)]
pub struct GptState {
    pub omega1: Vector3<f64>,
    pub omega2: Vector3<f64>,
    pub tensor: Matrix3<f64>,
}

impl GptState {
    pub fn new(omega1: Vector3<f64>, omega2: Vector3<f64>, tensor: Matrix3<f64>) -> Result<Self> {
        for (name, w) in [("omega1", &omega1), ("omega2", &omega2)] {
            if w.norm() > 1.0 + 1e-9 {
                return Err(Error::InvalidState(format!(
                    "{name} has norm {} > 1",
                    w.norm()
                )));
            }
        }
        if tensor.iter().any(|&t| t.abs() > 1.0 + 1e-9) {
            return Err(Error::InvalidState(
                "correlation tensor entry outside [-1, 1]".into(),
            ));
        }
        Ok(Self {
            omega1,
            omega2,
            tensor,
        })
    }

    /// Extract the GPT representation of a two-qubit quantum state.
    pub fn from_density(rho: &DensityOperator) -> Result<Self> {
        let t = correlation_tensor(rho)?;
        let labels = rho.labels().to_vec();
        let r1 = rho.partial_trace(&[labels[0].as_str()])?;
        let r2 = rho.partial_trace(&[labels[1].as_str()])?;
        let bloch = |r: &DensityOperator| -> Vector3<f64> {
            let m = r.matrix();
            Vector3::new(
                2.0 * m[(0, 1)].re,
                -2.0 * m[(0, 1)].im,
                (m[(0, 0)] - m[(1, 1)]).re,
            )
        };
        Self::new(bloch(&r1), bloch(&r2), *t.matrix())
    }
}

/// Product effect of two local binary-outcome effects.
#[derive(Debug, Clone, PartialEq)]
pub struct GptEffect {
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
}

impl GptEffect {
    pub fn new(e1: Vector3<f64>, e2: Vector3<f64>) -> Result<Self> {
        for (name, e) in [("e1", &e1), ("e2", &e2)] {
            if e.norm() > 1.0 + 1e-9 {
                return Err(Error::InvalidState(format!(
                    "effect {name} has norm {} > 1",
                    e.norm()
                )));
            }
        }
        Ok(Self { e1, e2 })
    }

    /// Effect for outcome signs (s1, s2) along measurement axes (a, b).
    pub fn from_axes(a: Vector3<f64>, s1: f64, b: Vector3<f64>, s2: f64) -> Result<Self> {
        Self::new(s1 * a, s2 * b)
    }
}

/// The GPT joint probability rule.
pub fn joint_probability(state: &GptState, effect: &GptEffect) -> Result<f64> {
    let p = 0.25
        * (1.0
            + state.omega1.dot(&effect.e1)
            + state.omega2.dot(&effect.e2)
            + effect.e1.dot(&(state.tensor * effect.e2)));
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::InvalidState(format!(
            "unphysical state/effect pair: probability {p}"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// The four outcome probabilities for measurement axes (a, b), in the order
/// (+,+), (+,-), (-,+), (-,-).
pub fn outcome_probabilities(
    state: &GptState,
    a: Vector3<f64>,
    b: Vector3<f64>,
) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (k, (s1, s2)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .into_iter()
        .enumerate()
    {
        out[k] = joint_probability(state, &GptEffect::from_axes(a, s1, b, s2)?)?;
    }
    Ok(out)
}

const FIDUCIAL_AXES: [Vector3<f64>; 3] = [
    Vector3::new(1.0, 0.0, 0.0),
    Vector3::new(0.0, 1.0, 0.0),
    Vector3::new(0.0, 0.0, 1.0),
];

/// Reconstruct a GPT state from the nine fiducial x/y/z counts tables.
/// Local vectors come from marginals averaged over the partner's settings,
/// the tensor from the joint correlations.
pub fn gpt_from_counts(tables: &[CountsTable]) -> Result<GptState> {
    let axis_index = |a: &[f64; 3]| -> Option<usize> {
        FIDUCIAL_AXES
            .iter()
            .position(|f| (Vector3::from_column_slice(a) - f).norm() < 1e-9)
    };
    let mut freq: [[Option<[f64; 4]>; 3]; 3] = Default::default();
    for t in tables {
        if let (Some(i), Some(j)) = (axis_index(&t.axis1), axis_index(&t.axis2)) {
            let corrected = efficiency_correct(t)?;
            let total = corrected.total();
            if total <= 0.0 {
                return Err(Error::EmptyCounts);
            }
            freq[i][j] = Some(corrected.counts.map(|n| n / total));
        }
    }
    let mut tensor = Matrix3::zeros();
    let mut omega1 = Vector3::zeros();
    let mut omega2 = Vector3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let f = freq[i][j].ok_or(Error::MissingFiducial(i, j))?;
            tensor[(i, j)] = f[0] - f[1] - f[2] + f[3];
            omega1[i] += (f[0] + f[1] - f[2] - f[3]) / 3.0;
            omega2[j] += (f[0] - f[1] + f[2] - f[3]) / 3.0;
        }
    }
    GptState::new(omega1, omega2, tensor)
}

/// Apply local reversible transformations: (R1 w1, R2 w2, R1 T R2^t).
pub fn apply_local_transform(
    state: &GptState,
    r1: &Matrix3<f64>,
    r2: &Matrix3<f64>,
) -> Result<GptState> {
    for r in [r1, r2] {
        if ((r.transpose() * r) - Matrix3::identity()).norm() > tol::ALGEBRAIC {
            return Err(Error::NotOrthogonal);
        }
    }
    GptState::new(
        r1 * state.omega1,
        r2 * state.omega2,
        r1 * state.tensor * r2.transpose(),
    )
}

/// One row of a joint-versus-product probability table: the four joint
/// outcome probabilities for a basis pair, optionally with the recorded
/// single-party products (shipped tables carry them at full precision;
/// rederiving them from the rounded joints loses a digit).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTableRow {
    pub label: String,
    /// (1,2), (1,2-perp), (1-perp,2), (1-perp,2-perp).
    pub joint: [f64; 4],
    pub product: Option<[f64; 4]>,
}

impl ProbabilityTableRow {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.joint.iter().sum();
        // Recorded tables round four entries independently to two decimals,
        // so row sums can drift to 0.94-1.04.
        if (sum - 1.0).abs() > 0.065 {
            return Err(Error::InvalidState(format!(
                "row {}: joint probabilities sum to {sum}",
                self.label
            )));
        }
        Ok(())
    }

    /// Marginal products derived from the row's own joints.
    pub fn derived_product(&self) -> [f64; 4] {
        let [pp, pm, mp, _] = self.joint;
        let m1 = pp + pm;
        let m2 = pp + mp;
        [m1 * m2, m1 * (1.0 - m2), (1.0 - m1) * m2, (1.0 - m1) * (1.0 - m2)]
    }

    /// Recorded products when present, derived otherwise.
    pub fn product_or_derived(&self) -> [f64; 4] {
        self.product.unwrap_or_else(|| self.derived_product())
    }
}

/// RMS distance between the joint probabilities and the corresponding
/// product probabilities, averaged over all outcomes and settings.
pub fn rms_product_distance(rows: &[ProbabilityTableRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyCounts);
    }
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for row in rows {
        row.validate()?;
        let q = row.product_or_derived();
        for k in 0..4 {
            sum_sq += (row.joint[k] - q[k]).powi(2);
            n += 1;
        }
    }
    Ok((sum_sq / n as f64).sqrt())
}

/// Build the 36-basis joint/product table for a two-qubit state with exact
/// probabilities (products derived per row).
pub fn rows_from_density(rho: &DensityOperator) -> Result<Vec<ProbabilityTableRow>> {
    use crate::measurement::born_probabilities;
    use crate::tomography::default_settings;
    let mut rows = Vec::with_capacity(36);
    for (id, setting) in default_settings() {
        let joint = born_probabilities(rho, &setting)?;
        rows.push(ProbabilityTableRow {
            label: id,
            joint,
            product: None,
        });
    }
    Ok(rows)
}

/// Uncertainty budget for a product-distance check.
#[derive(Debug, Clone, Copy)]
pub struct CheckUncertainty {
    /// Statistical standard deviation of the RMS distance. When absent it is
    /// derived from the per-entry error as sqrt(2) * entry_sigma.
    pub stat_sigma: Option<f64>,
    /// Per-entry probability uncertainty of the table.
    pub entry_sigma: f64,
    /// Systematic standard deviation, added linearly to the statistical one.
    pub syst_sigma: f64,
}

impl CheckUncertainty {
    pub fn exact() -> Self {
        Self {
            stat_sigma: Some(0.0),
            entry_sigma: 0.0,
            syst_sigma: 0.0,
        }
    }

    pub fn stat(&self) -> f64 {
        self.stat_sigma
            .unwrap_or(std::f64::consts::SQRT_2 * self.entry_sigma)
    }
}

/// Result of one product-distance check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub d: f64,
    pub stat_sigma: f64,
    pub syst_sigma: f64,
    pub pass: bool,
}

fn product_check(rows: &[ProbabilityTableRow], unc: CheckUncertainty) -> Result<CheckReport> {
    let d = rms_product_distance(rows)?;
    let stat = unc.stat();
    // Consistent with zero within two combined standard deviations;
    // statistical and systematic contributions add linearly.
    let pass = d <= 2.0 * (stat + unc.syst_sigma) + 1e-9;
    Ok(CheckReport {
        d,
        stat_sigma: stat,
        syst_sigma: unc.syst_sigma,
        pass,
    })
}

/// Product-state test for the joint target input (assumption 1 of the no-go
/// argument): the 36-basis joint table must be indistinguishable from the
/// product of its marginals.
pub fn check_assumption1(
    rows: &[ProbabilityTableRow],
    unc: CheckUncertainty,
) -> Result<CheckReport> {
    product_check(rows, unc)
}

/// Control-target decoupling test for the two definite-order runs
/// (assumption 2b): each order's control/target table must be a product.
pub fn check_assumption2b(
    rows_ab: &[ProbabilityTableRow],
    rows_ba: &[ProbabilityTableRow],
    unc_ab: CheckUncertainty,
    unc_ba: CheckUncertainty,
) -> Result<(CheckReport, CheckReport)> {
    Ok((product_check(rows_ab, unc_ab)?, product_check(rows_ba, unc_ba)?))
}

/// Parse a probability table CSV. Accepts five columns (label + joints) or
/// nine (with recorded products appended).
pub fn probability_table_from_csv(text: &str) -> Result<Vec<ProbabilityTableRow>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("basis_label")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 && fields.len() != 9 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 5 or 9 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad probability `{s}`: {e}"),
            })
        };
        let joint = [num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?];
        let product = if fields.len() == 9 {
            Some([num(fields[5])?, num(fields[6])?, num(fields[7])?, num(fields[8])?])
        } else {
            None
        };
        let row = ProbabilityTableRow {
            label: fields[0].trim().to_string(),
            joint,
            product,
        };
        row.validate()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyCounts);
    }
    Ok(rows)
}

pub fn probability_table_to_csv(rows: &[ProbabilityTableRow]) -> String {
    let with_products = rows.iter().any(|r| r.product.is_some());
    let mut out = String::from("basis_label,p12,p12p,p1p2,p1p2p");
    if with_products {
        out.push_str(",prod12,prod12p,prod1p2,prod1p2p");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.label, r.joint[0], r.joint[1], r.joint[2], r.joint[3]
        ));
        if with_products {
            let q = r.product_or_derived();
            out.push_str(&format!(",{},{},{},{}", q[0], q[1], q[2], q[3]));
        }
        out.push('\n');
    }
    out
}

/// Measured probability tables and their recorded uncertainties, shipped
/// with the crate.
pub mod fixtures {
    use super::CheckUncertainty;

    /// Joint vs product probabilities for the target-pair input state over
    /// all 36 polarization basis pairs.
    pub const INPUT_SEPARABILITY_CSV: &str = include_str!("../data/input_separability.csv");
    /// Control/target tables after a definite-order run (first order).
    pub const ORDER_AB_CSV: &str = include_str!("../data/order_ab_coupling.csv");
    /// Control/target tables after a definite-order run (reversed order).
    pub const ORDER_BA_CSV: &str = include_str!("../data/order_ba_coupling.csv");

    /// Uncertainties recorded alongside the data sets.
    pub fn input_separability_uncertainty() -> CheckUncertainty {
        CheckUncertainty {
            stat_sigma: Some(0.027),
            entry_sigma: 0.01,
            syst_sigma: 0.0,
        }
    }

    pub fn order_ab_uncertainty() -> CheckUncertainty {
        CheckUncertainty {
            stat_sigma: Some(0.017),
            entry_sigma: 0.01,
            syst_sigma: 0.010,
        }
    }

    pub fn order_ba_uncertainty() -> CheckUncertainty {
        CheckUncertainty {
            stat_sigma: Some(0.016),
            entry_sigma: 0.01,
            syst_sigma: 0.010,
        }
    }
}
