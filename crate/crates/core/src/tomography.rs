//! Two-qubit state tomography from coincidence counts.
//!
//! Two estimators are provided: direct least-squares inversion in the Pauli
//! basis (fast, may return slightly non-positive matrices) and a
//! maximum-likelihood fixed-point iteration (always physical). The default
//! setting set is the 36 polarization pairs drawn from {H, V, D, A, R, L}.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axis_projector, c, pauli, C64, DensityOperator};
use crate::measurement::{
    born_probabilities, counts_from_csv, counts_to_csv, efficiency_correct, simulate_counts,
    CountsTable, MeasurementSetting, PolarizationBasis,
};
use crate::tol;

/// A complete tomography data set: one counts table per setting.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyRecord {
    pub tables: Vec<CountsTable>,
}

/// JSON header serialized alongside the counts CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct TomographyHeader {
    pub settings: Vec<String>,
    pub n_tables: usize,
}

impl TomographyRecord {
    pub fn new(tables: Vec<CountsTable>) -> Result<Self> {
        let rec = Self { tables };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tables.is_empty() {
            return Err(Error::EmptyCounts);
        }
        for t in &self.tables {
            t.validate()?;
        }
        // The settings must span the 15-dimensional traceless operator space.
        let m = design_matrix(&self.tables)?;
        let svd = m.svd(false, false);
        let min = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < 1e-8 {
            return Err(Error::RankDeficient);
        }
        Ok(())
    }

    pub fn header(&self) -> TomographyHeader {
        TomographyHeader {
            settings: self.tables.iter().map(|t| t.setting_id.clone()).collect(),
            n_tables: self.tables.len(),
        }
    }

    pub fn to_csv(&self) -> String {
        counts_to_csv(&self.tables)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(counts_from_csv(text)?)
    }
}

/// The default 36 measurement settings: all ordered pairs from
/// {H, V, D, A, R, L}, identified as e.g. "HV".
pub fn default_settings() -> Vec<(String, MeasurementSetting)> {
    let mut out = Vec::with_capacity(36);
    for p1 in PolarizationBasis::ALL {
        for p2 in PolarizationBasis::ALL {
            out.push((
                format!("{}{}", p1.label(), p2.label()),
                MeasurementSetting::from_polarizations(p1, p2),
            ));
        }
    }
    out
}

/// Simulate a full tomography run on `rho` with `n` events per setting.
pub fn simulate_tomography(
    rho: &DensityOperator,
    n: u64,
    efficiencies: [f64; 4],
    seed: u64,
) -> Result<TomographyRecord> {
    let mut tables = Vec::with_capacity(36);
    for (k, (id, setting)) in default_settings().into_iter().enumerate() {
        let probs = born_probabilities(rho, &setting)?;
        tables.push(simulate_counts(
            &setting,
            id,
            &probs,
            n,
            efficiencies,
            seed.wrapping_add(k as u64).wrapping_mul(0x9e3779b97f4a7c15),
        )?);
    }
    TomographyRecord::new(tables)
}

/// Exact-probability surrogate for the large-N limit: counts are N * p.
pub fn exact_tomography(rho: &DensityOperator, n: f64) -> Result<TomographyRecord> {
    let mut tables = Vec::with_capacity(36);
    for (id, setting) in default_settings() {
        let probs = born_probabilities(rho, &setting)?;
        tables.push(CountsTable {
            setting_id: id,
            axis1: setting.axis1.into(),
            axis2: setting.axis2.into(),
            counts: probs.map(|p| n * p),
            efficiencies: [1.0; 4],
        });
    }
    TomographyRecord::new(tables)
}

// Outcome sign pairs in counts order (+,+), (+,-), (-,+), (-,-).
const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// Rows map the 15 unknown Pauli components (r_i0, r_0j, r_ij) to outcome
/// probabilities; the constant r_00 = 1 term is moved to the data side.
fn design_matrix(tables: &[CountsTable]) -> Result<DMatrix<f64>> {
    let rows = tables.len() * 4;
    let mut m = DMatrix::zeros(rows, 15);
    for (ti, t) in tables.iter().enumerate() {
        let s = t.setting()?;
        for (k, (s1, s2)) in SIGNS.iter().enumerate() {
            let r = ti * 4 + k;
            for i in 0..3 {
                m[(r, i)] = 0.25 * s1 * s.axis1[i]; // r_{i0}
                m[(r, 3 + i)] = 0.25 * s2 * s.axis2[i]; // r_{0j}
                for j in 0..3 {
                    m[(r, 6 + 3 * i + j)] = 0.25 * s1 * s2 * s.axis1[i] * s.axis2[j];
                }
            }
        }
    }
    Ok(m)
}

fn frequencies(tables: &[CountsTable]) -> Result<DVector<f64>> {
    let mut f = DVector::zeros(tables.len() * 4);
    for (ti, t) in tables.iter().enumerate() {
        let corrected = efficiency_correct(t)?;
        let total = corrected.total();
        if total <= 0.0 {
            return Err(Error::EmptyCounts);
        }
        for k in 0..4 {
            f[ti * 4 + k] = corrected.counts[k] / total;
        }
    }
    Ok(f)
}

fn rho_from_pauli_components(r: &DVector<f64>, labels: [&str; 2]) -> Result<DensityOperator> {
    let mut m = DMatrix::from_element(4, 4, c(0.0, 0.0));
    let id = pauli(0).kronecker(&pauli(0));
    for a in 0..4 {
        for b in 0..4 {
            m[(a, b)] += id[(a, b)] * c(0.25, 0.0);
        }
    }
    let mut add = |coef: f64, i: usize, j: usize| {
        let op = pauli(i).kronecker(&pauli(j));
        for a in 0..4 {
            for b in 0..4 {
                m[(a, b)] += op[(a, b)] * c(0.25 * coef, 0.0);
            }
        }
    };
    for i in 0..3 {
        add(r[i], i + 1, 0);
        add(r[3 + i], 0, i + 1);
        for j in 0..3 {
            add(r[6 + 3 * i + j], i + 1, j + 1);
        }
    }
    // Hermitize against accumulated floating-point asymmetry.
    let herm = DMatrix::from_fn(4, 4, |a, b| (m[(a, b)] + m[(b, a)].conj()) * c(0.5, 0.0));
    DensityOperator::new(herm, vec![labels[0].into(), labels[1].into()])
}

/// Least-squares linear inversion. The result is Hermitian with unit trace
/// but may carry small negative eigenvalues; the flag in the result reports
/// whether clipping would be needed.
pub fn reconstruct_linear(rec: &TomographyRecord) -> Result<(DensityOperator, bool)> {
    rec.validate()?;
    let m = design_matrix(&rec.tables)?;
    let f = frequencies(&rec.tables)?;
    // Subtract the constant 1/4 from every probability (the r_00 term).
    let rhs = f.map(|x| x - 0.25);
    let svd = m.svd(true, true);
    let r = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidState(format!("least-squares solve failed: {e}")))?;
    let labels = first_labels(rec);
    let rho = rho_from_pauli_components(&r, labels)?;
    let physical = rho.eigenvalues().iter().all(|&ev| ev >= tol::PSD_FLOOR);
    Ok((rho, !physical))
}

fn first_labels(_rec: &TomographyRecord) -> [&'static str; 2] {
    ["q1", "q2"]
}

/// Result of the maximum-likelihood reconstruction.
#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub rho: DensityOperator,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each iteration; monotone non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

const MLE_MAX_ITER: usize = 5000;
const MLE_GAIN_TOL: f64 = 1e-10;

/// Maximum-likelihood tomography via the fixed-point R*rho*R iteration with
/// diluted steps: a candidate that would lower the likelihood is replaced by
/// (I + eps R) rho (I + eps R) with shrinking eps, which restores monotone
/// ascent. Stops when the log-likelihood gain drops below 1e-10.
pub fn reconstruct_mle(rec: &TomographyRecord) -> Result<MleOutcome> {
    rec.validate()?;
    let labels = first_labels(rec);

    // Precompute projectors and (efficiency-corrected) counts.
    let mut projectors = Vec::new();
    let mut counts = Vec::new();
    let mut total = 0.0;
    for t in &rec.tables {
        let s = t.setting()?;
        let corrected = efficiency_correct(t)?;
        for (k, (s1, s2)) in SIGNS.iter().enumerate() {
            let p1 = axis_projector(&s.axis1, *s1 > 0.0);
            let p2 = axis_projector(&s.axis2, *s2 > 0.0);
            let joint = p1.kronecker(&p2);
            projectors.push(DMatrix::from_fn(4, 4, |i, j| joint[(i, j)]));
            counts.push(corrected.counts[k]);
            total += corrected.counts[k];
        }
    }
    if total <= 0.0 {
        return Err(Error::EmptyCounts);
    }

    let log_likelihood = |rho: &DMatrix<C64>| -> f64 {
        projectors
            .iter()
            .zip(&counts)
            .map(|(p, &n)| {
                if n <= 0.0 {
                    return 0.0;
                }
                let prob = (p * rho).diagonal().iter().map(|z| z.re).sum::<f64>();
                n * prob.max(1e-300).ln()
            })
            .sum()
    };
    let r_operator = |rho: &DMatrix<C64>| -> DMatrix<C64> {
        let mut r = DMatrix::from_element(4, 4, c(0.0, 0.0));
        for (p, &n) in projectors.iter().zip(&counts) {
            if n <= 0.0 {
                continue;
            }
            let prob = (p * rho).diagonal().iter().map(|z| z.re).sum::<f64>();
            r += p * c(n / (total * prob.max(1e-300)), 0.0);
        }
        r
    };
    let normalize = |m: DMatrix<C64>| -> DMatrix<C64> {
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        let herm = DMatrix::from_fn(4, 4, |a, b| (m[(a, b)] + m[(b, a)].conj()) * c(0.5, 0.0));
        herm * c(1.0 / tr, 0.0)
    };

    let mut rho = DMatrix::from_diagonal_element(4, 4, c(0.25, 0.0));
    let mut ll = log_likelihood(&rho);
    let mut iterations = 0;
    let mut trace = Vec::new();
    loop {
        iterations += 1;
        let r = r_operator(&rho);
        // Full R*rho*R step first, then dilute on likelihood decrease.
        let mut eps = 1.0_f64;
        let (next, next_ll) = loop {
            let step = if eps >= 1.0 {
                normalize(&r * &rho * &r)
            } else {
                let a = DMatrix::identity(4, 4) + &r * c(eps, 0.0);
                normalize(&a * &rho * a.adjoint())
            };
            let step_ll = log_likelihood(&step);
            if step_ll >= ll - 1e-12 || eps < 1e-6 {
                break (step, step_ll);
            }
            eps *= 0.25;
        };
        let gain = next_ll - ll;
        rho = next;
        ll = next_ll;
        trace.push(ll);
        if gain.abs() < MLE_GAIN_TOL {
            break;
        }
        if iterations >= MLE_MAX_ITER {
            return Err(Error::NoConvergence(MLE_MAX_ITER));
        }
    }

    Ok(MleOutcome {
        rho: DensityOperator::new(rho, vec![labels[0].into(), labels[1].into()])?,
        iterations,
        log_likelihood: ll,
        log_likelihood_trace: trace,
    })
}
