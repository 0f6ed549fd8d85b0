//! Projective two-qubit measurements, simulated coincidence counts, and the
//! correlation estimator `C = (N++ - N+- - N-+ + N--) / N_total`.
//!
//! Settings are Bloch axes. Polarization analyzer bases map onto axes as
//! H/V -> +-z, D/A -> +-x, L/R -> +-y (|L> = (|H>+i|V>)/sqrt(2) is the +1
//! eigenvector of sigma_y).

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axis_projector, DensityOperator};
use crate::tol;

/// One joint measurement setting: a Bloch axis for each party.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    pub axis1: Vector3<f64>,
    pub axis2: Vector3<f64>,
}

impl MeasurementSetting {
    pub fn new(axis1: Vector3<f64>, axis2: Vector3<f64>) -> Result<Self> {
        for (name, a) in [("axis1", &axis1), ("axis2", &axis2)] {
            if (a.norm() - 1.0).abs() > tol::ALGEBRAIC {
                return Err(Error::Config(format!(
                    "{name} has norm {}, expected a unit vector",
                    a.norm()
                )));
            }
        }
        Ok(Self { axis1, axis2 })
    }

    /// Setting from two polarization basis labels (H, V, D, A, R, L).
    pub fn from_polarizations(p1: PolarizationBasis, p2: PolarizationBasis) -> Self {
        Self {
            axis1: p1.signed_axis(),
            axis2: p2.signed_axis(),
        }
    }

    /// Equatorial (x-z plane) setting parameterized by an angle per party:
    /// axis = sin(phi) x + cos(phi) z.
    pub fn equatorial(phi1: f64, phi2: f64) -> Self {
        let mk = |phi: f64| Vector3::new(phi.sin(), 0.0, phi.cos());
        Self {
            axis1: mk(phi1),
            axis2: mk(phi2),
        }
    }
}

/// Single-qubit polarization analyzer basis vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarizationBasis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl PolarizationBasis {
    pub const ALL: [Self; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    /// Bloch axis whose +1 eigenvector is this basis state.
    pub fn signed_axis(self) -> Vector3<f64> {
        match self {
            Self::H => Vector3::new(0.0, 0.0, 1.0),
            Self::V => Vector3::new(0.0, 0.0, -1.0),
            Self::D => Vector3::new(1.0, 0.0, 0.0),
            Self::A => Vector3::new(-1.0, 0.0, 0.0),
            Self::L => Vector3::new(0.0, 1.0, 0.0),
            Self::R => Vector3::new(0.0, -1.0, 0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::H => "H",
            Self::V => "V",
            Self::D => "D",
            Self::A => "A",
            Self::R => "R",
            Self::L => "L",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown polarization basis `{s}`")))
    }
}

/// Coincidence counts for one setting, with per-detector-pair efficiencies.
/// Counts are stored as f64 so that efficiency-corrected tables share the type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsTable {
    pub setting_id: String,
    pub axis1: [f64; 3],
    pub axis2: [f64; 3],
    /// Order: (+,+), (+,-), (-,+), (-,-).
    pub counts: [f64; 4],
    pub efficiencies: [f64; 4],
}

pub const OUTCOME_LABELS: [&str; 4] = ["pp", "pm", "mp", "mm"];

impl CountsTable {
    pub fn validate(&self) -> Result<()> {
        if self.counts.iter().any(|&n| n < 0.0 || !n.is_finite()) {
            return Err(Error::Config("negative or non-finite count".into()));
        }
        for (i, &e) in self.efficiencies.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::ZeroEfficiency(OUTCOME_LABELS[i].to_string()));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn setting(&self) -> Result<MeasurementSetting> {
        MeasurementSetting::new(
            Vector3::from_column_slice(&self.axis1),
            Vector3::from_column_slice(&self.axis2),
        )
    }
}

/// Born-rule probabilities for the four (+,+), (+,-), (-,+), (-,-) outcomes
/// of a joint two-qubit measurement along the setting's axes.
pub fn born_probabilities(
    rho: &DensityOperator,
    setting: &MeasurementSetting,
) -> Result<[f64; 4]> {
    if rho.n_qubits() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected a 2-qubit state, got {} qubits",
            rho.n_qubits()
        )));
    }
    let mut probs = [0.0; 4];
    for (k, (s1, s2)) in [(true, true), (true, false), (false, true), (false, false)]
        .into_iter()
        .enumerate()
    {
        let p1 = axis_projector(&setting.axis1, s1);
        let p2 = axis_projector(&setting.axis2, s2);
        let joint = p1.kronecker(&p2);
        let dyn_joint = nalgebra::DMatrix::from_fn(4, 4, |i, j| joint[(i, j)]);
        probs[k] = rho.expectation(&dyn_joint).max(0.0);
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > tol::ALGEBRAIC {
        return Err(Error::InvalidState(format!(
            "outcome probabilities sum to {sum}"
        )));
    }
    Ok(probs)
}

/// Draw one multinomial sample of `total_events` outcomes, then thin each
/// outcome-pair count binomially by its detector-pair efficiency.
/// Deterministic for a fixed seed.
pub fn simulate_counts(
    setting: &MeasurementSetting,
    setting_id: impl Into<String>,
    probs: &[f64; 4],
    total_events: u64,
    efficiencies: [f64; 4],
    rng_seed: u64,
) -> Result<CountsTable> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < -1e-12) {
        return Err(Error::Config(format!("probabilities sum to {sum}")));
    }
    if total_events == 0 {
        return Err(Error::Config("total event count must be positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let raw = multinomial(&mut rng, total_events, probs);
    let mut counts = [0.0; 4];
    for k in 0..4 {
        let eff = efficiencies[k];
        if !(eff > 0.0 && eff <= 1.0) {
            return Err(Error::ZeroEfficiency(OUTCOME_LABELS[k].to_string()));
        }
        counts[k] = if eff >= 1.0 {
            raw[k] as f64
        } else {
            Binomial::new(raw[k], eff)
                .expect("valid binomial")
                .sample(&mut rng) as f64
        };
    }
    let table = CountsTable {
        setting_id: setting_id.into(),
        axis1: setting.axis1.into(),
        axis2: setting.axis2.into(),
        counts,
        efficiencies,
    };
    table.validate()?;
    Ok(table)
}

fn multinomial(rng: &mut impl rand::Rng, n: u64, probs: &[f64; 4]) -> [u64; 4] {
    // Chain of conditional binomials.
    let mut out = [0u64; 4];
    let mut remaining_n = n;
    let mut remaining_p: f64 = probs.iter().sum();
    for k in 0..4 {
        if remaining_n == 0 {
            break;
        }
        let p = (probs[k].max(0.0) / remaining_p).clamp(0.0, 1.0);
        let draw = if k == 3 || p >= 1.0 {
            remaining_n
        } else {
            Binomial::new(remaining_n, p)
                .expect("valid binomial")
                .sample(rng)
        };
        out[k] = draw;
        remaining_n -= draw;
        remaining_p -= probs[k].max(0.0);
    }
    out
}

/// Divide each count by its detector-pair efficiency.
pub fn efficiency_correct(counts: &CountsTable) -> Result<CountsTable> {
    counts.validate()?;
    let mut out = counts.clone();
    for k in 0..4 {
        out.counts[k] = counts.counts[k] / counts.efficiencies[k];
        out.efficiencies[k] = 1.0;
    }
    Ok(out)
}

/// Correlation estimator `(N++ - N+- - N-+ + N--) / N_total`.
pub fn correlation(counts: &CountsTable) -> Result<f64> {
    let total = counts.total();
    if total <= 0.0 {
        return Err(Error::EmptyCounts);
    }
    let [npp, npm, nmp, nmm] = counts.counts;
    Ok((npp - npm - nmp + nmm) / total)
}

/// Standard error of the correlation estimator from binomial statistics.
pub fn correlation_error(counts: &CountsTable) -> Result<f64> {
    let total = counts.total();
    if total <= 0.0 {
        return Err(Error::EmptyCounts);
    }
    let c = correlation(counts)?;
    Ok(((1.0 - c * c).max(0.0) / total).sqrt())
}

fn fmt_axis(a: &[f64; 3]) -> String {
    format!("{}:{}:{}", a[0], a[1], a[2])
}

fn parse_axis(s: &str, line: usize) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse {
            line,
            msg: format!("axis `{s}` is not of the form x:y:z"),
        });
    }
    let mut a = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        a[i] = p.trim().parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad axis component `{p}`: {e}"),
        })?;
    }
    Ok(a)
}

pub const COUNTS_CSV_HEADER: &str =
    "setting_id,axis1,axis2,npp,npm,nmp,nmm,eff_pp,eff_pm,eff_mp,eff_mm";

/// Serialize tables to CSV with axes encoded as `x:y:z`.
pub fn counts_to_csv(tables: &[CountsTable]) -> String {
    let mut out = String::from(COUNTS_CSV_HEADER);
    out.push('\n');
    for t in tables {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            t.setting_id,
            fmt_axis(&t.axis1),
            fmt_axis(&t.axis2),
            t.counts[0],
            t.counts[1],
            t.counts[2],
            t.counts[3],
            t.efficiencies[0],
            t.efficiencies[1],
            t.efficiencies[2],
            t.efficiencies[3],
        ));
    }
    out
}

pub fn counts_from_csv(text: &str) -> Result<Vec<CountsTable>> {
    let mut tables = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed.starts_with("setting_id")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 11 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad number `{s}`: {e}"),
            })
        };
        let table = CountsTable {
            setting_id: fields[0].trim().to_string(),
            axis1: parse_axis(fields[1], line)?,
            axis2: parse_axis(fields[2], line)?,
            counts: [num(fields[3])?, num(fields[4])?, num(fields[5])?, num(fields[6])?],
            efficiencies: [
                num(fields[7])?,
                num(fields[8])?,
                num(fields[9])?,
                num(fields[10])?,
            ],
        };
        table.validate()?;
        tables.push(table);
    }
    Ok(tables)
}
