//! End-to-end experiment pipeline: noisy source -> entangled double SWITCH
//! -> post-selection -> metrics (fidelity, concurrence, CHSH from exact
//! probabilities and from simulated counts), plus parameter sweeps and
//! Monte Carlo error propagation over phase jitter and counting noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{chsh_from_counts, chsh_max, chsh_value, correlation_tensor, ChshSettings};
use crate::error::{Error, Result};
use crate::linalg::{DensityOperator, GateSpec};
use crate::measurement::{born_probabilities, simulate_counts, CountsTable, MeasurementSetting};
use crate::noise::{
    dephase_orders, make_source_state, phase_jitter, InterferometerConfig, SourceConfig,
};
use crate::switch::{
    entangled_switch, ideal_output_state, postselect_controls, PostselectionOutcome, Sign,
    SwitchGates,
};

/// Full configuration of one simulated experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_gate_alice")]
    pub alice_gate: String,
    #[serde(default = "default_gate_bob")]
    pub bob_gate: String,
    #[serde(default = "SourceConfig::ideal")]
    pub source: SourceConfig,
    #[serde(default = "InterferometerConfig::ideal")]
    pub ifo: InterferometerConfig,
    /// Coincidence events per measurement setting.
    #[serde(default = "default_n_counts")]
    pub n_counts: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Monte Carlo repetitions for error bars.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Detector-pair efficiencies for (+,+), (+,-), (-,+), (-,-).
    #[serde(default = "default_efficiencies")]
    pub efficiencies: [f64; 4],
}

fn default_gate_alice() -> String {
    "sigma_z".into()
}
fn default_gate_bob() -> String {
    "sqrt_iX".into()
}
fn default_n_counts() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    7
}
fn default_runs() -> usize {
    20
}
fn default_efficiencies() -> [f64; 4] {
    [0.85, 0.90, 0.95, 1.0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alice_gate: default_gate_alice(),
            bob_gate: default_gate_bob(),
            source: SourceConfig::ideal(),
            ifo: InterferometerConfig::ideal(),
            n_counts: default_n_counts(),
            seed: default_seed(),
            runs: default_runs(),
            efficiencies: default_efficiencies(),
        }
    }
}

impl ExperimentConfig {
    pub fn gates(&self) -> Result<SwitchGates> {
        Ok(SwitchGates::new(
            GateSpec::from_name(&self.alice_gate)?,
            GateSpec::from_name(&self.bob_gate)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.gates()?;
        self.source.validate()?;
        self.ifo.validate()?;
        if self.n_counts == 0 {
            return Err(Error::Config("n_counts must be positive".into()));
        }
        Ok(())
    }
}

/// Metrics from a single pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Fidelity of the post-selected target state to the ideal output.
    pub fidelity: f64,
    pub concurrence: f64,
    /// Exact CHSH at the measurement settings used.
    pub s_exact: f64,
    /// CHSH estimated from simulated counts, with its statistical error.
    pub s_counts: f64,
    pub s_counts_err: f64,
    /// Probability of the post-selection outcome.
    pub postselect_prob: f64,
    /// Maximal CHSH of the control-pair source state (exact).
    pub control_chsh: f64,
}

fn derived_seed(master: u64, index: u64) -> u64 {
    master
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9))
}

/// The noisy post-selected target state for one jitter sample, plus the
/// outcome probability and the (exact) control-source state.
fn noisy_postselected(
    cfg: &ExperimentConfig,
    outcome: &PostselectionOutcome,
    rng: &mut ChaCha12Rng,
) -> Result<(DensityOperator, f64, DensityOperator)> {
    let gates = cfg.gates()?;
    let source_phase = phase_jitter(rng, cfg.source.jitter_deg);
    let controls = make_source_state(&SourceConfig {
        visibility: cfg.source.visibility,
        phase_offset: cfg.source.phase_offset + source_phase,
        jitter_deg: 0.0,
    })?;
    // Interferometer phase drifts act on the controls before post-selection.
    let controls = controls
        .apply_gate(
            &GateSpec::phase(phase_jitter(rng, cfg.ifo.phase_jitter_deg)),
            "C1",
        )?
        .apply_gate(
            &GateSpec::phase(phase_jitter(rng, cfg.ifo.phase_jitter_deg)),
            "C2",
        )?;
    let targets = crate::switch::nominal_input().1;
    let raw = entangled_switch(&controls, &targets, &gates, &gates)?;
    let decohered = dephase_orders(&raw, &cfg.ifo)?;
    let (target, prob) = postselect_controls(&decohered, outcome)?;
    Ok((target, prob, controls))
}

/// The noisy post-selected target state for one run, with the outcome
/// probability. Deterministic per (config, run index).
pub fn postselected_state(
    cfg: &ExperimentConfig,
    run_index: u64,
) -> Result<(DensityOperator, f64)> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(derived_seed(cfg.seed, run_index));
    let outcome = PostselectionOutcome::new(Sign::Plus, Sign::Plus);
    let (target, prob, _) = noisy_postselected(cfg, &outcome, &mut rng)?;
    Ok((target, prob))
}

/// Run the pipeline once: one jitter sample, one set of simulated counts at
/// the state's optimal CHSH settings. Deterministic per (config, run index).
pub fn run_once(cfg: &ExperimentConfig, run_index: u64) -> Result<RunMetrics> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(derived_seed(cfg.seed, run_index));
    let outcome = PostselectionOutcome::new(Sign::Plus, Sign::Plus);
    let (target, prob, controls) = noisy_postselected(cfg, &outcome, &mut rng)?;

    // Settings fixed at the optimum of the mean (no-jitter) state, as in an
    // experiment where settings are calibrated once.
    let mean_cfg = ExperimentConfig {
        ifo: InterferometerConfig {
            phase_jitter_deg: 0.0,
            ..cfg.ifo
        },
        source: SourceConfig {
            jitter_deg: 0.0,
            ..cfg.source
        },
        ..cfg.clone()
    };
    let mut mean_rng = ChaCha12Rng::seed_from_u64(0);
    let (mean_target, _, _) = noisy_postselected(&mean_cfg, &outcome, &mut mean_rng)?;
    let settings = chsh_max(&correlation_tensor(&mean_target)?)?.1;

    let s_exact = chsh_value(&target, &settings)?;
    let tables = simulate_chsh_counts(&target, &settings, cfg, &mut rng)?;
    let (s_counts, s_counts_err) = chsh_from_counts(&tables)?;
    let control_chsh = chsh_max(&correlation_tensor(&controls)?)?.0;

    Ok(RunMetrics {
        fidelity: target.fidelity(&ideal_output_state())?,
        concurrence: target.concurrence()?,
        s_exact,
        s_counts,
        s_counts_err,
        postselect_prob: prob,
        control_chsh,
    })
}

fn simulate_chsh_counts(
    rho: &DensityOperator,
    settings: &ChshSettings,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha12Rng,
) -> Result<[CountsTable; 4]> {
    let mut tables = Vec::with_capacity(4);
    for (k, (a, b)) in settings.pairs().into_iter().enumerate() {
        let ms = MeasurementSetting::new(a, b)?;
        let probs = born_probabilities(rho, &ms)?;
        let seed = rng.random::<u64>();
        tables.push(simulate_counts(
            &ms,
            format!("chsh{k}"),
            &probs,
            cfg.n_counts,
            cfg.efficiencies,
            seed,
        )?);
    }
    Ok(tables.try_into().expect("four tables"))
}

/// Mean and standard deviation of a metric over Monte Carlo runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Statistic {
    pub mean: f64,
    pub std: f64,
}

fn stat(values: &[f64]) -> Statistic {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Statistic {
        mean,
        std: var.sqrt(),
    }
}

/// Monte Carlo summary over `runs` independent jitter/count samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub fidelity: Statistic,
    pub concurrence: Statistic,
    pub s_exact: Statistic,
    pub s_counts: Statistic,
    pub postselect_prob: Statistic,
    pub control_chsh: Statistic,
}

/// Resample phase jitters and counts `runs` times and summarize the metric
/// distributions. Deterministic per master seed.
pub fn monte_carlo_errors(cfg: &ExperimentConfig, runs: usize) -> Result<MonteCarloReport> {
    if runs < 2 {
        return Err(Error::Config("need at least 2 Monte Carlo runs".into()));
    }
    // Runs are seeded independently, so parallel order cannot change results.
    let metrics: Vec<RunMetrics> = (0..runs)
        .into_par_iter()
        .map(|i| run_once(cfg, i as u64))
        .collect::<Result<_>>()?;
    let fid: Vec<f64> = metrics.iter().map(|m| m.fidelity).collect();
    let conc: Vec<f64> = metrics.iter().map(|m| m.concurrence).collect();
    let s_exact: Vec<f64> = metrics.iter().map(|m| m.s_exact).collect();
    let s_counts: Vec<f64> = metrics.iter().map(|m| m.s_counts).collect();
    let prob: Vec<f64> = metrics.iter().map(|m| m.postselect_prob).collect();
    let control: Vec<f64> = metrics.iter().map(|m| m.control_chsh).collect();
    Ok(MonteCarloReport {
        runs,
        fidelity: stat(&fid),
        concurrence: stat(&conc),
        s_exact: stat(&s_exact),
        s_counts: stat(&s_counts),
        postselect_prob: stat(&prob),
        control_chsh: stat(&control),
    })
}

/// Axis of a visibility sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Source (control-pair) visibility.
    SourceVisibility,
    /// First interferometer only; the second stays ideal.
    Ifo1,
    /// Both interferometers together.
    IfoBoth,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source_visibility" => Ok(Self::SourceVisibility),
            "ifo1" => Ok(Self::Ifo1),
            "ifo_both" => Ok(Self::IfoBoth),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepPoint {
    pub visibility: f64,
    pub s: f64,
    pub s_err: f64,
}

/// Sweep a visibility axis with exact post-selected probabilities and CHSH
/// measured at settings fixed to the ideal-state optimum (settings are
/// calibrated once on the noiseless state and then held, as in the
/// experiment). The error column comes from Monte Carlo over counts when
/// `cfg.runs > 1`, else zero.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    if grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("sweep grid outside [0, 1]".into()));
    }
    let ideal_settings = ideal_chsh_settings()?;
    let outcome = PostselectionOutcome::new(Sign::Plus, Sign::Plus);
    // Each grid point derives its own seed, so points evaluate in parallel.
    grid.par_iter().map(|&v| {
        let mut point_cfg = cfg.clone();
        // Sweeps vary one knob with everything else noiseless.
        point_cfg.source.jitter_deg = 0.0;
        point_cfg.ifo.phase_jitter_deg = 0.0;
        match axis {
            SweepAxis::SourceVisibility => point_cfg.source.visibility = v,
            SweepAxis::Ifo1 => point_cfg.ifo.vis1 = v,
            SweepAxis::IfoBoth => {
                point_cfg.ifo.vis1 = v;
                point_cfg.ifo.vis2 = v;
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derived_seed(cfg.seed, (v * 1e6) as u64));
        let (target, _, _) = noisy_postselected(&point_cfg, &outcome, &mut rng)?;
        let s = chsh_value(&target, &ideal_settings)?;
        let s_err = if cfg.runs > 1 {
            let mut samples = Vec::with_capacity(cfg.runs);
            for _ in 0..cfg.runs {
                let tables = simulate_chsh_counts(&target, &ideal_settings, &point_cfg, &mut rng)?;
                samples.push(chsh_from_counts(&tables)?.0);
            }
            stat(&samples).std
        } else {
            0.0
        };
        Ok(SweepPoint {
            visibility: v,
            s,
            s_err,
        })
    })
    .collect()
}

/// The Horodecki-optimal settings of the ideal output state.
pub fn ideal_chsh_settings() -> Result<ChshSettings> {
    let rho = ideal_output_state().to_density();
    Ok(chsh_max(&correlation_tensor(&rho)?)?.1)
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("visibility,s,s_err\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.visibility, p.s, p.s_err));
    }
    out
}

/// Least-squares line fit returning (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Source visibility at which the control-pair CHSH equals `s_control`,
/// inverting S = 2 sqrt(1 + v^2).
pub fn visibility_for_control_chsh(s_control: f64) -> Result<f64> {
    let half = s_control / 2.0;
    if !(1.0..=std::f64::consts::SQRT_2).contains(&half) {
        return Err(Error::Config(format!(
            "control CHSH {s_control} outside the reachable (2, 2*sqrt(2)] range"
        )));
    }
    Ok((half * half - 1.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SQRT8: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn exactish() -> ExperimentConfig {
        ExperimentConfig {
            n_counts: 100_000,
            efficiencies: [1.0; 4],
            ..Default::default()
        }
    }

    #[test]
    fn ideal_run_reaches_tsirelson() {
        let m = run_once(&exactish(), 0).unwrap();
        assert_abs_diff_eq!(m.fidelity, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.concurrence, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.s_exact, SQRT8, epsilon = 1e-9);
        assert_abs_diff_eq!(m.postselect_prob, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(m.control_chsh, SQRT8, epsilon = 1e-9);
        assert!((m.s_counts - SQRT8).abs() < 3.0 * m.s_counts_err + 0.05);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ExperimentConfig {
            source: SourceConfig {
                visibility: 0.9,
                phase_offset: 0.0,
                jitter_deg: 1.9,
            },
            ifo: InterferometerConfig {
                vis1: 0.95,
                vis2: 0.97,
                phase_jitter_deg: 0.97,
            },
            ..Default::default()
        };
        let a = run_once(&cfg, 3).unwrap();
        let b = run_once(&cfg, 3).unwrap();
        assert_eq!(a.s_counts, b.s_counts);
        assert_eq!(a.fidelity, b.fidelity);
        let c = run_once(&cfg, 4).unwrap();
        assert_ne!(a.s_counts, c.s_counts);
    }

    #[test]
    fn dead_interferometers_respect_local_bound() {
        let cfg = ExperimentConfig {
            ifo: InterferometerConfig {
                vis1: 0.0,
                vis2: 0.0,
                phase_jitter_deg: 0.0,
            },
            ..exactish()
        };
        let m = run_once(&cfg, 0).unwrap();
        assert!(m.s_exact <= 2.0 + 1e-9, "S = {}", m.s_exact);
        assert!(m.concurrence < 1e-9);
    }

    #[test]
    fn monte_carlo_deterministic_and_tight_when_noiseless() {
        let cfg = ExperimentConfig {
            n_counts: 1_000_000,
            efficiencies: [1.0; 4],
            ..Default::default()
        };
        let a = monte_carlo_errors(&cfg, 5).unwrap();
        let b = monte_carlo_errors(&cfg, 5).unwrap();
        assert_eq!(a.s_counts.mean, b.s_counts.mean);
        // No jitter: exact metrics have zero spread, counts a small one.
        assert_abs_diff_eq!(a.s_exact.std, 0.0, epsilon = 1e-12);
        assert!(a.s_counts.std < 0.02);
    }

    #[test]
    fn jitter_propagates_into_chsh_spread() {
        let cfg = ExperimentConfig {
            source: SourceConfig {
                visibility: 1.0,
                phase_offset: 0.0,
                jitter_deg: 1.9,
            },
            ifo: InterferometerConfig {
                vis1: 1.0,
                vis2: 1.0,
                phase_jitter_deg: 0.97,
            },
            ..exactish()
        };
        let r = monte_carlo_errors(&cfg, 40).unwrap();
        // Phase jitter is a relative phase between the |ll> and |rr> branches:
        // it leaves the concurrence at 1 but pulls S below its optimum at the
        // calibrated settings, by an amount quadratic in the phase excursion.
        assert_abs_diff_eq!(r.concurrence.mean, 1.0, epsilon = 1e-6);
        assert!(
            r.s_exact.std > 1e-6 && r.s_exact.std < 0.05,
            "s_exact std {}",
            r.s_exact.std
        );
        assert!(r.s_exact.mean < SQRT8 - 1e-6);
    }

    #[test]
    fn source_sweep_monotone_with_correct_endpoints() {
        let cfg = ExperimentConfig {
            runs: 1,
            ..exactish()
        };
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let points = sweep(&cfg, SweepAxis::SourceVisibility, &grid).unwrap();
        for w in points.windows(2) {
            assert!(w[1].s >= w[0].s - 1e-12, "sweep not monotone: {points:?}");
        }
        assert!(points[0].s <= 2.0 + 1e-9);
        assert_abs_diff_eq!(points[10].s, SQRT8, epsilon = 1e-9);
    }

    #[test]
    fn ifo1_sweep_is_linear() {
        let cfg = ExperimentConfig {
            runs: 1,
            ..exactish()
        };
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let points = sweep(&cfg, SweepAxis::Ifo1, &grid).unwrap();
        let xs: Vec<f64> = points.iter().map(|p| p.visibility).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.s).collect();
        let (_, _, r2) = linear_fit(&xs, &ys);
        assert!(r2 > 0.999999, "R^2 = {r2}");
        assert_abs_diff_eq!(points[10].s, SQRT8, epsilon = 1e-9);
    }

    #[test]
    fn ifo_both_sweep_quadratic_in_visibility() {
        // Both interferometers together: S depends on the product of the
        // visibilities, so the curve is quadratic in v.
        let cfg = ExperimentConfig {
            runs: 1,
            ..exactish()
        };
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let points = sweep(&cfg, SweepAxis::IfoBoth, &grid).unwrap();
        let single = sweep(&cfg, SweepAxis::Ifo1, &grid).unwrap();
        for (p, _) in points.iter().zip(&single) {
            let w = p.visibility * p.visibility;
            let expect = single
                .iter()
                .find(|q| (q.visibility - w).abs() < 1e-9)
                .map(|q| q.s);
            if let Some(e) = expect {
                assert_abs_diff_eq!(p.s, e, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn control_chsh_tuning_hits_target_band() {
        let v = visibility_for_control_chsh(2.58).unwrap();
        let cfg = ExperimentConfig {
            source: SourceConfig {
                visibility: v,
                phase_offset: 0.0,
                jitter_deg: 1.9,
            },
            ifo: InterferometerConfig {
                vis1: 1.0,
                vis2: 1.0,
                phase_jitter_deg: 0.97,
            },
            ..Default::default()
        };
        let r = monte_carlo_errors(&cfg, 10).unwrap();
        assert_abs_diff_eq!(r.control_chsh.mean, 2.58, epsilon = 0.02);
        assert!(
            (r.s_counts.mean - 2.55).abs() < 0.24,
            "target CHSH {} outside band",
            r.s_counts.mean
        );
    }

    #[test]
    fn sweep_csv_round_trip_shape() {
        let points = vec![
            SweepPoint {
                visibility: 0.0,
                s: 1.4,
                s_err: 0.0,
            },
            SweepPoint {
                visibility: 1.0,
                s: SQRT8,
                s_err: 0.01,
            },
        ];
        let csv = sweep_to_csv(&points);
        assert!(csv.starts_with("visibility,s,s_err\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.alice_gate = "nonsense".into();
        assert!(run_once(&cfg, 0).is_err());
        let cfg = ExperimentConfig {
            n_counts: 0,
            ..Default::default()
        };
        assert!(run_once(&cfg, 0).is_err());
        assert!(sweep(&ExperimentConfig::default(), SweepAxis::Ifo1, &[]).is_err());
        assert!(sweep(&ExperimentConfig::default(), SweepAxis::Ifo1, &[1.5]).is_err());
        assert!(visibility_for_control_chsh(1.0).is_err());
    }
}
