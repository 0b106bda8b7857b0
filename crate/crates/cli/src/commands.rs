//! Command implementations. Each returns a serializable report; the binary
//! decides where it is written.

use std::collections::BTreeMap;
use std::path::Path;

use fpmdi_core::calibration::{
    delta_phi_bound, pattern_deviation, theta_from_extinction, windowed_spread_db, xi_from_db, ExtinctionConvention,
};
use fpmdi_core::finitekey::{finite_key_report, CountsSummary, FiniteKeyReport};
use fpmdi_core::montecarlo::{simulate_run, sift_and_summarize, CountsRecord, RngSpec};
use fpmdi_core::security::{
    asymptotic_key_rate, coin_imbalance_maximized, gain_and_qber, optimize_mu_prime, MuSearch,
};
use fpmdi_core::{FlawParams, KeyRateReport, Phase};
use serde::Serialize;

use crate::config::{params_hash, RunConfig};
use crate::io::{protocol_for, read_pattern, read_phase_cal, read_power};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct KeyrateOutput {
    pub params_hash: String,
    pub report: KeyRateReport,
    /// Coin imbalance from the free-phase maximization route, for comparison.
    pub delta_maximized: f64,
}

/// Asymptotic key rate at the configured loss and intensity.
pub fn cmd_keyrate(cfg: &RunConfig, no_flaws: bool) -> CliResult<KeyrateOutput> {
    let flaws = cfg.flaws(no_flaws);
    let report = asymptotic_key_rate(&cfg.protocol, &cfg.channel, &flaws)?;
    let delta_maximized = if report.q_x > 0.0 {
        coin_imbalance_maximized(cfg.protocol.mu_prime, &flaws, report.q_x)?.delta
    } else {
        0.5
    };
    Ok(KeyrateOutput {
        params_hash: params_hash(&("keyrate", &cfg.protocol, &cfg.channel, &flaws)),
        report,
        delta_maximized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub loss_db: f64,
    pub mu_prime: f64,
    pub q_x: f64,
    pub e_b_x: f64,
    pub e_p: f64,
    pub rate_per_pulse: f64,
    pub bps: f64,
}

impl SweepRow {
    fn new(epsilon: Option<f64>, r: &KeyRateReport) -> Self {
        Self {
            epsilon,
            loss_db: r.loss_db,
            mu_prime: r.mu_prime,
            q_x: r.q_x,
            e_b_x: r.e_b_x,
            e_p: r.e_p,
            rate_per_pulse: r.rate_per_pulse,
            bps: r.bits_per_second,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub params_hash: String,
    pub rows: Vec<SweepRow>,
}

/// Asymptotic rate over the configured loss range, one curve per entry of
/// `sweep.epsilon_values` when given.
pub fn cmd_sweep(cfg: &RunConfig, no_flaws: bool) -> CliResult<SweepOutput> {
    let curves: Vec<(Option<f64>, FlawParams)> = match &cfg.sweep.epsilon_values {
        Some(list) => list.iter().map(|&e| (Some(e), FlawParams::correlation_only(e))).collect(),
        None => vec![(None, cfg.flaws(no_flaws))],
    };
    let mut rows = Vec::new();
    for (eps, flaws) in &curves {
        for loss in cfg.sweep.losses() {
            let ch = cfg.channel.at_loss(loss);
            let r = if cfg.sweep.optimize_mu {
                optimize_mu_prime(&cfg.protocol, &ch, flaws, MuSearch::default())?
            } else {
                asymptotic_key_rate(&cfg.protocol, &ch, flaws)?
            };
            rows.push(SweepRow::new(*eps, &r));
        }
    }
    let flaw_list: Vec<&FlawParams> = curves.iter().map(|c| &c.1).collect();
    Ok(SweepOutput {
        params_hash: params_hash(&("sweep", &cfg.protocol, &cfg.channel, &flaw_list, &cfg.sweep)),
        rows,
    })
}

/// Writes sweep rows with a header; the `epsilon` column appears only for
/// correlation sweeps.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let with_eps = rows.iter().any(|r| r.epsilon.is_some());
    let mut header = vec!["loss_db", "mu_prime", "q_x", "e_b_x", "e_p", "rate_per_pulse", "bps"];
    if with_eps {
        header.insert(0, "epsilon");
    }
    w.write_record(&header).map_err(io_err)?;
    for r in rows {
        let mut rec: Vec<String> = [r.loss_db, r.mu_prime, r.q_x, r.e_b_x, r.e_p, r.rate_per_pulse, r.bps]
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        if with_eps {
            rec.insert(0, format!("{:e}", r.epsilon.unwrap_or(0.0)));
        }
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteOutput {
    pub params_hash: String,
    pub loss_db: f64,
    pub n_pulses: u64,
    pub mu_prime: f64,
    /// Analysis with the configured flaws; absent under `--no-flaws`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flawed: Option<FiniteKeyReport>,
    /// Analysis of a perfect source.
    pub no_flaws: FiniteKeyReport,
}

impl FiniteOutput {
    /// `(R*, R)`.
    pub fn rates(&self) -> (f64, Option<f64>) {
        (self.no_flaws.rate_per_pulse, self.flawed.as_ref().map(|r| r.rate_per_pulse))
    }
}

/// Finite-key analysis of a counts record, with and without source flaws.
pub fn cmd_finite(cfg: &RunConfig, record: &CountsRecord, no_flaws: bool) -> CliResult<FiniteOutput> {
    let pp = protocol_for(record, &cfg.protocol);
    let counts = sift_and_summarize(record);
    let analyse = |flaws: &FlawParams| -> CliResult<FiniteKeyReport> {
        finite_key_report(&counts, &pp, cfg.channel.f, flaws, &cfg.epsilon).map_err(|e| match e {
            fpmdi_core::Error::InvalidParams(m) => CliError::Data(m),
            other => other.into(),
        })
    };
    let ideal = analyse(&FlawParams::none())?;
    let flawed = if no_flaws { None } else { Some(analyse(&cfg.flaw)?) };
    Ok(FiniteOutput {
        params_hash: params_hash(&("finite", &pp, cfg.channel.f, &cfg.flaws(no_flaws), &cfg.epsilon, &counts)),
        loss_db: record.meta.loss_db,
        n_pulses: pp.n_pulses,
        mu_prime: pp.mu_prime,
        flawed,
        no_flaws: ideal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrateTarget {
    Phase,
    Pattern,
    Power,
    Extinction,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseBound {
    pub phase: Phase,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub bounds: Vec<PhaseBound>,
    /// Largest bound, used as `δ`.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternEntry {
    pub pred: Phase,
    pub curr: Phase,
    pub count: u64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternReport {
    pub patterns: Vec<PatternEntry>,
    pub sin_psi: f64,
    pub argmax: (Phase, Phase),
    pub psi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerReport {
    pub spread_db: BTreeMap<String, f64>,
    pub total_db: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionReport {
    pub er_db: f64,
    pub convention: ExtinctionConvention,
    pub tan_theta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CalibrationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PatternReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extinction: Option<ExtinctionReport>,
    /// Complete flaw parameters, produced by the `all` target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flaws: Option<FlawParams>,
}

fn input_path(cfg: &RunConfig, data: Option<&Path>, configured: &Option<std::path::PathBuf>, what: &str) -> CliResult<std::path::PathBuf> {
    match (data, configured) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(cfg.resolve(p)),
        (None, None) => Err(CliError::Config(format!("no {what} file given (use --data or [paths])"))),
    }
}

fn phase_report(cfg: &RunConfig, data: Option<&Path>) -> CliResult<PhaseReport> {
    let cal = read_phase_cal(&input_path(cfg, data, &cfg.paths.phase_cal, "phase calibration")?, &cfg.calibration)?;
    let mut bounds = Vec::new();
    for phase in [Phase::HalfPi, Phase::Pi, Phase::ThreeHalfPi] {
        bounds.push(PhaseBound {
            phase,
            bound: delta_phi_bound(&cal, phase)?,
        });
    }
    let delta = bounds.iter().map(|b| b.bound).fold(0.0, f64::max);
    Ok(PhaseReport { bounds, delta })
}

fn pattern_report(cfg: &RunConfig, data: Option<&Path>) -> CliResult<PatternReport> {
    let counts = read_pattern(&input_path(cfg, data, &cfg.paths.pattern, "pattern")?)?;
    let d = pattern_deviation(&counts)?;
    let mut patterns = Vec::with_capacity(16);
    for curr in Phase::ALL {
        for pred in Phase::ALL {
            patterns.push(PatternEntry {
                pred,
                curr,
                count: counts.0[pred.index()][curr.index()],
                deviation: d.deviations[pred.index()][curr.index()],
            });
        }
    }
    Ok(PatternReport {
        patterns,
        sin_psi: d.max,
        argmax: d.argmax,
        psi: d.psi,
    })
}

fn power_report(cfg: &RunConfig, data: Option<&Path>) -> CliResult<PowerReport> {
    let series = read_power(&input_path(cfg, data, &cfg.paths.power, "power series")?, cfg.calibration.window_s)?;
    let spread_db = windowed_spread_db(&series)?;
    let total_db = spread_db.values().sum();
    Ok(PowerReport {
        spread_db,
        total_db,
        xi: xi_from_db(total_db)?,
    })
}

fn extinction_report(cfg: &RunConfig) -> CliResult<ExtinctionReport> {
    let er_db = cfg
        .calibration
        .extinction_db
        .ok_or_else(|| CliError::Config("calibration.extinction_db is not set".into()))?;
    let convention = cfg.calibration.extinction_convention;
    let theta = theta_from_extinction(er_db, convention)?;
    Ok(ExtinctionReport {
        er_db,
        convention,
        tan_theta: theta.tan(),
        theta,
    })
}

/// Derives flaw parameters from calibration data. `data` overrides the
/// configured input file of a single target.
pub fn cmd_calibrate(cfg: &RunConfig, target: CalibrateTarget, data: Option<&Path>) -> CliResult<CalibrationReport> {
    let mut out = CalibrationReport::default();
    match target {
        CalibrateTarget::Phase => out.phase = Some(phase_report(cfg, data)?),
        CalibrateTarget::Pattern => out.pattern = Some(pattern_report(cfg, data)?),
        CalibrateTarget::Power => out.power = Some(power_report(cfg, data)?),
        CalibrateTarget::Extinction => out.extinction = Some(extinction_report(cfg)?),
        CalibrateTarget::All => {
            let phase = phase_report(cfg, None)?;
            let pattern = pattern_report(cfg, None)?;
            let power = power_report(cfg, None)?;
            let extinction = extinction_report(cfg)?;
            out.flaws = Some(FlawParams {
                xi: power.xi,
                delta: phase.delta,
                theta: extinction.theta,
                psi: pattern.psi,
                mu_tha: cfg.flaw.mu_tha,
                ..FlawParams::none()
            });
            out.phase = Some(phase);
            out.pattern = Some(pattern);
            out.power = Some(power);
            out.extinction = Some(extinction);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub params_hash: String,
    pub seed: u64,
    pub summary: CountsSummary,
    pub e_b_x: f64,
    pub e_b_y: f64,
    /// Observed gain of X-basis pulse pairs.
    pub q_x: f64,
    /// Closed-form gain for comparison.
    pub q_x_model: f64,
}

/// Runs the pulse-level simulation and summarizes the sifted counts.
pub fn cmd_simulate(cfg: &RunConfig, seed: Option<u64>, no_flaws: bool) -> CliResult<(CountsRecord, SimulateOutput)> {
    let flaws = cfg.flaws(no_flaws);
    let seed = seed.unwrap_or(cfg.simulate.seed);
    let spec = RngSpec {
        seed,
        chunk_size: cfg.simulate.chunk_size,
    };
    let hash = params_hash(&("simulate", &cfg.protocol, &cfg.channel, &flaws, cfg.simulate.sampling, spec));
    let mut record = simulate_run(&cfg.protocol, &cfg.channel, &flaws, cfg.simulate.sampling, spec)?;
    record.meta.params_hash = Some(hash.clone());
    let summary = sift_and_summarize(&record);
    let emitted = record.emitted.unwrap_or_default();
    let x_pairs: u64 = [(0, 0), (0, 2), (2, 0), (2, 2)].iter().map(|&(a, b)| emitted[a][b]).sum();
    let q_x = if x_pairs > 0 { summary.n_x as f64 / x_pairs as f64 } else { 0.0 };
    let q_x_model = gain_and_qber(&cfg.channel, &cfg.protocol)?.q_x;
    Ok((
        record,
        SimulateOutput {
            params_hash: hash,
            seed,
            summary,
            e_b_x: summary.e_b_x(),
            e_b_y: summary.e_b_y(),
            q_x,
            q_x_model,
        },
    ))
}
