//! Reading counts records, calibration tables and bundled fixtures.

use std::path::{Path, PathBuf};

use fpmdi_core::calibration::{PatternCounts, PhaseCalCounts, PowerSample, PowerSeries};
use fpmdi_core::montecarlo::CountsRecord;
use fpmdi_core::{FlawParams, Phase, ProtocolParams};
use serde::Deserialize;

use crate::config::CalibrationConfig;
use crate::{CliError, CliResult};

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses counts JSON text, returning warnings for cells that were absent.
pub fn parse_counts_str(text: &str) -> CliResult<(CountsRecord, Vec<String>)> {
    CountsRecord::from_json(text).map_err(|e| CliError::Data(e.to_string()))
}

/// Reads a counts file. Missing cells are set to 0 and reported on stderr.
pub fn parse_counts(path: &Path) -> CliResult<CountsRecord> {
    let (rec, warnings) = parse_counts_str(&read(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(rec)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let at = e.position().map(|p| format!(" line {}", p.line())).unwrap_or_default();
    CliError::Data(format!("{}:{at}: {e}", path.display()))
}

fn parse_phase(path: &Path, line: u64, field: &str, value: &str) -> CliResult<Phase> {
    value
        .parse()
        .map_err(|e| CliError::Data(format!("{}: line {line}, field `{field}`: {e}", path.display())))
}

fn records<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<(u64, T)>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let value = row.deserialize(Some(&headers)).map_err(|e| csv_error(path, e))?;
        out.push((line, value));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PhaseRow {
    phase: String,
    #[serde(rename = "D1")]
    d1: u64,
    #[serde(rename = "D2")]
    d2: u64,
}

/// Reads `phase,D1,D2` rows for all four phases.
pub fn read_phase_cal(path: &Path, cfg: &CalibrationConfig) -> CliResult<PhaseCalCounts> {
    let mut d1 = [None; 4];
    let mut d2 = [0; 4];
    for (line, row) in records::<PhaseRow>(path)? {
        let p = parse_phase(path, line, "phase", &row.phase)?;
        if d1[p.index()].is_some() {
            return Err(CliError::Data(format!("{}: line {line}: phase {p} repeated", path.display())));
        }
        d1[p.index()] = Some(row.d1);
        d2[p.index()] = row.d2;
    }
    let mut counts = [0; 4];
    for p in Phase::ALL {
        counts[p.index()] = d1[p.index()]
            .ok_or_else(|| CliError::Data(format!("{}: phase {p} missing", path.display())))?;
    }
    Ok(PhaseCalCounts {
        d1: counts,
        d2,
        eta1: cfg.eta1,
        eta2: cfg.eta2,
        trials: cfg.hoeffding_trials,
        eps_h: cfg.eps_h,
    })
}

#[derive(Deserialize)]
struct PatternRow {
    pred: String,
    curr: String,
    count: u64,
}

/// Reads `pred,curr,count` rows covering the 4×4 pattern grid.
pub fn read_pattern(path: &Path) -> CliResult<PatternCounts> {
    let mut grid = [[None; 4]; 4];
    for (line, row) in records::<PatternRow>(path)? {
        let pred = parse_phase(path, line, "pred", &row.pred)?;
        let curr = parse_phase(path, line, "curr", &row.curr)?;
        let cell = &mut grid[pred.index()][curr.index()];
        if cell.is_some() {
            return Err(CliError::Data(format!(
                "{}: line {line}: pattern {pred}->{curr} repeated",
                path.display()
            )));
        }
        *cell = Some(row.count);
    }
    let mut out = [[0; 4]; 4];
    for pred in Phase::ALL {
        for curr in Phase::ALL {
            out[pred.index()][curr.index()] = grid[pred.index()][curr.index()].ok_or_else(|| {
                CliError::Data(format!("{}: pattern {pred}->{curr} missing", path.display()))
            })?;
        }
    }
    Ok(PatternCounts(out))
}

#[derive(Deserialize)]
struct PowerRow {
    t_s: f64,
    #[serde(rename = "dBm")]
    dbm: f64,
    channel: String,
}

/// Reads `t_s,dBm,channel` rows.
pub fn read_power(path: &Path, window_s: f64) -> CliResult<PowerSeries> {
    let samples = records::<PowerRow>(path)?
        .into_iter()
        .map(|(_, r)| PowerSample {
            t_s: r.t_s,
            dbm: r.dbm,
            channel: r.channel,
        })
        .collect();
    Ok(PowerSeries { samples, window_s })
}

/// One column of the published experiment: counts plus the settings that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFixture {
    pub name: String,
    pub record: CountsRecord,
    pub protocol: ProtocolParams,
    pub flaws: FlawParams,
}

impl ExperimentFixture {
    /// Loads `fixtures/loss{L}.json` under `data_dir`.
    pub fn load(data_dir: &Path, loss_db: u32) -> CliResult<Self> {
        let path = fixture_path(data_dir, loss_db);
        let record = parse_counts(&path)?;
        let protocol = protocol_for(&record, &ProtocolParams::default());
        Ok(Self {
            name: format!("loss{loss_db}"),
            record,
            protocol,
            flaws: FlawParams::experimental(),
        })
    }
}

pub fn fixture_path(data_dir: &Path, loss_db: u32) -> PathBuf {
    data_dir.join("fixtures").join(format!("loss{loss_db}.json"))
}

/// Protocol settings for a record: pulse number and `μ′` from its metadata
/// override the configured ones.
pub fn protocol_for(record: &CountsRecord, base: &ProtocolParams) -> ProtocolParams {
    ProtocolParams {
        mu_prime: record.meta.mu_prime.unwrap_or(base.mu_prime),
        n_pulses: if record.meta.n_pulses > 0 {
            record.meta.n_pulses
        } else {
            base.n_pulses
        },
        ..base.clone()
    }
}
