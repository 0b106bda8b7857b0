//! Pulse-level simulation of the protocol and the counts record it produces.
//!
//! Each pulse pair draws bases and bits on both sides, applies the source
//! flaws to the coherent amplitudes, interferes them on Charlie's beam
//! splitter and keeps events where exactly one threshold detector clicks.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corenum::{ComplexAmp, Phase};
use crate::error::{Error, Result};
use crate::finitekey::CountsSummary;
use crate::flawmodel::FlawParams;
use crate::security::{channel_eta, ChannelParams, ProtocolParams};

/// Version of the JSON counts schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Charlie's detectors. `D1` fires on constructive interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

impl Detector {
    pub const BOTH: [Detector; 2] = [Detector::D1, Detector::D2];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Provenance of a counts record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsMeta {
    /// Pulses sent by each party.
    pub n_pulses: u64,
    pub loss_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_hash: Option<String>,
}

/// Effective detection events per detector and phase pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountsRecord {
    /// Indexed `[detector][alice phase][bob phase]`.
    pub clicks: [[[u64; 4]; 4]; 2],
    /// Pulse pairs sent per `[alice phase][bob phase]`, when known.
    pub emitted: Option<[[u64; 4]; 4]>,
    pub meta: CountsMeta,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    det: Detector,
    phase_a: Phase,
    phase_b: Phase,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmittedDoc {
    phase_a: Phase,
    phase_b: Phase,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsDoc {
    #[serde(default = "default_schema")]
    schema_version: u32,
    meta: CountsMeta,
    cells: Vec<CellDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emitted: Option<Vec<EmittedDoc>>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

impl CountsRecord {
    pub fn click(&self, det: Detector, a: Phase, b: Phase) -> u64 {
        self.clicks[det.index()][a.index()][b.index()]
    }

    /// Checks `count ≤ emitted` cell by cell when the emitted pairs are known.
    pub fn validate(&self) -> Result<()> {
        if let Some(emitted) = &self.emitted {
            for a in 0..4 {
                for b in 0..4 {
                    let c = self.clicks[0][a][b] + self.clicks[1][a][b];
                    if c > emitted[a][b] {
                        return Err(Error::Record(format!(
                            "{c} clicks exceed {} emitted pairs at ({}, {})",
                            emitted[a][b],
                            Phase::ALL[a],
                            Phase::ALL[b]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializes to the JSON counts schema with all 32 cells in a fixed order.
    pub fn to_json(&self) -> String {
        let mut cells = Vec::with_capacity(32);
        for det in Detector::BOTH {
            for a in Phase::ALL {
                for b in Phase::ALL {
                    cells.push(CellDoc {
                        det,
                        phase_a: a,
                        phase_b: b,
                        count: self.click(det, a, b),
                    });
                }
            }
        }
        let emitted = self.emitted.map(|e| {
            let mut out = Vec::with_capacity(16);
            for a in Phase::ALL {
                for b in Phase::ALL {
                    out.push(EmittedDoc {
                        phase_a: a,
                        phase_b: b,
                        count: e[a.index()][b.index()],
                    });
                }
            }
            out
        });
        let doc = CountsDoc {
            schema_version: SCHEMA_VERSION,
            meta: self.meta.clone(),
            cells,
            emitted,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("counts document serializes");
        s.push('\n');
        s
    }

    /// Parses the JSON counts schema. Returns the record and one warning per
    /// cell that was absent and defaulted to 0.
    pub fn from_json(text: &str) -> Result<(Self, Vec<String>)> {
        if text.trim().is_empty() {
            return Err(Error::Record("empty document".into()));
        }
        let doc: CountsDoc = serde_json::from_str(text)
            .map_err(|e| Error::Record(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Record(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let mut clicks = [[[0u64; 4]; 4]; 2];
        let mut seen = [[[false; 4]; 4]; 2];
        for (k, cell) in doc.cells.iter().enumerate() {
            let (d, a, b) = (cell.det.index(), cell.phase_a.index(), cell.phase_b.index());
            if seen[d][a][b] {
                return Err(Error::Record(format!(
                    "cells[{k}]: duplicate cell ({:?}, {}, {})",
                    cell.det, cell.phase_a, cell.phase_b
                )));
            }
            seen[d][a][b] = true;
            clicks[d][a][b] = cell.count;
        }
        let mut warnings = Vec::new();
        for det in Detector::BOTH {
            for a in Phase::ALL {
                for b in Phase::ALL {
                    if !seen[det.index()][a.index()][b.index()] {
                        warnings.push(format!("missing cell ({det:?}, {a}, {b}) set to 0"));
                    }
                }
            }
        }
        let emitted = match doc.emitted {
            None => None,
            Some(list) => {
                let mut e = [[0u64; 4]; 4];
                for item in list {
                    e[item.phase_a.index()][item.phase_b.index()] = item.count;
                }
                Some(e)
            }
        };
        let rec = Self {
            clicks,
            emitted,
            meta: doc.meta,
        };
        rec.validate()?;
        Ok((rec, warnings))
    }

    fn add(&mut self, other: &Self) {
        for d in 0..2 {
            for a in 0..4 {
                for b in 0..4 {
                    self.clicks[d][a][b] += other.clicks[d][a][b];
                }
            }
        }
        if let (Some(e), Some(o)) = (self.emitted.as_mut(), other.emitted.as_ref()) {
            for a in 0..4 {
                for b in 0..4 {
                    e[a][b] += o[a][b];
                }
            }
        }
    }
}

/// Whether a tallied event disagrees with the sifted key: in either basis a
/// `D1` click on opposite bits or a `D2` click on equal bits.
pub fn is_error_cell(det: Detector, a: Phase, b: Phase) -> bool {
    (a == b) == (det == Detector::D2)
}

/// Matched-basis event and error totals.
pub fn sift_and_summarize(rec: &CountsRecord) -> CountsSummary {
    let mut s = CountsSummary::default();
    for det in Detector::BOTH {
        for a in Phase::ALL {
            for b in Phase::ALL {
                if a.is_x_basis() != b.is_x_basis() {
                    continue;
                }
                let c = rec.click(det, a, b);
                let err = if is_error_cell(det, a, b) { c } else { 0 };
                if a.is_x_basis() {
                    s.n_x += c;
                    s.m_x += err;
                } else {
                    s.n_y += c;
                    s.m_y += err;
                }
            }
        }
    }
    s
}

/// Shifts both parties' phases by `π`, flipping every bit.
pub fn flip_both_bits(rec: &CountsRecord) -> CountsRecord {
    let flip = |k: usize| (k + 2) % 4;
    let mut out = CountsRecord {
        meta: rec.meta.clone(),
        ..CountsRecord::default()
    };
    for d in 0..2 {
        for a in 0..4 {
            for b in 0..4 {
                out.clicks[d][flip(a)][flip(b)] = rec.clicks[d][a][b];
            }
        }
    }
    out.emitted = rec.emitted.map(|e| {
        let mut f = [[0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                f[flip(a)][flip(b)] = e[a][b];
            }
        }
        f
    });
    out
}

/// Seed and chunking of the random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    /// Pulse pairs per chunk; chunk `k` uses stream `k`.
    pub chunk_size: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            chunk_size: 1 << 20,
        }
    }
}

/// How bounded flaws are realized in the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlawSampling {
    /// Deviations and intensity fixed at their bounds.
    #[default]
    WorstCaseFixed,
    /// Deviations and intensity drawn uniformly within their bounds per pulse.
    Stochastic,
}

/// Signed phase deviation per modulated phase in worst-case-fixed mode.
const FIXED_SIGNS: [f64; 4] = [0.0, 1.0, -1.0, 1.0];

struct Source {
    mu: f64,
    xi: f64,
    delta: f64,
    psi: f64,
    sampling: FlawSampling,
}

impl Source {
    fn amplitude(&self, phase: usize, prev: Option<usize>, rng: &mut ChaCha8Rng) -> ComplexAmp {
        let pattern = prev.is_some_and(|p| p != phase);
        let (scale, dev, shift) = match self.sampling {
            FlawSampling::WorstCaseFixed => (
                1.0 + self.xi,
                FIXED_SIGNS[phase] * self.delta,
                if pattern { self.psi } else { 0.0 },
            ),
            FlawSampling::Stochastic => (
                1.0 + self.xi * (2.0 * rng.random::<f64>() - 1.0),
                if phase == 0 { 0.0 } else { self.delta * (2.0 * rng.random::<f64>() - 1.0) },
                if pattern { self.psi * rng.random::<f64>() } else { 0.0 },
            ),
        };
        ComplexAmp::from_polar((scale * self.mu).sqrt(), phase as f64 * FRAC_PI_2 + dev + shift)
    }
}

/// Simulates `pp.n_pulses` pulse pairs.
pub fn simulate_run(
    pp: &ProtocolParams,
    ch: &ChannelParams,
    flaws: &FlawParams,
    sampling: FlawSampling,
    rng: RngSpec,
) -> Result<CountsRecord> {
    pp.validate()?;
    ch.validate()?;
    flaws.validate()?;
    if rng.chunk_size == 0 {
        return Err(Error::InvalidParams("chunk_size must be >= 1".into()));
    }
    let source = Source {
        mu: pp.mu_prime,
        xi: flaws.xi,
        delta: flaws.delta,
        psi: flaws.psi,
        sampling,
    };
    let eta = channel_eta(ch);
    let n = pp.n_pulses;
    let chunks = n.div_ceil(rng.chunk_size);

    let partials: Vec<CountsRecord> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = rng.chunk_size.min(n - k * rng.chunk_size);
            let mut r = ChaCha8Rng::seed_from_u64(rng.seed);
            r.set_stream(k);
            simulate_chunk(len, pp.p_x, eta, ch, &source, &mut r)
        })
        .collect();

    let mut total = CountsRecord {
        emitted: Some([[0; 4]; 4]),
        ..CountsRecord::default()
    };
    for p in &partials {
        total.add(p);
    }
    total.meta = CountsMeta {
        n_pulses: n,
        loss_db: ch.loss_db,
        mu_prime: Some(pp.mu_prime),
        seed: Some(rng.seed),
        params_hash: None,
    };
    Ok(total)
}

fn draw_phase(p_x: f64, rng: &mut ChaCha8Rng) -> usize {
    let x_basis = rng.random::<f64>() < p_x;
    let bit = rng.random::<bool>() as usize;
    if x_basis {
        2 * bit
    } else {
        1 + 2 * bit
    }
}

fn simulate_chunk(
    len: u64,
    p_x: f64,
    eta: f64,
    ch: &ChannelParams,
    source: &Source,
    rng: &mut ChaCha8Rng,
) -> CountsRecord {
    let mut rec = CountsRecord {
        emitted: Some([[0; 4]; 4]),
        ..CountsRecord::default()
    };
    let emitted = rec.emitted.as_mut().expect("set above");
    let no_dark = 1.0 - ch.p_d;
    let (mut prev_a, mut prev_b) = (None, None);
    for _ in 0..len {
        let a = draw_phase(p_x, rng);
        let b = draw_phase(p_x, rng);
        let amp_a = source.amplitude(a, prev_a, rng);
        let amp_b = source.amplitude(b, prev_b, rng);
        prev_a = Some(a);
        prev_b = Some(b);
        emitted[a][b] += 1;

        let i1 = 0.5 * eta * (amp_a + amp_b).norm_sqr();
        let i2 = 0.5 * eta * (amp_a - amp_b).norm_sqr();
        let click1 = rng.random::<f64>() < 1.0 - no_dark * (-i1).exp();
        let click2 = rng.random::<f64>() < 1.0 - no_dark * (-i2).exp();
        if click1 == click2 {
            continue;
        }
        let mut det = if click1 { 0 } else { 1 };
        let matched = (a % 2) == (b % 2);
        if matched {
            let e_d = if a.is_multiple_of(2) { ch.e_d_x } else { ch.e_d_y };
            if e_d > 0.0 && rng.random::<f64>() < e_d {
                det = 1 - det;
            }
        }
        rec.clicks[det][a][b] += 1;
    }
    rec
}
