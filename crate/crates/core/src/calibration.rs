//! Extraction of the source-flaw parameters from calibration data.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::corenum::Phase;
use crate::error::{domain, Error, Result};

/// Number of trials entering the Hoeffding shift of a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoeffdingTrials {
    /// Each count is its own trial number: `D ± √(½ D ln(1/ε_h))`.
    #[default]
    PerCount,
    /// A fixed number of trials shared by all counts.
    Fixed(u64),
}

/// Detector counts with Bob's phase held at 0 and Alice scanning her phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalCounts {
    /// `D_{1,φ}` indexed by [`Phase::index`].
    pub d1: [u64; 4],
    /// `D_{2,φ}` indexed by [`Phase::index`].
    pub d2: [u64; 4],
    pub eta1: f64,
    pub eta2: f64,
    pub trials: HoeffdingTrials,
    pub eps_h: f64,
}

impl PhaseCalCounts {
    /// Counts with the detector efficiencies of the reference setup and
    /// `ε_h = 1e−10`.
    pub fn new(d1: [u64; 4], d2: [u64; 4]) -> Self {
        Self {
            d1,
            d2,
            eta1: 0.663,
            eta2: 0.736,
            trials: HoeffdingTrials::PerCount,
            eps_h: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParams(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.eps_h > 0.0 && self.eps_h <= 1.0) {
            return Err(Error::InvalidParams(format!("eps_h must lie in (0, 1], got {}", self.eps_h)));
        }
        Ok(())
    }

    fn shift(&self, count: u64) -> f64 {
        let n = match self.trials {
            HoeffdingTrials::PerCount => count,
            HoeffdingTrials::Fixed(n) => n,
        };
        (0.5 * n as f64 * (1.0 / self.eps_h).ln()).sqrt()
    }

    fn upper(&self, count: u64) -> f64 {
        count as f64 + self.shift(count)
    }

    fn lower(&self, count: u64) -> f64 {
        count as f64 - self.shift(count)
    }
}

/// Upper bound `δ̄_φ` on the deviation of modulated phase `φ`.
pub fn delta_phi_bound(cal: &PhaseCalCounts, phi: Phase) -> Result<f64> {
    cal.validate()?;
    let phi0 = match phi {
        Phase::Zero => return Err(Error::InvalidParams("phase 0 is the reference".into())),
        Phase::HalfPi | Phase::Pi => phi.radians(),
        Phase::ThreeHalfPi => FRAC_PI_2,
    };
    let k = phi.index();
    let (d1, d2, bg) = (cal.d1[k], cal.d2[k], cal.d2[Phase::Zero.index()]);

    let bound = |num: f64, den: f64| -> Result<f64> {
        if num < 0.0 || den < 0.0 {
            return Err(Error::InsufficientStatistics(format!(
                "background-subtracted count is negative at phase {phi}"
            )));
        }
        let ratio = (num / cal.eta2) / (den / cal.eta1);
        let angle = if ratio.is_infinite() || den == 0.0 {
            FRAC_PI_2
        } else {
            ratio.sqrt().atan()
        };
        Ok((phi0 - 2.0 * angle).abs())
    };
    let b1 = bound(cal.upper(d2) - cal.lower(bg), cal.lower(d1) - cal.upper(bg))?;
    let b2 = bound(cal.lower(d2) - cal.upper(bg), cal.upper(d1) - cal.lower(bg))?;
    Ok(b1.max(b2))
}

/// Second-pulse counts indexed `[predecessor][current]` by [`Phase::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts(pub [[u64; 4]; 4]);

/// Relative deviations of each pattern from the mean of its group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternDeviation {
    /// Indexed `[predecessor][current]`.
    pub deviations: [[f64; 4]; 4],
    /// Largest deviation, identified with `sin ψ`.
    pub max: f64,
    /// `(predecessor, current)` of the largest deviation.
    pub argmax: (Phase, Phase),
    pub psi: f64,
}

/// Deviation of every pattern from the mean over patterns with the same
/// current phase.
pub fn pattern_deviation(pc: &PatternCounts) -> Result<PatternDeviation> {
    let mut deviations = [[0.0; 4]; 4];
    let mut best = (f64::NEG_INFINITY, (Phase::Zero, Phase::Zero));
    for curr in 0..4 {
        let mean = (0..4).map(|pred| pc.0[pred][curr] as f64).sum::<f64>() / 4.0;
        if mean == 0.0 {
            return Err(Error::InsufficientStatistics(format!(
                "no counts for current phase {}",
                Phase::ALL[curr]
            )));
        }
        for pred in 0..4 {
            let d = (pc.0[pred][curr] as f64 - mean).abs() / mean;
            deviations[pred][curr] = d;
            if d > best.0 {
                best = (d, (Phase::ALL[pred], Phase::ALL[curr]));
            }
        }
    }
    let max = best.0;
    if max > 1.0 {
        return Err(domain("max deviation", max, "sin ψ cannot exceed 1"));
    }
    Ok(PatternDeviation {
        deviations,
        max,
        argmax: best.1,
        psi: max.asin(),
    })
}

/// One optical power reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t_s: f64,
    pub dbm: f64,
    /// Series the reading belongs to, e.g. `source` or `path`.
    pub channel: String,
}

/// Power readings of one or more channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub samples: Vec<PowerSample>,
    /// Window length in seconds.
    pub window_s: f64,
}

impl PowerSeries {
    pub fn new(samples: Vec<PowerSample>) -> Self {
        Self {
            samples,
            window_s: 100.0,
        }
    }
}

/// `ξ = 10^(ΔdB/10) − 1`.
pub fn xi_from_db(delta_db: f64) -> Result<f64> {
    if !delta_db.is_finite() || delta_db < 0.0 {
        return Err(domain("delta_db", delta_db, "must be >= 0"));
    }
    Ok(10f64.powf(delta_db / 10.0) - 1.0)
}

/// Worst max−min spread of each channel within any window, in dB.
pub fn windowed_spread_db(series: &PowerSeries) -> Result<BTreeMap<String, f64>> {
    if series.samples.is_empty() {
        return Err(Error::InsufficientStatistics("empty power series".into()));
    }
    if !(series.window_s > 0.0) {
        return Err(Error::InvalidParams(format!("window must be > 0 s, got {}", series.window_s)));
    }
    let mut channels: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &series.samples {
        if !s.t_s.is_finite() || !s.dbm.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite power sample {s:?}")));
        }
        channels.entry(s.channel.clone()).or_default().push((s.t_s, s.dbm));
    }
    let mut out = BTreeMap::new();
    for (name, readings) in channels {
        if readings.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidParams(format!("timestamps of channel `{name}` are not monotone")));
        }
        out.insert(name, sliding_spread(&readings, series.window_s));
    }
    Ok(out)
}

/// Largest `max − min` over windows `[t, t + w]`, via monotone deques.
fn sliding_spread(readings: &[(f64, f64)], w: f64) -> f64 {
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut start = 0;
    let mut spread = 0.0f64;
    for (j, &(t, v)) in readings.iter().enumerate() {
        while hi.back().is_some_and(|&k| readings[k].1 <= v) {
            hi.pop_back();
        }
        hi.push_back(j);
        while lo.back().is_some_and(|&k| readings[k].1 >= v) {
            lo.pop_back();
        }
        lo.push_back(j);
        while t - readings[start].0 > w {
            start += 1;
        }
        while hi.front().is_some_and(|&k| k < start) {
            hi.pop_front();
        }
        while lo.front().is_some_and(|&k| k < start) {
            lo.pop_front();
        }
        spread = spread.max(readings[hi[0]].1 - readings[lo[0]].1);
    }
    spread
}

/// Power fluctuation `ξ` from the windowed spreads of all channels, summed in dB.
pub fn xi_from_power(series: &PowerSeries) -> Result<f64> {
    let total: f64 = windowed_spread_db(series)?.values().sum();
    xi_from_db(total)
}

/// How an extinction ratio in dB maps onto `tan θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtinctionConvention {
    /// `tan θ = 10^(−ER/10)`.
    #[default]
    AmplitudeRatio,
    /// `tan²θ = 10^(−ER/10)`.
    PowerRatio,
}

/// Polarization angle `θ` from an extinction ratio in dB.
pub fn theta_from_extinction(er_db: f64, convention: ExtinctionConvention) -> Result<f64> {
    if er_db.is_nan() || er_db < 0.0 {
        return Err(domain("er_db", er_db, "must be >= 0"));
    }
    let scale = match convention {
        ExtinctionConvention::AmplitudeRatio => 10.0,
        ExtinctionConvention::PowerRatio => 20.0,
    };
    Ok(10f64.powf(-er_db / scale).atan())
}
