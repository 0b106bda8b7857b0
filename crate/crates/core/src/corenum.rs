//! Complex amplitudes, coherent-state overlaps and the binary entropy.

use std::ops::Neg;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Complex field amplitude or phase factor.
pub type ComplexAmp = Complex64;

/// `e^{i phase}`.
#[inline]
pub fn phase_factor(phase: f64) -> ComplexAmp {
    ComplexAmp::from_polar(1.0, phase)
}

/// One of the four modulation phases `{0, π/2, π, 3π/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "pi/2")]
    HalfPi,
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "3pi/2")]
    ThreeHalfPi,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Zero, Phase::HalfPi, Phase::Pi, Phase::ThreeHalfPi];

    pub fn from_index(k: usize) -> Option<Self> {
        Self::ALL.get(k).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn radians(self) -> f64 {
        self.index() as f64 * std::f64::consts::FRAC_PI_2
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::Zero => "0",
            Phase::HalfPi => "pi/2",
            Phase::Pi => "pi",
            Phase::ThreeHalfPi => "3pi/2",
        }
    }

    /// Whether the phase encodes an X-basis bit.
    pub fn is_x_basis(self) -> bool {
        matches!(self, Phase::Zero | Phase::Pi)
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(' ', "").as_str() {
            "0" => Ok(Phase::Zero),
            "pi/2" | "π/2" => Ok(Phase::HalfPi),
            "pi" | "π" => Ok(Phase::Pi),
            "3pi/2" | "3π/2" => Ok(Phase::ThreeHalfPi),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// Amplitude `α` of a coherent state `|α⟩`. The mean photon number is
/// always derived from the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude(ComplexAmp);

impl CoherentAmplitude {
    pub const VACUUM: Self = Self(ComplexAmp::new(0.0, 0.0));

    pub fn new(re: f64, im: f64) -> Self {
        Self(ComplexAmp::new(re, im))
    }

    pub fn from_amp(amp: ComplexAmp) -> Self {
        Self(amp)
    }

    /// Real, non-negative amplitude `√μ` for mean photon number `μ`.
    pub fn from_intensity(mu: f64) -> Self {
        Self::new(mu.max(0.0).sqrt(), 0.0)
    }

    pub fn amp(&self) -> ComplexAmp {
        self.0
    }

    /// `|α|²` in mean photons per pulse.
    pub fn intensity(&self) -> f64 {
        self.0.re * self.0.re + self.0.im * self.0.im
    }

    /// Multiplies the amplitude by `e^{i phase}`.
    pub fn rotated(&self, phase: f64) -> Self {
        Self(self.0 * phase_factor(phase))
    }

    /// Multiplies the amplitude by an arbitrary complex factor.
    pub fn times(&self, factor: ComplexAmp) -> Self {
        Self(self.0 * factor)
    }
}

impl Neg for CoherentAmplitude {
    type Output = Self;

    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl From<ComplexAmp> for CoherentAmplitude {
    fn from(amp: ComplexAmp) -> Self {
        Self(amp)
    }
}

/// Inner product `⟨a|b⟩ = exp(−|a|²/2 − |b|²/2 + ā·b)` of two coherent states.
pub fn coherent_overlap(a: CoherentAmplitude, b: CoherentAmplitude) -> ComplexAmp {
    let (a, b) = (a.amp(), b.amp());
    (-0.5 * a.norm_sqr() - 0.5 * b.norm_sqr() + a.conj() * b).exp()
}

/// Binary Shannon entropy in bits, `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("x", x, "binary entropy needs a probability"));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}
