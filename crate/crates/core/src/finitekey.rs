//! Finite-size key length against coherent attacks.
//!
//! Observed Y-basis errors are turned into an upper bound on the X-basis
//! phase error through two applications of Kato's inequality:
//!
//! ```text
//! m_y* = m_y + Δ_c(n_y) → E_b^y* = m_y*/n_y → E_p* → m_p* = n_x E_p*
//!      → m̄_p = m_p* + Δ_c(n_x) → Ē_p = m̄_p/n_x
//! ```

use serde::{Deserialize, Serialize};

use crate::corenum::binary_entropy;
use crate::error::{domain, Error, Result};
use crate::flawmodel::{fidelity_flawed, FlawParams};
use crate::security::{coin_imbalance, phase_error_upper, ProtocolParams};

/// Failure probabilities of the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecurityEpsilons {
    /// Error-correction (correctness) failure.
    pub eps_c: f64,
    /// Privacy-amplification failure.
    pub eps_pa: f64,
    /// Failure of each concentration bound.
    pub eps_f: f64,
}

impl Default for SecurityEpsilons {
    fn default() -> Self {
        Self {
            eps_c: 1e-10,
            eps_pa: 1e-10,
            eps_f: 1e-10,
        }
    }
}

impl SecurityEpsilons {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_c", self.eps_c), ("eps_pa", self.eps_pa), ("eps_f", self.eps_f)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParams(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Secrecy parameter `ε_s = √ε_F + ε_PA`.
    pub fn eps_sec(&self) -> f64 {
        self.eps_f.sqrt() + self.eps_pa
    }

    /// Total failure probability of the two concentration bounds.
    pub fn kato_budget(&self) -> f64 {
        2.0 * self.eps_f
    }
}

/// Sifted event and error counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountsSummary {
    pub n_x: u64,
    pub m_x: u64,
    pub n_y: u64,
    pub m_y: u64,
}

impl CountsSummary {
    pub fn validate(&self) -> Result<()> {
        if self.m_x > self.n_x || self.m_y > self.n_y {
            return Err(Error::InvalidParams(format!("error counts exceed event counts: {self:?}")));
        }
        Ok(())
    }

    pub fn e_b_x(&self) -> f64 {
        ratio(self.m_x, self.n_x)
    }

    pub fn e_b_y(&self) -> f64 {
        ratio(self.m_y, self.n_y)
    }
}

fn ratio(m: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        m as f64 / n as f64
    }
}

/// `Δ_c = √(½ n ln(1/ε_F))`.
pub fn kato_delta(n: f64, eps_f: f64) -> Result<f64> {
    if !n.is_finite() || n < 0.0 {
        return Err(domain("n", n, "must be >= 0"));
    }
    if !(eps_f > 0.0 && eps_f <= 1.0) {
        return Err(domain("eps_f", eps_f, "must lie in (0, 1]"));
    }
    Ok((0.5 * n * (-eps_f.ln()).max(0.0)).sqrt())
}

/// Intermediate values of the phase-error estimation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorEstimate {
    pub m_y_star: f64,
    pub e_b_y_star: f64,
    pub e_p_star: f64,
    pub m_p_star: f64,
    pub m_p_bar: f64,
    /// Final bound `Ē_p`, capped at ½.
    pub e_p_bar: f64,
}

/// Upper bound `Ē_p` on the X-basis phase error rate.
pub fn estimate_phase_error_finite(
    counts: &CountsSummary,
    delta: f64,
    eps: &SecurityEpsilons,
) -> Result<PhaseErrorEstimate> {
    counts.validate()?;
    eps.validate()?;
    if counts.n_x == 0 || counts.n_y == 0 {
        return Err(Error::InsufficientStatistics(format!(
            "need events in both bases, got n_x = {}, n_y = {}",
            counts.n_x, counts.n_y
        )));
    }
    let n_x = counts.n_x as f64;
    let n_y = counts.n_y as f64;
    let m_y_star = counts.m_y as f64 + kato_delta(n_y, eps.eps_f)?;
    let e_b_y_star = (m_y_star / n_y).min(0.5);
    let e_p_star = phase_error_upper(e_b_y_star, delta)?;
    let m_p_star = n_x * e_p_star;
    let m_p_bar = m_p_star + kato_delta(n_x, eps.eps_f)?;
    Ok(PhaseErrorEstimate {
        m_y_star,
        e_b_y_star,
        e_p_star,
        m_p_star,
        m_p_bar,
        e_p_bar: (m_p_bar / n_x).min(0.5),
    })
}

/// Secret key length
/// `⌊n_x [1 − H(Ē_p) − f H(E_b^x)] − log₂(2/ε_c) − log₂(1/(4ε_PA²))⌋`, clamped at 0.
pub fn secret_key_length(counts: &CountsSummary, e_p_bar: f64, f: f64, eps: &SecurityEpsilons) -> Result<u64> {
    counts.validate()?;
    eps.validate()?;
    if !f.is_finite() || f < 1.0 {
        return Err(domain("f", f, "must be >= 1"));
    }
    let n_x = counts.n_x as f64;
    let bits = n_x * (1.0 - binary_entropy(e_p_bar)? - f * binary_entropy(counts.e_b_x())?)
        - (2.0 / eps.eps_c).log2()
        - (1.0 / (4.0 * eps.eps_pa * eps.eps_pa)).log2();
    Ok(bits.max(0.0).floor() as u64)
}

/// Finite-size analysis of one set of sifted counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyReport {
    pub counts: CountsSummary,
    pub e_b_x: f64,
    pub e_b_y: f64,
    /// Gain of matched-basis pulse pairs, `(n_x + n_y) / (N (p_x² + p_y²))`.
    pub q_total: f64,
    pub fidelity_sq: f64,
    pub delta: f64,
    pub estimate: PhaseErrorEstimate,
    pub secret_bits: u64,
    /// `l / N`.
    pub rate_per_pulse: f64,
    pub bits_per_second: f64,
    pub eps_sec: f64,
    pub eps_c: f64,
    pub kato_budget: f64,
}

/// Runs the estimation chain and key-length formula on observed counts.
pub fn finite_key_report(
    counts: &CountsSummary,
    pp: &ProtocolParams,
    f: f64,
    flaws: &FlawParams,
    eps: &SecurityEpsilons,
) -> Result<FiniteKeyReport> {
    pp.validate()?;
    counts.validate()?;
    let n = pp.n_pulses as f64;
    let q_total = (counts.n_x + counts.n_y) as f64 / (n * pp.matched_basis_prob());
    if q_total <= 0.0 {
        return Err(Error::InsufficientStatistics("no effective events".into()));
    }
    if q_total > 1.0 {
        return Err(Error::InvalidParams(format!(
            "more effective events than matched-basis pulses (gain {q_total})"
        )));
    }
    let fidelity = fidelity_flawed(pp.mu_prime, flaws)?;
    let delta = coin_imbalance(fidelity.magnitude_sq, q_total)?;
    let estimate = estimate_phase_error_finite(counts, delta, eps)?;
    let secret_bits = secret_key_length(counts, estimate.e_p_bar, f, eps)?;
    let rate = secret_bits as f64 / n;
    Ok(FiniteKeyReport {
        counts: *counts,
        e_b_x: counts.e_b_x(),
        e_b_y: counts.e_b_y(),
        q_total,
        fidelity_sq: fidelity.magnitude_sq,
        delta,
        estimate,
        secret_bits,
        rate_per_pulse: rate,
        bits_per_second: rate * pp.rep_rate_hz,
        eps_sec: eps.eps_sec(),
        eps_c: eps.eps_c,
        kato_budget: eps.kato_budget(),
    })
}
