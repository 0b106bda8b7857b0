//! Source-flaw parameters and the fidelity of the basis-dependent states.
//!
//! The joint fidelity is
//!
//! ```text
//! ⟨Ψ_X|Ψ_Y⟩ = ¼ (1−ε) e^{−μ_THA} cos²θ · [ (1−i)⟨α′|i e^{iδ₂}α′⟩
//!                                        + (1−i)⟨−e^{iδ₁}α′|−i e^{iδ₃}α′⟩
//!                                        + (1+i)⟨α′|−i e^{iδ₃}α′⟩
//!                                        + (1+i)⟨−e^{iδ₁}α′|i e^{iδ₂}α′⟩ ]
//! ```
//!
//! where `α′` is the (common) flawed amplitude and `δ₁, δ₂, δ₃` are the phase
//! deviations of the `π`, `π/2` and `3π/2` states. Only the bound `|δₖ| ≤ δ`
//! is known, so the worst case minimizes `|⟨Ψ_X|Ψ_Y⟩|` over those deviations
//! and over the intensity branch `(1±ξ)μ′`.

use serde::{Deserialize, Serialize};

use crate::corenum::{coherent_overlap, phase_factor, CoherentAmplitude, ComplexAmp};
use crate::error::{check_range, domain, Error, Result};

/// How the phase-deviation bound `δ` is applied to the three modulated states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseDeviation {
    /// Each state deviates independently within `[−δ, δ]`; the fidelity is
    /// minimized over the deviations.
    #[default]
    WorstCaseSigns,
    /// All three states carry the same deviation `+δ`.
    Common,
}

/// Measured source flaws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlawParams {
    /// Fractional power fluctuation `ξ`.
    #[serde(default)]
    pub xi: f64,
    /// Phase-modulation deviation bound `δ` (rad).
    #[serde(default)]
    pub delta: f64,
    /// Polarization side-channel angle `θ` (rad).
    #[serde(default)]
    pub theta: f64,
    /// Pattern-effect phase deviation `ψ` (rad).
    #[serde(default)]
    pub psi: f64,
    /// Mean photon number of Trojan-horse back-reflection.
    #[serde(default)]
    pub mu_tha: f64,
    /// Fixed correlation parameter `ε`, bypassing `ψ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_override: Option<f64>,
    /// Correlation parameters `ε_d` for correlation lengths `d = 1, 2, …`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_per_distance: Option<Vec<f64>>,
    #[serde(default)]
    pub phase_deviation: PhaseDeviation,
}

impl Default for FlawParams {
    fn default() -> Self {
        Self::none()
    }
}

impl FlawParams {
    /// A perfect source.
    pub fn none() -> Self {
        Self {
            xi: 0.0,
            delta: 0.0,
            theta: 0.0,
            psi: 0.0,
            mu_tha: 0.0,
            epsilon_override: None,
            epsilon_per_distance: None,
            phase_deviation: PhaseDeviation::default(),
        }
    }

    /// Values characterized for the plug-and-play experiment.
    pub fn experimental() -> Self {
        Self {
            xi: 0.0111,
            delta: 0.062,
            theta: 10f64.powf(-2.65).atan(),
            psi: 8.54e-3,
            mu_tha: 1e-7,
            ..Self::none()
        }
    }

    /// Only pulse correlations, given directly as `ε`.
    pub fn correlation_only(epsilon: f64) -> Self {
        Self {
            epsilon_override: Some(epsilon),
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("xi", self.xi),
            ("delta", self.delta),
            ("psi", self.psi),
            ("mu_tha", self.mu_tha),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.xi >= 1.0 {
            return Err(Error::InvalidParams(format!("xi must be < 1, got {}", self.xi)));
        }
        if !self.theta.is_finite() || self.theta < 0.0 || self.theta >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParams(format!(
                "theta must lie in [0, pi/2), got {}",
                self.theta
            )));
        }
        if let Some(e) = self.epsilon_override {
            check_unit("epsilon_override", e)?;
        }
        if let Some(list) = &self.epsilon_per_distance {
            for &e in list {
                check_unit("epsilon_per_distance", e)?;
            }
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Fidelity `⟨Ψ_X|Ψ_Y⟩` at the worst-case flaw realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityResult {
    pub value: ComplexAmp,
    /// `|value|²`.
    pub magnitude_sq: f64,
    /// Chosen intensity factor, `1 + ξ` or `1 − ξ`.
    pub intensity_scale: f64,
    /// Phase deviations `(δ₁, δ₂, δ₃)` at the minimum.
    pub deviations: [f64; 3],
    /// Correlation parameter `ε` that was applied.
    pub epsilon: f64,
}

/// Correlation parameter from the pattern-effect phase:
/// `ε = 1 − e^{|α|²(2cos ψ − 2)}`.
pub fn epsilon_from_psi(psi: f64, mu_prime: f64) -> Result<f64> {
    if !psi.is_finite() || psi < 0.0 {
        return Err(domain("psi", psi, "must be >= 0"));
    }
    if !mu_prime.is_finite() || mu_prime < 0.0 {
        return Err(domain("mu_prime", mu_prime, "must be >= 0"));
    }
    // 2cos ψ − 2 = −4 sin²(ψ/2)
    let s = (0.5 * psi).sin();
    Ok(-(-4.0 * mu_prime * s * s).exp_m1())
}

/// Both intensity branches `(1+ξ)μ′` and `(1−ξ)μ′`, in that order.
pub fn worst_case_alpha(mu_prime: f64, xi: f64) -> Result<[CoherentAmplitude; 2]> {
    if !mu_prime.is_finite() || mu_prime < 0.0 {
        return Err(domain("mu_prime", mu_prime, "must be >= 0"));
    }
    check_range("xi", xi, 0.0, 1.0)?;
    if xi >= 1.0 {
        return Err(domain("xi", xi, "must be < 1"));
    }
    Ok([
        CoherentAmplitude::from_intensity((1.0 + xi) * mu_prime),
        CoherentAmplitude::from_intensity((1.0 - xi) * mu_prime),
    ])
}

/// `ε` in priority order: explicit override, product over correlation
/// lengths, then conversion from `ψ`.
pub fn effective_epsilon(flaws: &FlawParams, mu_prime: f64) -> Result<f64> {
    if let Some(e) = flaws.epsilon_override {
        return Ok(e);
    }
    if let Some(list) = &flaws.epsilon_per_distance {
        // 1 − ∏(1−ε_d), accumulated so that a single entry is returned unchanged
        return Ok(list.iter().fold(0.0, |acc, &e| acc + e - acc * e));
    }
    epsilon_from_psi(flaws.psi, mu_prime)
}

/// Four-term overlap sum `¼ Σ cₖ⟨·|·⟩` for amplitude `α′` and phase
/// deviations `(δ₁, δ₂, δ₃)`, without the flaw prefactor.
pub fn basis_overlap_sum(alpha: CoherentAmplitude, deviations: [f64; 3]) -> ComplexAmp {
    let i = ComplexAmp::i();
    let one = ComplexAmp::new(1.0, 0.0);
    let [d1, d2, d3] = deviations;
    let s0 = alpha;
    let s1 = -alpha.rotated(d1);
    let s2 = alpha.times(i * phase_factor(d2));
    let s3 = alpha.times(-i * phase_factor(d3));
    let sum = (one - i) * coherent_overlap(s0, s2)
        + (one - i) * coherent_overlap(s1, s3)
        + (one + i) * coherent_overlap(s0, s3)
        + (one + i) * coherent_overlap(s1, s2);
    0.25 * sum
}

/// Flawed fidelity at the worst-case realization of the bounded flaws.
pub fn fidelity_flawed(mu_prime: f64, flaws: &FlawParams) -> Result<FidelityResult> {
    flaws.validate()?;
    let epsilon = effective_epsilon(flaws, mu_prime)?;
    let prefactor = (1.0 - epsilon) * (-flaws.mu_tha).exp() * flaws.theta.cos().powi(2);
    let branches = worst_case_alpha(mu_prime, flaws.xi)?;
    let scales = [1.0 + flaws.xi, 1.0 - flaws.xi];

    let mut best: Option<(f64, ComplexAmp, f64, [f64; 3])> = None;
    for (alpha, scale) in branches.into_iter().zip(scales) {
        let (sum, devs) = match flaws.phase_deviation {
            PhaseDeviation::Common => {
                let d = [flaws.delta; 3];
                (basis_overlap_sum(alpha, d), d)
            }
            PhaseDeviation::WorstCaseSigns => minimize_over_deviations(alpha, flaws.delta),
        };
        let m = sum.norm_sqr();
        if best.is_none_or(|(b, ..)| m < b) {
            best = Some((m, sum, scale, devs));
        }
    }
    let (_, sum, intensity_scale, deviations) = best.expect("two intensity branches");
    let value = prefactor * sum;
    Ok(FidelityResult {
        value,
        magnitude_sq: value.norm_sqr().min(1.0),
        intensity_scale,
        deviations,
        epsilon,
    })
}

/// Minimizes `|basis_overlap_sum|²` over the box `[−δ, δ]³`: all corners
/// first, then a compass search from the best corner and from the origin.
fn minimize_over_deviations(alpha: CoherentAmplitude, bound: f64) -> (ComplexAmp, [f64; 3]) {
    let eval = |d: [f64; 3]| basis_overlap_sum(alpha, d).norm_sqr();
    if bound == 0.0 {
        let d = [0.0; 3];
        return (basis_overlap_sum(alpha, d), d);
    }

    let mut starts = vec![[0.0; 3]];
    let mut best_corner = [bound; 3];
    let mut best_val = f64::INFINITY;
    for mask in 0..8u8 {
        let d = [0, 1, 2].map(|k| if mask >> k & 1 == 1 { bound } else { -bound });
        let v = eval(d);
        if v < best_val {
            best_val = v;
            best_corner = d;
        }
    }
    starts.push(best_corner);

    let mut best = (best_val, best_corner);
    for start in starts {
        let (v, d) = compass_search(&eval, start, bound);
        if v < best.0 {
            best = (v, d);
        }
    }
    (basis_overlap_sum(alpha, best.1), best.1)
}

fn compass_search(f: &impl Fn([f64; 3]) -> f64, start: [f64; 3], bound: f64) -> (f64, [f64; 3]) {
    let mut x = start;
    let mut fx = f(x);
    let mut step = 0.5 * bound;
    let min_step = 1e-12 * bound.max(1.0);
    while step > min_step {
        let mut improved = false;
        for k in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[k] = (y[k] + dir * step).clamp(-bound, bound);
                let fy = f(y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (fx, x)
}
