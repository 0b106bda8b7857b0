//! Channel model, quantum-coin imbalance, phase-error bound and the
//! asymptotic key rate `R = Q^x [1 − f H(E_b^x) − H(E_p)]`.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::corenum::{binary_entropy, coherent_overlap, phase_factor, CoherentAmplitude, ComplexAmp};
use crate::error::{check_range, domain, Error, Result};
use crate::flawmodel::{fidelity_flawed, FlawParams};

/// Channel and detection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Total attenuation between Alice and Bob (dB).
    pub loss_db: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Dark-count probability per detection window.
    pub p_d: f64,
    #[serde(default)]
    pub e_d_x: f64,
    #[serde(default)]
    pub e_d_y: f64,
    /// Error-correction efficiency.
    pub f: f64,
}

impl Default for ChannelParams {
    /// Simulation defaults: ideal detectors with `p_d = 1e−8`, `f = 1.16`.
    fn default() -> Self {
        Self {
            loss_db: 0.0,
            eta_d: 1.0,
            p_d: 1e-8,
            e_d_x: 0.0,
            e_d_y: 0.0,
            f: 1.16,
        }
    }
}

impl ChannelParams {
    pub fn at_loss(&self, loss_db: f64) -> Self {
        Self {
            loss_db,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.loss_db.is_finite() || self.loss_db < 0.0 {
            return Err(Error::InvalidParams(format!("loss_db must be >= 0, got {}", self.loss_db)));
        }
        for (name, v) in [
            ("eta_d", self.eta_d),
            ("p_d", self.p_d),
            ("e_d_x", self.e_d_x),
            ("e_d_y", self.e_d_y),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !self.f.is_finite() || self.f < 1.0 {
            return Err(Error::InvalidParams(format!("f must be >= 1, got {}", self.f)));
        }
        Ok(())
    }
}

/// Source and run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Mean photon number `μ′ = |α|²`.
    pub mu_prime: f64,
    pub p_x: f64,
    pub p_y: f64,
    /// Pulses sent by each party.
    pub n_pulses: u64,
    pub rep_rate_hz: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            mu_prime: 1.38e-2,
            p_x: 0.9,
            p_y: 0.1,
            n_pulses: 10_000_000_000,
            rep_rate_hz: 1e8,
        }
    }
}

impl ProtocolParams {
    pub fn with_mu(&self, mu_prime: f64) -> Self {
        Self {
            mu_prime,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu_prime.is_finite() || self.mu_prime <= 0.0 {
            return Err(Error::InvalidParams(format!("mu_prime must be > 0, got {}", self.mu_prime)));
        }
        if !(0.0..=1.0).contains(&self.p_x) || !(0.0..=1.0).contains(&self.p_y) {
            return Err(Error::InvalidParams("basis probabilities must lie in [0, 1]".into()));
        }
        if (self.p_x + self.p_y - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "p_x + p_y must equal 1, got {}",
                self.p_x + self.p_y
            )));
        }
        if self.n_pulses == 0 {
            return Err(Error::InvalidParams("n_pulses must be >= 1".into()));
        }
        if !self.rep_rate_hz.is_finite() || self.rep_rate_hz <= 0.0 {
            return Err(Error::InvalidParams("rep_rate_hz must be > 0".into()));
        }
        Ok(())
    }

    /// Probability that both parties pick the same basis.
    pub fn matched_basis_prob(&self) -> f64 {
        self.p_x * self.p_x + self.p_y * self.p_y
    }
}

/// Summary of one key-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub loss_db: f64,
    pub mu_prime: f64,
    pub q_x: f64,
    pub e_b_x: f64,
    pub e_b_y: f64,
    pub fidelity_sq: f64,
    pub delta: f64,
    pub e_p: f64,
    pub rate_per_pulse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_bits: Option<u64>,
    pub bits_per_second: f64,
}

/// Gains and bit error rates of the closed-form channel model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainQber {
    pub q_x: f64,
    pub e_b_x: f64,
    pub e_b_y: f64,
    /// Set when `q_x = 0`; error rates are then reported as 0.
    pub degenerate: bool,
}

/// `η = η_d · 10^(−L/20)`.
pub fn channel_eta(ch: &ChannelParams) -> f64 {
    ch.eta_d * 10f64.powf(-ch.loss_db / 20.0)
}

/// Closed-form gain and bit error rates of matched-basis pulse pairs.
pub fn gain_and_qber(ch: &ChannelParams, pp: &ProtocolParams) -> Result<GainQber> {
    ch.validate()?;
    pp.validate()?;
    let eta = channel_eta(ch);
    let pd = ch.p_d;
    let decay = (-2.0 * eta * pp.mu_prime).exp();
    let q_x = (1.0 - pd) * (1.0 - (1.0 - 2.0 * pd) * decay);
    if q_x <= 0.0 {
        return Ok(GainQber {
            q_x: 0.0,
            e_b_x: 0.0,
            e_b_y: 0.0,
            degenerate: true,
        });
    }
    let correct = (1.0 - pd) * (1.0 - (1.0 - pd) * decay);
    let wrong = pd * (1.0 - pd) * decay;
    let rate = |ed: f64| ((ed * correct + (1.0 - ed) * wrong) / q_x).clamp(0.0, 1.0);
    Ok(GainQber {
        q_x,
        e_b_x: rate(ch.e_d_x),
        e_b_y: rate(ch.e_d_y),
        degenerate: false,
    })
}

/// Coin imbalance from the joint fidelity: `Δ = min(½, (1 − |F|²) / (2Q))`.
pub fn coin_imbalance(fidelity_sq: f64, q_total: f64) -> Result<f64> {
    check_range("fidelity_sq", fidelity_sq, 0.0, 1.0)?;
    check_range("q_total", q_total, 0.0, 1.0)?;
    if q_total == 0.0 {
        return Err(domain("q_total", q_total, "gain must be positive"));
    }
    Ok(((1.0 - fidelity_sq) / (2.0 * q_total)).min(0.5))
}

/// Outcome of the free-phase maximization route for `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinMaximization {
    pub delta: f64,
    /// Maximized `Re(e^{iθ′}⟨Ψ_Y,δ_Y|Ψ_X,δ_X⟩)·|⟨Ψ_Y|Ψ_X⟩|`.
    pub objective: f64,
    /// `(θ′, δ_X, δ_Y)` at the maximum.
    pub argmax: [f64; 3],
}

/// Overlaps needed to evaluate `⟨Ψ_Y,δ_Y|Ψ_X,δ_X⟩` for any pair of free phases.
#[derive(Debug, Clone, Copy)]
pub struct PhasedOverlap {
    terms: [ComplexAmp; 4],
    prefactor: f64,
}

impl PhasedOverlap {
    /// Builds the overlaps at the worst-case flaw realization of
    /// [`fidelity_flawed`].
    pub fn new(mu_prime: f64, flaws: &FlawParams) -> Result<Self> {
        let worst = fidelity_flawed(mu_prime, flaws)?;
        let alpha = CoherentAmplitude::from_intensity(worst.intensity_scale * mu_prime);
        let [d1, d2, d3] = worst.deviations;
        let i = ComplexAmp::i();
        let s0 = alpha;
        let s1 = -alpha.rotated(d1);
        let s2 = alpha.times(i * phase_factor(d2));
        let s3 = alpha.times(-i * phase_factor(d3));
        // ⟨1_Y|0_X⟩ = ⟨0_Y|1_X⟩ = (1+i)/2, ⟨1_Y|1_X⟩ = ⟨0_Y|0_X⟩ = (1−i)/2
        let p = ComplexAmp::new(0.5, 0.5);
        let m = ComplexAmp::new(0.5, -0.5);
        let prefactor = (1.0 - worst.epsilon) * (-flaws.mu_tha).exp() * flaws.theta.cos().powi(2);
        Ok(Self {
            terms: [
                0.5 * p * coherent_overlap(s2, s0),
                0.5 * m * coherent_overlap(s2, s1),
                0.5 * m * coherent_overlap(s3, s0),
                0.5 * p * coherent_overlap(s3, s1),
            ],
            prefactor,
        })
    }

    /// `⟨Ψ_Y,δ_Y|Ψ_X,δ_X⟩`, with `δ_V` the relative phase of the second branch.
    pub fn eval(&self, delta_x: f64, delta_y: f64) -> ComplexAmp {
        let [a, b, c, d] = self.terms;
        self.prefactor
            * (a + phase_factor(delta_x) * b + phase_factor(-delta_y) * c + phase_factor(delta_x - delta_y) * d)
    }
}

/// Coin imbalance from `1 − 2QΔ = max_{θ′,δ_X,δ_Y} Re(e^{iθ′}⟨Ψ_Y,δ_Y|Ψ_X,δ_X⟩)·|⟨Ψ_Y|Ψ_X⟩|`.
///
/// A 64³ grid over `[0, 2π)³` is refined by a compass search down to a
/// step of `1e−10`.
pub fn coin_imbalance_maximized(mu_prime: f64, flaws: &FlawParams, q_total: f64) -> Result<CoinMaximization> {
    check_range("q_total", q_total, 0.0, 1.0)?;
    if q_total == 0.0 {
        return Err(domain("q_total", q_total, "gain must be positive"));
    }
    let overlap = PhasedOverlap::new(mu_prime, flaws)?;
    let base = overlap.eval(0.0, 0.0).norm();
    let objective = |x: [f64; 3]| (phase_factor(x[0]) * overlap.eval(x[1], x[2])).re * base;

    const GRID: usize = 64;
    let step = TAU / GRID as f64;
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for a in 0..GRID {
        for b in 0..GRID {
            for c in 0..GRID {
                let x = [a as f64 * step, b as f64 * step, c as f64 * step];
                let v = objective(x);
                if v > best.0 {
                    best = (v, x);
                }
            }
        }
    }

    let (mut value, mut x) = best;
    let mut h = step;
    let mut iterations = 0usize;
    while h > 1e-10 {
        iterations += 1;
        if iterations > 100_000 {
            return Err(Error::NoConvergence(format!(
                "coin-imbalance refinement stalled at step {h:e}"
            )));
        }
        let mut improved = false;
        for k in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[k] += dir * h;
                let v = objective(y);
                if v > value {
                    value = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }

    let delta = ((1.0 - value) / (2.0 * q_total)).clamp(0.0, 0.5);
    Ok(CoinMaximization {
        delta,
        objective: value,
        argmax: x.map(|t| t.rem_euclid(TAU)),
    })
}

/// Tightest `E_p` allowed by `1 − 2Δ ≤ √(E_b^y E_p) + √((1−E_b^y)(1−E_p))`,
/// capped at ½.
pub fn phase_error_upper(e_b_y: f64, delta: f64) -> Result<f64> {
    check_range("e_b_y", e_b_y, 0.0, 0.5)?;
    check_range("delta", delta, 0.0, 0.5)?;
    let overlap = 1.0 - 2.0 * delta;
    if overlap <= 0.0 {
        return Ok(0.5);
    }
    let a = e_b_y.sqrt().asin();
    let c = overlap.acos();
    let angle = (a + c).min(FRAC_PI_2);
    Ok(angle.sin().powi(2).min(0.5))
}

/// Per-pulse key rate `Q^x [1 − f H(E_b^x) − H(E_p)]`, clamped at 0.
pub fn asymptotic_rate(q_x: f64, e_b_x: f64, e_p: f64, f: f64) -> Result<f64> {
    check_range("q_x", q_x, 0.0, 1.0)?;
    if !f.is_finite() || f < 1.0 {
        return Err(domain("f", f, "must be >= 1"));
    }
    let bracket = 1.0 - f * binary_entropy(e_b_x)? - binary_entropy(e_p)?;
    Ok((q_x * bracket).max(0.0))
}

/// Full asymptotic pipeline at one operating point.
pub fn asymptotic_key_rate(pp: &ProtocolParams, ch: &ChannelParams, flaws: &FlawParams) -> Result<KeyRateReport> {
    let g = gain_and_qber(ch, pp)?;
    let fidelity = fidelity_flawed(pp.mu_prime, flaws)?;
    if g.degenerate {
        return Ok(KeyRateReport {
            loss_db: ch.loss_db,
            mu_prime: pp.mu_prime,
            q_x: 0.0,
            e_b_x: 0.0,
            e_b_y: 0.0,
            fidelity_sq: fidelity.magnitude_sq,
            delta: 0.5,
            e_p: 0.5,
            rate_per_pulse: 0.0,
            secret_bits: None,
            bits_per_second: 0.0,
        });
    }
    // both bases share the same closed-form gain
    let delta = coin_imbalance(fidelity.magnitude_sq, g.q_x)?;
    let e_p = phase_error_upper(g.e_b_y.min(0.5), delta)?;
    let rate = asymptotic_rate(g.q_x, g.e_b_x, e_p, ch.f)?;
    Ok(KeyRateReport {
        loss_db: ch.loss_db,
        mu_prime: pp.mu_prime,
        q_x: g.q_x,
        e_b_x: g.e_b_x,
        e_b_y: g.e_b_y,
        fidelity_sq: fidelity.magnitude_sq,
        delta,
        e_p,
        rate_per_pulse: rate,
        secret_bits: None,
        bits_per_second: rate * pp.rep_rate_hz,
    })
}

/// Search range and tolerance for the intensity optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSearch {
    pub min: f64,
    pub max: f64,
    /// Final bracket width in `ln μ′`.
    pub tol: f64,
}

impl Default for MuSearch {
    fn default() -> Self {
        Self {
            min: 1e-7,
            max: 1.0,
            tol: 1e-6,
        }
    }
}

/// Maximizes the asymptotic rate over `μ′`: a log-spaced scan brackets the
/// peak, then golden-section search refines it.
pub fn optimize_mu_prime(
    pp: &ProtocolParams,
    ch: &ChannelParams,
    flaws: &FlawParams,
    search: MuSearch,
) -> Result<KeyRateReport> {
    if !(search.min > 0.0 && search.max > search.min && search.tol > 0.0) {
        return Err(Error::InvalidParams(format!("bad intensity search range {search:?}")));
    }
    let eval = |ln_mu: f64| asymptotic_key_rate(&pp.with_mu(ln_mu.exp()), ch, flaws);
    let (lo, hi) = (search.min.ln(), search.max.ln());
    const SCAN: usize = 141;
    let grid: Vec<f64> = (0..SCAN)
        .map(|k| lo + (hi - lo) * k as f64 / (SCAN - 1) as f64)
        .collect();
    let mut rates = Vec::with_capacity(SCAN);
    for &x in &grid {
        rates.push(eval(x)?.rate_per_pulse);
    }
    let (k_best, &r_best) = rates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty scan");
    if r_best <= 0.0 {
        return eval(grid[k_best]);
    }

    let mut a = grid[k_best.saturating_sub(1)];
    let mut b = grid[(k_best + 1).min(SCAN - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?.rate_per_pulse;
    let mut fd = eval(d)?.rate_per_pulse;
    while (b - a).abs() > search.tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?.rate_per_pulse;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?.rate_per_pulse;
        }
    }
    let refined = eval(0.5 * (a + b))?;
    if refined.rate_per_pulse >= r_best {
        Ok(refined)
    } else {
        eval(grid[k_best])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn channel(loss_db: f64, eta_d: f64, p_d: f64) -> ChannelParams {
        ChannelParams {
            loss_db,
            eta_d,
            p_d,
            ..ChannelParams::default()
        }
    }

    #[test]
    fn eta_examples() {
        assert_eq!(channel_eta(&channel(0.0, 1.0, 0.0)), 1.0);
        assert_relative_eq!(channel_eta(&channel(20.0, 1.0, 0.0)), 0.1, epsilon = 1e-15);
        assert_relative_eq!(channel_eta(&channel(10.0, 0.5, 0.0)), 0.158_113_883_008_418_97, epsilon = 1e-15);
    }

    #[test]
    fn gain_examples() {
        let pp = ProtocolParams::default();
        // η = 0 through a detector efficiency of zero
        let g = gain_and_qber(&channel(10.0, 0.0, 0.0), &pp).unwrap();
        assert_eq!(g.q_x, 0.0);
        assert!(g.degenerate);

        let ch = channel(7.0, 0.8, 0.0);
        let g = gain_and_qber(&ch, &pp).unwrap();
        assert_relative_eq!(g.q_x, 1.0 - (-2.0 * channel_eta(&ch) * pp.mu_prime).exp(), epsilon = 1e-15);

        // η = 0.1 at L = 20 dB
        let g = gain_and_qber(&channel(20.0, 1.0, 1e-8), &pp).unwrap();
        assert_relative_eq!(g.q_x, 2.756_214_618_993_467_3e-3, max_relative = 1e-12);
        assert_relative_eq!(g.e_b_x, 3.618_164_523_378_308_4e-6, max_relative = 1e-9);
    }

    #[test]
    fn gain_decreases_with_loss_and_qber_tends_to_misalignment() {
        let pp = ProtocolParams::default();
        let mut prev = f64::INFINITY;
        for k in 0..=60 {
            let g = gain_and_qber(&channel(k as f64, 1.0, 1e-8), &pp).unwrap();
            assert!(g.q_x < prev);
            prev = g.q_x;
        }
        let ch = ChannelParams {
            p_d: 0.0,
            e_d_x: 0.015,
            e_d_y: 0.02,
            ..channel(13.0, 0.7, 0.0)
        };
        let g = gain_and_qber(&ch, &pp).unwrap();
        assert_relative_eq!(g.e_b_x, 0.015, epsilon = 1e-15);
        assert_relative_eq!(g.e_b_y, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn coin_imbalance_examples() {
        assert_eq!(coin_imbalance(1.0, 0.37).unwrap(), 0.0);
        assert_relative_eq!(coin_imbalance(0.99963, 6.1e-3).unwrap(), 0.030_327_868_852_459_016, max_relative = 1e-10);
        assert_eq!(coin_imbalance(0.9, 0.01).unwrap(), 0.5);
        assert!(coin_imbalance(0.9, 0.0).is_err());
        assert!(coin_imbalance(1.1, 0.1).is_err());
    }

    #[test]
    fn phase_error_examples() {
        assert_eq!(phase_error_upper(0.0, 0.0).unwrap(), 0.0);
        for k in 0..=50 {
            let e = k as f64 / 100.0;
            assert_relative_eq!(phase_error_upper(e, 0.0).unwrap(), e, epsilon = 1e-12);
        }
        assert_relative_eq!(phase_error_upper(0.0036, 0.0303).unwrap(), 0.158_857_572_098_454_65, epsilon = 1e-12);
        assert_eq!(phase_error_upper(0.01, 0.5).unwrap(), 0.5);
        assert!(phase_error_upper(0.6, 0.1).is_err());
        assert!(phase_error_upper(0.1, -0.1).is_err());
    }

    #[test]
    fn phase_error_monotone_on_grid() {
        let n = 100;
        let grid = |k: usize| 0.5 * k as f64 / (n - 1) as f64;
        for i in 0..n {
            let mut prev = 0.0;
            for j in 0..n {
                let v = phase_error_upper(grid(i), grid(j)).unwrap();
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
        for j in 0..n {
            let mut prev = 0.0;
            for i in 0..n {
                let v = phase_error_upper(grid(i), grid(j)).unwrap();
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn phase_error_saturates_the_bound() {
        for &eb in &[0.0, 0.001, 0.0036, 0.02, 0.1, 0.3] {
            for &d in &[0.0, 0.001, 0.01, 0.03, 0.1] {
                let ep = phase_error_upper(eb, d).unwrap();
                if ep < 0.5 {
                    let rhs = (eb * ep).sqrt() + ((1.0 - eb) * (1.0 - ep)).sqrt();
                    assert!((rhs - (1.0 - 2.0 * d)).abs() < 1e-10, "eb={eb} d={d}");
                }
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(asymptotic_rate(0.01, 0.0, 0.0, 1.16).unwrap(), 0.01);
        assert_eq!(asymptotic_rate(0.01, 0.001, 0.5, 1.16).unwrap(), 0.0);
        assert!(asymptotic_rate(0.01, 0.01, 0.01, 1.16).unwrap() < 0.01);
    }

    #[test]
    fn maximized_route_in_vacuum_limit() {
        let m = coin_imbalance_maximized(1e-9, &FlawParams::none(), 0.01).unwrap();
        assert!(m.delta < 1e-6, "{m:?}");
    }

    #[test]
    fn maximized_objective_dominates_squared_fidelity() {
        let mu = 1.38e-2;
        let flaws = FlawParams::experimental();
        let ov = PhasedOverlap::new(mu, &flaws).unwrap();
        let z = ov.eval(0.0, 0.0);
        let aligned = (phase_factor(-z.arg()) * z).re * z.norm();
        assert!(aligned >= z.norm_sqr() - 1e-15);
        let m = coin_imbalance_maximized(mu, &flaws, 6.1e-3).unwrap();
        assert!(m.objective >= aligned - 1e-12);
    }

    #[test]
    fn maximized_route_agrees_with_fidelity_route_without_flaws() {
        let mu = 1.38e-2;
        let q = 6.1e-3;
        let f = fidelity_flawed(mu, &FlawParams::none()).unwrap();
        let d_fid = coin_imbalance(f.magnitude_sq, q).unwrap();
        let d_max = coin_imbalance_maximized(mu, &FlawParams::none(), q).unwrap().delta;
        assert!(((d_max - d_fid) / d_fid).abs() < 0.10, "{d_max} vs {d_fid}");
    }

    #[test]
    fn optimized_rate_survives_45_db() {
        let ch = ChannelParams::default().at_loss(45.0);
        let r = optimize_mu_prime(&ProtocolParams::default(), &ch, &FlawParams::none(), MuSearch::default()).unwrap();
        assert!(r.rate_per_pulse > 0.0, "{r:?}");
    }

    #[test]
    fn validation_errors() {
        let pp = ProtocolParams {
            p_x: 0.8,
            ..ProtocolParams::default()
        };
        assert!(gain_and_qber(&ChannelParams::default(), &pp).is_err());
        let ch = ChannelParams {
            f: 0.9,
            ..ChannelParams::default()
        };
        assert!(gain_and_qber(&ch, &ProtocolParams::default()).is_err());
    }
}
