//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use fpmdi_cli::commands::{cmd_calibrate, cmd_finite, CalibrateTarget};
use fpmdi_cli::config::RunConfig;
use fpmdi_cli::io::{fixture_path, parse_counts, read_pattern};
use fpmdi_core::calibration::{pattern_deviation, xi_from_db};
use fpmdi_core::finitekey::{finite_key_report, CountsSummary, SecurityEpsilons};
use fpmdi_core::montecarlo::{simulate_run, FlawSampling, RngSpec};
use fpmdi_core::security::{
    asymptotic_rate, coin_imbalance, gain_and_qber, optimize_mu_prime, phase_error_upper, MuSearch,
};
use fpmdi_core::{
    binary_entropy, coherent_overlap, fidelity_flawed, ChannelParams, CoherentAmplitude, FlawParams, Phase,
    ProtocolParams,
};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn paper_config() -> RunConfig {
    RunConfig::load(&data_dir().join("paper.toml")).expect("bundled config loads")
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target).abs() / target
}

struct FiniteRow {
    r_flawed: f64,
    e_p_flawed: f64,
    r_star: f64,
    e_p_star: f64,
}

fn finite_rows() -> Vec<(u32, FiniteRow)> {
    let cfg = paper_config();
    [10, 16, 20, 30, 35]
        .into_iter()
        .map(|loss| {
            let rec = parse_counts(&fixture_path(&data_dir(), loss)).expect("fixture");
            let out = cmd_finite(&cfg, &rec, false).expect("finite analysis");
            let flawed = out.flawed.expect("flawed report");
            (
                loss,
                FiniteRow {
                    r_flawed: flawed.rate_per_pulse,
                    e_p_flawed: flawed.estimate.e_p_bar,
                    r_star: out.no_flaws.rate_per_pulse,
                    e_p_star: out.no_flaws.estimate.e_p_bar,
                },
            )
        })
        .collect()
}

fn criterion_1(rows: &[(u32, FiniteRow)]) -> Outcome {
    let targets = [(10, 9.10e-4, 0.05), (16, 9.39e-5, 0.10), (20, 2.53e-6, 0.15)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (loss, target, tol) in targets {
        let r = rows.iter().find(|(l, _)| *l == loss).unwrap().1.r_flawed;
        let e = rel(r, target);
        pass &= e <= tol;
        parts.push(format!("{loss} dB R={r:.3e} ({:+.1}%, tol {:.0}%)", 100.0 * (r - target) / target, 100.0 * tol));
    }
    for loss in [30, 35] {
        let row = &rows.iter().find(|(l, _)| *l == loss).unwrap().1;
        pass &= row.r_flawed == 0.0 && row.e_p_flawed == 0.5;
        parts.push(format!("{loss} dB R={} Ē_p={}", row.r_flawed, row.e_p_flawed));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_2(rows: &[(u32, FiniteRow)]) -> Outcome {
    let targets = [1.41e-3, 3.00e-4, 1.02e-4, 4.40e-6, 2.92e-7];
    let mut pass = true;
    let mut parts = Vec::new();
    for ((loss, row), target) in rows.iter().zip(targets) {
        pass &= rel(row.r_star, target) <= 0.10;
        parts.push(format!("{loss} dB R*={:.3e} ({:+.1}%)", row.r_star, 100.0 * (row.r_star - target) / target));
    }
    Outcome::new(pass, parts.join("; "))
}

fn criterion_3(rows: &[(u32, FiniteRow)]) -> Outcome {
    let targets = [(10, 0.184, 0.237), (16, 0.194, 0.308), (20, 0.190, 0.393)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (loss, star, flawed) in targets {
        let row = &rows.iter().find(|(l, _)| *l == loss).unwrap().1;
        let d_star = 100.0 * (row.e_p_star - star);
        let d_flawed = 100.0 * (row.e_p_flawed - flawed);
        pass &= d_star.abs() <= 0.5 && d_flawed.abs() <= 0.5;
        parts.push(format!(
            "{loss} dB Ē_p*={:.2}% ({d_star:+.2} pp) Ē_p={:.2}% ({d_flawed:+.2} pp)",
            100.0 * row.e_p_star,
            100.0 * row.e_p_flawed
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn sig3(x: f64) -> String {
    format!("{x:.2e}")
}

fn criterion_4() -> Outcome {
    // [curr][pred], as tabulated
    let published = [
        [1.54e-3, 7.52e-4, 8.76e-4, 1.66e-3],
        [5.61e-4, 6.96e-3, 8.08e-4, 6.72e-3],
        [2.93e-3, 9.83e-4, 2.95e-3, 9.66e-4],
        [6.37e-3, 3.58e-3, 1.42e-3, 8.54e-3],
    ];
    let mut counts = read_pattern(&data_dir().join("table_s2.csv")).expect("pattern table");
    let matches = |counts: &fpmdi_core::calibration::PatternCounts| {
        let d = pattern_deviation(counts).expect("pattern deviation");
        let mut n = 0;
        for curr in 0..4 {
            for pred in 0..4 {
                n += usize::from(sig3(d.deviations[pred][curr]) == sig3(published[curr][pred]));
            }
        }
        n
    };
    let printed = matches(&counts);
    let cell = &mut counts.0[Phase::Pi.index()][Phase::HalfPi.index()];
    assert_eq!(*cell, 206_554);
    *cell = 206_584;
    let corrected = matches(&counts);

    let cfg = paper_config();
    let report = cmd_calibrate(&cfg, CalibrateTarget::Phase, None).expect("phase calibration");
    let bounds = report.phase.expect("phase report").bounds;
    let expected = [(Phase::HalfPi, 0.012), (Phase::Pi, 0.062), (Phase::ThreeHalfPi, 0.010)];
    let mut delta_ok = true;
    let mut delta_parts = Vec::new();
    for (phase, target) in expected {
        let b = bounds.iter().find(|b| b.phase == phase).expect("bound").bound;
        delta_ok &= (b - target).abs() <= 0.005;
        delta_parts.push(format!("{phase}:{b:.4}"));
    }

    let xi = xi_from_db(0.048).expect("xi");
    let xi_ok = sig3(xi) == sig3(0.0111);

    Outcome::new(
        corrected == 16 && delta_ok && xi_ok,
        format!(
            "pattern {corrected}/16 at 3 s.f. with π→π/2 read as 206584 ({printed}/16 with the printed 206554); δ̄ {}; ξ(0.048 dB)={:.3}%",
            delta_parts.join(" "),
            100.0 * xi
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let loss = 40.0 * k as f64 / 19.0;
        let mu = 10f64.powf(-3.0 + 2.0 * ((7 * k) % 20) as f64 / 19.0);
        let ch = ChannelParams {
            e_d_x: if k % 2 == 0 { 0.0 } else { 0.02 },
            e_d_y: 0.01,
            ..ChannelParams::default().at_loss(loss)
        };
        let pp = ProtocolParams {
            n_pulses: 1_000_000,
            ..ProtocolParams::default().with_mu(mu)
        };
        let model = gain_and_qber(&ch, &pp).expect("closed form");
        let rec = simulate_run(&pp, &ch, &FlawParams::none(), FlawSampling::WorstCaseFixed, RngSpec::new(1000 + k))
            .expect("simulation");
        let emitted = rec.emitted.expect("emission tallies");
        let x_pairs: u64 = [(0, 0), (0, 2), (2, 0), (2, 2)].iter().map(|&(a, b)| emitted[a][b]).sum();
        let s = fpmdi_core::montecarlo::sift_and_summarize(&rec);

        let n = x_pairs as f64;
        let sigma_q = (n * model.q_x * (1.0 - model.q_x)).sqrt();
        let z_q = (s.n_x as f64 - n * model.q_x).abs() / sigma_q;
        let nx = s.n_x as f64;
        let sigma_e = (nx * model.e_b_x * (1.0 - model.e_b_x)).sqrt();
        let dev_e = (s.m_x as f64 - nx * model.e_b_x).abs();
        // with a sub-unit expected error count the 5σ window still admits zero errors
        let ok_e = dev_e <= 5.0 * sigma_e;
        pass &= z_q <= 5.0 && ok_e;
        worst = worst.max(z_q);
        if sigma_e > 0.0 {
            worst = worst.max(dev_e / sigma_e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    Outcome::new(pass, format!("20 points, worst deviation {worst:.2}σ, {secs:.1} s"))
}

fn optimized_rate(loss: f64, flaws: &FlawParams) -> f64 {
    optimize_mu_prime(
        &ProtocolParams::default(),
        &ChannelParams::default().at_loss(loss),
        flaws,
        MuSearch::default(),
    )
    .expect("optimization")
    .rate_per_pulse
}

fn strictly_decreasing_while_positive(rates: &[f64]) -> bool {
    rates.windows(2).all(|w| if w[0] > 0.0 { w[1] < w[0] } else { w[1] == 0.0 })
}

fn criterion_6() -> Outcome {
    let ideal = FlawParams::none();
    let eps5 = FlawParams::correlation_only(1e-5);
    let r45 = optimized_rate(45.0, &ideal);
    let r30 = optimized_rate(30.0, &eps5);

    let losses: Vec<f64> = (0..=50).map(f64::from).collect();
    let loss_ok = [&ideal, &eps5, &FlawParams::experimental()].iter().all(|f| {
        let rates: Vec<f64> = losses.iter().map(|&l| optimized_rate(l, f)).collect();
        strictly_decreasing_while_positive(&rates)
    });

    let epsilons = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
    let eps_ok = [0.0, 10.0, 20.0, 30.0].iter().all(|&l| {
        let rates: Vec<f64> = epsilons
            .iter()
            .map(|&e| optimized_rate(l, &FlawParams::correlation_only(e)))
            .collect();
        strictly_decreasing_while_positive(&rates)
    });

    Outcome::new(
        r45 > 0.0 && r30 > 0.0 && loss_ok && eps_ok,
        format!(
            "zero flaws R(45 dB)={r45:.3e}; ε=1e-5 R(30 dB)={r30:.3e}; monotone in loss: {loss_ok}; monotone in ε: {eps_ok}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();

    let mut eq_err: f64 = 0.0;
    for i in 0..=50 {
        for j in 0..=50 {
            let e = 0.5 * i as f64 / 50.0;
            let d = 0.5 * j as f64 / 50.0;
            let ep = phase_error_upper(e, d).unwrap();
            if ep < 0.5 {
                let rhs = (e * ep).sqrt() + ((1.0 - e) * (1.0 - ep)).sqrt();
                eq_err = eq_err.max((1.0 - 2.0 * d - rhs).abs());
            }
        }
    }
    if eq_err > 1e-10 {
        failures.push(format!("phase-error equality off by {eq_err:.1e}"));
    }

    let entropy_ok = (0..=1000).all(|k| {
        let x = k as f64 / 1000.0;
        (binary_entropy(x).unwrap() - binary_entropy(1.0 - x).unwrap()).abs() < 1e-15
    });
    if !entropy_ok {
        failures.push("entropy symmetry".into());
    }

    let amps: Vec<CoherentAmplitude> = (0..12)
        .map(|k| CoherentAmplitude::new(0.37 * k as f64 - 2.0, 1.3 - 0.29 * k as f64))
        .collect();
    let overlap_ok = amps.iter().all(|&a| {
        amps.iter().all(|&b| {
            let ab = coherent_overlap(a, b);
            let ba = coherent_overlap(b, a);
            (ab - ba.conj()).norm() < 1e-15 && ab.norm() <= 1.0 + 1e-15
        })
    });
    if !overlap_ok {
        failures.push("overlap conjugate symmetry".into());
    }

    let mut fid_ok = true;
    for mu in [1e-4, 1e-3, 1e-2, 0.1, 1.0] {
        for xi in [0.0, 0.01, 0.2] {
            for delta in [0.0, 0.06, 0.5] {
                let flaws = FlawParams {
                    xi,
                    delta,
                    ..FlawParams::experimental()
                };
                let f = fidelity_flawed(mu, &flaws).unwrap();
                fid_ok &= f.value.norm() <= 1.0 + 1e-12;
            }
        }
    }
    if !fid_ok {
        failures.push("fidelity magnitude".into());
    }

    let eps = SecurityEpsilons::default();
    let pp = ProtocolParams::default();
    let mut bracket_ok = true;
    for n_x in [100_000u64, 1_000_000, 50_000_000] {
        for (mx, my) in [(0.0, 0.0), (0.001, 0.01), (0.01, 0.05)] {
            let n_y = n_x / 80;
            let counts = CountsSummary {
                n_x,
                m_x: (mx * n_x as f64) as u64,
                n_y,
                m_y: (my * n_y as f64) as u64,
            };
            let r = finite_key_report(&counts, &pp, 1.16, &FlawParams::experimental(), &eps).unwrap();
            let delta = coin_imbalance(r.fidelity_sq, r.q_total).unwrap();
            let e_p = phase_error_upper(counts.e_b_y(), delta).unwrap();
            let q = counts.n_x as f64 / (pp.n_pulses as f64 * pp.p_x * pp.p_x);
            let asym = asymptotic_rate(q, counts.e_b_x(), e_p, 1.16).unwrap() * pp.p_x * pp.p_x;
            bracket_ok &= r.estimate.e_p_bar >= e_p && r.rate_per_pulse <= asym;
        }
    }
    if !bracket_ok {
        failures.push("finite-key above asymptotic".into());
    }

    let ch = ChannelParams::default().at_loss(5.0);
    let small = ProtocolParams {
        n_pulses: 50_000,
        ..ProtocolParams::default().with_mu(0.05)
    };
    let run = |seed| {
        simulate_run(&small, &ch, &FlawParams::experimental(), FlawSampling::Stochastic, RngSpec::new(seed)).unwrap()
    };
    let a = run(3);
    let json = a.to_json();
    let (back, warnings) = fpmdi_core::montecarlo::CountsRecord::from_json(&json).unwrap();
    if a != run(3) || back != a || back.to_json() != json || !warnings.is_empty() {
        failures.push("determinism/round-trip".into());
    }

    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("phase-error equality max {eq_err:.1e}; entropy, overlap, fidelity, bracket, determinism and round-trip hold")
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let rows = finite_rows();
    let outcomes = [
        criterion_1(&rows),
        criterion_2(&rows),
        criterion_3(&rows),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
    ];
    let mut all = true;
    for (k, o) in outcomes.iter().enumerate() {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
