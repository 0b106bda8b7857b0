use std::path::{Path, PathBuf};
use std::process::Command;

use fpmdi_cli::commands::{cmd_finite, cmd_simulate, cmd_sweep};
use fpmdi_cli::config::RunConfig;
use fpmdi_cli::io::{fixture_path, parse_counts, ExperimentFixture};
use fpmdi_core::montecarlo::Detector;
use fpmdi_core::security::gain_and_qber;
use fpmdi_core::Phase;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpmdi"))
}

fn paper_config() -> RunConfig {
    RunConfig::load(&data_dir().join("paper.toml")).unwrap()
}

#[test]
fn fixtures_round_trip_byte_for_byte() {
    for loss in [10, 16, 20, 30, 35] {
        let path = fixture_path(&data_dir(), loss);
        let text = std::fs::read_to_string(&path).unwrap();
        let rec = parse_counts(&path).unwrap();
        assert_eq!(rec.to_json(), text, "loss{loss}");
    }
    let f = ExperimentFixture::load(&data_dir(), 20).unwrap();
    assert_eq!(f.record.click(Detector::D2, Phase::Zero, Phase::Pi), 973_757);
    assert_eq!(f.protocol.mu_prime, 3.3e-3);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, "[protocol]\nn_pulses = 200000\nmu_prime = 0.05\n[channel]\nloss_db = 10.0\n").unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("counts{k}.json"));
        let status = bin()
            .args(["--config", cfg_path.to_str().unwrap(), "simulate", "--seed", "42", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[channel]\nlos_db = 1\n").unwrap();
    let out = bin().args(["--config", bad_cfg.to_str().unwrap(), "keyrate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let out = bin().args(["finite", "--counts", empty.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty document"));

    let out = bin()
        .args(["--config", data_dir().join("paper.toml").to_str().unwrap(), "keyrate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["params_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn calibrate_all_feeds_finite() {
    let dir = tempfile::tempdir().unwrap();
    let flaws = dir.path().join("flaws.toml");
    let out = bin()
        .args(["--config", data_dir().join("paper.toml").to_str().unwrap(), "calibrate", "all", "--out"])
        .arg(&flaws)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        format!("[paths]\nflaws = \"{}\"\n", flaws.file_name().unwrap().to_str().unwrap()),
    )
    .unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert!((cfg.flaw.delta - 0.062).abs() < 0.005);
    assert!((cfg.flaw.xi - 0.0111).abs() < 1e-4);
    let rec = parse_counts(&fixture_path(&data_dir(), 10)).unwrap();
    let r = cmd_finite(&cfg, &rec, false).unwrap();
    assert!(r.flawed.unwrap().rate_per_pulse > 0.0);
}

#[test]
fn simulated_counts_give_a_key() {
    let mut cfg = paper_config();
    cfg.protocol.n_pulses = 100_000_000;
    let (record, summary) = cmd_simulate(&cfg, Some(7), false).unwrap();
    // worst-case-fixed sampling emits every pulse at μ′(1+ξ)
    let pp = cfg.protocol.with_mu(cfg.protocol.mu_prime * (1.0 + cfg.flaw.xi));
    let q = gain_and_qber(&cfg.channel, &pp).unwrap().q_x;
    let sigma = (q * (1.0 - q) / (0.81 * 1e8)).sqrt();
    assert!((summary.q_x - q).abs() < 5.0 * sigma, "{} vs {q}", summary.q_x);
    let r = cmd_finite(&cfg, &record, false).unwrap();
    assert!(r.flawed.unwrap().secret_bits > 0);
}

#[test]
fn high_loss_with_flaws_has_no_key() {
    let mut cfg = paper_config();
    cfg.sweep.loss_min_db = 60.0;
    cfg.sweep.loss_max_db = 60.0;
    let out = cmd_sweep(&cfg, false).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].rate_per_pulse, 0.0);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "[sweep]\nloss_min_db = 0.0\nloss_max_db = 10.0\nloss_step_db = 5.0\noptimize_mu = false\nepsilon_values = [0.0, 1e-6]\n",
    )
    .unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = bin()
        .args(["--config", cfg_path.to_str().unwrap(), "sweep", "--csv"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,loss_db,mu_prime,q_x,e_b_x,e_p,rate_per_pulse,bps");
    assert_eq!(lines.count(), 6);
}
