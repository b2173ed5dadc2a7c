//! End-to-end pipeline checks: the CLI binary, sweep outputs, and the
//! statistical behavior of the summary across seed counts.

use std::path::Path;
use std::process::Command;

use millisim::config::Config;
use millisim::metrics::{mean_ci, parse_run_csv};
use millisim::sim::run_single;
use millisim::Qci;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_millisim"))
}

#[test]
fn cli_run_writes_csv_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "--policy",
            "millislice",
            "--seed",
            "5",
            "--duration",
            "0.2",
            "-O",
            "n_embb_ues=1",
            "-O",
            "n_urllc_ues=1",
            "--trace",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("run_millislice_s5.csv");
    let trace = dir.path().join("trace_millislice_s5.log");
    assert!(run.exists());
    assert!(trace.exists());

    let parsed = parse_run_csv(&std::fs::read_to_string(&run).unwrap()).unwrap();
    assert_eq!(parsed.meta["policy"], "millislice");
    assert_eq!(parsed.meta["seed"], "5");
    assert!(parsed.meta.contains_key("config_hash"));
}

#[test]
fn cli_rejects_bad_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "cc_ratio=1.5\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cc_ratio"));

    let out = bin()
        .args(["run", "-O", "not_a_key=3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_sweep_produces_per_run_files_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep",
            "--seeds",
            "1..3",
            "--sweep",
            "policy=no_ca,millislice",
            "-O",
            "duration_s=0.2",
            "-O",
            "n_embb_ues=1",
            "-O",
            "n_urllc_ues=1",
            "-O",
            "embb_rate_mbps=10",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let runs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            e.file_name()
                .to_string_lossy()
                .starts_with("run_")
        })
        .collect();
    assert_eq!(runs.len(), 6, "2 policies x 3 seeds");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("point,section,name,metric,mean,ci95,n"));
    for line in summary.lines().filter(|l| l.contains(",qci,")) {
        assert!(line.ends_with(",3"), "expected n=3 in {line}");
    }
}

#[test]
fn rerun_of_stored_files_reproduces_summary() {
    use millisim::sweep::{run_sweep, summarize_runs};
    let dir = tempfile::tempdir().unwrap();
    let mut base = Config::default();
    base.duration_s = 0.2;
    base.n_embb_ues = 1;
    base.n_urllc_ues = 1;
    base.embb_rate_mbps = 10.0;
    let outcome = run_sweep(&base, &[], &[1, 2, 3], dir.path()).unwrap();
    assert!(outcome.failures.is_empty());
    let first = summarize_runs(&outcome.completed, &[]).unwrap();
    // Re-summarizing the stored files, without re-simulating.
    let second = summarize_runs(&outcome.completed, &[]).unwrap();
    assert_eq!(first, second);
}

#[test]
fn eta_weighting_sums_below_one() {
    let mut cfg = Config::default();
    cfg.duration_s = 1.0;
    cfg.n_embb_ues = 2;
    cfg.n_urllc_ues = 2;
    let stats = run_single(&cfg, None);
    let total: f64 = stats.ccs.iter().map(|cc| stats.eta(cc)).sum();
    assert!(total >= 0.0 && total <= 1.0, "total eta {total}");
    for cc in &stats.ccs {
        let eta = stats.eta(cc);
        assert!(eta >= 0.0 && eta <= cc.bandwidth_share + 1e-12);
    }
}

#[test]
fn confidence_interval_shrinks_with_seed_count() {
    // CI half-widths over 4 vs 16 seeds: the ratio should track
    // sqrt(16/4) = 2 within a factor of two.
    let delay_for = |seed: u64| {
        let mut cfg = Config::default();
        cfg.duration_s = 1.0;
        cfg.n_embb_ues = 2;
        cfg.n_urllc_ues = 2;
        cfg.embb_rate_mbps = 40.0;
        cfg.seed = seed;
        run_single(&cfg, None).mean_delay_ms(Qci::URLLC)
    };
    let all: Vec<f64> = (1..=16).map(delay_for).collect();
    let (_, ci4) = mean_ci(&all[..4]);
    let (_, ci16) = mean_ci(&all);
    let ratio = ci4 / ci16;
    assert!(
        ratio > 1.0 && ratio < 8.0,
        "ci4 {ci4:.4}, ci16 {ci16:.4}, ratio {ratio:.2} outside the 2x band around 2"
    );
}

#[test]
fn config_file_round_trips_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("scenario.cfg");
    std::fs::write(
        &cfg_path,
        "policy=primary_only\nseed=9\nduration_s=0.2\nn_embb_ues=1\nn_urllc_ues=1\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--stdout", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = parse_run_csv(&text).unwrap();
    assert_eq!(parsed.meta["policy"], "primary_only");
    assert_eq!(parsed.meta["seed"], "9");
}

#[test]
fn atomic_run_files_have_no_leftover_temps(){
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep",
            "--seeds",
            "1,2",
            "-O",
            "duration_s=0.2",
            "-O",
            "n_embb_ues=1",
            "-O",
            "n_urllc_ues=1",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(!has_tmp(dir.path()));
}

fn has_tmp(dir: &Path) -> bool {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
}
