use std::fs;
use std::path::Path;
use std::process::Command;

fn lab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ilfo-lab"));
    c.env_remove("ILFO_LAB_JOBS");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p
}

const SMALL_TABULAR: &str = r#"{"mobile": {"iterations": 15, "expert_trajectories": 50, "minmax": {"iterations": 50}}}"#;

#[test]
fn tabular_run_is_byte_identical_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TABULAR);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let st = lab()
            .args(["mobile-tabular", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .args(["--seeds", "4,5,6", "--jobs", jobs])
            .status()
            .unwrap();
        assert!(st.success());
    }
    // config.json differs only by the recorded output directory.
    for name in ["run_theory_seed4.csv", "run_theory_seed5.csv", "run_theory_seed6.csv", "summary.csv"] {
        let (x, y) = (fs::read_to_string(a.join(name)).unwrap(), fs::read_to_string(b.join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn ablation_emits_two_labelled_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"ablate_bonus": true, "mobile": {"iterations": 10, "expert_trajectories": 20, "minmax": {"iterations": 30}}}"#,
    );
    let out = tmp.path().join("o");
    let st = lab().arg("mobile-tabular").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    assert!(out.join("run_theory_seed0.csv").exists());
    assert!(out.join("run_off_seed0.csv").exists());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    // The bonus-off curve never reports a bonus.
    let off = fs::read_to_string(out.join("run_off_seed0.csv")).unwrap();
    assert!(off.lines().skip(1).all(|l| l.split(',').nth(5) == Some("0.0000000000000000e0")));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"lambda": 0.1}"#);
    let out = lab().arg("mobile-tabular").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda_ridge") && err.contains("lambda_bonus"), "{err}");

    let cfg = write_config(tmp.path(), r#"{"subcommand": "mab-lb"}"#);
    let st = lab().arg("verify-suite").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn jobs_environment_variable_overrides_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TABULAR);
    let st = lab()
        .arg("mobile-tabular")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .args(["--jobs", "2"])
        .env("ILFO_LAB_JOBS", "zero")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = lab()
        .arg("mobile-tabular")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .args(["--jobs", "0"])
        .env("ILFO_LAB_JOBS", "2")
        .status()
        .unwrap();
    assert!(st.success());
}

#[test]
fn io_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let st = lab().arg("mab-lb").arg("--config").arg(tmp.path().join("missing.json")).status().unwrap();
    assert_eq!(st.code(), Some(3));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(tmp.path(), SMALL_TABULAR);
    let st = lab()
        .arg("mobile-tabular")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("sub"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn verify_suite_passes_and_writes_one_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"verify": {"simulation_trials": 20, "gaussian_trials": 5, "optimism_trials": 20,
                       "calibration_draws": 100, "concentration_trials": 50,
                       "tabular_iterations": 20, "knr_iterations": 5},
            "mobile": {"minmax": {"iterations": 50}}}"#,
    );
    let out = tmp.path().join("v");
    let st = lab().arg("verify-suite").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let reports: Vec<&str> = ["verify_report.json"].into_iter().filter(|f| out.join(f).exists()).collect();
    assert_eq!(reports.len(), 1);
    let text = fs::read_to_string(out.join("verify_report.json")).unwrap();
    assert!(text.contains("\"simulation_lemma\"") && text.contains("\"elliptical_potential\""));
}

#[test]
fn bandit_run_writes_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"bandit": {"arms": 4, "horizon": 400, "csv_stride": 50}}"#);
    let out = tmp.path().join("m");
    let st = lab()
        .arg("mab-lb")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "1,2"])
        .status()
        .unwrap();
    assert!(st.success());
    let curves = fs::read_to_string(out.join("regret_curves.csv")).unwrap();
    assert!(curves.starts_with("t,mean_regret,stderr,algorithm,instance_id\n"));
    // 3 algorithms × 5 instances × 8 strided rows.
    assert_eq!(curves.lines().count(), 1 + 3 * 5 * 8);
    assert!(out.join("bandit_seed2.csv").exists());
}
