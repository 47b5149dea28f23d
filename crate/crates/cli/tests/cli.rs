//! Command-line behaviour: exit codes per failure class, event logging, and
//! the report renderer.

use std::io::Write;
use std::process::Command;

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fiberq"));
    cmd.env_remove("FIBERQ_CONFIG");
    cmd
}

#[test]
fn missing_environment_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(
        &config,
        "[polarization]\nwind_file = \"does-not-exist.csv\"\n",
    )
    .unwrap();
    let output = binary()
        .arg("characterize-polarization")
        .args(["--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.starts_with("error(config):"), "stderr: {stderr}");
    assert_eq!(stderr.lines().count(), 1, "one-line diagnostic expected");
}

#[test]
fn unknown_scenario_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(&config, "[phase]\nno_such_knob = 1\n").unwrap();
    let output = binary()
        .arg("characterize-phase")
        .args(["--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn event_log_flag_writes_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let output = binary()
        .args(["run-protocol", "--event-log", "--seed", "5", "--duration", "25", "--out"])
        .arg(dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let log = std::fs::read_to_string(dir.path().join("run-protocol/events.tsv")).unwrap();
    let mut kinds: Vec<&str> = log
        .lines()
        .filter_map(|l| l.split('\t').nth(1))
        .collect();
    kinds.sort_unstable();
    kinds.dedup();
    assert!(kinds.contains(&"word"), "kinds: {kinds:?}");
    assert!(kinds.contains(&"lock"));
    assert!(kinds.contains(&"data"));
    for line in log.lines() {
        assert_eq!(line.split('\t').count(), 3, "timestamp, kind, outcome: {line}");
    }
}

#[test]
fn ideal_channel_protocol_reports_zero_ber() {
    // Zero phase noise via a custom spans file plus unit visibility: every
    // detected bit is correct.
    let dir = tempfile::tempdir().unwrap();
    let spans = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/spans.toml"),
    )
    .unwrap()
    .replace("variance_per_meter_hz2 = 133.0", "variance_per_meter_hz2 = 0.0");
    let spans_path = dir.path().join("quiet_spans.toml");
    std::fs::write(&spans_path, spans).unwrap();
    let config = dir.path().join("scenario.toml");
    std::fs::write(
        &config,
        format!(
            "[scenario]\nspans_file = {spans_path:?}\n\n[protocol]\nvisibility = 1.0\nwind_mph = 0.0\n"
        ),
    )
    .unwrap();
    let output = binary()
        .args(["run-protocol", "--seed", "4", "--duration", "35", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let report =
        std::fs::read_to_string(dir.path().join("out/run-protocol/report.txt")).unwrap();
    let session_line = report
        .lines()
        .find(|l| l.starts_with("session"))
        .expect("session record");
    assert!(session_line.contains(" ber_mean=0e0 "), "{session_line}");
    assert!(!session_line.contains(" n_detected=0 "), "no detections at all");
}

#[test]
fn report_subcommand_renders_tables() {
    let dir = tempfile::tempdir().unwrap();
    let record_file = dir.path().join("report.txt");
    let mut f = std::fs::File::create(&record_file).unwrap();
    writeln!(
        f,
        "gaussian_fit name=differential variance=1.72e6 variance_std_error=1.4e3 mean=0e0 n=3000000"
    )
    .unwrap();
    drop(f);
    let output = binary().arg("report").arg(&record_file).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("== gaussian_fit"), "{stdout}");
    assert!(stdout.contains("differential"));
}

#[test]
fn report_subcommand_requires_files() {
    let output = binary().arg("report").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
