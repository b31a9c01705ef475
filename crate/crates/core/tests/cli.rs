use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qrelax(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrelax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QRELAX_SEED")
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn spectrum_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = qrelax(&["spectrum", "--N", "16"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = rows(&dir.path().join("spectrum.csv"));
    assert_eq!(r.len(), 16);
    assert_eq!(r[4][2].parse::<f64>().unwrap(), 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["config"]["truncation"], 16);
}

#[test]
fn bad_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        qrelax(&["spectrum", "--alpha", "0.5"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        qrelax(&["no-such-command"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        qrelax(&["ensemble", "--sigma", "-1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"alpha": 2.0, "N": 8}"#).unwrap();
    let out = qrelax(
        &["spectrum", "--config", cfg.to_str().unwrap(), "--N", "12"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = rows(&dir.path().join("spectrum.csv"));
    assert_eq!(r.len(), 12);
    // alpha = 2 puts half the weight on m = 2
    assert!((r[1][2].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);

    fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(
        qrelax(&["spectrum", "--config", cfg.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn ensemble_output_is_thread_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["ensemble", "--M", "300", "--N", "20", "--seed", "11"];
    let ra = qrelax(&[&args[..], &["--threads", "1"]].concat(), a.path());
    let rb = qrelax(&[&args[..], &["--threads", "4"]].concat(), b.path());
    assert!(ra.status.success() && rb.status.success());
    for f in ["mean_h.csv", "mean_v.csv", "frequencies.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(rows(&a.path().join("mean_h.csv")).len(), 65);
}

#[test]
fn trajectory_and_relaxation_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = qrelax(
        &["trajectory", "--N", "20", "--steps", "200", "--posterior"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rdr = csv::Reader::from_path(dir.path().join("trajectory.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "t");
    assert_eq!(header.len(), 6 + 20);
    assert_eq!(rdr.records().count(), 201);

    let out = qrelax(
        &["relax-time", "--N", "20", "--M", "50", "--steps", "400"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = rows(&dir.path().join("relax_time.csv"));
    assert!(!r.is_empty());
    assert_eq!(&r[0][0], "1");
}

#[test]
fn quick_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = qrelax(&["validate", "--quick"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}
