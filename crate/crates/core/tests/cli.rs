use std::path::Path;
use std::process::Command;

fn isac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).output().expect("binary runs")
}

fn summary_value(dir: &Path, key: &str) -> f64 {
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("{key} missing from\n{text}"));
    line.rsplit(" = ").next().unwrap().parse().unwrap()
}

#[test]
fn imaging_writes_pgm_and_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = isac(&["imaging", "--map", "corridor", "--seed", "3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = std::fs::read(dir.path().join("angle_range.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    let cloud = std::fs::read_to_string(dir.path().join("point_cloud.csv")).unwrap();
    assert!(cloud.starts_with("az_deg,range_m,power_db\n") && cloud.lines().count() > 1);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = isac(&["netsense", "--seed", "11", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 5);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn more_modalities_lower_slam_error() {
    let imu = tempfile::tempdir().unwrap();
    let all = tempfile::tempdir().unwrap();
    for (d, m) in [(&imu, "imu"), (&all, "radio,imu,vision")] {
        let o = isac(&["slam", "--modalities", m, "--seed", "5", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let e_imu = summary_value(imu.path(), "mean_localization_error_m");
    let e_all = summary_value(all.path(), "mean_localization_error_m");
    assert!(e_all < e_imu, "{e_all} vs {e_imu}");
}

#[test]
fn beamtrack_flags_override_defaults() {
    let d = tempfile::tempdir().unwrap();
    let o = isac(&[
        "beamtrack", "--mode", "sensing_aided", "--m-beams", "8", "--speed", "2", "--duration", "10", "--seed", "1", "--out",
        d.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary_value(d.path(), "seed 1 scan_period_ms"), 160.0);
    let csv = std::fs::read_to_string(d.path().join("timeline_sensing_aided.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 500);
}

#[test]
fn bad_config_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.json");
    std::fs::write(&p, r#"{"version": 1, "seeds": [1], "experiment": {"slam": {"modalities": "imu", "filter": {"q_pos": 0.1, "q_hedding": 1}}}}"#).unwrap();
    let o = isac(&["validate-config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("experiment.slam.filter.q_hedding"), "{err}");

    let good = d.path().join("good.json");
    std::fs::write(&good, r#"{"version": 1, "seeds": [1, 2], "experiment": {"netsense": {}}}"#).unwrap();
    let o = isac(&["validate-config", good.to_str().unwrap()]);
    assert!(o.status.success());
    let o = isac(&["slam", "--config", good.to_str().unwrap(), "--out", d.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_vectors_writes_iq() {
    let d = tempfile::tempdir().unwrap();
    let o = isac(&["dump-vectors", "--out", d.path().to_str().unwrap()]);
    assert!(o.status.success());
    let iq = std::fs::read(d.path().join("rach_preamble0.iq")).unwrap();
    assert_eq!(iq.len(), 2192 * 16);
    let samples = isac_core::scenario::iq_from_le_bytes(&iq).unwrap();
    let bank = isac_core::waveform::PreambleBank::new(1).unwrap();
    assert_eq!(samples, isac_core::waveform::build_rach_signal(&bank.preambles[0]));
}

#[test]
fn quick_criteria_pass_from_the_cli() {
    let d = tempfile::tempdir().unwrap();
    let o = isac(&["accept", "--out", d.path().to_str().unwrap(), "1", "2", "4"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
