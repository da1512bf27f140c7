use std::path::{Path, PathBuf};

use zeno_toa::io::run_command;

const TINY: &str = "
[scenario]
name = tiny

[particle]
mass_u = 22.98977

[packet.a]
x_focus = -50 um
delta_x = 5 um
velocity = 0.365 cm/s

[grid]
x_min = -200 um
x_max = 100 um
n_points = 1024
absorbing_layer = 30 um

[schedule]
model = projection
delta_t = 2 ms
t_end = 0.12 s
";

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.ini");
    std::fs::write(&path, text).unwrap();
    path
}

fn invoke(cmd: &str, scenario: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut argv = vec![
        "zeno-toa".to_string(),
        cmd.to_string(),
        "--scenario".to_string(),
        scenario.display().to_string(),
        "--out".to_string(),
        out.display().to_string(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    run_command(argv)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match std::fs::read_dir(dir) {
        Ok(entries) => entries.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn validate_accepts_a_good_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TINY);
    assert_eq!(invoke("validate", &sc, &dir.path().join("out"), &[]), 0);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), &TINY.replace("n_points = 1024", "n_points = 1024\nnpoints = 2"));
    assert_eq!(invoke("validate", &sc, &dir.path().join("out"), &[]), 4);
    assert_eq!(invoke("run", &write_scenario(dir.path(), TINY), &dir.path().join("out"), &["--override", "grid.bogus=1"]), 4);
}

#[test]
fn bad_arguments_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TINY);
    assert_eq!(invoke("run", &sc, &dir.path().join("out"), &["--model", "teleport"]), 4);
    assert_eq!(run_command(["zeno-toa", "frobnicate"]), 4);
}

#[test]
fn missing_scenario_is_a_bad_argument() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke("run", &dir.path().join("absent.ini"), &dir.path().join("out"), &[]), 4);
}

#[test]
fn run_writes_record_distribution_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TINY);
    let out = dir.path().join("out");
    assert_eq!(invoke("run", &sc, &out, &[]), 0);
    assert_eq!(listing(&out), ["dist_operational.csv", "manifest.json", "record.csv"]);
    let record = std::fs::read_to_string(out.join("record.csv")).unwrap();
    assert!(record.starts_with("schema=1\n"));
    assert!(record.lines().any(|l| l == "t_bin_end,removed,survival"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn ideal_writes_three_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TINY);
    let out = dir.path().join("out");
    assert_eq!(invoke("ideal", &sc, &out, &[]), 0);
    let names = listing(&out);
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 3, "{names:?}");
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let no_layer = TINY.replace("absorbing_layer = 30 um\n", "");
    let sc = write_scenario(dir.path(), &no_layer);
    let out = dir.path().join("out");
    let code = invoke("run", &sc, &out, &["--override", "schedule.t_end=0.45 s"]);
    assert_eq!(code, 3);
    assert!(listing(&out).is_empty(), "{:?}", listing(&out));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(invoke("run", &sc, &a, &[]), 0);
    assert_eq!(invoke("run", &sc, &b, &[]), 0);
    for name in ["record.csv", "dist_operational.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}
