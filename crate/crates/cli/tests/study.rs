use std::path::{Path, PathBuf};
use std::process::Command;

use twosettle::{BaseProfile, Framework};
use twosettle_cli::{run_study, write_outputs, Manifest, SamplerSpec, StudySpec};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn spec(case: &str, json: &str) -> StudySpec {
    let mut spec: StudySpec = serde_json::from_str(json).unwrap();
    spec.system = data(case).join("system.json");
    spec.scenarios = data(case).join("scenarios.csv");
    spec
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twosettle"))
}

#[test]
fn stochastic_dispatch_never_loses_to_mean_bidding() {
    let spec = spec(
        "five_bus",
        r#"{"frameworks": ["myd", "std"], "sweeps": {"lines": ["1L", "2L"], "flexibility": ["lFlx", "mFlx", "hFlx"]}}"#,
    );
    let out = run_study(&spec).unwrap();
    assert_eq!(out.failed_points(), 0);
    assert_eq!(out.summaries.len(), 6);
    for s in &out.summaries {
        assert_eq!(s.reports.len(), 2);
        let (myd, std) = (&s.reports[0], &s.reports[1]);
        assert_eq!((myd.framework, std.framework), (Framework::Myd, Framework::Std));
        assert!(std.total <= myd.total + 1e-6 * myd.total.abs(), "{}", s.label);
    }
}

#[test]
fn gamma_sweep_gives_one_bid_row_per_value() {
    let spec = spec(
        "five_bus",
        r#"{"frameworks": ["bid"], "sweeps": {"gamma": [0.2, 0.6, 1.0, 1.4]}}"#,
    );
    let out = run_study(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let costs = std::fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    let rows = rows(&costs);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[1] == "BiD"));
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        labels,
        ["base-1L-mFlx-g0.2-x1", "base-1L-mFlx-g0.6-x1", "base-1L-mFlx-g1-x1", "base-1L-mFlx-g1.4-x1"]
    );
}

#[test]
fn failed_points_are_recorded_and_the_sweep_goes_on() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = spec("five_bus", r#"{"frameworks": ["myd", "bid"], "sweeps": {"xi": [0.5, 1.0]}}"#);
    spec.output_dir = dir.path().join("out");
    let path = dir.path().join("study.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();

    let status = bin().args(["run", "--config"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(spec.output_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.points.len(), 2);
    assert!(!manifest.points[0].ok);
    assert_eq!(manifest.points[0].errors[0].framework, Framework::Bid);
    assert!(manifest.points[1].ok);
    assert!(manifest.version.contains(env!("CARGO_PKG_VERSION")));
    let costs = std::fs::read_to_string(spec.output_dir.join("costs.csv")).unwrap();
    let rows = rows(&costs);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[0] == "base-1L-mFlx-g1-x1"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sys = data("two_bus").join("system.json");
    let sc = data("two_bus").join("scenarios.csv");

    let ok = bin()
        .args(["run", "--framework", "myd", "--framework", "std", "--system"])
        .arg(&sys)
        .arg("--scenarios")
        .arg(&sc)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    for f in ["costs.csv", "prices_dam.csv", "prices_rt.csv", "revenues.csv", "uc_quality.csv", "run_summary.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }

    let missing = bin().args(["run", "--system", "no/such/file.json", "--scenarios"]).arg(&sc).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no/such/file.json"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"frameworks": []}"#).unwrap();
    let empty = bin().args(["run", "--config"]).arg(&bad).arg("--system").arg(&sys).arg("--scenarios").arg(&sc).output().unwrap();
    assert_eq!(empty.status.code(), Some(2));

    let valid = bin().args(["validate", "--system"]).arg(&sys).arg("--scenarios").arg(&sc).output().unwrap();
    assert_eq!(valid.status.code(), Some(0));
    let invalid = bin().args(["validate", "--system"]).arg(&sc).output().unwrap();
    assert_eq!(invalid.status.code(), Some(2));

    let oracle = bin().args(["oracle", "--system"]).arg(&sys).arg("--scenarios").arg(&sc).output().unwrap();
    assert_eq!(oracle.status.code(), Some(0));
    let text = String::from_utf8_lossy(&oracle.stdout);
    assert!(text.contains("Oracle total         425.00"), "{text}");
    assert!(text.contains("BiD    total         425.00"), "{text}");
}

#[test]
fn short_windows_roll_through_the_horizon() {
    let mut spec = spec("five_bus", r#"{"frameworks": ["myd", "std"]}"#);
    spec.config.horizon_window = 2;
    let out = run_study(&spec).unwrap();
    assert_eq!(out.failed_points(), 0);
    let labels: Vec<&str> = out.records.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["base-1L-mFlx-g1-x1-w1", "base-1L-mFlx-g1-x1-w2"]);
    for (f, report) in out.summaries[0].reports.iter().enumerate() {
        let windows: f64 = out.records.iter().map(|r| r.runs[f].report.total).sum();
        assert!((windows - report.total).abs() <= 1e-6 * report.total.abs());
    }

    spec.config.horizon_window = 3;
    let out = run_study(&spec).unwrap();
    assert_eq!(out.failed_points(), 1);
    assert!(out.manifest.points[0].setup_error.as_deref().unwrap().contains("does not divide"));
}

#[test]
fn sampler_runs_without_a_scenario_file() {
    let (_, set) = twosettle::fixtures::five_bus();
    let mut spec = spec("five_bus", r#"{"frameworks": ["myd"], "sweeps": {"scenario_counts": [2, 4]}, "seed": 3}"#);
    spec.scenarios = PathBuf::new();
    spec.sampler = Some(SamplerSpec {
        base: Some(BaseProfile::from_expectation(&set)),
        ..SamplerSpec::default()
    });
    let out = run_study(&spec).unwrap();
    let sizes: Vec<usize> = out.records.iter().map(|r| r.scenarios.len()).collect();
    assert_eq!(sizes, [2, 4]);
    assert_eq!(out.records[0].label, "base-1L-mFlx-n2-g1-x1");

    spec.sampler = None;
    assert!(run_study(&spec).is_err());
}

#[test]
fn penetration_scaling_reaches_the_target() {
    let spec = spec("five_bus", r#"{"frameworks": ["myd"], "sweeps": {"vres": ["base", "40R"]}}"#);
    let out = run_study(&spec).unwrap();
    let scaled = &out.records[1].scenarios;
    assert_eq!(out.records[1].label, "40R-1L-mFlx-g1-x1");
    let share = scaled.expected_vres_energy() / scaled.expected_demand_energy();
    assert!((share - 0.4).abs() < 1e-9, "{share}");
}
