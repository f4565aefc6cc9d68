use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use asa_cli::{execute, RunManifest};
use asa_core::gridio::{read_grid, write_grid};
use asa_core::Grid;
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["asa"];
    full.extend_from_slice(args);
    execute(full)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Line-array source plane: a Gaussian beam of 1 cm width on 128 samples.
fn write_source(path: &Path) {
    let n = 128;
    let dx = 2e-4;
    let x0 = -(n as f64) / 2.0 * dx;
    let vals = (0..n)
        .map(|i| {
            let x = x0 + i as f64 * dx;
            asa_core::Complex64::new((-(x * x) / (2.0 * 25e-6)).exp(), 0.0)
        })
        .collect();
    write_grid(&Grid::complex(vec![n], vec![dx], vec![x0], vals).unwrap(), path).unwrap();
}

#[test]
fn propagate_modes_agree_in_uniform_medium_with_1800_stations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = d.join("src.asag");
    write_source(&src);
    let med = d.join("med");
    assert_eq!(run(&["phantom", "--kind", "uniform", "--dims", "451,128", "--out", s(&med)]), 0);
    let medium = med.join("medium.asag");

    let mut fields = vec![];
    for mode in ["homogeneous", "heterogeneous"] {
        let out = d.join(mode);
        let code = run(&[
            "propagate", "--input", s(&src), "--frequency", "1e6", "--mode", mode, "--medium", s(&medium), "--dz",
            "50e-6", "--zmax", "90e-3", "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        assert_eq!(manifest(&out).results["stations"], 1800);
        fields.push(read_grid(out.join("field.asag")).unwrap().to_complex128());
    }
    let scale = fields[0].iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = fields[0].iter().zip(&fields[1]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff <= 1e-10 * scale, "diff {diff}");
}

#[test]
fn missing_input_exits_1_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_asa"))
        .args(["propagate", "--input", "/nonexistent/plane.asag", "--frequency", "1e6", "--out"])
        .arg(dir.path())
        .env("ASA_NO_COLOR", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/nonexistent/plane.asag"), "{err}");
    assert!(!err.contains('\x1b'));
    assert!(manifest(dir.path()).error.is_some());
}

#[test]
fn heterogeneous_without_medium_is_usage_error_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.asag");
    write_source(&src);
    let code = run(&[
        "propagate", "--input", s(&src), "--frequency", "1e6", "--mode", "heterogeneous", "--out", s(dir.path()),
    ]);
    assert_eq!(code, 2);
    let m = manifest(dir.path());
    assert_eq!(m.command, "propagate");
    assert!(m.error.unwrap().contains("--medium"));
}

#[test]
fn clap_errors_exit_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_asa")).args(["focus", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn geometric_on_axis_center_delay_is_40_us() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "focus", "--method", "geometric", "--depth", "60e-3", "--frequency", "1e6", "--c0", "1500", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code, 0);
    let plan = json(&dir.path().join("plan.json"));
    let elements = plan["elements"].as_array().unwrap();
    let center = elements
        .iter()
        .min_by(|a, b| a["x"].as_f64().unwrap().abs().total_cmp(&b["x"].as_f64().unwrap().abs()))
        .unwrap();
    assert!((center["raw_delay_s"].as_f64().unwrap() - 40e-6).abs() < 1e-12);
    let m = manifest(dir.path());
    assert_eq!(m.parameters["fwhm"].as_f64(), Some(1.5e-3));
}

#[test]
fn corrected_matches_geometric_in_uniform_medium() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let med = d.join("med");
    assert_eq!(run(&["phantom", "--dims", "351,400", "--out", s(&med)]), 0);
    let medium = med.join("medium.asag");
    let f = 1e6;
    let mut delays = vec![];
    for method in ["corrected", "geometric"] {
        let out = d.join(method);
        let code = run(&[
            "focus", "--method", method, "--medium", s(&medium), "--depth", "60e-3", "--frequency", "1e6",
            "--aperture", "50e-3", "--dz", "2e-4", "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        let plan = json(&out.join("plan.json"));
        delays.push(
            plan["elements"]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| e["delay_s"].as_f64().unwrap())
                .collect::<Vec<_>>(),
        );
    }
    let omega = 2.0 * PI * f;
    let worst = delays[0].iter().zip(&delays[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst * omega <= 0.05, "phase mismatch {}", worst * omega);
}

#[test]
fn focus_outside_medium_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let med = dir.path().join("med");
    assert_eq!(run(&["phantom", "--dims", "101,100", "--out", s(&med)]), 0);
    let code = run(&[
        "focus", "--medium", s(&med.join("medium.asag")), "--depth", "50e-3", "--frequency", "1e6", "--out",
        s(&dir.path().join("f")),
    ]);
    assert_eq!(code, 1);
}

fn pam_case(dir: &Path, kind: &[&str], aperture: &str) -> std::path::PathBuf {
    let med = dir.join("med");
    let mut args = vec!["phantom", "--dims", "451,640", "--rf-source", "0,40e-3", "--aperture", aperture, "--out", s(&med)];
    args.extend_from_slice(kind);
    assert_eq!(run(&args), 0);
    med
}

#[test]
fn pam_fans_out_over_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let med = pam_case(dir.path(), &["--kind", "uniform"], "50e-3");
    let out = dir.path().join("pam");
    let code = run(&[
        "pam", "--input", s(&med.join("rf.asag")), "--frequencies", "0.75e6,1e6", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    for i in 0..2 {
        assert!(out.join(format!("pam_{i}.asag")).exists());
        let peaks = json(&out.join(format!("peaks_{i}.json")));
        assert_eq!(peaks["peaks"].as_array().unwrap().len(), 1);
    }
    assert!(!out.join("pam_2.asag").exists());
    assert_eq!(manifest(&out).results.as_array().unwrap().len(), 2);
}

#[test]
fn pam_uniform_corrected_equals_uncorrected() {
    let dir = tempfile::tempdir().unwrap();
    let med = pam_case(dir.path(), &["--kind", "uniform"], "50e-3");
    let mut peaks = vec![];
    for (name, extra) in [("c", true), ("u", false)] {
        let out = dir.path().join(name);
        let (rf, medium) = (med.join("rf.asag"), med.join("medium.asag"));
        let mut args = vec!["pam", "--input", s(&rf), "--frequencies", "1e6", "--medium", s(&medium)];
        if extra {
            args.push("--corrected");
        }
        args.extend_from_slice(&["--out", s(&out)]);
        assert_eq!(run(&args), 0);
        peaks.push(json(&out.join("peaks_0.json"))["peaks"].clone());
    }
    assert_eq!(peaks[0], peaks[1]);
}

#[test]
fn pam_layered_round_trip_corrected_error_is_smaller() {
    let dir = tempfile::tempdir().unwrap();
    let med = pam_case(
        dir.path(),
        &["--kind", "layered", "--contrast", "0.05", "--z-start", "5e-3", "--thickness", "10e-3"],
        "100e-3",
    );
    let (rf, medium) = (med.join("rf.asag"), med.join("medium.asag"));
    let mut errors = vec![];
    for corrected in [true, false] {
        let out = dir.path().join(if corrected { "c" } else { "u" });
        let mut args = vec![
            "pam", "--input", s(&rf), "--frequencies", "1e6", "--truth", "0,40e-3", "--medium",
            s(&medium), "--out", s(&out),
        ];
        if corrected {
            args.push("--corrected");
        }
        assert_eq!(run(&args), 0);
        errors.push(manifest(&out).results[0]["error_m"].as_f64().unwrap());
    }
    assert!(errors[0] < errors[1], "corrected {} uncorrected {}", errors[0], errors[1]);
}

#[test]
fn pam_corrected_without_medium_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "pam", "--input", "rf.asag", "--frequencies", "1e6", "--corrected", "--out", s(dir.path()),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn bench_single_rep_and_empty_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["bench", "--sizes", "10e-3", "--reps", "1", "--zmax", "20e-3", "--out", s(dir.path())]);
    assert_eq!(code, 0);
    let m = manifest(dir.path());
    let rows = m.results["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["reps"] == 1 && r["stddev_s"] == 0.0));
    assert_eq!(m.results["ratios"].as_array().unwrap().len(), 1);

    let code = run(&["bench", "--out", s(&dir.path().join("empty"))]);
    assert_eq!(code, 2);
}

#[test]
fn identical_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = vec![];
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let code = run(&[
            "phantom", "--kind", "random-slabs", "--seed", "11", "--dims", "201,256", "--rf-source", "2e-3,30e-3",
            "--aperture", "30e-3", "--zmax", "40e-3", "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        outs.push(out);
    }
    for file in ["medium.asag", "rf.asag", "phantom.json"] {
        assert_eq!(
            std::fs::read(outs[0].join(file)).unwrap(),
            std::fs::read(outs[1].join(file)).unwrap(),
            "{file}"
        );
    }
    let (mut a, mut b) = (manifest(&outs[0]), manifest(&outs[1]));
    a.timings.clear();
    b.timings.clear();
    a.outputs.clear();
    b.outputs.clear();
    assert_eq!(a, b);
}

#[test]
fn explicit_manifest_path_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom").join("run.json");
    let code = run(&[
        "phantom", "--dims", "11,8", "--threads", "1", "--manifest", s(&path), "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(code, 0);
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(m.command, "phantom");
    assert_eq!(run(&["phantom", "--threads", "0", "--out", s(&dir.path().join("z"))]), 2);
}
