use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use gfd::cloud::generate_cloud;
use gfd::harness::{compute_report, run_experiment, ExperimentConfig};
use gfd::scheme;
use gfd::solver::{SolveMethod, DEFAULT_TOL};
use gfd::stencil;
use gfd::{Manifold, OperatorSpec, PointCloud};

fn gfd(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gfd")).args(args).env("GFD_OUT", out).output().unwrap()
}

fn assert_lf_csv(text: &str, header: &str) {
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().next(), Some(header));
    assert!(text.ends_with('\n'));
}

#[test]
fn naive_effective_truncation_oracle() {
    // Dense numpy solve of the 16-node wide system with u(x₀) = 0.
    let c = generate_cloud(Manifold::circle(), 16, 0).unwrap();
    let spec = OperatorSpec::laplacian(Arc::new(|_| -1.0 / 16.0), 1.0).unwrap();
    let st = stencil::closed_form_wide_1d(16).unwrap();
    let w = scheme::circle_reproduction_weights(&c);
    let naive = scheme::assemble_naive_onepoint(&st, &spec, &c, &w).unwrap();
    let proper = scheme::assemble_proper(&st, &spec, &c, &w).unwrap();
    let u = scheme::solve_system(&naive, SolveMethod::DirectDense, DEFAULT_TOL).unwrap();
    let tau = scheme::truncation_report(&proper, &u).residual[0];
    assert!((tau - -0.24818709134809122).abs() <= 1e-12, "{tau}");
}

#[test]
fn report_files_match_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::builtin("torus1d-twostep").unwrap();
    cfg.name = "small".into();
    cfg.resolutions = vec![16, 64, 256];
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("small/report.csv")).unwrap();
    assert_lf_csv(&csv, gfd::harness::run::CSV_HEADER);
    assert_eq!(csv.lines().count(), 4);
    let json = std::fs::read_to_string(dir.path().join("small/report.json")).unwrap();
    let back: gfd::harness::ExperimentReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(compute_report(&cfg).unwrap(), report);
}

#[test]
fn cloud_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate_cloud(Manifold::sphere(), 300, 7).unwrap();
    let (csv, json) = (dir.path().join("c.csv"), dir.path().join("c.json"));
    c.write(&csv, &json).unwrap();
    let back = PointCloud::read(&csv, &json).unwrap();
    assert_eq!(back.points, c.points);
    assert_eq!(back.x0_index, c.x0_index);
    assert_eq!(back.fill_distance, c.fill_distance);
}

#[test]
fn cli_repro_writes_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = gfd(&["repro", "fig2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("fig_2.csv")).unwrap();
    assert_lf_csv(&text, "h,value");
    assert_eq!(text.lines().count(), 6);
    assert!(dir.path().join("torus1d-w/report.json").exists());
}

#[test]
fn cli_run_and_synth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"name":"cli","manifold":"circle1","resolutions":[16,64,256],"scheme":"naive","exact":"circle-zero"}"#,
    )
    .unwrap();
    let out = gfd(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cli/report.csv").exists());

    let dump = dir.path().join("st.csv");
    let out = gfd(&["synth", "--manifold", "sphere2", "--n", "200", "--dump", dump.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(!text.contains('\r'));
    assert!(dump.with_extension("json").exists());
}

#[test]
fn cli_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = gfd(&["repro", "fig9"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig9"));
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"name":"b","manifold":"circle1","resolutions":[64,16],"scheme":"naive","exact":"circle-zero"}"#,
    )
    .unwrap();
    let out = gfd(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
}
