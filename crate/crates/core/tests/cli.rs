use std::path::Path;
use std::process::{Command, Output};

use polydesign::pipeline::{read_json, PipelineResult, ProblemFile, RecoveryRecord, SolveRecord};

fn polydesign(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydesign"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn interval_pipeline_is_certified_and_matches_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = polydesign(&["pipeline", "--preset", "interval", "--check"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let res: PipelineResult = read_json(&dir.path().join("result.json")).unwrap();
    let design = res.recovery.design.as_ref().unwrap();
    assert_eq!(design.points.len(), 6);
    assert!(res.certificate.as_ref().unwrap().passed);
    assert!(res.golden.as_ref().unwrap().passed);
    assert!(res.moment_error.unwrap() <= 1e-5);
}

#[test]
fn wynn_pipeline_finds_four_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let out = polydesign(&["pipeline", "--preset", "wynn_polygon"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: RecoveryRecord = read_json(&dir.path().join("design.json")).unwrap();
    assert_eq!(rec.design.unwrap().points.len(), 4);
}

#[test]
fn stages_reproduce_the_pipeline() {
    let whole = tempfile::tempdir().unwrap();
    let staged = tempfile::tempdir().unwrap();
    assert_eq!(
        polydesign(&["pipeline", "--preset", "interval"], whole.path())
            .status
            .code(),
        Some(0)
    );
    for stage in ["solve", "recover", "certify"] {
        let out = polydesign(&[stage, "--preset", "interval"], staged.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a: SolveRecord = read_json(&whole.path().join("solve.json")).unwrap();
    let b: SolveRecord = read_json(&staged.path().join("solve.json")).unwrap();
    assert!(a.y_star.max_abs_diff(&b.y_star).unwrap() <= 1e-10);
    let a: RecoveryRecord = read_json(&whole.path().join("design.json")).unwrap();
    let b: RecoveryRecord = read_json(&staged.path().join("design.json")).unwrap();
    assert_eq!(a, b);
    assert!(staged.path().join("certificate.json").exists());
}

#[test]
fn rerunning_the_emitted_problem_reproduces_results() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    polydesign(&["pipeline", "--preset", "interval"], first.path());
    let res: PipelineResult = read_json(&first.path().join("result.json")).unwrap();
    let problem_path = first.path().join("problem.json");
    std::fs::write(&problem_path, serde_json::to_string_pretty(&res.problem).unwrap()).unwrap();
    let out = polydesign(
        &["pipeline", "--problem", problem_path.to_str().unwrap()],
        second.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let again: PipelineResult = read_json(&second.path().join("result.json")).unwrap();
    assert!(res.solve.y_star.max_abs_diff(&again.solve.y_star).unwrap() <= 1e-10);
    let (d1, d2) = (res.recovery.design.unwrap(), again.recovery.design.unwrap());
    for (p, q) in d1.points.iter().flatten().zip(d2.points.iter().flatten()) {
        assert!((p - q).abs() <= 1e-10);
    }
}

#[test]
fn emitted_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    polydesign(&["pipeline", "--preset", "interval"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
    let res: PipelineResult = serde_json::from_str(&text).unwrap();
    let again: PipelineResult = serde_json::from_str(&serde_json::to_string_pretty(&res).unwrap()).unwrap();
    assert_eq!(res, again);
}

#[test]
fn malformed_polynomial_exits_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("bad.json");
    std::fs::write(
        &problem,
        r#"{"schema_version": 1,
            "design_space": {"inline": {"n": 2, "inequalities": [[{"exponents": [1], "coeff": 1.0}]]}},
            "regression": {"d": 1}, "criterion": "D"}"#,
    )
    .unwrap();
    let out = polydesign(&["pipeline", "--problem", problem.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["location"].as_str().unwrap().contains("inequalities[0]"));
}

#[test]
fn syntax_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("bad.json");
    std::fs::write(&problem, "{\"schema_version\": 1,\n \"design_space\": }").unwrap();
    let out = polydesign(&["solve", "--problem", problem.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["location"].as_str().unwrap().contains("line 2"));
}

#[test]
fn levelset_writes_plot_grid() {
    let dir = tempfile::tempdir().unwrap();
    polydesign(&["solve", "--preset", "wynn_polygon"], dir.path());
    let out = polydesign(
        &["levelset", "--preset", "wynn_polygon", "--resolution", "41"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("levelset.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,pstar,inside"));
    assert_eq!(lines.count(), 41 * 41);
}

#[test]
fn dump_sdp_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = polydesign(&["solve", "--preset", "interval", "--dump-sdp"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let sdp: serde_json::Value = read_json(&dir.path().join("sdp.json")).unwrap();
    assert_eq!(sdp["num_moments"], 11);
    assert!(dir.path().join("sdp.dat-s").exists());
}

#[test]
fn preset_problem_is_a_valid_problem_file() {
    for name in polydesign::semialg::PRESET_NAMES {
        let f = ProblemFile::preset(name, None).unwrap();
        assert!(f.resolve().is_ok(), "{name}");
    }
}
