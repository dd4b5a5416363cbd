//! End-to-end tests of the `nadmm` binary and the file formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nadmm_cli::io::{load_problem, read_trace_csv, trace_header};
use nadmm_core::admm::SolveReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nadmm"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.code() == Some(0),
        "expected exit 0, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn solve_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.csv");
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .arg("solve")
            .arg("--problem")
            .arg(fixture("consensus_qp.json"))
            .args(["--rho", "10"])
            .arg("--trace")
            .arg(&trace_path)
            .arg("--report")
            .arg(&report_path),
    );

    // report JSON re-parses to the identical in-memory value
    let text = std::fs::read_to_string(&report_path).unwrap();
    let report: SolveReport = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string(&report).unwrap();
    let report2: SolveReport = serde_json::from_str(&again).unwrap();
    assert_eq!(report, report2);
    assert_eq!(report.schema_version, 1);

    // trace schema: header + one row per iteration
    let prob = load_problem(&fixture("consensus_qp.json")).unwrap();
    let content = std::fs::read_to_string(&trace_path).unwrap();
    let lines: Vec<&str> = content.lines().collect();
    assert_eq!(lines.len(), report.iterations + 1);
    assert_eq!(lines[0], trace_header(&prob).join(","));

    // the trace reads back exactly (shortest-round-trip float formatting)
    let trace = read_trace_csv(&trace_path, &prob).unwrap();
    assert_eq!(trace.len(), report.iterations);
    let last = trace.iterates.last().unwrap();
    assert_eq!(last.x.as_slice(), report.x.as_slice());
    assert_eq!(last.lambda.as_slice(), report.lambda.as_slice());
    assert_eq!(last.norm_q, report.norm_q);
}

#[test]
fn exit_codes_follow_outcomes() {
    // 2: iteration limit
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .args(["--rho", "10", "--max-iter", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 1: usage error
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .args(["--rho", "-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // 3: solver failure (zero seed sits where the constraint gradient
    // vanishes, so the first subproblem solve cannot factor its KKT system)
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(fixture("nonconvex_constraint.json"))
        .args(["--rho", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // 1: missing analyze inputs
    let out = bin()
        .arg("analyze")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // 1: trace analysis without --rho
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("t.csv");
    run_ok(
        bin()
            .arg("solve")
            .arg("--problem")
            .arg(fixture("consensus_qp.json"))
            .args(["--rho", "10"])
            .arg("--trace")
            .arg(&trace_path),
    );
    let out = bin()
        .arg("analyze")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .arg("--trace")
        .arg(&trace_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_reports_no_reference_as_exit_4() {
    // infeasible constraint x^2 + 1 = 0: the multistart oracle finds nothing
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("infeasible.json");
    std::fs::write(
        &path,
        r#"{
          "variables": ["x"],
          "y_variables": ["y"],
          "objective": {"pow": [{"var": "x"}, 2]},
          "constraints": [{"add": [{"pow": [{"var": "x"}, 2]}, {"const": 1}]}],
          "A": [[1]],
          "B": [[-1]],
          "b": [0]
        }"#,
    )
    .unwrap();
    let out = bin()
        .arg("analyze")
        .arg("--problem")
        .arg(&path)
        .args(["--multistart", "8", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn validate_reports_rank_deficient_b() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad_b.json");
    std::fs::write(
        &path,
        r#"{
          "variables": ["x"],
          "y_variables": ["y1", "y2"],
          "objective": {"pow": [{"var": "x"}, 2]},
          "A": [[1], [1]],
          "B": [[1, 1], [1, 1]],
          "b": [0, 0]
        }"#,
    )
    .unwrap();
    let out = bin()
        .arg("validate")
        .arg("--problem")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("validate emits JSON");
    assert_eq!(report["b_full_column_rank"], serde_json::json!(false));
    assert_eq!(report["b_rank"], serde_json::json!(1));

    // and solve refuses such a file up front
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(&path)
        .args(["--rho", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_accepts_all_fixtures() {
    for name in [
        "consensus_qp.json",
        "nonconvex_constraint.json",
        "two_block_nonconvex.json",
        "shared_budget.json",
        "inequality_box.json",
    ] {
        let out = bin()
            .arg("validate")
            .arg("--problem")
            .arg(fixture(name))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "fixture {name}");
    }
}

#[test]
fn shared_budget_fixture_solves_to_hand_solution() {
    // min (x1-1)^2 + (x2-1)^2 s.t. x1 + x2 = 3 has the symmetric solution
    // x = (1.5, 1.5) with equal multipliers -1 on every coupling row
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .arg("solve")
            .arg("--problem")
            .arg(fixture("shared_budget.json"))
            .args(["--rho", "10"])
            .arg("--report")
            .arg(&report_path),
    );
    let report: SolveReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    for xi in &report.x {
        assert!((xi - 1.5).abs() < 1e-6, "x component {xi}");
    }
    for yi in &report.y {
        assert!((yi - 1.5).abs() < 1e-6, "y component {yi}");
    }
    for li in &report.lambda {
        assert!((li + 1.0).abs() < 1e-6, "lambda component {li}");
    }
}

#[test]
fn parallel_blocks_flag_leaves_traces_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for flag in [false, true] {
        let path = dir.path().join(format!("trace_{flag}.csv"));
        let mut cmd = bin();
        cmd.arg("solve")
            .arg("--problem")
            .arg(fixture("two_block_nonconvex.json"))
            .args(["--rho", "10", "--x0", "0.9,0.9,0.9", "--y0", "0.9"])
            .arg("--trace")
            .arg(&path);
        if flag {
            cmd.arg("--parallel-blocks");
        }
        run_ok(&mut cmd);
        traces.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn shared_budget_fixture_canonicalizes_to_displayed_layout() {
    let prob = load_problem(&fixture("shared_budget.json")).unwrap();
    assert_eq!((prob.n(), prob.m(), prob.q()), (2, 2, 3));
    let a = nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let b_mat = nalgebra::DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
    assert_eq!(prob.a, a);
    assert_eq!(prob.b_mat, b_mat);
    assert_eq!(prob.b_vec, nalgebra::DVector::from_vec(vec![0.0, 0.0, 3.0]));
}

#[test]
fn consensus_fixture_has_expected_shape() {
    let prob = load_problem(&fixture("consensus_qp.json")).unwrap();
    assert_eq!((prob.n(), prob.m(), prob.q()), (2, 1, 2));
}

#[test]
fn x0_in_pre_slack_dimension_is_expanded() {
    // --x0 with one entry on a problem that gains a slack variable: the
    // slack is seeded from the inequality value at the warm start
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("report.json");
    run_ok(
        bin()
            .arg("solve")
            .arg("--problem")
            .arg(fixture("inequality_box.json"))
            .args(["--rho", "10", "--x0", "0.5"])
            .arg("--report")
            .arg(&report_path),
    );
    let report: SolveReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.x.len(), 2);
    assert!((report.x[0] - 1.0).abs() < 1e-6); // constrained minimum at x = 1
    assert!(report.x[1].abs() < 1e-6); // binding inequality: slack 0

    // wrong length is still rejected
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(fixture("inequality_box.json"))
        .args(["--rho", "10", "--x0", "0.5,0.5,0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn parse_error_carries_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"variables\": [\n").unwrap();
    let out = bin()
        .arg("solve")
        .arg("--problem")
        .arg(&path)
        .args(["--rho", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "stderr: {stderr}");
}

#[test]
fn nadmm_seed_env_overrides_flag() {
    // an unparsable NADMM_SEED is a usage error
    let out = bin()
        .arg("analyze")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .args(["--multistart", "4"])
        .env("NADMM_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // a valid override changes nothing about validity of the output
    let out = bin()
        .arg("analyze")
        .arg("--problem")
        .arg(fixture("consensus_qp.json"))
        .args(["--multistart", "4", "--seed", "99"])
        .env("NADMM_SEED", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn analyze_point_at_known_solution() {
    let out = run_ok(
        bin()
            .arg("analyze")
            .arg("--problem")
            .arg(fixture("consensus_qp.json"))
            .args(["--point", r#"{"x":[1,1],"y":[1],"mu":[],"lambda":[0,0]}"#])
            .args(["--rho", "10"]),
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let kkt = &report["kkt"];
    for field in [
        "stationarity_x",
        "stationarity_y",
        "constraint_violation",
        "coupling_violation",
    ] {
        assert!(kkt[field].as_f64().unwrap() <= 1e-10, "field {field}");
    }
    assert_eq!(report["regularity"]["licq"]["ok"], serde_json::json!(true));
    assert_eq!(
        report["regularity"]["sosc"]["overall_ok"],
        serde_json::json!(true)
    );
}

#[test]
fn analyze_annotated_trace_fills_v_column() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("t.csv");
    let annotated = dir.path().join("t_v.csv");
    run_ok(
        bin()
            .arg("solve")
            .arg("--problem")
            .arg(fixture("consensus_qp.json"))
            .args(["--rho", "10"])
            .arg("--trace")
            .arg(&trace_path),
    );
    run_ok(
        bin()
            .arg("analyze")
            .arg("--problem")
            .arg(fixture("consensus_qp.json"))
            .arg("--trace")
            .arg(&trace_path)
            .args(["--rho", "10", "--multistart", "8"])
            .arg("--annotated-trace")
            .arg(&annotated)
            .arg("--report")
            .arg(dir.path().join("an.json")),
    );
    let content = std::fs::read_to_string(&annotated).unwrap();
    let mut lines = content.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let v_col = header.iter().position(|h| *h == "V").unwrap();
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(!first[v_col].is_empty());
    assert!(first[v_col].parse::<f64>().unwrap() >= 0.0);
}
