use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tnsolve::random;
use tnsolve_cli::{emit_spec, parse_spec_str};

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn tnsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not a report ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn every_family_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for family in random::FAMILIES {
        for _ in 0..5 {
            let spec = random::instance(family, &mut rng, 1 << 10).unwrap();
            let spec = spec.normalize().unwrap();
            let back = parse_spec_str(&emit_spec(&spec), family).unwrap();
            assert_eq!(back, spec, "{family}");
        }
    }
}

#[test]
fn exit_code_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&str, &str, &str, i32)] = &[
        (
            "solve",
            "p123.json",
            r#"{"family": "partition", "s": [1, 2, 3]}"#,
            0,
        ),
        (
            "solve",
            "p12.json",
            r#"{"family": "partition", "s": [1, 2]}"#,
            2,
        ),
        (
            "solve",
            "triangle.json",
            r#"{"family": "coloring", "vertices": 3, "edges": [[0, 1], [1, 2], [0, 2]], "k": 2}"#,
            2,
        ),
        (
            "solve",
            "add.json",
            r#"{"family": "addition_inv", "c": 7, "bits": 2}"#,
            2,
        ),
        (
            "solve",
            "qubo.json",
            r#"{"family": "qubo", "q": [[-3, 0], [3, -1]]}"#,
            0,
        ),
        (
            "count",
            "one4.json",
            r#"{"family": "single_one", "n": 4}"#,
            0,
        ),
        (
            "count",
            "p12c.json",
            r#"{"family": "partition", "s": [1, 2]}"#,
            2,
        ),
        (
            "oracle",
            "p12o.json",
            r#"{"family": "partition", "s": [1, 2]}"#,
            2,
        ),
        (
            "solve",
            "bad.json",
            r#"{"family": "qubo", "q": [[1, 2]]}"#,
            1,
        ),
        ("solve", "unknown.json", r#"{"family": "sudoku"}"#, 1),
        ("count", "opt.json", r#"{"family": "qubo", "q": [[1]]}"#, 1),
    ];
    for &(command, name, text, code) in cases {
        let path = write(dir.path(), name, text);
        let out = tnsolve(&[command, path.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(code),
            "{command} {name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        if code == 1 {
            assert!(out.stdout.is_empty(), "errors print no report");
        } else {
            let r = report(&out);
            assert_eq!(r["command"], command);
            if command == "solve" && code == 2 {
                assert_eq!(r["solution"]["feasible"], false);
            }
        }
    }
}

#[test]
fn balanced_split_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "p.json",
        r#"{"family": "partition", "s": [1, 2, 3]}"#,
    );
    let out = tnsolve(&["solve", path.to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let x: Vec<i64> = r["solution"]["assignment"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    let signed: i64 = [1, 2, 3]
        .iter()
        .zip(&x)
        .map(|(s, &b)| if b == 1 { *s } else { -s })
        .sum();
    assert_eq!(signed, 0);
    assert_eq!(r["oracle"]["agrees"], true);
}

#[test]
fn counts_single_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "s.json", r#"{"family": "single_one", "n": 4}"#);
    let r = report(&tnsolve(&["count", path.to_str().unwrap()]));
    assert_eq!(r["count"], 4);
}

#[test]
fn verify_reports_feasibility_and_cost() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "q.json",
        r#"{"family": "qubo", "q": [[-3, 0], [3, -1]]}"#,
    );
    let out = tnsolve(&["verify", path.to_str().unwrap(), "--assignment", "1,0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["verification"]["cost"], -3.0);

    let path = write(
        dir.path(),
        "a.json",
        r#"{"family": "addition_inv", "c": 3, "bits": 2}"#,
    );
    let out = tnsolve(&["verify", path.to_str().unwrap(), "--assignment", "1,1,0,0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tnsolve(&["verify", path.to_str().unwrap(), "--assignment", "1,0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn negative_weight_error_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "k.json",
        "{\n  \"family\": \"knapsack\",\n  \"weights\": [2, -3],\n  \"values\": [1, 1],\n  \"capacity\": 4\n}\n",
    );
    let out = tnsolve(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k.json:3:3"), "{stderr}");
    assert!(stderr.contains("weights[1]"), "{stderr}");
}

#[test]
fn check_over_budget_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "q.json",
        r#"{"family": "qubo", "q": [[-1, 0, 0], [1, -1, 0], [1, 1, -1]]}"#,
    );
    let out = tnsolve(&[
        "solve",
        path.to_str().unwrap(),
        "--check",
        "--oracle-budget",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["oracle"]["status"], "budget_exceeded");
    assert!(r["oracle"].get("agrees").is_none());
}

#[test]
fn flags_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "q.json",
        r#"{"family": "qubo", "q": [[-3, 0], [3, -1]]}"#,
    );
    let out = tnsolve(&[
        "solve",
        path.to_str().unwrap(),
        "--tau",
        "2.5",
        "--humbucker",
        "--no-escalate",
        "--seed",
        "9",
        "--plan-debug",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["tau_requested"], 2.5);
    assert_eq!(r["config"]["tau_final"], 2.5);
    assert_eq!(r["config"]["mode"], "phase");
    assert_eq!(r["config"]["escalation"], false);
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["solution"]["assignment"], serde_json::json!([1, 0]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node 0"));
}

#[test]
fn report_echo_reruns_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "k.json",
        r#"{"family": "knapsack", "weights": [2, 3], "values": [3, 4], "capacity": 5}"#,
    );
    let first = report(&tnsolve(&["solve", path.to_str().unwrap()]));
    let echo = write(dir.path(), "echo.json", &first["spec"].to_string());
    let second = report(&tnsolve(&["solve", echo.to_str().unwrap()]));
    assert_eq!(first["spec"], second["spec"]);
    assert_eq!(
        first["solution"]["assignment"],
        second["solution"]["assignment"]
    );
    assert_eq!(first["solution"]["cost"], -7.0);
}

#[test]
fn bench_random_instances() {
    let out = tnsolve(&["bench", "--random", "qubo", "--seed", "4", "--repeats", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["timings"]["iterations"].as_array().unwrap().len(), 2);
    let again = report(&tnsolve(&[
        "bench",
        "--random",
        "qubo",
        "--seed",
        "4",
        "--repeats",
        "1",
    ]));
    assert_eq!(r["spec"], again["spec"]);
}

#[test]
fn oracle_command_lists_optima() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "q.json",
        r#"{"family": "qubo", "q": [[-3, 0], [3, -1]]}"#,
    );
    let r = report(&tnsolve(&["oracle", path.to_str().unwrap()]));
    assert_eq!(r["oracle"]["best_cost"], -3.0);
    assert_eq!(r["oracle"]["optimal"], serde_json::json!([[1, 0]]));
    let out = tnsolve(&["oracle", path.to_str().unwrap(), "--oracle-budget", "2"]);
    assert_eq!(out.status.code(), Some(1));
}
