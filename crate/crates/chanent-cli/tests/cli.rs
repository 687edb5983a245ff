//! End-to-end tests of the command-line surface: exit codes, schema
//! validation, output determinism, and the harness sensitivity fixture.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chanent"))
}

fn write_config(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join("chanent-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn index_reports_delta_and_criterion() {
    let cfg = write_config(
        "c_in_m2.json",
        r#"{"inclusion": {"dims_small": [1], "adjacency": [[2]], "trace": ["1/2"]}}"#,
    );
    let out = bin().args(["index", "--config", &cfg]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("delta_sq") && text.contains("4.000000000000e0"), "{text}");
    assert!(text.contains("downward_criterion") && text.contains("0.000000000000e0"));
    assert!(text.contains("criterion_violation(k=0;l=0)"));
}

#[test]
fn malformed_adjacency_is_schema_error() {
    let cfg = write_config(
        "bad_adjacency.json",
        r#"{"inclusion": {"dims_small": [1, 1], "adjacency": [[1]], "trace": "markov"}}"#,
    );
    let out = bin().args(["index", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("adjacency"), "stderr was: {err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let cfg = write_config(
        "unknown_key.json",
        r#"{"inclusion": {"dims_small": [1], "adjacency": [[2]], "trace": "markov", "extra": 1}}"#,
    );
    let out = bin().args(["index", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn entropies_cross_checks_on_skew_instance() {
    let cfg = write_config(
        "c_in_c2.json",
        r#"{"inclusion": {"dims_small": [1], "adjacency": [[1, 1]], "trace": ["1/3", "2/3"]}, "budget": 200}"#,
    );
    let out = bin().args(["entropies", "--config", &cfg]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // H = S_τ = log 3 − (2/3) log 2 ≈ 0.636514
    assert!(text.contains("6.365141682948e-1"), "{text}");
    // araki margin is tiny
    let araki_line = text.lines().find(|l| l.contains("araki")).unwrap();
    let margin: f64 = araki_line.split(',').nth(7).unwrap().parse().unwrap();
    assert!(margin < 1e-9, "araki margin {margin}");
}

#[test]
fn renyi_curve_deterministic_and_monotone() {
    let cfg = write_config(
        "renyi.json",
        r#"{"inclusion": {"dims_small": [1, 1], "adjacency": [[1], [1]], "trace": ["0.5"]}, "pgrid": ["1", "1.5", "2", "inf"]}"#,
    );
    let run = || {
        let out = bin().args(["renyi-curve", "--config", &cfg, "--seed", "7"]).output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "output must be byte-identical across runs");
    assert!(a.contains("monotone_in_p") && !a.contains("VIOLATION"));
    let mono_line = a.lines().find(|l| l.contains("monotone_in_p")).unwrap();
    assert!(mono_line.contains("1.000000000000e0"));
}

#[test]
fn convex_and_compose_channels() {
    let cfg = write_config(
        "channels.json",
        r#"{
            "inclusion": {"dims_small": [1, 1], "adjacency": [[1], [1]], "trace": ["0.5"]},
            "phi": {"kind": "convex",
                    "parts": [{"kind": "identity"}, {"kind": "cond_exp"}],
                    "weights": ["0.5", "0.5"]},
            "psi": {"kind": "compose", "parts": [{"kind": "cond_exp"}, {"kind": "cond_exp"}]},
            "budget": 100
        }"#,
    );
    let out = bin().args(["entropies", "--config", &cfg]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("s_tau"));
}

#[test]
fn check_exits_zero_on_default_suites() {
    let out = bin()
        .args(["check", "--trials", "3", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pass"));
    assert!(!text.contains("VIOLATION"));
}

#[test]
fn check_detects_injected_sign_flip() {
    let cfg = write_config(
        "mutated.json",
        r#"{"suites": ["partition_vs_stau"], "mutation": "umegaki_sign_flip", "trials": 4}"#,
    );
    let out = bin().args(["check", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("VIOLATION"));
}

#[test]
fn json_format_output() {
    let cfg = write_config(
        "json_out.json",
        r#"{"inclusion": {"dims_small": [1], "adjacency": [[2]], "trace": ["0.5"]}}"#,
    );
    let out = bin()
        .args(["index", "--config", &cfg, "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed.as_array().unwrap().len() >= 3);
}

#[test]
fn out_file_writes_data_not_stdout() {
    let cfg = write_config(
        "outfile.json",
        r#"{"inclusion": {"dims_small": [1], "adjacency": [[2]], "trace": ["0.5"]}}"#,
    );
    let dest = std::env::temp_dir().join("chanent-cli-tests").join("rows.csv");
    let out = bin()
        .args(["index", "--config", &cfg, "--out", dest.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dest).unwrap();
    assert!(text.starts_with("schema_version,command"));
}
