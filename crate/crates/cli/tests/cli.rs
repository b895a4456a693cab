//! End-to-end checks of the `padicvol` binary: report shape, determinism,
//! exit codes, and the bundled fixture corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_padicvol"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON report")
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("padicvol-test-{}-{name}", std::process::id()));
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let path = fixture("theta/two_variable.pas");
    let a = run(&["bound", path.to_str().unwrap()]);
    let b = run(&["bound", path.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn qe_reports_the_divisibility_witness() {
    let path = temp_file("even.pas", "vg m;\nexists vg x. x + x = m\n");
    let report = stdout_json(&run(&["qe", path.to_str().unwrap()]));
    let eliminated = report["results"]["eliminated"].as_str().unwrap();
    assert!(eliminated.contains("2 | "), "eliminated: {eliminated}");
    assert_eq!(report["results"]["quantifier_free"], true);
}

#[test]
fn volume_of_the_unit_group_is_exact() {
    let path = temp_file("unitgroup.pas", "vf a, b, c, d;\nord(a*d - b*c) = 0\n");
    let report = stdout_json(&run(&["volume", path.to_str().unwrap(), "--prime", "3", "--level", "0"]));
    assert_eq!(report["results"]["volume"], "16/27");
    assert_eq!(report["results"]["estimator"]["kind"], "exact_count");
}

#[test]
fn monte_carlo_reports_its_spread() {
    let path = fixture("sets/first_digit_04.pas");
    let report = stdout_json(&run(&[
        "volume", path.to_str().unwrap(), "--prime", "5", "--level", "0",
        "--samples", "2000", "--seed", "9",
    ]));
    assert_eq!(report["results"]["estimator"]["kind"], "monte_carlo");
    assert!(report["results"]["estimator"]["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn eval_answers_with_a_three_valued_verdict() {
    let path = temp_file("sentence.pas", "exists vf x. ord(x) = 0 and ac(x) = 2\n");
    let report = stdout_json(&run(&["eval", path.to_str().unwrap(), "--prime", "3"]));
    assert_eq!(report["results"]["verdict"], "true");
    let open = temp_file("open.pas", "vg m;\nm = 0\n");
    let out = run(&["eval", open.to_str().unwrap(), "--prime", "3"]);
    assert_eq!(out.status.code(), Some(1), "free variables are a domain error");
}

#[test]
fn cartan_and_cosets_agree_on_the_index() {
    let cartan = stdout_json(&run(&["cartan", "--entries", "25,5;0,5", "--prime", "5"]));
    assert_eq!(cartan["results"]["m"], serde_json::json!([2, 1]));
    let cosets = stdout_json(&run(&["cosets", "--m", "2,0", "--prime", "5"]));
    assert_eq!(cosets["results"]["index_polynomial"], "q^2 + q");
    assert_eq!(cosets["results"]["at_prime"]["closed_form"], "30/1");
    assert_eq!(cosets["results"]["at_prime"]["representative_count"], 30);
}

#[test]
fn orbital_fixture_reproduces_the_frozen_value() {
    let path = fixture("problems/example_z.problem");
    let report = stdout_json(&run(&["orbital", path.to_str().unwrap(), "--primes", "3"]));
    assert_eq!(report["results"]["support"], serde_json::json!([[0, 0]]));
    assert_eq!(report["results"]["evaluations"][0]["value"], "512/6561");
    assert!(report["ledger"].get("2").is_some(), "p = 2 exclusion must be on the ledger");
}

#[test]
fn fit_validates_on_the_held_out_prime() {
    let path = fixture("problems/example_z.problem");
    let report = stdout_json(&run(&["fit", path.to_str().unwrap()]));
    assert_eq!(report["results"]["normalized_polynomial"], "1/2 - q^-1 + 1/2*q^-2");
    assert_eq!(report["results"]["validation"]["agrees"], true);
    assert_eq!(report["results"]["validation"]["prime"], 13);
}

#[test]
fn the_qe_corpus_eliminates_cleanly() {
    let dir = fixture("qe_corpus");
    let mut seen = 0;
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let report = stdout_json(&run(&["qe", path.to_str().unwrap()]));
        assert_eq!(report["results"]["quantifier_free"], true, "{}", path.display());
        seen += 1;
    }
    assert_eq!(seen, 50);
}

#[test]
fn exit_codes_separate_domain_and_usage_errors() {
    let missing = run(&["parse", "/definitely/not/here.pas"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());

    let unbounded = temp_file("unbounded.pas", "vg m;\nm >= 0\n");
    let out = run(&["bound", unbounded.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unbounded"));

    let usage = run(&["no-such-command"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn out_flag_writes_the_report_to_disk() {
    let target = std::env::temp_dir().join(format!("padicvol-out-{}.json", std::process::id()));
    let path = fixture("theta/bounded_union.pas");
    let out = run(&["parse", path.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(report["command"], "parse");
    std::fs::remove_file(&target).ok();
}

#[test]
fn problem_loader_rejects_unknown_keys() {
    let support = fixture("formulas/gl2_integral.pas");
    let broken = temp_file(
        "broken.problem",
        &format!(
            "model = padic\nprimes = 3\nsupport = {s}\norbit_locus = {s}\nmystery = 1\n",
            s = support.display()
        ),
    );
    let out = run(&["orbital", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
