use std::process::{Command, Output};

use serde_json::Value;

fn flowfacets(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowfacets"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    flowfacets(args).status.code().expect("exit code")
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = flowfacets(&all);
    let v = serde_json::from_slice(&out.stdout).expect("JSON on stdout");
    (out.status.code().unwrap(), v)
}

fn stdout(args: &[&str]) -> String {
    String::from_utf8(flowfacets(args).stdout).unwrap()
}

#[test]
fn paralocks_accepts_replay() {
    let (c, v) = json(&["check", "corpus/replay.dpol", "--condition", "paralocks"]);
    assert_eq!(c, 0);
    assert_eq!(v["report"]["verdict"]["status"], "Secure");
    assert_eq!(v["report"]["encoding"], "lock-form");
}

#[test]
fn bisimulation_rejects_replay_with_store_pair() {
    let (c, v) = json(&["check", "corpus/replay.dpol", "--condition", "bisim", "--attacker", "A"]);
    assert_eq!(c, 1);
    let w = &v["report"]["verdict"]["witness"];
    assert_eq!(w["kind"], "DistinguishingPair");
    assert_ne!(w["left"], w["right"]);
}

#[test]
fn budget_exhaustion_is_unknown() {
    let (c, v) = json(&["check", "corpus/loop.dpol", "--condition", "gradual", "--budget", "10"]);
    assert_eq!(c, 2);
    assert_eq!(v["report"]["verdict"]["budgetTainted"], true);
}

#[test]
fn forgetful_attacker_from_automaton_file() {
    let args = [
        "check",
        "corpus/fig1_replay.dpol",
        "--condition",
        "askarov-chong",
        "--attacker",
        "A",
    ];
    assert_eq!(code(&args), 0);
    let mut with = args.to_vec();
    with.extend(["--automaton", "corpus/fig1.aut"]);
    assert_eq!(code(&with), 1);
}

#[test]
fn release_policy_flag() {
    let base = [
        "check",
        "corpus/time_transitive.dpol",
        "--condition",
        "balliu",
        "--attacker",
        "A",
    ];
    let with = |p: &str| {
        let mut a = base.to_vec();
        a.extend(["--release-policy", p]);
        code(&a)
    };
    assert_eq!((with("equiv"), with("timetrans"), with("direct")), (1, 0, 1));
    assert_eq!(with("sometimes"), 64);
}

#[test]
fn domain_override() {
    let args = [
        "check",
        "corpus/replay.dpol",
        "--condition",
        "oracle",
        "--domain",
        "0..2",
    ];
    // policy changes are rejected by the oracle
    assert_eq!(code(&args), 3);
    assert_eq!(
        code(&[
            "check",
            "corpus/static_xor.dpol",
            "--condition",
            "oracle",
            "--domain",
            "0..3"
        ]),
        0
    );
    assert_eq!(
        code(&[
            "check",
            "corpus/static_xor.dpol",
            "--condition",
            "oracle",
            "--domain",
            "3..0"
        ]),
        64
    );
}

#[test]
fn usage_and_parse_errors() {
    assert_eq!(code(&["check", "corpus/replay.dpol", "--condition", "nonsense"]), 64);
    assert_eq!(code(&["check", "corpus/replay.dpol"]), 64);
    assert_eq!(code(&["frobnicate"]), 64);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dpol");
    std::fs::write(&bad, "labels A; vars a:A; a := ").unwrap();
    assert_eq!(code(&["check", bad.to_str().unwrap(), "--condition", "rx"]), 64);
    assert_eq!(code(&["check", "missing.dpol", "--condition", "rx"]), 64);
}

#[test]
fn table_matches_golden() {
    let out = flowfacets(&["table"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("NI") && l.contains("Rx")));
    assert!(!text.contains("MISMATCH"));
}

#[test]
fn table_only_epistemic() {
    let (c, v) = json(&["table", "--only", "epistemic"]);
    assert_eq!(c, 0);
    let rows = v["report"]["table"]["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["group"] == "Epistemic"));
    assert!(rows.iter().any(|r| r["condition"] == "paralocks"));
}

#[test]
fn table_reports_golden_mismatch() {
    let golden: Value = serde_json::from_str(&stdout(&["corpus-list", "--show", "table1.json"])).unwrap();
    let mut broken = golden.clone();
    broken["rows"][0]["cells"]["D"] = "-".into();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, broken.to_string()).unwrap();
    let out = flowfacets(&["table", "--only", "ni", "--golden", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("MISMATCH rx D: expected -, got +"), "{text}");
}

#[test]
fn table_json_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let p = dir.path().join(name);
        code(&["table", "--json", p.to_str().unwrap()]);
        let v: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v["report"].to_string()
    };
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn scheme_global_invariant() {
    let (c, v) = json(&[
        "scheme",
        "tsp.json",
        "--global",
        "not flows(TopSecret,Public) and not flows(TopSecret,Secret)",
    ]);
    assert_eq!(c, 0);
    assert_eq!(v["report"]["outcome"]["saturated"], true);
}

#[test]
fn scheme_conditional_invariant() {
    let args = ["scheme", "tsp.json", "--global", "not flows(Secret, Public)"];
    assert_eq!(code(&args), 1);
    let mut when = args.to_vec();
    when.extend(["--when", "state != declassifying"]);
    assert_eq!(code(&when), 0);
}

#[test]
fn scheme_embedding_fails_clause_three() {
    let (c, v) = json(&[
        "scheme",
        "abc.json",
        "--embed",
        "tsp.json",
        "--map",
        "TopSecret=A,Secret=B,Public=C",
    ]);
    assert_eq!(c, 1);
    assert_eq!(v["report"]["outcome"]["clause"], 3);
    assert!(v["report"]["outcome"]["witness"].as_array().unwrap().len() >= 2);
}

#[test]
fn scheme_embedding_rejects_typo_map() {
    assert_eq!(
        code(&[
            "scheme",
            "abc.json",
            "--embed",
            "tsp.json",
            "--map",
            "TopSecret=A,Secret=B,Public=A"
        ]),
        3
    );
}

#[test]
fn scheme_sequence_invariant() {
    assert_eq!(code(&["scheme", "wall.json", "--seq", "chinese-wall.inv"]), 0);
    assert_eq!(
        code(&["scheme", "wall_unrestricted.json", "--seq", "chinese-wall.inv"]),
        1
    );
}

#[test]
fn scheme_sequences() {
    let text = stdout(&["scheme", "tsp.json", "--sequences", "--depth", "2"]);
    assert_eq!(text, "closed\nclosed . closed\nclosed . declassifying\n");
}

#[test]
fn corpus_list_names_facets() {
    let text = stdout(&["corpus-list"]);
    assert!(text.contains("v1/replay.dpol\tlabels A,B facet R"));
    assert!(text.contains("v1/tsp.json"));
}
