use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use dataflow_cli::commands::cmd_repl;
use dataflow_cli::{execute, Cli, Setup};
use dataflow_dialogue::calendar::EventStore;
use dataflow_dialogue::corpus::load_jsonl;
use dataflow_dialogue::Syntax;

fn data(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(path)
}

fn dataflow(args: &[&str]) -> (i32, String) {
    let cli = Cli::try_parse_from(std::iter::once("dataflow").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = execute(cli, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn script(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn repl(setup: &Setup, input: &str) -> String {
    let mut out = Vec::new();
    assert_eq!(cmd_repl(setup, input.as_bytes(), &mut out, false).unwrap(), 0);
    String::from_utf8(out).unwrap()
}

#[test]
fn run_prints_one_line_per_turn() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "add.txt", "# add and revise\nAdd(2,Add(3,5))\n\nrevise(old=Int?(3), new=Int(6))\n");
    let dots = dir.path().join("dots");
    let (code, out) = dataflow(&["run", &s, "--export-dot", dots.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out, "10\n13\n");
    let mut files: Vec<_> = fs::read_dir(&dots).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files, ["turn_001.dot", "turn_002.dot"]);
    let first = fs::read_to_string(dots.join("turn_001.dot")).unwrap();
    assert_eq!(first.matches("style=dashed").count(), 3);
}

#[test]
fn run_fails_on_a_bad_turn_but_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "bad.txt", "Add(2,\nAdd(1,1)\n");
    let (code, out) = dataflow(&["run", &s]);
    assert_eq!(code, 1);
    let lines: Vec<_> = out.lines().collect();
    assert!(lines[0].starts_with("error [syntax_error]"), "{out}");
    assert_eq!(lines[1], "2");
}

#[test]
fn run_reports_user_errors() {
    assert_eq!(dataflow(&["run", "/nonexistent/script.txt"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "ok.txt", "Add(1,1)\n");
    assert_eq!(dataflow(&["run", &s, "--now", "yesterday"]).0, 1);
    assert_eq!(dataflow(&["run", &s, "--events", "/nonexistent.json"]).0, 1);
    assert!(Cli::try_parse_from(["dataflow", "run", &s, "--syntax", "lisp"]).is_err());
}

#[test]
fn prefix_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "p.txt", "(Add 2 (Add 3 5))\n");
    assert_eq!(dataflow(&["run", &s, "--syntax", "prefix"]), (0, "10\n".to_string()));
}

#[test]
fn repl_answers_questions_inline() {
    let out = repl(&Setup::default(), "Add(2)\n7\n:quit\nAdd(1,1)\n");
    assert_eq!(out, "? Add needs a value for 'pos2' (Int)\n9\n");
}

#[test]
fn repl_delete_flow() {
    let setup = Setup::new("2023-01-01T09:00", Some(&data("events.json")), Syntax::Call).unwrap();
    let out = repl(&setup, "DeleteEvent(at_location(\"Jeffs\"))\nConfirm()\n");
    let lines: Vec<_> = out.lines().collect();
    assert!(lines[0].starts_with("? "), "{out}");
    assert!(lines[1].starts_with("deleted #2"), "{out}");
}

#[test]
fn repl_graph_and_commands() {
    let out = repl(&Setup::default(), ":graph\nAdd(2,3)\n:graph\n:nope\n");
    assert!(out.starts_with("no turns yet\n5\ndigraph"), "{out}");
    assert!(out.contains("label=\"Add_1\""));
    assert!(out.trim_end().ends_with("unknown command :nope (try :help)"));
}

#[test]
fn repl_and_run_agree() {
    let text =
        "Add(2)\n\"x\"\n4\nAdd(1,\nrefer(Int?())\nrevise(old=Int?(2), new=Int(5))\nFindEvents(Constraint[Event]())\n";
    let dir = tempfile::tempdir().unwrap();
    let s = script(dir.path(), "mix.txt", text);
    let events = data("events.json");
    let (_, run_out) = dataflow(&["run", &s, "--events", events.to_str().unwrap()]);
    let setup = Setup::new("2023-01-01T09:00", Some(&events), Syntax::Call).unwrap();
    assert_eq!(repl(&setup, text), run_out);
}

#[test]
fn simplify_writes_annotated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.jsonl");
    let (code, out) = dataflow(&["simplify", data("corpus.jsonl").to_str().unwrap(), out_path.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let loaded = load_jsonl(&out_path).unwrap();
    assert_eq!(loaded.records.len(), 50);
    assert!(loaded.records.iter().flat_map(|r| &r.turns).all(|t| t.annotation_simplified.is_some()));

    let (code, stats) = dataflow(&["stats", out_path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stats.starts_with("annotation"), "{stats}");
    assert!(stats.contains("simplified shorter at every quantile: yes"));
}

#[test]
fn simplify_explains_rules() {
    let dir = tempfile::tempdir().unwrap();
    let input =
        script(dir.path(), "one.jsonl", fs::read_to_string(data("corpus.jsonl")).unwrap().lines().next().unwrap());
    let out_path = dir.path().join("out.jsonl");
    let (code, out) = dataflow(&["simplify", &input, out_path.to_str().unwrap(), "--explain"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("d01 turn 0"));
    assert!(out.contains("  fuse_delete at "));
}

#[test]
fn simplify_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let good = fs::read_to_string(data("corpus.jsonl")).unwrap().lines().next().unwrap().to_string();
    let input = script(dir.path(), "mixed.jsonl", &format!("{good}\nnot json\n"));
    let out_path = dir.path().join("out.jsonl");
    let out = out_path.to_str().unwrap();
    assert_eq!(dataflow(&["simplify", &input, out]).0, 1);
    assert!(!out_path.exists());
    assert_eq!(dataflow(&["simplify", &input, out, "--lenient"]).0, 0);
    assert_eq!(load_jsonl(&out_path).unwrap().records.len(), 1);

    // a manifest whose rules never settle
    let rules = script(dir.path(), "loop.txt", "[normalize]\nflip: Add(?a, ?b) => Add(?b, ?a)\n[restyle]\n[expand]\n");
    let adds = script(
        dir.path(),
        "adds.jsonl",
        "{\"dialogue_id\":\"a\",\"turns\":[{\"utterance\":\"\",\"annotation\":\"(Add 1 2)\"}]}\n",
    );
    assert_eq!(dataflow(&["simplify", &adds, out, "--rules", &rules]).0, 1);
    assert_eq!(dataflow(&["simplify", &adds, out, "--rules", &rules, "--lenient"]).0, 0);
}

#[test]
fn stats_on_a_raw_dataset() {
    let (code, out) = dataflow(&["stats", data("corpus.jsonl").to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["original"]["count"], 50);
    assert_eq!(v["simplified_shorter"], true);
    for q in ["q25", "q50", "q75"] {
        assert!(v["simplified"][q].as_u64() < v["original"][q].as_u64());
    }
}

#[test]
fn stats_on_empty_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = script(dir.path(), "empty.jsonl", "");
    assert_eq!(dataflow(&["stats", &empty]).0, 1);
    assert_eq!(dataflow(&["stats", "/nonexistent.jsonl"]).0, 1);
}

#[test]
fn equivalence_on_bundled_and_given_data() {
    let (code, out) = dataflow(&["equivalence"]);
    assert_eq!((code, out.as_str()), (0, "50/50 dialogues equivalent\n"));

    let dir = tempfile::tempdir().unwrap();
    let rules = fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/rules/rules.txt"))
        .unwrap()
        .replace("NumberPM(number=?n) => NumberPM(?n)", "NumberPM(number=?n) => NumberAM(?n)");
    let rules = script(dir.path(), "broken.txt", &rules);
    let (code, out) = dataflow(&["equivalence", "--rules", &rules]);
    assert_eq!(code, 1);
    assert!(out.lines().any(|l| l.starts_with("FAIL ")));

    let dataset = data("corpus.jsonl");
    let events = data("calendar.json");
    let (code, json) = dataflow(&[
        "equivalence",
        "--dataset",
        dataset.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 50);
}

#[test]
fn bundled_fixtures_match_the_data_directory() {
    use dataflow_cli::commands::{BUNDLED_CALENDAR, BUNDLED_CORPUS};
    assert_eq!(BUNDLED_CORPUS, fs::read_to_string(data("corpus.jsonl")).unwrap());
    assert_eq!(EventStore::from_json(BUNDLED_CALENDAR).unwrap(), EventStore::load(&data("calendar.json")).unwrap());
}
