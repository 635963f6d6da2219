use std::path::{Path, PathBuf};
use std::process::Command;

use egsql::decoder::Action;
use egsql::fixtures::{haugar_example, haugar_script, matches_table};
use egsql::scorers::{write_scripts, OracleScript, ScriptStep};
use egsql::sql::{AggregateFn, Comparator};
use egsql::synth::{generate, SynthConfig};
use egsql::table::{write_examples, write_tables, Cell, ColumnSchema, ColumnType, Example, Table};

fn egsql(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_egsql")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

struct Files {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Files {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Files { _dir: dir, root }
    }

    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.root.join(name), text).unwrap();
        self.path(name)
    }
}

fn haugar_files(f: &Files) -> (String, String, String) {
    write_tables(Path::new(&f.path("tables.jsonl")), &[matches_table()]).unwrap();
    write_examples(Path::new(&f.path("examples.jsonl")), &[haugar_example()]).unwrap();
    write_scripts(Path::new(&f.path("scripts.jsonl")), &[haugar_script()]).unwrap();
    (f.path("tables.jsonl"), f.path("examples.jsonl"), f.path("scripts.jsonl"))
}

#[test]
fn validate_exit_codes() {
    let f = Files::new();
    let (tables, examples, _) = haugar_files(&f);
    let (code, out, _) = egsql(&["validate", "--tables", &tables, "--examples", &examples]);
    assert_eq!(code, 0);
    assert!(out.contains("1 tables, 1 examples"));

    let missing = f.path("missing.jsonl");
    assert_eq!(egsql(&["validate", "--tables", &missing, "--examples", &examples]).0, 1);

    let bad_ref = f.write(
        "bad_ref.jsonl",
        r#"{"id":"x","question":["how","many"],"table_id":"nowhere"}"#,
    );
    assert_eq!(egsql(&["validate", "--tables", &tables, "--examples", &bad_ref]).0, 3);

    let garbled = f.write("garbled.jsonl", "{not json\n");
    let (code, _, err) = egsql(&["validate", "--tables", &garbled, "--examples", &examples]);
    assert_eq!(code, 2);
    assert!(err.contains(":1:"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(egsql(&["decode", "--frobnicate"]).0, 2);
}

#[test]
fn delta_scripts_decode_to_gold() {
    let f = Files::new();
    let corpus = generate(&SynthConfig {
        num_examples: 30,
        ..SynthConfig::default()
    });
    let catalog = corpus.catalog();
    let scripts: Vec<OracleScript> = corpus
        .examples
        .iter()
        .map(|e| {
            let gold = e.gold.as_ref().unwrap();
            let path = egsql::decoder::actions_for_query(gold, |v| egsql::decoder::find_span(&e.question, v)).unwrap();
            OracleScript::delta(e.id.clone(), &path)
        })
        .collect();
    corpus.write(&f.root).unwrap();
    write_scripts(Path::new(&f.path("delta.jsonl")), &scripts).unwrap();

    for k in ["1", "5"] {
        let out = f.path("pred.txt");
        let (code, _, err) = egsql(&[
            "decode",
            "--tables",
            &f.path("tables.jsonl"),
            "--examples",
            &f.path("examples.jsonl"),
            "--model",
            &f.path("delta.jsonl"),
            "--beam-width",
            k,
            "--out",
            &out,
        ]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<String> = std::fs::read_to_string(&out).unwrap().lines().map(String::from).collect();
        let want: Vec<String> = corpus
            .examples
            .iter()
            .map(|e| egsql::to_text(e.gold.as_ref().unwrap(), catalog.table(&e.table_id).unwrap()))
            .collect();
        assert_eq!(lines, want);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(format!("{out}.manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["beam_width"], k.parse::<u64>().unwrap());
        assert_eq!(manifest["seed"], 0);
    }
}

fn decode_haugar(f: &Files, extra: &[&str]) -> String {
    let (tables, examples, scripts) = haugar_files(f);
    let out = f.path("pred.txt");
    let mut args = vec![
        "decode",
        "--tables",
        &tables,
        "--examples",
        &examples,
        "--model",
        &scripts,
        "--out",
        &out,
    ];
    args.extend_from_slice(extra);
    let (code, _, err) = egsql(&args);
    assert_eq!(code, 0, "{err}");
    std::fs::read_to_string(&out).unwrap().trim_end().to_string()
}

#[test]
fn guidance_changes_the_two_path_output() {
    let f = Files::new();
    let off = decode_haugar(&f, &["--eg", "off", "--beam-width", "1"]);
    let on = decode_haugar(&f, &["--eg", "on"]);
    let post_hoc = decode_haugar(&f, &["--eg-stages", "final"]);
    assert_eq!(off, "SELECT COUNT opponent WHERE opponent > 'Haugar'");
    assert_eq!(on, "SELECT COUNT opponent WHERE opponent = 'Haugar'");
    assert_eq!(post_hoc, on);
}

#[test]
fn abstain_is_written_when_nothing_survives() {
    let f = Files::new();
    // a single-entry beam follows `opponent >` and has nothing left once it is pruned
    let out = decode_haugar(&f, &["--beam-width", "1", "--expansion-factor", "1", "--fallback", "abstain"]);
    assert_eq!(out, "ABSTAIN");
    let manifest = std::fs::read_to_string(f.path("pred.txt.manifest.json")).unwrap();
    assert!(manifest.contains("\"abstained\": 1"), "{manifest}");
    let fallback = decode_haugar(&f, &["--beam-width", "1", "--expansion-factor", "1"]);
    assert!(fallback.starts_with("SELECT"), "{fallback}");
}

#[test]
fn train_rejects_an_empty_file() {
    let f = Files::new();
    let (tables, _, _) = haugar_files(&f);
    let empty = f.write("empty.jsonl", "");
    for kind in ["template", "sketch"] {
        let (code, _, _) = egsql(&[
            "train",
            "--kind",
            kind,
            "--tables",
            &tables,
            "--examples",
            &empty,
            "--out",
            &f.path("m.json"),
        ]);
        assert_eq!(code, 2);
    }
}

#[test]
fn train_then_eval_each_model_kind() {
    let f = Files::new();
    let corpus = generate(&SynthConfig {
        num_examples: 60,
        fault_rate: 0.0,
        ..SynthConfig::default()
    });
    corpus.write(&f.root).unwrap();
    for kind in ["template", "sketch"] {
        let model = f.path(&format!("{kind}.json"));
        let (code, _, err) = egsql(&[
            "train",
            "--kind",
            kind,
            "--tables",
            &f.path("tables.jsonl"),
            "--examples",
            &f.path("examples.jsonl"),
            "--epochs",
            "10",
            "--out",
            &model,
        ]);
        assert_eq!(code, 0, "{err}");
        let report = f.path(&format!("{kind}-report.json"));
        let (code, _, err) = egsql(&[
            "eval",
            "--scorer",
            kind,
            "--model",
            &model,
            "--tables",
            &f.path("tables.jsonl"),
            "--examples",
            &f.path("examples.jsonl"),
            "--out",
            &report,
        ]);
        assert_eq!(code, 0, "{err}");
        let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r["num_examples"], 60);
        assert_eq!(r["config"]["count_empty_is_empty"], true);
    }
}

#[test]
fn ablate_emits_five_labelled_reports() {
    let f = Files::new();
    generate(&SynthConfig {
        num_examples: 40,
        ..SynthConfig::default()
    })
    .write(&f.root)
    .unwrap();
    let out = f.path("ablate.json");
    let (code, stdout, err) = egsql(&[
        "ablate",
        "--tables",
        &f.path("tables.jsonl"),
        "--examples",
        &f.path("examples.jsonl"),
        "--model",
        &f.path("scripts.jsonl"),
        "--out",
        &out,
    ]);
    assert_eq!(code, 0, "{err}");
    let reports: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let labels: Vec<&str> = reports.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(
        labels,
        [
            "full EG",
            "No Aggregation execution",
            "No Condition execution",
            "No Sketch backtracking",
            "EG off"
        ]
    );
    assert_eq!(reports[0]["config"]["stages"], "selhead,cond,final");
    assert_eq!(reports[2]["config"]["stages"], "selhead,final");
    assert_eq!(stdout.lines().count(), 6);
}

fn step(position: &str, actions: Vec<(Action, f64)>) -> ScriptStep {
    ScriptStep {
        position: position.into(),
        after: None,
        actions,
    }
}

#[test]
fn oracle_on_the_84_program_fixture() {
    let f = Files::new();
    let table = Table::new(
        "t84",
        vec![
            ColumnSchema::new("name", ColumnType::Text),
            ColumnSchema::new("score", ColumnType::Real),
        ],
        vec![
            vec![Cell::Text("a".into()), Cell::Real(1.0)],
            vec![Cell::Text("b".into()), Cell::Real(2.0)],
        ],
    )
    .unwrap();
    let example = Example {
        id: "e84".into(),
        question: vec!["a".into()],
        table_id: "t84".into(),
        gold: None,
    };
    let span = Action::PickValueSpan { start: 0, end: 1 };
    let script = OracleScript {
        example_id: "e84".into(),
        steps: vec![
            step("agg", vec![(Action::PickAgg(AggregateFn::Count), 0.7), (Action::PickAgg(AggregateFn::None), 0.3)]),
            step("sel", vec![(Action::PickColumn(1), 0.8), (Action::PickColumn(0), 0.2)]),
            step("cond_col", vec![(Action::PickColumn(1), 0.6), (Action::EndConditions, 0.4)]),
            step("cond_op", vec![(Action::PickOp(Comparator::Gt), 0.9), (Action::PickOp(Comparator::Eq), 0.1)]),
            step("cond_val", vec![(span, 1.0)]),
        ],
        uniform_default: false,
        sketches: None,
    };
    write_tables(Path::new(&f.path("t.jsonl")), &[table]).unwrap();
    write_examples(Path::new(&f.path("e.jsonl")), &[example]).unwrap();
    write_scripts(Path::new(&f.path("s.jsonl")), &[script]).unwrap();

    let (code, out, err) = egsql(&[
        "oracle",
        "--tables",
        &f.path("t.jsonl"),
        "--examples",
        &f.path("e.jsonl"),
        "--model",
        &f.path("s.jsonl"),
        "--max-conds",
        "1",
    ]);
    assert_eq!(code, 0, "{err}");
    let line: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    // `score > 'a'` (0.3024) is mistyped, so the unconditioned count wins
    assert_eq!(line["argmax"], "SELECT COUNT score");
    assert!((line["logprob"].as_f64().unwrap() - (0.7f64 * 0.8 * 0.4).ln()).abs() < 1e-12);
    assert_eq!(line["enumerated"], 84);
}

#[test]
fn synth_writes_a_loadable_corpus() {
    let f = Files::new();
    let dir = f.path("corpus");
    let (code, _, err) = egsql(&["synth", "--num-examples", "25", "--seed", "4", "--out", &dir]);
    assert_eq!(code, 0, "{err}");
    let (code, out, _) = egsql(&[
        "validate",
        "--tables",
        &format!("{dir}/tables.jsonl"),
        "--examples",
        &format!("{dir}/examples.jsonl"),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("25 examples"));
}
