use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn tierflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tierflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn path(name: &str) -> String {
    fixture(name).to_str().unwrap().to_owned()
}

#[test]
fn check_exit_codes_over_corpus() {
    for name in [
        "add",
        "mul",
        "shuffle",
        "binary_add",
        "sync",
        "crosszero",
        "zrange",
        "triangle",
        "spin",
    ] {
        let out = tierflow(&["check", &path(&format!("{name}.tier"))]);
        assert_eq!(code(&out), 0, "{name}: {}", stdout(&out));
    }
    for name in ["exp", "badd", "leak", "grow"] {
        assert_eq!(code(&tierflow(&["check", &path(&format!("{name}.tier"))])), 1, "{name}");
    }
    assert_eq!(code(&tierflow(&["check", "missing.tier"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tier");
    std::fs::write(&bad, "thread main { x := }").unwrap();
    assert_eq!(code(&tierflow(&["check", bad.to_str().unwrap()])), 2);
}

#[test]
fn check_prints_tier_table_and_core() {
    let out = stdout(&tierflow(&["check", &path("add.tier")]));
    assert!(out.contains("x : 1") && out.contains("y : 0"), "{out}");
    let out = tierflow(&["check", &path("exp.tier")]);
    let text = stdout(&out);
    assert!(text.contains("conflict core") && text.contains("u := y"), "{text}");
    let v = json(&tierflow(&["--json", "check", &path("badd.tier")]));
    assert_eq!(v["verdict"], "unsatisfiable");
    for d in v["core"].as_array().unwrap() {
        assert!(d["vars"].as_array().unwrap().iter().any(|x| x == "x"));
    }
}

#[test]
fn check_infers_missing_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("p.tier");
    std::fs::write(
        &f,
        "op >0 arity 1;\nop -1 arity 1;\nvars x : 1;\nthread t { while (x > 0) { x := x - 1; y := x } }\n",
    )
    .unwrap();
    let f = f.to_str().unwrap();
    assert_eq!(code(&tierflow(&["check", f])), 1);
    let out = tierflow(&["check", "--infer", f]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("y : "));
}

#[test]
fn run_reports_store_and_counters() {
    let out = tierflow(&["run", &path("add.tier"), "--input", "x=111", "--input", "y=11"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("y = 11111") && text.contains("t: 3"), "{text}");
    assert_eq!(
        code(&tierflow(&["run", &path("sync.tier"), "--scheduler", "round-robin"])),
        0
    );
    assert_eq!(code(&tierflow(&["run", &path("spin.tier"), "--fuel", "10"])), 1);
    assert_eq!(code(&tierflow(&["run", &path("exp.tier"), "--input", "x=11"])), 1);
    let out = tierflow(&[
        "run",
        &path("exp.tier"),
        "--unsafe-ok",
        "--input",
        "x=11",
        "--input",
        "y=1",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&tierflow(&["run", &path("add.tier"), "--scheduler", "nope"])), 2);
    assert_eq!(code(&tierflow(&["run", &path("add.tier"), "--input", "x"])), 2);
}

#[test]
fn run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    let out = tierflow(&[
        "run",
        &path("add.tier"),
        "--input",
        "x=11",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let lines: Vec<String> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("1 add "));
}

#[test]
fn explore_reports_range() {
    for n in [3usize, 4] {
        let x = format!("x={}", "1".repeat(n));
        let v = json(&tierflow(&[
            "--json",
            "explore",
            &path("zrange.tier"),
            "--max-steps",
            "500",
            "--input",
            &x,
            "--input",
            "y=111",
        ]));
        assert_eq!(v["limits_hit"], false);
        for s in v["terminal_stores"].as_array().unwrap() {
            let z = s.get("z").and_then(|z| z.as_str()).unwrap_or("");
            assert!(z.len() <= n, "{s}");
        }
    }
}

#[test]
fn ni_verdicts() {
    assert_eq!(
        code(&tierflow(&["ni", &path("add.tier"), "--trials", "200", "--seed", "7"])),
        0
    );
    assert_eq!(
        code(&tierflow(&[
            "ni",
            &path("shuffle.tier"),
            "--exhaustive",
            "--max-len",
            "3",
            "--trials",
            "30"
        ])),
        0
    );
    assert_eq!(code(&tierflow(&["ni", &path("leak.tier"), "--unsafe-ok"])), 1);
    assert_eq!(code(&tierflow(&["ni", &path("leak.tier")])), 1);
}

#[test]
fn measure_writes_csv_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("add.csv");
    let out = tierflow(&[
        "measure",
        &path("add.tier"),
        "--sizes",
        "1..32",
        "--vars",
        "x,y",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("selected degree: 1"));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("n,max_t,max_k,fuel_hit\n"));
    assert_eq!(table.lines().count(), 33);
    let out = tierflow(&[
        "measure",
        &path("exp.tier"),
        "--unsafe-ok",
        "--sizes",
        "1..14",
        "--vars",
        "x",
        "--input",
        "y=1",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("superpolynomial"));
}

#[test]
fn tm_compile_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("incr.tier");
    let out = tierflow(&["tm-compile", &path("incr.tm"), "-o", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&tierflow(&["check", out_path.to_str().unwrap()])), 0);
    let out = tierflow(&["run", out_path.to_str().unwrap(), "--input", "Input=1101"]);
    assert!(stdout(&out).contains("Out = 0011"), "{}", stdout(&out));
    assert_eq!(code(&tierflow(&["tm-compile", &path("add.tier")])), 2);
}

#[test]
fn fixed_seed_is_deterministic() {
    let args = [
        "--json",
        "--seed",
        "42",
        "ni",
        &path("shuffle.tier"),
        "--scheduler",
        "random",
        "--trials",
        "50",
    ];
    assert_eq!(tierflow(&args).stdout, tierflow(&args).stdout);
    let args = [
        "--seed",
        "9",
        "run",
        &path("zrange.tier"),
        "--scheduler",
        "random",
        "--input",
        "x=1111",
        "--input",
        "y=11",
    ];
    assert_eq!(tierflow(&args).stdout, tierflow(&args).stdout);
}
