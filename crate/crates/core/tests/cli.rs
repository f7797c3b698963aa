use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use popcone::cli::instances::{example1, example2, example3};
use popcone::cli::CliError;
use popcone::polynomial::{Domain, PopProblem};

fn popcone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popcone")).args(args).output().expect("spawn popcone")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, pop: &PopProblem) -> String {
    let p = dir.join(name);
    fs::write(&p, pop.to_json()).unwrap();
    p.display().to_string()
}

fn gen(example: &str, count: &str, seed: &str, dir: &Path) -> Vec<String> {
    let o = popcone(&["gen", "--example", example, "--count", count, "--seed", seed, "--outdir", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).lines().map(|l| fs::read_to_string(l).unwrap()).collect()
}

#[test]
fn gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = gen("4", "5", "7", a.path());
    assert_eq!(first, gen("4", "5", "7", b.path()));
    assert_ne!(first, gen("4", "5", "8", b.path()));
    for text in &first {
        let pop = PopProblem::from_json(text).unwrap();
        assert_eq!((pop.n, pop.domain), (3, Domain::Orthant));
        assert!(pop.constraints.len() >= 2);
    }
}

#[test]
fn example5_instances_have_four_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let files = gen("5", "10", "1", dir.path());
    assert_eq!(files.len(), 10);
    for text in files {
        assert_eq!(PopProblem::from_json(&text).unwrap().constraints.len(), 4);
    }
}

#[test]
fn relax_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = write(dir.path(), "ex1.json", &example1(3));
    let o = popcone(&["relax", &ex1, "--approach", "tensor", "--cone", "l"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("bound 1.000000 OPTIMAL"), "{}", stdout(&o));

    let ex2 = write(dir.path(), "ex2.json", &example2(2, 2));
    let o = popcone(&["relax", &ex2, "--approach", "quadratic", "--cone", "sdp"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("UNBOUNDED"), "{}", stdout(&o));

    let out = dir.path().join("dump.json");
    let o = popcone(&["relax", &ex1, "--cone", "l", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dump: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert!(dump["program"].is_object() && dump["report"].is_object());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(popcone(&["relax", bad.to_str().unwrap()]).status.code(), Some(2));

    let mut free = example3();
    free.domain = Domain::Free;
    let f = write(dir.path(), "free.json", &free);
    assert_eq!(popcone(&["relax", &f, "--cone", "dnn"]).status.code(), Some(3));

    assert_eq!(popcone(&["gen", "--example", "7", "--outdir", dir.path().to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(CliError::Numerical(String::new()).exit_code(), 4);
}

#[test]
fn compare_formats_agree_and_errors_do_not_stop_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "ex3.json", &example3());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[]").unwrap();
    let bad = bad.display().to_string();
    let run = |format: &str| {
        let o = popcone(&["compare", &good, &bad, "--budget", "20000", "--format", format]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let md = run("md");
    let csv = run("csv");
    let md_rows: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).skip(2).collect();
    let csv_rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    assert_eq!((md_rows.len(), csv_rows.len()), (2, 2), "{md}\n{csv}");
    let cells = |line: &str, sep: char| -> Vec<String> {
        line.split(sep).map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).take(5).collect()
    };
    for (m, c) in md_rows.iter().zip(&csv_rows) {
        assert_eq!(cells(m, '|'), cells(c, ','));
    }
    assert!(csv_rows[1].starts_with(&bad) && csv_rows[1].contains("ERR"));
    assert!(csv.lines().any(|l| l.starts_with("# mean ratio")));
}
