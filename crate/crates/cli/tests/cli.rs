use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GTF: &str = env!("CARGO_BIN_EXE_gtf");

fn grammars() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/grammars")
}

fn gtf(args: &[&str]) -> Output {
    Command::new(GTF).args(args).output().expect("gtf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn pocs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir.join("poc"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

#[test]
fn analyze_prints_one_row_per_alternative() {
    let g = grammars();
    let out = gtf(&[
        "analyze",
        "--grammar",
        g.join("toy.y").to_str().unwrap(),
        "--tokens",
        g.join("toy.tok").to_str().unwrap(),
        "--placeholders",
        g.join("toy.ph").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("nonterminal,index,label,gdepth,recursive")
    );
    let rows: Vec<&str> = lines.collect();
    let report = String::from_utf8_lossy(&out.stderr);
    let alternatives: usize = report
        .lines()
        .find_map(|l| l.strip_prefix("alternatives: "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(rows.len(), alternatives);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
    assert!(report.contains("grammar edges:"));
}

#[test]
fn generate_zero_is_empty() {
    let out = gtf(&["generate", "--count", "0"]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn generate_is_deterministic_per_seed() {
    let a = gtf(&["generate", "--count", "20", "--seed", "4"]);
    let b = gtf(&["generate", "--count", "20", "--seed", "4"]);
    let c = gtf(&["generate", "--count", "20", "--seed", "5"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a).lines().count(), 20);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn fuzz_then_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = gtf(&[
        "fuzz",
        "--max-sequences",
        "200",
        "--seed",
        "3",
        "--output-dir",
        out_dir,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("sequences 200 "));
    assert!(dir.path().join("stats.csv").exists());
    let files = pocs(dir.path());
    assert!(!files.is_empty());
    for f in &files {
        let r = gtf(&["replay", f.to_str().unwrap()]);
        assert_eq!(code(&r), 0, "{}", stdout(&r));
        assert!(stdout(&r).starts_with("MATCH "));
    }

    // a tampered key no longer matches
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let bad = dir.path().join("bad.sql");
    let line = text
        .lines()
        .find(|l| l.starts_with("-- crash-key: "))
        .unwrap();
    std::fs::write(
        &bad,
        text.replace(line, "-- crash-key: crash 4242 select_stmt"),
    )
    .unwrap();
    let r = gtf(&["replay", bad.to_str().unwrap()]);
    assert_eq!(code(&r), 4);
    assert!(stdout(&r).starts_with("MISMATCH expected crash 4242 select_stmt observed "));
}

#[test]
fn fuzz_over_external_toy_target() {
    let dir = tempfile::tempdir().unwrap();
    let target = format!("{GTF} toy-target");
    let out = gtf(&[
        "fuzz",
        "--max-sequences",
        "60",
        "--target-cmd",
        &target,
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let tuples: u64 = text
        .split_whitespace()
        .skip_while(|w| *w != "tuples")
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(tuples > 0, "{text}");
    // the planted CREATE TABLE bug surfaces as SIGSEGV
    assert!(text.contains("crash 11 create_table_stmt"), "{text}");
    for f in pocs(dir.path()) {
        let r = gtf(&["replay", f.to_str().unwrap(), "--target-cmd", &target]);
        assert_eq!(code(&r), 0, "{}", stdout(&r));
    }
}

#[test]
fn exit_codes() {
    assert_eq!(code(&gtf(&["frobnicate"])), 1);
    assert_eq!(code(&gtf(&["generate", "--count", "x"])), 1);
    assert_eq!(code(&gtf(&["analyze", "--grammar", "/nonexistent/g.y"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&gtf(&["fuzz", "--config", cfg.to_str().unwrap()])), 2);

    let bad_grammar = dir.path().join("g.y");
    std::fs::write(&bad_grammar, "s: s ;\n").unwrap();
    assert_eq!(
        code(&gtf(&[
            "generate",
            "--grammar",
            bad_grammar.to_str().unwrap()
        ])),
        2
    );

    let aborted = gtf(&[
        "fuzz",
        "--max-sequences",
        "5",
        "--target-cmd",
        "/nonexistent/target",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&aborted), 3);

    let not_a_poc = dir.path().join("p.sql");
    std::fs::write(&not_a_poc, "SELECT 1\n").unwrap();
    assert_eq!(code(&gtf(&["replay", not_a_poc.to_str().unwrap()])), 2);
}

#[test]
fn help_lists_config_keys() {
    let out = gtf(&["fuzz", "--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for key in [
        "map_size",
        "epsilon",
        "depth_threshold",
        "mutation_prob",
        "workers",
        "budget_secs",
        "no_coverage",
    ] {
        assert!(text.contains(key), "{key} missing from help");
    }
}
