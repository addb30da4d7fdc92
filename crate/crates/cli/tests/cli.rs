use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn mcsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsp")).args(args).env_remove("MCSP_CAP").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(rel: &str) -> String {
    corpus(rel).to_string_lossy().into_owned()
}

#[test]
fn xor_triangle_is_unsat_with_a_cycle() {
    let o = mcsp(&[
        "solve",
        &p("examples/xor-triangle.inst"),
        "--template",
        &p("examples/xor.tmpl"),
        "--algebra",
        &p("examples/z2.alg"),
        "--certificate",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("UNSAT\n"));
    assert!(out.contains("cycle: "), "{out}");
    assert!(out.contains("offsets sum to 1 in a group of order 2"), "{out}");
}

#[test]
fn z3_triangle_is_sat_under_assume_core() {
    let o = mcsp(&["solve", &p("examples/z3-plus-one.inst"), "--algebra", &p("examples/z3.alg"), "--assume-core"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], "SAT");
    let vals: Vec<u32> = lines[1..].iter().map(|l| l.split(' ').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 3);
    assert_eq!(vals[1], (vals[0] + 1) % 3);
    assert_eq!(vals[2], (vals[1] + 1) % 3);
}

#[test]
fn non_core_input_is_an_error_without_assume_core() {
    let o = mcsp(&["solve", &p("examples/z3-plus-one.inst"), "--algebra", &p("examples/z3.alg")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a core"));
    let o = mcsp(&["core-check", &p("examples/z3-plus-one.inst")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("not a core\n"));
}

#[test]
fn oracle_counts_triangle_colourings() {
    let o = mcsp(&["oracle", &p("oracle/triangle-3col.inst"), "--count"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "6");
    let o = mcsp(&["oracle", &p("oracle/triangle-3col.inst"), "--all"]);
    assert_eq!(stdout(&o).lines().count(), 7);
}

#[test]
fn cap_comes_from_the_flag_or_the_environment() {
    let o = mcsp(&["oracle", &p("oracle/triangle-3col.inst"), "--cap", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_mcsp"))
        .args(["oracle", &p("oracle/triangle-3col.inst")])
        .env("MCSP_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap of 2"));
}

#[test]
fn example_corpus_agrees_with_the_oracle() {
    let o = mcsp(&["compare", "--batch", &p("examples"), "--assume-core"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).ends_with("agreement 3/3 (disagree 0, oracle skipped 0, precondition failed 0, errors 0)\n"));
}

#[test]
fn generated_corpus_agrees_with_the_oracle() {
    let o = mcsp(&["compare", "--batch", &p("batch"), "--assume-core"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("agreement 100/100"), "{out}");
}

#[test]
fn single_compare_reports_a_verdict() {
    let o = mcsp(&[
        "compare",
        &p("examples/xor-triangle.inst"),
        "--template",
        &p("examples/xor.tmpl"),
        "--algebra",
        &p("examples/z2.alg"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "AGREE (both UNSAT)");
}

#[test]
fn generation_is_deterministic() {
    let dir = std::env::temp_dir().join(format!("mcsp-gen-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let a = dir.join("a").to_string_lossy().into_owned();
    let b = dir.join("b").to_string_lossy().into_owned();
    for out in [&a, &b] {
        let o = mcsp(&["gen", "--family", "mixed-coloured", "-q", "3", "-n", "5", "--density", "0.7", "--seed", "11", "-o", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for ext in [".inst", ".alg"] {
        let x = std::fs::read(format!("{a}{ext}")).unwrap();
        let y = std::fs::read(format!("{b}{ext}")).unwrap();
        assert_eq!(x, y);
    }
    let overrides: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("a.var"))
        .collect();
    assert_eq!(overrides.len(), 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn planted_majority_domain_is_emptied_by_reduce() {
    let dir = std::env::temp_dir().join(format!("mcsp-reduce-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let prefix = dir.join("m").to_string_lossy().into_owned();
    let o = mcsp(&["gen", "--family", "mixed-coloured", "-q", "3", "-n", "4", "--density", "1", "--seed", "5", "-o", &prefix]);
    let planted = stdout(&o);
    assert!(planted.starts_with("planted majority domain at x"), "{planted}");
    let var = planted.trim().rsplit('x').next().unwrap().to_string();
    let o = mcsp(&[
        "reduce",
        &format!("{prefix}.inst"),
        "--algebra",
        &format!("{prefix}.alg"),
        "--override",
        &format!("{var}={prefix}.var{var}.alg"),
        "--explain",
        &format!("{var}=0"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains(&format!("remove 0 from x{var}: endpoint block of yellow edge")), "{out}");
    assert!(out.trim_end().ends_with("UNSAT"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn propagate_and_binarize_and_colour() {
    let o = mcsp(&["propagate", &p("examples/xor-triangle.inst"), "--template", &p("examples/xor.tmpl")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("SAT-POSSIBLE\n"));

    let o = mcsp(&["binarize", &p("examples/parity.inst"), "--template", &p("examples/xor.tmpl")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("# x2 = (x1,x2)"));
    assert!(out.contains("vars 16"));

    let o = mcsp(&["colour", &p("examples/min3.alg")]);
    assert_eq!(stdout(&o), "0 1 red f(x1,x2) thin\n0 2 red f(x1,x2) thin\n1 2 red f(x1,x2) thin\nconnected\n");
    let o = mcsp(&["colour", &p("examples/majority2.alg")]);
    assert!(stdout(&o).starts_with("0 1 yellow"));
}

#[test]
fn malformed_files_exit_with_2_and_a_line_number() {
    let dir = std::env::temp_dir().join(format!("mcsp-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.alg");
    std::fs::write(&f, "universe 2\noperation m 1\n0 -> 1\n1 -> 1\nend\nflag idempotent\n").unwrap();
    let o = mcsp(&["colour", &f.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6: idempotence violated at x=0"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}
