//! End-to-end tests of the `ebf` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ebf_core::mir::parse_program;

fn corpus(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel)
        .to_str()
        .unwrap()
        .to_string()
}

fn ebf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebf"))
        .args(args)
        .env_remove("EBF_SEED")
        .output()
        .expect("running ebf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{}: {}", e, stdout(o)))
}

fn out_dir(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

#[test]
fn missing_file_exits_4() {
    let o = ebf(&["check", "missing.cir"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.cir"));
}

#[test]
fn bad_flags_exit_4() {
    let o = ebf(&["check", &corpus("listing1.cir"), "--detectors", "bogus"]);
    assert_eq!(o.status.code(), Some(4));
    let o = ebf(&["check", &corpus("listing1.cir"), "--bmc-frac", "0.9", "--fuzz-frac", "0.9"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn parse_prints_a_program_that_parses_back() {
    let o = ebf(&["parse", &corpus("listing1.cir")]);
    assert_eq!(o.status.code(), Some(0));
    let printed = parse_program(&stdout(&o)).unwrap();
    let original = parse_program(&std::fs::read_to_string(corpus("listing1.cir")).unwrap()).unwrap();
    assert!(printed.same_structure(&original));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cir");
    std::fs::write(&bad, "thread main:\n  goto nowhere\n").unwrap();
    assert_eq!(ebf(&["parse", bad.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn safe_counter_is_safe() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&["check", &corpus("safe/safe_counter.cir"), "--work", "50000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("Safe"));
    assert!(out.join("report.json").exists());
    assert!(!out.join("witness_0.txt").exists());
}

#[test]
fn listing_is_unsafe_and_its_witness_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let path = corpus("listing1.cir");
    let o = ebf(&["check", &path, "--budget", "60s", "--work", "200000", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let witness = out.join("witness_0.txt");
    assert!(stdout(&o).contains(witness.to_str().unwrap()));

    let r = ebf(&["replay", &path, witness.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stdout(&r).contains("AssertionFailure at main:9"));

    let r = ebf(&["replay", &path, witness.to_str().unwrap(), "--json"]);
    assert_eq!(json(&r)["reproduced"], true);
}

#[test]
fn replay_rejects_foreign_and_malformed_witnesses() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&["bmc", &corpus("listing1.cir"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let witness = out.join("witness_0.txt");

    let r = ebf(&["replay", &corpus("safe/safe_counter.cir"), witness.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("fingerprint"));

    let junk = tmp.path().join("junk.txt");
    std::fs::write(&junk, "not a witness\n").unwrap();
    let r = ebf(&["replay", &corpus("listing1.cir"), junk.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
}

#[test]
fn fuzz_writes_crash_seeds_that_reproduce() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let path = corpus("listing1.cir");
    let o = ebf(&["fuzz", &path, "--execs", "5000", "--seed", "3", "--json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report = json(&o);
    assert!(report["crashes"].as_u64().unwrap() >= 1);
    assert_eq!(report["config"]["delay_max"], "100");
    assert!(out.join("crash_0.seed").exists());

    let seeds = tmp.path().join("seeds");
    std::fs::create_dir(&seeds).unwrap();
    std::fs::copy(out.join("crash_0.seed"), seeds.join("s")).unwrap();
    let again = out_dir(&tmp, "again");
    let o = ebf(&["fuzz", &path, "--execs", "50", "--seeds", seeds.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fuzz_without_delays_misses_the_listing_bug() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&[
        "fuzz", &corpus("listing1.cir"), "--delay-max", "0", "--execs", "100000", "--seed", "7", "--json", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["crashes"], 0);
}

#[test]
fn parallel_fuzzing_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = out_dir(&tmp, name);
        let o = ebf(&[
            "fuzz", &corpus("schedule/lost_update.cir"), "--execs", "4000", "--jobs", "2", "--json", "--out",
            out.to_str().unwrap(),
        ]);
        let mut v = json(&o);
        let o = v.as_object_mut().unwrap();
        o.remove("timings_ms");
        o.remove("witness");
        o.remove("crash_seeds");
        v
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let o = Command::new(env!("CARGO_BIN_EXE_ebf"))
        .args(["bmc", &corpus("safe/safe_counter.cir"), "--json", "--out", out.to_str().unwrap()])
        .env("EBF_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["seed"], 11);
}

#[test]
fn bmc_on_an_unbounded_program_is_unknown() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let bomb = corpus("detectors/thread_bomb.cir");
    let o = ebf(&["bmc", &bomb, "-k", "12", "--json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(json(&o)["notes"][0].as_str().unwrap().contains("bounds"));
    let o = ebf(&["bmc", &bomb, "--budget", "1s", "--json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(json(&o)["notes"][0].as_str().unwrap().contains("budget"));
}

#[test]
fn empty_corpus_gives_an_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("corpus");
    std::fs::create_dir(&dir).unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&["sweep", dir.to_str().unwrap(), "--axis", "delay-max", "--values", "0,100", "--json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let t = json(&o);
    assert_eq!(t["programs"], 0);
    for c in t["columns"].as_array().unwrap() {
        assert_eq!(c["correct"], 0);
        assert_eq!(c["false"], 0);
        assert_eq!(c["other"], 0);
    }
}

#[test]
fn sweep_skips_programs_without_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("corpus");
    std::fs::create_dir(&dir).unwrap();
    for name in ["lost_update", "lock_inversion"] {
        std::fs::copy(corpus(&format!("schedule/{}.cir", name)), dir.join(format!("{}.cir", name))).unwrap();
    }
    std::fs::copy(corpus("schedule/lost_update.expected"), dir.join("lost_update.expected")).unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&[
        "sweep", dir.to_str().unwrap(), "--axis", "delay-max", "--values", "0,100", "--execs", "20000", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0].split_whitespace().collect::<Vec<_>>(), ["delay-max", "0", "100"]);
    assert_eq!(rows[1].split_whitespace().collect::<Vec<_>>(), ["correct", "0", "1"]);
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(t["programs"], 1);
}

#[test]
fn allocation_sweep_rejects_bad_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "o");
    let o = ebf(&["sweep", &corpus("safe"), "--axis", "allocation", "--values", "6:5:4,oops", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}
