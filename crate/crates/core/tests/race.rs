//! The vector-clock race detector against a transitive-closure
//! happens-before oracle.

use ebf_core::exec::{detect_races, run, BugKind, Detectors, ExecConfig, Status};
use ebf_core::mir::parse_program;
use ebf_core::rng::SplitMix64;
use ebf_testkit::{naive_races, random_program, random_trace};

#[test]
fn detector_matches_closure_on_random_traces() {
    let mut rng = SplitMix64::new(31);
    let mut with_races = 0;
    for _ in 0..1_000 {
        let trace = random_trace(&mut rng, 200);
        let expected = naive_races(&trace);
        assert_eq!(detect_races(&trace), expected, "{:?}", trace);
        with_races += usize::from(!expected.is_empty());
    }
    assert!(with_races > 100);
}

#[test]
fn online_detector_agrees_with_closure_on_execution_traces() {
    let mut rng = SplitMix64::new(8);
    let config = ExecConfig {
        delay_max: 3,
        detectors: Detectors::all(),
        record_trace: true,
        ..ExecConfig::default()
    };
    let (mut racy, mut clean) = (0, 0);
    for _ in 0..150 {
        let g = random_program(&mut rng);
        let p = parse_program(&g.text).unwrap();
        for s in 0..20 {
            let out = run(&p, &[0, 1], s, &config);
            let raced = out.status == Status::BugFound && out.findings[0].kind == BugKind::DataRace;
            let races = naive_races(&out.trace);
            if raced {
                // The run stops at the first race, which is the last access.
                assert!(races.iter().any(|r| r.second == out.trace.len() - 1), "{}", g.text);
                racy += 1;
            } else {
                assert!(races.is_empty(), "{:?}\n{}", races, g.text);
                clean += 1;
            }
        }
    }
    assert!(racy > 50 && clean > 50, "{} racy, {} clean", racy, clean);
}

#[test]
fn figure_style_race_and_locked_variant() {
    let racy = "shared x = 0\nthread main:\n  t = create w\n  store x 1\n  join t\n  return\nthread w:\n  store x 2\n  return\n";
    let locked = "shared x = 0\nmutex m\nthread main:\n  t = create w\n  lock m\n  store x 1\n  unlock m\n  join t\n  return\nthread w:\n  lock m\n  store x 2\n  unlock m\n  return\n";
    let config = ExecConfig {
        detectors: Detectors::all(),
        record_trace: true,
        ..ExecConfig::default()
    };
    let out = run(&parse_program(racy).unwrap(), &[], 1, &config);
    assert_eq!(out.findings[0].kind, BugKind::DataRace);
    for seed in 0..200 {
        let out = run(&parse_program(locked).unwrap(), &[], seed, &ExecConfig { delay_max: 5, ..config.clone() });
        assert_eq!(out.status, Status::Completed);
        assert!(naive_races(&out.trace).is_empty());
    }
}
