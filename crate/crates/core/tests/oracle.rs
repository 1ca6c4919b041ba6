//! The model checker, the interpreter and the parser checked against an
//! independent reference interpreter that enumerates every interleaving.

use ebf_core::bmc::{bmc_check, BmcConfig, BmcVerdict};
use ebf_core::exec::{run, run_forced, ExecConfig, ExitReason, Status};
use ebf_core::mir::parse_program;
use ebf_core::rng::SplitMix64;
use ebf_testkit::{random_program, OracleProgram};

const DOMAIN: [i64; 4] = [-1, 0, 1, 2];

fn exhaustive_bmc() -> BmcConfig {
    BmcConfig {
        step_bound: 200,
        context_bound: 1_000,
        input_domain: DOMAIN.to_vec(),
        harvest_constants: false,
        ..BmcConfig::default()
    }
}

#[test]
fn generated_text_parses_to_the_generated_ast() {
    let mut rng = SplitMix64::new(1);
    for _ in 0..300 {
        let g = random_program(&mut rng);
        let p = parse_program(&g.text).unwrap_or_else(|e| panic!("{}\n{}", e, g.text));
        assert_eq!(OracleProgram::from_mir(&p).unwrap(), g.oracle, "{}", g.text);
    }
}

#[test]
fn bmc_verdicts_match_exhaustive_enumeration() {
    let mut rng = SplitMix64::new(2024);
    let (mut buggy, mut safe) = (0, 0);
    for _ in 0..200 {
        let g = random_program(&mut rng);
        let p = parse_program(&g.text).unwrap();
        let truth = g.oracle.enumerate(&DOMAIN);
        let report = bmc_check(&p, &exhaustive_bmc());
        match &report.verdict {
            BmcVerdict::Safe => {
                assert!(truth.bugs.is_empty(), "missed {:?}\n{}", truth.bugs, g.text);
                safe += 1;
            }
            BmcVerdict::Bug(cex) => {
                let kinds: Vec<_> = truth.bugs.iter().map(|b| b.kind()).collect();
                assert!(kinds.contains(&cex.finding.kind), "spurious {:?}\n{}", cex.finding, g.text);
                let again = run_forced(&p, &cex.inputs, &cex.schedule, exhaustive_bmc().detectors, false).unwrap();
                assert_eq!(again.first_finding(), Some(&cex.finding), "{}", g.text);
                buggy += 1;
            }
            BmcVerdict::Unknown(r) => panic!("unknown ({}) on a loop-free program\n{}", r, g.text),
        }
    }
    assert!(buggy >= 20 && safe >= 20, "unbalanced sample: {} buggy, {} safe", buggy, safe);
}

#[test]
fn state_hashing_does_not_change_verdicts() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..200 {
        let g = random_program(&mut rng);
        let p = parse_program(&g.text).unwrap();
        for k in [6, 12, 200] {
            for c in [1, 2, 12] {
                let on = BmcConfig {
                    step_bound: k,
                    context_bound: c,
                    ..exhaustive_bmc()
                };
                let off = BmcConfig {
                    state_hashing: false,
                    ..on.clone()
                };
                let a = bmc_check(&p, &on);
                let b = bmc_check(&p, &off);
                let class = |v: &BmcVerdict| match v {
                    BmcVerdict::Safe => 0,
                    BmcVerdict::Bug(_) => 1,
                    BmcVerdict::Unknown(_) => 2,
                };
                assert_eq!(class(&a.verdict), class(&b.verdict), "k={} C={}\n{}", k, c, g.text);
            }
        }
    }
}

#[test]
fn every_interpreter_run_is_a_reachable_outcome() {
    let mut rng = SplitMix64::new(5);
    let config = ExecConfig {
        delay_max: 3,
        ..ExecConfig::default()
    };
    for _ in 0..100 {
        let g = random_program(&mut rng);
        let p = parse_program(&g.text).unwrap();
        let truth = g.oracle.enumerate(&DOMAIN);
        let kinds: Vec<_> = truth.bugs.iter().map(|b| b.kind()).collect();
        for s in 0..60 {
            let inputs = [DOMAIN[(s % 4) as usize], DOMAIN[((s / 4) % 4) as usize]];
            let out = run(&p, &inputs, s * 7919, &config);
            match out.status {
                Status::BugFound => {
                    let f = out.first_finding().unwrap();
                    assert!(kinds.contains(&f.kind), "{:?} not reachable\n{}", f, g.text);
                }
                Status::Completed | Status::Exhausted(ExitReason::AssumeViolated) => {
                    assert!(truth.finals.contains(&out.shared), "{:?} not reachable\n{}", out.shared, g.text);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn unsynchronized_counter_final_values() {
    let text = "shared a = 0\nthread main:\n  t1 = create worker\n  t2 = create worker\n  join t1\n  join t2\n  return\nthread worker:\n  i = 1\nloop:\n  tmp = load a\n  store a tmp + 1\n  i = i + 1\n  if i <= 5 goto loop\n  return\n";
    let p = parse_program(text).unwrap();
    let oracle = OracleProgram::from_mir(&p).unwrap();
    let e = oracle.enumerate(&[0]);
    assert!(e.bugs.is_empty());
    let mut finals: Vec<i64> = e.finals.iter().map(|s| s[0]).collect();
    finals.sort();
    assert_eq!(finals, (2..=10).collect::<Vec<_>>());

    let with_assert = text.replace("  join t2\n  return", "  join t2\n  r = load a\n  assert r == 10\n  return");
    let p = parse_program(&with_assert).unwrap();
    match bmc_check(&p, &BmcConfig::default()).verdict {
        BmcVerdict::Bug(cex) => assert_eq!(cex.finding.kind, ebf_core::BugKind::AssertionFailure),
        v => panic!("expected a bug, got {:?}", v),
    }
}
