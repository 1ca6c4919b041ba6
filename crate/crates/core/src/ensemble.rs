//! Sequential model-checker-then-fuzzer ensemble.
//!
//! The model checker runs first. A counterexample's inputs become the
//! first fuzzer seed; the remaining seeds are random. The two engine
//! verdicts are then combined by a fixed decision table:
//!
//! | model checker | fuzzer  | outcome  |
//! |---------------|---------|----------|
//! | Safe          | Unknown | Safe     |
//! | Safe          | Bug     | Conflict |
//! | Bug           | any     | Unsafe   |
//! | Unknown       | Bug     | Unsafe   |
//! | Unknown       | Unknown | Unknown  |
//!
//! Budgets are a wall time (needs a [`Clock`]) and optional work units,
//! both split by the configured fractions. Work units cap the model
//! checker's states and the fuzzer's executions, which makes a run
//! independent of machine speed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use crate::bmc::{bmc_check_until, BmcConfig, BmcReport, BmcVerdict, Counterexample};
use crate::exec::{run_forced, ExecConfig, Finding};
use crate::gbf::{crash_report, fuzz, FuzzBudget, FuzzResult, FuzzSeed};
use crate::mir::Program;
use crate::rng::SplitMix64;
use crate::time::{Clock, Deadline};
use crate::witness::{record, CrashReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EngineVerdict {
    Safe,
    Bug,
    Unknown,
}

impl fmt::Display for EngineVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineVerdict::Safe => "Safe",
            EngineVerdict::Bug => "Bug",
            EngineVerdict::Unknown => "Unknown",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Safe,
    Unsafe,
    Unknown,
    Conflict,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Safe => "Safe",
            Outcome::Unsafe => "Unsafe",
            Outcome::Unknown => "Unknown",
            Outcome::Conflict => "Conflict",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The decision table. A fuzzer cannot prove safety, so a `Safe` fuzzer
/// verdict is read as `Unknown`.
pub fn aggregate(bmc: EngineVerdict, gbf: EngineVerdict) -> Outcome {
    use EngineVerdict::*;
    match (bmc, gbf) {
        (Bug, _) => Outcome::Unsafe,
        (Safe, Bug) => Outcome::Conflict,
        (Safe, _) => Outcome::Safe,
        (Unknown, Bug) => Outcome::Unsafe,
        (Unknown, _) => Outcome::Unknown,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub total_budget: Option<Duration>,
    /// Work units shared by the engines: model-checker states and fuzzer
    /// executions.
    pub work_units: Option<u64>,
    pub bmc_frac: f64,
    pub fuzz_frac: f64,
    pub overhead_frac: f64,
    pub seed_count: usize,
    pub seed_range: (i64, i64),
    pub exec: ExecConfig,
    pub bmc: BmcConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            total_budget: None,
            work_units: None,
            bmc_frac: 6.0 / 15.0,
            fuzz_frac: 5.0 / 15.0,
            overhead_frac: 4.0 / 15.0,
            seed_count: 8,
            seed_range: (0, 5000),
            exec: ExecConfig::default(),
            bmc: BmcConfig::default(),
        }
    }
}

impl EnsembleConfig {
    /// Set the engine fractions and give the rest to overhead.
    pub fn with_split(mut self, bmc: f64, fuzz: f64) -> Self {
        self.bmc_frac = bmc;
        self.fuzz_frac = fuzz;
        self.overhead_frac = (1.0 - bmc - fuzz).max(0.0);
        self
    }

    pub fn check(&self) -> Result<(), &'static str> {
        let fr = [self.bmc_frac, self.fuzz_frac, self.overhead_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err("budget fractions must lie in [0, 1]");
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err("budget fractions must sum to 1");
        }
        if self.seed_count == 0 {
            return Err("seed count must be positive");
        }
        if self.seed_range.0 > self.seed_range.1 {
            return Err("seed value range is empty");
        }
        self.exec.check()?;
        self.bmc.check()
    }

    fn share(&self, frac: f64) -> (Option<Duration>, Option<u64>) {
        (
            self.total_budget.map(|b| b.mul_f64(frac)),
            self.work_units.map(|w| (w as f64 * frac + 0.5) as u64),
        )
    }
}

/// A pluggable bounded checker. Errors are turned into `Unknown`.
pub trait BoundedChecker {
    /// Check within `deadline`, visiting at most `max_states` states when
    /// given.
    fn check(
        &mut self,
        program: &Program,
        deadline: Deadline<'_>,
        max_states: Option<u64>,
    ) -> Result<BmcReport, String>;
}

/// The built-in explicit-state model checker.
pub struct BuiltinBmc(pub BmcConfig);

impl BoundedChecker for BuiltinBmc {
    fn check(
        &mut self,
        program: &Program,
        deadline: Deadline<'_>,
        max_states: Option<u64>,
    ) -> Result<BmcReport, String> {
        let mut cfg = self.0.clone();
        if let Some(cap) = max_states {
            cfg.max_states = Some(cfg.max_states.map_or(cap, |m| m.min(cap)));
        }
        Ok(bmc_check_until(program, &cfg, deadline))
    }
}

/// Seeds for the fuzzer: the counterexample's inputs first (if any), then
/// random seeds whose input lanes are uniform in the seed range.
pub fn make_seeds(
    program: &Program,
    bmc: &BmcVerdict,
    config: &EnsembleConfig,
    rng: &mut SplitMix64,
) -> Vec<FuzzSeed> {
    let mut seeds = Vec::with_capacity(config.seed_count);
    if let BmcVerdict::Bug(cex) = bmc {
        seeds.push(crate::bmc::counterexample_to_seed(cex, rng));
    }
    let lanes = program.nondet_sites().max(1);
    let (lo, hi) = config.seed_range;
    while seeds.len() < config.seed_count {
        let inputs: Vec<i64> = (0..lanes).map(|_| rng.range_i64(lo, hi)).collect();
        seeds.push(FuzzSeed::encode(&inputs, rng.next_u64()));
    }
    seeds
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Bmc,
    Gbf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalVerdict {
    pub outcome: Outcome,
    pub bmc: EngineVerdict,
    pub gbf: EngineVerdict,
    /// Engines whose verdicts decided the outcome.
    pub contributors: Vec<Engine>,
    pub bmc_report: Option<BmcReport>,
    pub counterexample: Option<Counterexample>,
    pub fuzz: Option<FuzzResult>,
    /// Findings of each engine that reported a bug.
    pub findings: Vec<(Engine, Finding)>,
    /// Primary witness: the model checker's when it found a bug, otherwise
    /// the fuzzer's.
    pub witness: Option<CrashReport>,
    pub timings: Timings,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Timings {
    pub bmc: Duration,
    pub fuzz: Duration,
    pub overhead: Duration,
}

pub fn run_ebf(program: &Program, config: &EnsembleConfig, master_seed: u64, clock: &dyn Clock) -> FinalVerdict {
    run_ebf_with(
        program,
        config,
        master_seed,
        clock,
        &mut BuiltinBmc(config.bmc.clone()),
    )
}

pub fn run_ebf_with(
    program: &Program,
    config: &EnsembleConfig,
    master_seed: u64,
    clock: &dyn Clock,
    checker: &mut dyn BoundedChecker,
) -> FinalVerdict {
    let mut rng = SplitMix64::new(master_seed);
    let mut notes = Vec::new();
    let mut timings = Timings::default();
    let start = Deadline::never(clock);

    // Phase 1: model checking.
    let t0 = clock.now();
    let (bmc_time, bmc_work) = config.share(config.bmc_frac);
    let (bmc_verdict, bmc_report) = if config.bmc_frac > 0.0 && bmc_work != Some(0) {
        match checker.check(program, start.within(bmc_time), bmc_work) {
            Ok(report) => (report.verdict.clone(), Some(report)),
            Err(e) => {
                log::warn!("model checker failed: {}", e);
                notes.push(format!("model checker error: {}", e));
                (BmcVerdict::Unknown(crate::bmc::UnknownReason::Budget), None)
            }
        }
    } else {
        notes.push("model checker skipped".into());
        (BmcVerdict::Unknown(crate::bmc::UnknownReason::Budget), None)
    };
    timings.bmc = clock.now().saturating_sub(t0);
    let bmc = match &bmc_verdict {
        BmcVerdict::Safe => EngineVerdict::Safe,
        BmcVerdict::Bug(_) => EngineVerdict::Bug,
        BmcVerdict::Unknown(r) => {
            notes.push(format!("model checker unknown: {}", r));
            EngineVerdict::Unknown
        }
    };

    // Phase 2: fuzzing.
    let t1 = clock.now();
    let (fuzz_time, fuzz_work) = config.share(config.fuzz_frac);
    let fuzz_result = if config.fuzz_frac > 0.0 && fuzz_work != Some(0) {
        let seeds = make_seeds(program, &bmc_verdict, config, &mut rng);
        let budget = FuzzBudget {
            executions: fuzz_work,
            deadline: start.within(fuzz_time),
            first_bug: false,
        };
        let fuzz_seed = rng.next_u64();
        Some(fuzz(program, &seeds, &budget, &config.exec, fuzz_seed))
    } else {
        notes.push("fuzzer skipped".into());
        None
    };
    timings.fuzz = clock.now().saturating_sub(t1);
    let gbf = match &fuzz_result {
        Some(r) if r.found_bug() => EngineVerdict::Bug,
        _ => EngineVerdict::Unknown,
    };

    // Phase 3: aggregation and witness.
    let t2 = clock.now();
    let outcome = aggregate(bmc, gbf);
    let mut findings = Vec::new();
    let cex = match &bmc_verdict {
        BmcVerdict::Bug(c) => Some(c.clone()),
        _ => None,
    };
    if let Some(c) = &cex {
        findings.push((Engine::Bmc, c.finding));
    }
    if let Some(r) = &fuzz_result {
        if let Some(c) = r.crashes.first() {
            findings.push((Engine::Gbf, c.outcome.findings[0]));
        }
    }
    let echo = |engine: &str, seed: u64| -> Vec<(String, String)> {
        alloc::vec![
            ("engine".into(), engine.into()),
            ("seed".into(), format!("{}", seed)),
        ]
    };
    let witness = if let Some(c) = &cex {
        let mut e = echo("bmc", master_seed);
        e.push(("detectors".into(), config.bmc.detectors.to_list()));
        run_forced(program, &c.inputs, &c.schedule, config.bmc.detectors, true)
            .ok()
            .and_then(|out| record(program, &out, 0, e))
    } else if let Some(crash) = fuzz_result.as_ref().and_then(|r| r.crashes.first()) {
        let mut e = echo("gbf", master_seed);
        e.extend(exec_echo(&config.exec));
        crash_report(program, &crash.seed, &config.exec, 0, e)
    } else {
        None
    };
    if findings.len() == 2 && findings[0].1.kind != findings[1].1.kind {
        notes.push(format!(
            "engines disagree on bug kind: model checker {}, fuzzer {}",
            findings[0].1.kind, findings[1].1.kind
        ));
    }
    let contributors = match outcome {
        Outcome::Conflict => alloc::vec![Engine::Bmc, Engine::Gbf],
        Outcome::Safe => alloc::vec![Engine::Bmc],
        Outcome::Unsafe => findings.iter().map(|(e, _)| *e).collect(),
        Outcome::Unknown => Vec::new(),
    };
    timings.overhead = clock.now().saturating_sub(t2);
    FinalVerdict {
        outcome,
        bmc,
        gbf,
        contributors,
        bmc_report,
        counterexample: cex,
        fuzz: fuzz_result,
        findings,
        witness,
        timings,
        notes,
    }
}

/// `key=value` pairs describing an interpreter configuration.
pub fn exec_echo(c: &ExecConfig) -> Vec<(String, String)> {
    alloc::vec![
        ("max_threads".into(), format!("{}", c.thread_threshold)),
        ("delay_max".into(), format!("{}", c.delay_max)),
        ("exit_prob".into(), format!("{}", c.exit_prob)),
        ("detectors".into(), c.detectors.to_list()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Detectors;
    use crate::mir::parse_program;
    use crate::time::NoClock;
    use EngineVerdict::{Bug, Safe, Unknown};

    const LISTING1: &str = "shared a = 0\nthread main:\n  t1 = create worker\n  t2 = create worker\n  join t1\n  join t2\n  r = load a\n  assert r == 10\n  return\nthread worker:\n  i = 1\nloop:\n  tmp = load a\n  store a tmp + 1\n  i = i + 1\n  if i <= 5 goto loop\n  return\n";
    const SAFE: &str = "shared a = 0\nmutex m\nthread main:\n  t1 = create w\n  t2 = create w\n  join t1\n  join t2\n  r = load a\n  assert r == 2\n  return\nthread w:\n  lock m\n  x = load a\n  store a x + 1\n  unlock m\n  return\n";
    const RACY: &str = "shared a = 0\nthread main:\n  t1 = create w\n  t2 = create w\n  join t1\n  join t2\n  return\nthread w:\n  store a 1\n  return\n";

    fn cfg(work: u64) -> EnsembleConfig {
        EnsembleConfig {
            work_units: Some(work),
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn decision_table() {
        assert_eq!(aggregate(Safe, Unknown), Outcome::Safe);
        assert_eq!(aggregate(Safe, Bug), Outcome::Conflict);
        assert_eq!(aggregate(Bug, Unknown), Outcome::Unsafe);
        assert_eq!(aggregate(Bug, Bug), Outcome::Unsafe);
        assert_eq!(aggregate(Unknown, Bug), Outcome::Unsafe);
        assert_eq!(aggregate(Unknown, Unknown), Outcome::Unknown);
    }

    #[test]
    fn seeds_start_with_counterexample_inputs() {
        let p = parse_program("thread main:\n  x = nondet()\n  assert x != 1\n  return\n").unwrap();
        let report = crate::bmc::bmc_check(&p, &BmcConfig::default());
        let seeds = make_seeds(&p, &report.verdict, &EnsembleConfig::default(), &mut SplitMix64::new(1));
        assert_eq!(seeds.len(), 8);
        assert_eq!(seeds[0].inputs(), [1]);

        let unknown = BmcVerdict::Unknown(crate::bmc::UnknownReason::Bounds);
        let seeds = make_seeds(&p, &unknown, &EnsembleConfig::default(), &mut SplitMix64::new(1));
        assert_eq!(seeds.len(), 8);
        assert!(seeds.iter().all(|s| s.inputs().len() == 1 && (0..=5000).contains(&s.inputs()[0])));

        let one = EnsembleConfig {
            seed_count: 1,
            ..EnsembleConfig::default()
        };
        assert_eq!(make_seeds(&p, &BmcVerdict::Safe, &one, &mut SplitMix64::new(1)).len(), 1);
    }

    #[test]
    fn listing1_is_unsafe_with_model_checker_witness() {
        let p = parse_program(LISTING1).unwrap();
        let v = run_ebf(&p, &cfg(30_000), 7, &NoClock);
        assert_eq!(v.outcome, Outcome::Unsafe);
        assert_eq!(v.bmc, Bug);
        let w = v.witness.unwrap();
        assert_eq!(w.config_value("engine"), Some("bmc"));
        let out = crate::witness::replay(&p, &w).unwrap();
        assert!(w.reproduced_by(&p, &out));
    }

    #[test]
    fn locked_counter_is_safe() {
        let p = parse_program(SAFE).unwrap();
        let v = run_ebf(&p, &cfg(3_000), 7, &NoClock);
        assert_eq!((v.bmc, v.gbf, v.outcome), (Safe, Unknown, Outcome::Safe));
        assert!(v.witness.is_none());
    }

    #[test]
    fn fuzzer_only_race_is_a_conflict() {
        let p = parse_program(RACY).unwrap();
        let mut c = cfg(6_000);
        c.exec.detectors = Detectors::all();
        let v = run_ebf(&p, &c, 3, &NoClock);
        assert_eq!(v.outcome, Outcome::Conflict);
        let w = v.witness.unwrap();
        assert_eq!(w.config_value("engine"), Some("gbf"));
        assert_eq!(w.first_finding().unwrap().0, crate::exec::BugKind::DataRace);
    }

    #[test]
    fn no_fuzzing_reduces_to_model_checker() {
        for src in [LISTING1, SAFE, RACY] {
            let p = parse_program(src).unwrap();
            let c = cfg(30_000).with_split(1.0, 0.0);
            let v = run_ebf(&p, &c, 1, &NoClock);
            assert_eq!(v.gbf, Unknown);
            assert_eq!(v.outcome, aggregate(v.bmc, Unknown));
        }
    }

    struct Failing;

    impl BoundedChecker for Failing {
        fn check(&mut self, _: &Program, _: Deadline<'_>, _: Option<u64>) -> Result<BmcReport, String> {
            Err("solver crashed".into())
        }
    }

    #[test]
    fn checker_errors_become_unknown() {
        let p = parse_program(SAFE).unwrap();
        let v = run_ebf_with(&p, &cfg(1_000), 1, &NoClock, &mut Failing);
        assert_eq!(v.bmc, Unknown);
        assert_eq!(v.outcome, Outcome::Unknown);
        assert!(v.notes.iter().any(|n| n.contains("solver crashed")));
    }

    #[test]
    fn split_must_sum_to_one() {
        assert!(EnsembleConfig::default().check().is_ok());
        let c = EnsembleConfig {
            bmc_frac: 0.9,
            ..EnsembleConfig::default()
        };
        assert!(c.check().is_err());
    }
}
