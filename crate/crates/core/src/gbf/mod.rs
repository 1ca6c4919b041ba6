//! Coverage-guided gray-box fuzzing.
//!
//! Seeds are picked from the queue round-robin. Each pick yields
//! `1 + draw % 16` independent mutants, and each mutant is executed once.
//! Buggy runs are counted, and kept as crashes when they are the first to
//! show their bug kind and location or reach an edge no earlier crash
//! reached. Other runs that reach a new branch edge add their seed to the
//! queue. The seed bytes drive both the program
//! inputs and the delay generator, so mutating a seed perturbs the
//! interleaving as well as the data.

use alloc::string::String;
use alloc::vec::Vec;

use crate::exec::{run, BugKind, Coverage, ExecConfig, ExecOutcome, Location};
use crate::mir::Program;
use crate::rng::SplitMix64;
use crate::time::{Deadline, NoClock};
use crate::witness::{record, CrashReport};

mod seed;

pub use seed::{apply as apply_mutation, mutate_input, FuzzSeed, Mutation};

/// When to stop fuzzing. Both limits apply when both are set.
#[derive(Clone, Copy, Debug)]
pub struct FuzzBudget<'c> {
    pub executions: Option<u64>,
    pub deadline: Deadline<'c>,
    /// Stop at the first crash.
    pub first_bug: bool,
}

impl FuzzBudget<'static> {
    pub fn executions(n: u64) -> Self {
        FuzzBudget {
            executions: Some(n),
            deadline: Deadline::never(&NoClock),
            first_bug: false,
        }
    }
}

impl<'c> FuzzBudget<'c> {
    pub fn until(deadline: Deadline<'c>) -> Self {
        FuzzBudget {
            executions: None,
            deadline,
            first_bug: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    FirstBug,
    SeedsExhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crash {
    pub seed: FuzzSeed,
    pub outcome: ExecOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzResult {
    /// Unique crashes, in discovery order.
    pub crashes: Vec<Crash>,
    /// Buggy executions, including duplicates of kept crashes.
    pub crash_count: u64,
    pub queue: Vec<FuzzSeed>,
    pub coverage: Coverage,
    pub executions: u64,
    pub stop: StopReason,
}

impl FuzzResult {
    /// Distinct `(kind, location)` pairs of first findings, with the index
    /// of the first crash showing each.
    pub fn distinct_crashes(&self) -> Vec<(BugKind, Location, usize)> {
        let mut out: Vec<(BugKind, Location, usize)> = Vec::new();
        for (i, c) in self.crashes.iter().enumerate() {
            if let Some(f) = c.outcome.first_finding() {
                if !out.iter().any(|(k, l, _)| *k == f.kind && *l == f.location) {
                    out.push((f.kind, f.location, i));
                }
            }
        }
        out
    }

    pub fn found_bug(&self) -> bool {
        !self.crashes.is_empty()
    }
}

/// `true` iff `run` contains an edge missing from `global`.
pub fn covers_new_trace(global: &Coverage, run: &Coverage) -> bool {
    run.iter().any(|e| !global.contains(e))
}

/// Per-execution record handed to a [`fuzz_observed`] observer.
pub struct FuzzStep<'a> {
    pub seed: &'a FuzzSeed,
    pub outcome: &'a ExecOutcome,
    pub new_coverage: bool,
    pub queued: bool,
    pub queue_len: usize,
}

pub fn fuzz(
    program: &Program,
    corpus: &[FuzzSeed],
    budget: &FuzzBudget<'_>,
    config: &ExecConfig,
    master_seed: u64,
) -> FuzzResult {
    fuzz_observed(program, corpus, budget, config, master_seed, &mut |_| {})
}

pub fn fuzz_observed(
    program: &Program,
    corpus: &[FuzzSeed],
    budget: &FuzzBudget<'_>,
    config: &ExecConfig,
    master_seed: u64,
    observer: &mut dyn FnMut(&FuzzStep<'_>),
) -> FuzzResult {
    let config = ExecConfig {
        record_events: false,
        record_trace: false,
        ..config.clone()
    };
    let mut result = FuzzResult {
        crashes: Vec::new(),
        crash_count: 0,
        queue: corpus.to_vec(),
        coverage: Coverage::new(),
        executions: 0,
        stop: StopReason::Budget,
    };
    if result.queue.is_empty() {
        result.stop = StopReason::SeedsExhausted;
        return result;
    }
    let mut rng = SplitMix64::new(master_seed);
    let mut crash_coverage = Coverage::new();
    let spent = |r: &FuzzResult| {
        budget.executions.is_some_and(|n| r.executions >= n) || budget.deadline.expired()
    };
    let mut next = 0usize;
    'outer: while !spent(&result) {
        let parent = result.queue[next % result.queue.len()].clone();
        next += 1;
        let count = 1 + rng.next_u64() % 16;
        for _ in 0..count {
            if spent(&result) {
                break 'outer;
            }
            let mutant = mutate_input(&parent, &mut rng);
            let (inputs, delay_seed) = mutant.decode();
            let outcome = run(program, &inputs, delay_seed, &config);
            result.executions += 1;
            let new_coverage = covers_new_trace(&result.coverage, &outcome.coverage);
            if new_coverage {
                result.coverage.extend(outcome.coverage.iter().copied());
            }
            let bug = outcome.is_bug();
            let queued = !bug && new_coverage;
            if queued {
                result.queue.push(mutant.clone());
            }
            observer(&FuzzStep {
                seed: &mutant,
                outcome: &outcome,
                new_coverage,
                queued,
                queue_len: result.queue.len(),
            });
            if bug {
                result.crash_count += 1;
                let f = outcome.findings[0];
                let new_site = !result
                    .crashes
                    .iter()
                    .any(|c| c.outcome.findings[0].kind == f.kind && c.outcome.findings[0].location == f.location);
                if new_site || covers_new_trace(&crash_coverage, &outcome.coverage) {
                    crash_coverage.extend(outcome.coverage.iter().copied());
                    result.crashes.push(Crash {
                        seed: mutant,
                        outcome,
                    });
                }
                if budget.first_bug {
                    result.stop = StopReason::FirstBug;
                    break 'outer;
                }
            }
        }
    }
    result
}

/// Re-run a seed with event recording and turn it into a crash report.
/// Returns `None` if the seed does not produce a bug under `config`.
pub fn crash_report(
    program: &Program,
    seed: &FuzzSeed,
    config: &ExecConfig,
    run_id: u64,
    echo: Vec<(String, String)>,
) -> Option<CrashReport> {
    let (inputs, delay_seed) = seed.decode();
    let cfg = ExecConfig {
        record_events: true,
        ..config.clone()
    };
    let outcome = run(program, &inputs, delay_seed, &cfg);
    record(program, &outcome, run_id, echo)
}
