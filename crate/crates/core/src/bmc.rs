//! Explicit-state bounded model checking.
//!
//! The checker enumerates interleavings depth first. Scheduling points sit
//! before visible instructions (see [`Instruction::is_visible`]); purely
//! local instructions run eagerly right after the visible instruction that
//! precedes them. At every scheduling point each runnable thread is tried
//! in ascending id order; a `nondet()` branches over the input domain in
//! ascending order. Paths longer than `k` instructions or with more than
//! `C` preemptions are cut, and any cut turns a bug-free result into
//! `Unknown`.
//!
//! State hashing remembers, per state, whether its subtree was explored
//! without cuts and how many steps and preemptions it needed, so cached
//! states never change the classification.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::exec::{Detectors, FixedInput, Finding, Machine, Pick, Status, Step, ThreadId};
use crate::gbf::FuzzSeed;
use crate::mir::{Instruction, Program};
use crate::rng::SplitMix64;
use crate::time::{Deadline, NoClock};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BmcConfig {
    /// Maximum instructions along a path (k).
    pub step_bound: u32,
    /// Maximum preemptions along a path (C).
    pub context_bound: u32,
    pub input_domain: Vec<i64>,
    /// Add `c - 1`, `c`, `c + 1` for each constant `c` compared against.
    pub harvest_constants: bool,
    pub state_hashing: bool,
    pub max_states: Option<u64>,
    pub detectors: Detectors,
}

impl Default for BmcConfig {
    fn default() -> Self {
        BmcConfig {
            step_bound: 200,
            context_bound: 12,
            input_domain: vec![-1, 0, 1],
            harvest_constants: true,
            state_hashing: true,
            max_states: None,
            detectors: Detectors::default(),
        }
    }
}

impl BmcConfig {
    /// The values each `nondet()` ranges over, sorted.
    pub fn domain(&self, program: &Program) -> Vec<i64> {
        let mut d = self.input_domain.clone();
        if self.harvest_constants {
            for c in program.comparison_constants() {
                d.extend([c.wrapping_sub(1), c, c.wrapping_add(1)]);
            }
        }
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn check(&self) -> Result<(), &'static str> {
        if self.step_bound == 0 || self.context_bound == 0 {
            return Err("k and C must be at least 1");
        }
        if self.input_domain.is_empty() && !self.harvest_constants {
            return Err("input domain must not be empty");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub inputs: Vec<i64>,
    /// Thread running each instruction, in order.
    pub schedule: Vec<ThreadId>,
    pub finding: Finding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnknownReason {
    /// Some path hit the step or preemption bound.
    Bounds,
    /// The state or time budget ran out.
    Budget,
}

impl fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnknownReason::Bounds => "bounds reached",
            UnknownReason::Budget => "budget exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BmcVerdict {
    Safe,
    Bug(Counterexample),
    Unknown(UnknownReason),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BmcReport {
    pub verdict: BmcVerdict,
    /// Scheduling points visited, including cached ones.
    pub states: u64,
    /// Distinct states stored by hashing.
    pub stored: u64,
}

/// Steps and preemptions a fully explored subtree needed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Need {
    steps: u64,
    switches: u32,
}

impl Need {
    fn max(self, o: Need) -> Need {
        Need {
            steps: self.steps.max(o.steps),
            switches: self.switches.max(o.switches),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Explored {
    Complete(Need),
    Cut,
}

#[derive(Clone, Copy, Debug)]
enum Cached {
    InProgress,
    Complete(Need),
    /// Explored with cuts, under the given residual steps and preemptions.
    Cut(u64, u32),
}

enum Stop {
    Bug(Counterexample),
    Budget,
}

struct Search<'p, 'd> {
    program: &'p Program,
    config: &'p BmcConfig,
    domain: Vec<i64>,
    deadline: Deadline<'d>,
    table: HashMap<Vec<i64>, Cached>,
    states: u64,
    inputs: Vec<i64>,
    schedule: Vec<ThreadId>,
    key: Vec<i64>,
}

pub fn bmc_check(program: &Program, config: &BmcConfig) -> BmcReport {
    bmc_check_until(program, config, Deadline::never(&NoClock))
}

pub fn bmc_check_until(program: &Program, config: &BmcConfig, deadline: Deadline<'_>) -> BmcReport {
    let mut s = Search {
        program,
        config,
        domain: config.domain(program),
        deadline,
        table: HashMap::new(),
        states: 0,
        inputs: Vec::new(),
        schedule: Vec::new(),
        key: Vec::new(),
    };
    let verdict = s.start();
    BmcReport {
        verdict,
        states: s.states,
        stored: s.table.len() as u64,
    }
}

/// Encode the counterexample's inputs as a seed with a fresh delay seed.
pub fn counterexample_to_seed(cex: &Counterexample, rng: &mut SplitMix64) -> FuzzSeed {
    FuzzSeed::encode(&cex.inputs, rng.next_u64())
}

enum Segment {
    /// Reached a new scheduling point.
    Point,
    /// The run ended without a finding.
    Leaf,
    /// The step bound was hit.
    Cut,
}

impl<'p> Search<'p, '_> {
    fn start(&mut self) -> BmcVerdict {
        let mut m = Machine::new(self.program, self.config.detectors, false, false, false);
        let result = match self.settle(&mut m) {
            Err(stop) => Err(stop),
            Ok(Segment::Leaf) => Ok(Explored::Complete(Need::default())),
            Ok(Segment::Cut) => Ok(Explored::Cut),
            Ok(Segment::Point) => self.node(&m, None, 0),
        };
        match result {
            Ok(Explored::Complete(_)) => BmcVerdict::Safe,
            Ok(Explored::Cut) => BmcVerdict::Unknown(UnknownReason::Bounds),
            Err(Stop::Budget) => BmcVerdict::Unknown(UnknownReason::Budget),
            Err(Stop::Bug(cex)) => BmcVerdict::Bug(cex),
        }
    }

    fn local(&self, instr: &Instruction) -> bool {
        !instr.is_visible() && !(matches!(instr, Instruction::Error) && !self.config.detectors.assertion)
    }

    fn bug(&self, m: &Machine<'_>) -> Stop {
        Stop::Bug(Counterexample {
            inputs: self.inputs.clone(),
            schedule: self.schedule.clone(),
            finding: m.findings[0],
        })
    }

    /// Execute one instruction of `t`, recording it on the path.
    fn exec(&mut self, m: &mut Machine<'_>, t: ThreadId, input: i64) -> Result<Option<Segment>, Stop> {
        if m.steps >= u64::from(self.config.step_bound) {
            return Ok(Some(Segment::Cut));
        }
        self.schedule.push(t);
        match m.step(t, &mut FixedInput(input)) {
            Step::Continue => Ok(None),
            Step::Halt(Status::BugFound) => Err(self.bug(m)),
            Step::Halt(_) => Ok(Some(Segment::Leaf)),
        }
    }

    /// Run local instructions of every runnable thread until each is at a
    /// visible instruction or finished.
    fn settle(&mut self, m: &mut Machine<'_>) -> Result<Segment, Stop> {
        let mut t = 0;
        while t < m.thread_count() {
            let tid = ThreadId(t as u32);
            while m.can_run(tid) && m.next_instr(tid).is_some_and(|i| self.local(i)) {
                if let Some(end) = self.exec(m, tid, 0)? {
                    return Ok(end);
                }
            }
            t += 1;
        }
        Ok(Segment::Point)
    }

    fn node(&mut self, m: &Machine<'_>, last: Option<ThreadId>, switches: u32) -> Result<Explored, Stop> {
        self.states += 1;
        if self.config.max_states.is_some_and(|n| self.states > n) || self.deadline.expired() {
            return Err(Stop::Budget);
        }
        let rem_steps = u64::from(self.config.step_bound) - m.steps.min(u64::from(self.config.step_bound));
        let rem_switches = self.config.context_bound - switches;

        let key = if self.config.state_hashing {
            self.key.clear();
            m.write_key(last, &mut self.key);
            match self.table.get(&self.key) {
                Some(Cached::InProgress) => return Ok(Explored::Cut),
                Some(Cached::Complete(need)) => {
                    return Ok(if need.steps <= rem_steps && need.switches <= rem_switches {
                        Explored::Complete(*need)
                    } else {
                        Explored::Cut
                    });
                }
                Some(Cached::Cut(s, c)) if *s >= rem_steps && *c >= rem_switches => {
                    return Ok(Explored::Cut);
                }
                _ => {}
            }
            let key = self.key.clone();
            self.table.insert(key.clone(), Cached::InProgress);
            Some(key)
        } else {
            None
        };

        let result = self.expand(m, last, switches);
        if let Some(key) = key {
            let entry = match result {
                Ok(Explored::Complete(need)) => Cached::Complete(need),
                Ok(Explored::Cut) => Cached::Cut(rem_steps, rem_switches),
                Err(_) => return result,
            };
            self.table.insert(key, entry);
        }
        result
    }

    fn expand(&mut self, m: &Machine<'_>, last: Option<ThreadId>, switches: u32) -> Result<Explored, Stop> {
        let runnable: Vec<ThreadId> = (0..m.thread_count() as u32)
            .map(ThreadId)
            .filter(|&t| m.can_run(t))
            .collect();
        if runnable.is_empty() {
            return match m.pick() {
                Pick::Blocked => {
                    let mut end = m.clone();
                    if end.blocked_status() == Status::BugFound {
                        Err(self.bug(&end))
                    } else {
                        Ok(Explored::Complete(Need::default()))
                    }
                }
                _ => Ok(Explored::Complete(Need::default())),
            };
        }
        let mut need = Need::default();
        let mut complete = true;
        let last_runnable = last.filter(|l| runnable.contains(l));
        for &t in &runnable {
            let preempt = last_runnable.is_some_and(|l| l != t);
            let sw = switches + u32::from(preempt);
            if sw > self.config.context_bound {
                complete = false;
                continue;
            }
            let nondet = matches!(m.next_instr(t), Some(Instruction::Nondet { .. }));
            let values: Vec<i64> = if nondet { self.domain.clone() } else { vec![0] };
            for v in values {
                let (mark_s, mark_i) = (self.schedule.len(), self.inputs.len());
                if nondet {
                    self.inputs.push(v);
                }
                let mut child = m.clone();
                let seg = match self.exec(&mut child, t, v)? {
                    Some(end) => end,
                    None => self.settle(&mut child)?,
                };
                let delta = child.steps - m.steps;
                match seg {
                    Segment::Cut => complete = false,
                    Segment::Leaf => {
                        need = need.max(Need {
                            steps: delta,
                            switches: u32::from(preempt),
                        })
                    }
                    Segment::Point => match self.node(&child, Some(t), sw)? {
                        Explored::Cut => complete = false,
                        Explored::Complete(n) => {
                            need = need.max(Need {
                                steps: delta + n.steps,
                                switches: u32::from(preempt) + n.switches,
                            })
                        }
                    },
                }
                self.schedule.truncate(mark_s);
                self.inputs.truncate(mark_i);
            }
        }
        Ok(if complete {
            Explored::Complete(need)
        } else {
            Explored::Cut
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{run_forced, BugKind};
    use crate::mir::parse_program;

    const LISTING1: &str = "shared a = 0\nthread main:\n  t1 = create worker\n  t2 = create worker\n  join t1\n  join t2\n  r = load a\n  assert r == 10\n  return\nthread worker:\n  i = 1\nloop:\n  tmp = load a\n  store a tmp + 1\n  i = i + 1\n  if i <= 5 goto loop\n  return\n";

    fn check(src: &str, config: &BmcConfig) -> BmcReport {
        bmc_check(&parse_program(src).unwrap(), config)
    }

    fn replays(src: &str, cex: &Counterexample, detectors: Detectors) {
        let p = parse_program(src).unwrap();
        let out = run_forced(&p, &cex.inputs, &cex.schedule, detectors, false).unwrap();
        assert_eq!(out.findings.first(), Some(&cex.finding));
    }

    #[test]
    fn listing1_bug_with_replayable_counterexample() {
        let r = check(LISTING1, &BmcConfig::default());
        let BmcVerdict::Bug(cex) = r.verdict else {
            panic!("expected a bug, got {:?}", r.verdict)
        };
        assert_eq!(cex.finding.kind, BugKind::AssertionFailure);
        assert!(cex.inputs.is_empty());
        replays(LISTING1, &cex, Detectors::default());
        let p = parse_program(LISTING1).unwrap();
        let out = run_forced(&p, &[], &cex.schedule, Detectors::default(), false).unwrap();
        assert_ne!(out.shared, [10]);
    }

    #[test]
    fn nondet_input_bug() {
        let src = "thread main:\n  x = nondet()\n  assert x != 1\n  return\n";
        let cfg = BmcConfig {
            harvest_constants: false,
            ..BmcConfig::default()
        };
        let BmcVerdict::Bug(cex) = check(src, &cfg).verdict else {
            panic!()
        };
        assert_eq!(cex.inputs, [1]);
        replays(src, &cex, Detectors::default());
    }

    #[test]
    fn harvested_constants_find_magic_values() {
        let src = "thread main:\n  x = nondet()\n  if x == 4242 goto bad\n  return\nbad:\n  error\n";
        let BmcVerdict::Bug(cex) = check(src, &BmcConfig::default()).verdict else {
            panic!()
        };
        assert_eq!(cex.inputs, [4242]);
        let no = BmcConfig {
            harvest_constants: false,
            ..BmcConfig::default()
        };
        assert_eq!(check(src, &no).verdict, BmcVerdict::Safe);
    }

    #[test]
    fn straight_line_program_is_safe() {
        let src = "shared a = 0\nthread main:\n  store a 3\n  x = load a\n  assert x == 3\n  return\n";
        assert_eq!(check(src, &BmcConfig::default()).verdict, BmcVerdict::Safe);
    }

    #[test]
    fn small_step_bound_gives_unknown() {
        let cfg = BmcConfig {
            step_bound: 3,
            ..BmcConfig::default()
        };
        assert_eq!(
            check("thread main:\n  x = 1\n  x = 2\n  x = 3\n  x = 4\n  return\n", &cfg).verdict,
            BmcVerdict::Unknown(UnknownReason::Bounds)
        );
    }

    #[test]
    fn opposite_lock_order_deadlocks() {
        let src = "mutex m1\nmutex m2\nthread main:\n  t1 = create one\n  t2 = create two\n  join t1\n  join t2\n  return\nthread one:\n  lock m1\n  lock m2\n  unlock m2\n  unlock m1\n  return\nthread two:\n  lock m2\n  lock m1\n  unlock m1\n  unlock m2\n  return\n";
        let cfg = BmcConfig {
            step_bound: 12,
            context_bound: 4,
            ..BmcConfig::default()
        };
        let BmcVerdict::Bug(cex) = check(src, &cfg).verdict else {
            panic!()
        };
        assert_eq!(cex.finding.kind, BugKind::Deadlock);
        replays(src, &cex, Detectors::default());
    }

    #[test]
    fn locked_counter_is_safe() {
        let src = "shared a = 0\nmutex m\nthread main:\n  t1 = create w\n  t2 = create w\n  join t1\n  join t2\n  r = load a\n  assert r == 4\n  return\nthread w:\n  i = 0\nL:\n  lock m\n  x = load a\n  store a x + 1\n  unlock m\n  i = i + 1\n  if i < 2 goto L\n  return\n";
        let r = check(src, &BmcConfig::default());
        assert_eq!(r.verdict, BmcVerdict::Safe);
        let plain = check(
            src,
            &BmcConfig {
                state_hashing: false,
                ..BmcConfig::default()
            },
        );
        assert_eq!(plain.verdict, BmcVerdict::Safe);
        assert!(r.states < plain.states);
    }

    #[test]
    fn spin_loop_is_unknown_with_or_without_hashing() {
        let src = "shared f = 0\nthread main:\n  t = create w\nL:\n  x = load f\n  if x == 0 goto L\n  join t\n  return\nthread w:\n  store f 1\n  return\n";
        for hashing in [true, false] {
            let cfg = BmcConfig {
                state_hashing: hashing,
                step_bound: 40,
                ..BmcConfig::default()
            };
            assert_eq!(
                check(src, &cfg).verdict,
                BmcVerdict::Unknown(UnknownReason::Bounds)
            );
        }
    }

    #[test]
    fn state_budget_gives_unknown() {
        let cfg = BmcConfig {
            max_states: Some(5),
            state_hashing: false,
            ..BmcConfig::default()
        };
        let src = "shared a = 0\nmutex m\nthread main:\n  t1 = create w\n  t2 = create w\n  join t1\n  join t2\n  return\nthread w:\n  lock m\n  x = load a\n  store a x + 1\n  unlock m\n  return\n";
        assert_eq!(
            check(src, &cfg).verdict,
            BmcVerdict::Unknown(UnknownReason::Budget)
        );
    }

    #[test]
    fn seeds_keep_inputs_and_vary_suffix() {
        let cex = Counterexample {
            inputs: vec![1],
            schedule: Vec::new(),
            finding: Finding {
                kind: BugKind::Reachability,
                location: crate::exec::Location {
                    kind: crate::mir::KindId(0),
                    index: 0,
                    line: 1,
                },
                tick: 0,
                thread: ThreadId::MAIN,
            },
        };
        let a = counterexample_to_seed(&cex, &mut SplitMix64::new(1));
        let b = counterexample_to_seed(&cex, &mut SplitMix64::new(2));
        assert_eq!(a.inputs(), [1]);
        assert_eq!(b.inputs(), [1]);
        assert_ne!(a.delay_seed(), b.delay_seed());
        let empty = Counterexample {
            inputs: Vec::new(),
            ..cex
        };
        assert_eq!(counterexample_to_seed(&empty, &mut SplitMix64::new(1)).bytes.len(), 8);
    }
}
