//! Deterministic logical-time interpreter.
//!
//! Each run simulates every program thread on one host thread. After every
//! instruction a delay hook may end the run early (too many active threads
//! or a random exit) or put the thread to sleep for a random number of
//! ticks. The scheduler always runs the lowest-numbered ready thread, so
//! the interleaving is a pure function of the program, the inputs, the
//! delay seed and the configuration.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::mir::{KindId, Program, RegId, VarId};
use crate::rng::SplitMix64;

mod machine;
mod race;

pub(crate) use machine::{Machine, Pick, Step};
pub use race::{detect_races, MemLoc, RacePair, SyncObj, TraceOp, TraceOpKind, VectorClock};

/// Runtime thread number. The entry thread is 0; created threads are
/// numbered in creation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadId(pub u32);

impl ThreadId {
    pub const MAIN: ThreadId = ThreadId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BugKind {
    Reachability,
    AssertionFailure,
    DataRace,
    Deadlock,
    ThreadLeak,
    MemorySafety,
    MemoryLeak,
}

impl BugKind {
    pub const ALL: [BugKind; 7] = [
        BugKind::Reachability,
        BugKind::AssertionFailure,
        BugKind::DataRace,
        BugKind::Deadlock,
        BugKind::ThreadLeak,
        BugKind::MemorySafety,
        BugKind::MemoryLeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BugKind::Reachability => "Reachability",
            BugKind::AssertionFailure => "AssertionFailure",
            BugKind::DataRace => "DataRace",
            BugKind::Deadlock => "Deadlock",
            BugKind::ThreadLeak => "ThreadLeak",
            BugKind::MemorySafety => "MemorySafety",
            BugKind::MemoryLeak => "MemoryLeak",
        }
    }
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BugKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        BugKind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

/// An instruction in the program text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub kind: KindId,
    pub index: u32,
    pub line: u32,
}

impl Location {
    pub fn of(program: &Program, kind: KindId, index: u32) -> Self {
        Location {
            kind,
            index,
            line: program.body(kind).line(index),
        }
    }

    /// `kind:line`, the form used in witness files and reports.
    pub fn display<'a>(&self, program: &'a Program) -> impl fmt::Display + 'a {
        let (kind, line) = (self.kind, self.line);
        DisplayLocation {
            name: program.kind_name(kind),
            line,
        }
    }
}

struct DisplayLocation<'a> {
    name: &'a str,
    line: u32,
}

impl fmt::Display for DisplayLocation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.line)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Finding {
    pub kind: BugKind,
    pub location: Location,
    pub tick: u64,
    /// The faulting thread; for thread leaks, the leaked thread.
    pub thread: ThreadId,
}

/// Why a run ended without a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitReason {
    ThreadThreshold,
    RandomExit,
    AtomicTimeout,
    AssumeViolated,
    /// Every live thread is blocked and the deadlock detector is off.
    Stuck,
    /// A forced schedule ran out before the program finished.
    ScheduleEnded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Completed,
    BugFound,
    Exhausted(ExitReason),
    BudgetExceeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Detectors {
    pub race: bool,
    pub deadlock: bool,
    pub thread_leak: bool,
    pub memory: bool,
    pub assertion: bool,
}

impl Detectors {
    pub const NAMES: [&'static str; 5] = ["race", "deadlock", "thread_leak", "memory", "assertion"];

    pub const fn all() -> Self {
        Detectors {
            race: true,
            deadlock: true,
            thread_leak: true,
            memory: true,
            assertion: true,
        }
    }

    pub const fn none() -> Self {
        Detectors {
            race: false,
            deadlock: false,
            thread_leak: false,
            memory: false,
            assertion: false,
        }
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        Some(match name {
            "race" => self.race,
            "deadlock" => self.deadlock,
            "thread_leak" => self.thread_leak,
            "memory" => self.memory,
            "assertion" => self.assertion,
            _ => return None,
        })
    }

    /// Switch a detector by name. Returns `false` for an unknown name.
    pub fn set(&mut self, name: &str, on: bool) -> bool {
        let slot = match name {
            "race" => &mut self.race,
            "deadlock" => &mut self.deadlock,
            "thread_leak" => &mut self.thread_leak,
            "memory" => &mut self.memory,
            "assertion" => &mut self.assertion,
            _ => return false,
        };
        *slot = on;
        true
    }

    /// Parse a comma-separated list of enabled detector names. `all` and
    /// `none` are accepted.
    pub fn parse_list(text: &str) -> Result<Self, &str> {
        let mut d = Detectors::none();
        for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "all" => d = Detectors::all(),
                "none" => d = Detectors::none(),
                _ if !d.set(name, true) => return Err(name),
                _ => {}
            }
        }
        Ok(d)
    }

    pub fn enabled(&self) -> impl Iterator<Item = &'static str> + '_ {
        Self::NAMES
            .into_iter()
            .filter(|n| self.get(n).unwrap_or(false))
    }

    /// Comma-separated enabled names, `none` when empty.
    pub fn to_list(&self) -> alloc::string::String {
        let names: Vec<&str> = self.enabled().collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join(",")
        }
    }
}

impl Default for Detectors {
    /// Everything except the race detector.
    fn default() -> Self {
        Detectors {
            race: false,
            ..Detectors::all()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecConfig {
    pub thread_threshold: u32,
    pub delay_max: u64,
    pub exit_prob: f64,
    /// Ticks to wait for a blocked atomic-region owner. `None` means
    /// `max(1, 10 * delay_max)`.
    pub atomic_wait_bound: Option<u64>,
    pub step_budget: u64,
    pub detectors: Detectors,
    pub record_events: bool,
    pub record_trace: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            thread_threshold: 5,
            delay_max: 100,
            exit_prob: 0.0001,
            atomic_wait_bound: None,
            step_budget: 100_000,
            detectors: Detectors::default(),
            record_events: false,
            record_trace: false,
        }
    }
}

impl ExecConfig {
    pub fn atomic_wait(&self) -> u64 {
        self.atomic_wait_bound
            .unwrap_or_else(|| self.delay_max.saturating_mul(10).max(1))
    }

    pub fn check(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.exit_prob) {
            return Err("exit probability must be within [0, 1]");
        }
        if self.thread_threshold == 0 {
            return Err("thread threshold must be positive");
        }
        if self.step_budget == 0 {
            return Err("step budget must be positive");
        }
        if self.atomic_wait_bound == Some(0) {
            return Err("atomic wait bound must be positive");
        }
        Ok(())
    }
}

/// A control-flow transfer taken by a `goto` or a conditional branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub kind: KindId,
    pub source: u32,
    pub target: u32,
}

pub type Coverage = BTreeSet<Edge>;

/// What a declared address refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeclName {
    Shared(VarId),
    /// A heap block, named after the register receiving it.
    Heap { kind: KindId, reg: RegId },
}

/// Run events in emission order. Shared variables are declared with
/// addresses `0..n` before the first instruction; heap blocks are declared
/// when allocated.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Decl { addr: u32, name: DeclName },
    /// A value read from or written to memory at `addr` by the instruction
    /// at `location`.
    Store {
        addr: u32,
        location: Location,
        value: i64,
    },
    Sched { tick: u64, thread: ThreadId },
    Input(i64),
    Create { parent: ThreadId, child: ThreadId },
    Join { parent: ThreadId, child: ThreadId },
    Finding(Finding),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecOutcome {
    pub status: Status,
    pub findings: Vec<Finding>,
    pub coverage: Coverage,
    /// Empty unless `record_events` was set.
    pub events: Vec<Event>,
    /// Empty unless `record_trace` was set.
    pub trace: Vec<TraceOp>,
    pub steps: u64,
    pub tick: u64,
    /// Shared store at the end of the run.
    pub shared: Vec<i64>,
    /// Threads created and not yet joined.
    pub active_threads: u32,
    /// Delay-hook invocations.
    pub hooks: u64,
}

impl ExecOutcome {
    pub fn first_finding(&self) -> Option<&Finding> {
        self.findings.first()
    }

    pub fn is_bug(&self) -> bool {
        self.status == Status::BugFound
    }
}

/// Execute `program` once. See the module documentation for semantics.
pub fn run(program: &Program, inputs: &[i64], delay_seed: u64, config: &ExecConfig) -> ExecOutcome {
    let mut m = Machine::new(program, config.detectors, config.record_events, config.record_trace, true);
    let mut rng = SplitMix64::new(delay_seed);
    let mut input = InputCursor::new(inputs);
    let mut hooks = 0u64;
    let status = loop {
        if m.steps >= config.step_budget {
            break Status::BudgetExceeded;
        }
        let tid = match m.pick() {
            Pick::Run(t) => t,
            Pick::Sleep(wake) => {
                m.tick = wake;
                continue;
            }
            Pick::AtomicBlocked => {
                m.tick = m.tick.saturating_add(config.atomic_wait());
                break Status::Exhausted(ExitReason::AtomicTimeout);
            }
            Pick::Blocked => break m.blocked_status(),
        };
        if let Step::Halt(status) = m.step(tid, &mut input) {
            break status;
        }
        if m.atomic_owner() == Some(tid) || !m.is_live(tid) {
            continue;
        }
        hooks += 1;
        let exit = rng.bernoulli(config.exit_prob);
        if m.active > config.thread_threshold {
            break Status::Exhausted(ExitReason::ThreadThreshold);
        }
        if exit {
            break Status::Exhausted(ExitReason::RandomExit);
        }
        let delay = rng.upto(config.delay_max);
        m.set_wake(tid, m.tick.saturating_add(delay));
    };
    m.finish(status, hooks)
}

/// Why a forced schedule could not be followed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleError {
    /// Position in the schedule.
    pub position: usize,
    pub thread: ThreadId,
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "schedule step {} names thread {}, which cannot run there",
            self.position, self.thread
        )
    }
}

/// Execute with an explicit schedule: entry `i` names the thread running
/// the `i`-th instruction. Delays, random exits and the thread threshold are
/// disabled. When the schedule ends before the program does, the run ends
/// with a deadlock (if every live thread is blocked) or
/// `Exhausted(ScheduleEnded)`.
pub fn run_forced(
    program: &Program,
    inputs: &[i64],
    schedule: &[ThreadId],
    detectors: Detectors,
    record_events: bool,
) -> Result<ExecOutcome, ScheduleError> {
    let mut m = Machine::new(program, detectors, record_events, false, true);
    let mut input = InputCursor::new(inputs);
    for (position, &thread) in schedule.iter().enumerate() {
        if !m.can_run(thread) {
            return Err(ScheduleError { position, thread });
        }
        if let Step::Halt(status) = m.step(thread, &mut input) {
            return Ok(m.finish(status, 0));
        }
    }
    let status = match m.pick() {
        Pick::Blocked => m.blocked_status(),
        _ => Status::Exhausted(ExitReason::ScheduleEnded),
    };
    Ok(m.finish(status, 0))
}

/// Source of `nondet()` values.
pub(crate) trait Inputs {
    fn next_input(&mut self) -> i64;
}

pub(crate) struct InputCursor<'a> {
    values: &'a [i64],
    pos: usize,
}

impl<'a> InputCursor<'a> {
    pub fn new(values: &'a [i64]) -> Self {
        InputCursor { values, pos: 0 }
    }
}

impl Inputs for InputCursor<'_> {
    fn next_input(&mut self) -> i64 {
        let v = self.values.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        v
    }
}

/// A single fixed value, used by the model checker.
pub(crate) struct FixedInput(pub i64);

impl Inputs for FixedInput {
    fn next_input(&mut self) -> i64 {
        self.0
    }
}
