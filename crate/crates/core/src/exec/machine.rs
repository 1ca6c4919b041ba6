//! Interpreter state and single-instruction stepping, shared by the
//! delay-driven runner, forced replays and the model checker.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::race::{MemLoc, RaceState, SyncObj, TraceOp, TraceOpKind};
use super::{
    BugKind, DeclName, Detectors, Edge, Event, ExecOutcome, ExitReason, Finding, Inputs, Location,
    Status, ThreadId,
};
use crate::mir::{Instruction, KindId, Program, RegId};

/// Heap handles are offset so that small integers are never valid pointers.
pub(crate) const HANDLE_BASE: i64 = 1 << 32;
/// Largest allocation, in cells.
pub(crate) const MAX_ALLOC: i64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Thread {
    kind: KindId,
    pc: u32,
    regs: Vec<i64>,
    wake: u64,
    finished: bool,
    joined: bool,
    /// Site of the `create` that started the thread.
    origin: Option<Location>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Block {
    cells: Vec<i64>,
    freed: bool,
    site: Location,
    addr: u32,
}

pub(crate) enum Pick {
    Run(ThreadId),
    /// Nobody is ready; the earliest sleeper wakes at this tick.
    Sleep(u64),
    /// The atomic-region owner cannot proceed.
    AtomicBlocked,
    /// Every live thread is blocked.
    Blocked,
}

pub(crate) enum Step {
    Continue,
    Halt(Status),
}

#[derive(Clone)]
pub(crate) struct Machine<'p> {
    program: &'p Program,
    detectors: Detectors,
    threads: Vec<Thread>,
    shared: Vec<i64>,
    locks: Vec<Option<ThreadId>>,
    heap: Vec<Block>,
    atomic_owner: Option<ThreadId>,
    race: Option<RaceState>,
    next_addr: u32,
    pub active: u32,
    pub tick: u64,
    pub steps: u64,
    pub findings: Vec<Finding>,
    coverage: Option<BTreeSet<Edge>>,
    events: Option<Vec<Event>>,
    trace: Option<Vec<TraceOp>>,
}

impl<'p> Machine<'p> {
    pub fn new(
        program: &'p Program,
        detectors: Detectors,
        record_events: bool,
        record_trace: bool,
        track_coverage: bool,
    ) -> Self {
        let entry = program.entry().expect("program has no entry thread");
        let main = Thread {
            kind: entry,
            pc: 0,
            regs: vec![0; program.body(entry).registers.len()],
            wake: 0,
            finished: false,
            joined: false,
            origin: None,
        };
        let shared: Vec<i64> = program.shared.iter().map(|v| v.init.unwrap_or(0)).collect();
        let mut events = record_events.then(Vec::new);
        if let Some(ev) = events.as_mut() {
            for i in 0..shared.len() {
                ev.push(Event::Decl {
                    addr: i as u32,
                    name: DeclName::Shared(crate::mir::VarId(i as u32)),
                });
            }
        }
        Machine {
            program,
            detectors,
            threads: vec![main],
            next_addr: shared.len() as u32,
            race: detectors
                .race
                .then(|| RaceState::new(shared.len(), program.mutexes.len())),
            shared,
            locks: vec![None; program.mutexes.len()],
            heap: Vec::new(),
            atomic_owner: None,
            active: 0,
            tick: 0,
            steps: 0,
            findings: Vec::new(),
            coverage: track_coverage.then(BTreeSet::new),
            events,
            trace: record_trace.then(Vec::new),
        }
    }

    pub fn atomic_owner(&self) -> Option<ThreadId> {
        self.atomic_owner
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn is_live(&self, t: ThreadId) -> bool {
        self.threads.get(t.index()).is_some_and(|th| !th.finished)
    }

    pub fn set_wake(&mut self, t: ThreadId, wake: u64) {
        self.threads[t.index()].wake = wake;
    }

    fn instr(&self, t: ThreadId) -> &'p Instruction {
        let th = &self.threads[t.index()];
        &self.program.body(th.kind).instrs[th.pc as usize]
    }

    /// The instruction `t` executes next, if it is live.
    pub fn next_instr(&self, t: ThreadId) -> Option<&'p Instruction> {
        self.is_live(t).then(|| self.instr(t))
    }

    fn join_target(&self, t: ThreadId, reg: RegId) -> Option<usize> {
        let v = self.threads[t.index()].regs[reg.index()];
        (v > 0 && (v as u64) < self.threads.len() as u64).then_some(v as usize)
    }

    /// Whether `t` is waiting on a held lock or an unfinished thread.
    pub fn is_blocked(&self, t: ThreadId) -> bool {
        match self.instr(t) {
            Instruction::Lock(m) => self.locks[m.index()].is_some(),
            Instruction::Join { thread } => self
                .join_target(t, *thread)
                .is_some_and(|c| !self.threads[c].finished),
            Instruction::AtomicBegin => self.atomic_owner.is_some_and(|o| o != t),
            _ => false,
        }
    }

    /// Live, not blocked, and not excluded by another thread's atomic region.
    pub fn can_run(&self, t: ThreadId) -> bool {
        self.is_live(t)
            && self.atomic_owner.is_none_or(|o| o == t)
            && !self.is_blocked(t)
    }

    pub fn pick(&self) -> Pick {
        if let Some(owner) = self.atomic_owner {
            return if self.can_run(owner) {
                Pick::Run(owner)
            } else {
                Pick::AtomicBlocked
            };
        }
        let mut earliest: Option<u64> = None;
        for (i, th) in self.threads.iter().enumerate() {
            let t = ThreadId(i as u32);
            if th.finished || self.is_blocked(t) {
                continue;
            }
            if th.wake <= self.tick {
                return Pick::Run(t);
            }
            earliest = Some(earliest.map_or(th.wake, |e| e.min(th.wake)));
        }
        match earliest {
            Some(w) => Pick::Sleep(w),
            None => Pick::Blocked,
        }
    }

    /// Status when every live thread is blocked, recording a deadlock
    /// finding if that detector is on.
    pub fn blocked_status(&mut self) -> Status {
        if !self.detectors.deadlock {
            return Status::Exhausted(ExitReason::Stuck);
        }
        let live = || {
            self.threads
                .iter()
                .enumerate()
                .filter(|(_, th)| !th.finished)
                .map(|(i, _)| ThreadId(i as u32))
        };
        let on_lock = live().find(|&t| matches!(self.instr(t), Instruction::Lock(_)));
        let t = on_lock.or_else(|| live().next()).unwrap_or(ThreadId::MAIN);
        let location = self.location(t);
        self.report(BugKind::Deadlock, location, t);
        Status::BugFound
    }

    fn location(&self, t: ThreadId) -> Location {
        let th = &self.threads[t.index()];
        Location::of(self.program, th.kind, th.pc)
    }

    fn report(&mut self, kind: BugKind, location: Location, thread: ThreadId) {
        let f = Finding {
            kind,
            location,
            tick: self.tick,
            thread,
        };
        if let Some(ev) = self.events.as_mut() {
            ev.push(Event::Finding(f));
        }
        self.findings.push(f);
    }

    fn emit(&mut self, e: Event) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(e);
        }
    }

    fn trace(&mut self, thread: ThreadId, op: TraceOpKind) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceOp { thread, op });
        }
    }

    /// Feed an access to the race detector; true when it races.
    fn access(&mut self, t: ThreadId, loc: MemLoc, write: bool) -> bool {
        self.trace(
            t,
            if write {
                TraceOpKind::Write(loc)
            } else {
                TraceOpKind::Read(loc)
            },
        );
        match self.race.as_mut() {
            Some(r) => r.access(t, loc, write),
            None => false,
        }
    }

    fn sync(&mut self, t: ThreadId, obj: SyncObj, acquire: bool) {
        if acquire {
            self.trace(t, TraceOpKind::Acquire(obj));
            if let Some(r) = self.race.as_mut() {
                r.acquire(t, obj);
            }
        } else {
            self.trace(t, TraceOpKind::Release(obj));
            if let Some(r) = self.race.as_mut() {
                r.release(t, obj);
            }
        }
    }

    /// Resolve a heap handle to a block index.
    fn block(&self, handle: i64) -> Result<usize, ()> {
        let idx = handle.wrapping_sub(HANDLE_BASE);
        if (0..self.heap.len() as i64).contains(&idx) {
            Ok(idx as usize)
        } else {
            Err(())
        }
    }

    /// Check a heap cell access: valid handle, live block, index in range.
    fn cell(&self, handle: i64, index: i64) -> Option<(usize, usize)> {
        let b = self.block(handle).ok()?;
        let block = &self.heap[b];
        if block.freed || index < 0 || index >= block.cells.len() as i64 {
            return None;
        }
        Some((b, index as usize))
    }

    /// Execute the next instruction of `t`, which must be able to run.
    pub fn step(&mut self, t: ThreadId, input: &mut dyn Inputs) -> Step {
        debug_assert!(self.can_run(t));
        let instr = self.instr(t);
        let here = self.location(t);
        let ti = t.index();
        self.steps += 1;
        self.emit(Event::Sched {
            tick: self.tick,
            thread: t,
        });
        let mut next = self.threads[ti].pc + 1;
        match instr {
            Instruction::Assign { dst, value } => {
                let v = value.eval(&self.threads[ti].regs);
                self.threads[ti].regs[dst.index()] = v;
            }
            Instruction::Load { dst, var } => {
                let v = self.shared[var.index()];
                let racy = self.access(t, MemLoc::Shared(*var), false);
                self.threads[ti].regs[dst.index()] = v;
                self.emit(Event::Store {
                    addr: var.0,
                    location: here,
                    value: v,
                });
                if racy {
                    return self.race_found(here, t);
                }
            }
            Instruction::Store { var, value } => {
                let v = value.eval(&self.threads[ti].regs);
                let racy = self.access(t, MemLoc::Shared(*var), true);
                self.shared[var.index()] = v;
                self.emit(Event::Store {
                    addr: var.0,
                    location: here,
                    value: v,
                });
                if racy {
                    return self.race_found(here, t);
                }
            }
            Instruction::Nondet { dst } => {
                let v = input.next_input();
                self.threads[ti].regs[dst.index()] = v;
                self.emit(Event::Input(v));
            }
            Instruction::Create { dst, kind } => {
                let child = ThreadId(self.threads.len() as u32);
                let body = self.program.body(*kind);
                self.threads.push(Thread {
                    kind: *kind,
                    pc: 0,
                    regs: vec![0; body.registers.len()],
                    wake: self.tick,
                    finished: false,
                    joined: false,
                    origin: Some(here),
                });
                self.active += 1;
                self.threads[ti].regs[dst.index()] = i64::from(child.0);
                self.trace(t, TraceOpKind::Fork(child));
                if let Some(r) = self.race.as_mut() {
                    r.fork(t, child);
                }
                self.emit(Event::Create { parent: t, child });
            }
            Instruction::Join { thread } => match self.join_target(t, *thread) {
                Some(c) if c != ti && !self.threads[c].joined => {
                    self.threads[c].joined = true;
                    self.active -= 1;
                    let child = ThreadId(c as u32);
                    self.trace(t, TraceOpKind::Join(child));
                    if let Some(r) = self.race.as_mut() {
                        r.join(t, child);
                    }
                    self.emit(Event::Join { parent: t, child });
                }
                _ => {
                    if let Some(s) = self.memory_violation(here, t) {
                        return s;
                    }
                }
            },
            Instruction::Lock(m) => {
                self.locks[m.index()] = Some(t);
                self.sync(t, SyncObj::Mutex(*m), true);
            }
            Instruction::Unlock(m) => {
                if self.locks[m.index()] == Some(t) {
                    self.locks[m.index()] = None;
                    self.sync(t, SyncObj::Mutex(*m), false);
                } else if let Some(s) = self.memory_violation(here, t) {
                    return s;
                }
            }
            Instruction::AtomicBegin => {
                if self.atomic_owner.is_none() {
                    self.atomic_owner = Some(t);
                    self.sync(t, SyncObj::Atomic, true);
                } else if let Some(s) = self.memory_violation(here, t) {
                    return s;
                }
            }
            Instruction::AtomicEnd => {
                if self.atomic_owner == Some(t) {
                    self.atomic_owner = None;
                    self.sync(t, SyncObj::Atomic, false);
                } else if let Some(s) = self.memory_violation(here, t) {
                    return s;
                }
            }
            Instruction::Assume(c) => {
                if !c.eval(&self.threads[ti].regs) {
                    return Step::Halt(Status::Exhausted(ExitReason::AssumeViolated));
                }
            }
            Instruction::Assert(c) => {
                if self.detectors.assertion && !c.eval(&self.threads[ti].regs) {
                    self.report(BugKind::AssertionFailure, here, t);
                    return Step::Halt(Status::BugFound);
                }
            }
            Instruction::Error => {
                if self.detectors.assertion {
                    self.report(BugKind::Reachability, here, t);
                    return Step::Halt(Status::BugFound);
                }
                return self.thread_exit(t);
            }
            Instruction::Goto(label) => {
                next = self.jump(t, *label);
            }
            Instruction::Branch { cond, target } => {
                if cond.eval(&self.threads[ti].regs) {
                    next = self.jump(t, *target);
                }
            }
            Instruction::Alloc { dst, size } => {
                let n = size.eval(&self.threads[ti].regs);
                if (0..=MAX_ALLOC).contains(&n) {
                    let addr = self.next_addr;
                    self.next_addr += 1;
                    self.heap.push(Block {
                        cells: vec![0; n as usize],
                        freed: false,
                        site: here,
                        addr,
                    });
                    if let Some(r) = self.race.as_mut() {
                        r.on_alloc(n as usize);
                    }
                    let handle = HANDLE_BASE + (self.heap.len() as i64 - 1);
                    self.threads[ti].regs[dst.index()] = handle;
                    self.emit(Event::Decl {
                        addr,
                        name: DeclName::Heap {
                            kind: here.kind,
                            reg: *dst,
                        },
                    });
                } else {
                    self.threads[ti].regs[dst.index()] = 0;
                    if let Some(s) = self.memory_violation(here, t) {
                        return s;
                    }
                }
            }
            Instruction::Free { handle } => {
                let h = self.threads[ti].regs[handle.index()];
                if h != 0 {
                    match self.block(h) {
                        Ok(b) if !self.heap[b].freed => self.heap[b].freed = true,
                        _ => {
                            if let Some(s) = self.memory_violation(here, t) {
                                return s;
                            }
                        }
                    }
                }
            }
            Instruction::HeapLoad { dst, handle, index } => {
                let regs = &self.threads[ti].regs;
                let (h, i) = (regs[handle.index()], index.eval(regs));
                match self.cell(h, i) {
                    Some((b, c)) => {
                        let v = self.heap[b].cells[c];
                        let addr = self.heap[b].addr;
                        let racy = self.access(t, MemLoc::Heap(b as u32, c as u32), false);
                        self.threads[ti].regs[dst.index()] = v;
                        self.emit(Event::Store {
                            addr,
                            location: here,
                            value: v,
                        });
                        if racy {
                            return self.race_found(here, t);
                        }
                    }
                    None => {
                        self.threads[ti].regs[dst.index()] = 0;
                        if let Some(s) = self.memory_violation(here, t) {
                            return s;
                        }
                    }
                }
            }
            Instruction::HeapStore {
                handle,
                index,
                value,
            } => {
                let regs = &self.threads[ti].regs;
                let (h, i, v) = (regs[handle.index()], index.eval(regs), value.eval(regs));
                match self.cell(h, i) {
                    Some((b, c)) => {
                        let addr = self.heap[b].addr;
                        let racy = self.access(t, MemLoc::Heap(b as u32, c as u32), true);
                        self.heap[b].cells[c] = v;
                        self.emit(Event::Store {
                            addr,
                            location: here,
                            value: v,
                        });
                        if racy {
                            return self.race_found(here, t);
                        }
                    }
                    None => {
                        if let Some(s) = self.memory_violation(here, t) {
                            return s;
                        }
                    }
                }
            }
            Instruction::Return => {
                if t == ThreadId::MAIN {
                    return Step::Halt(self.end_of_run());
                }
                return self.thread_exit(t);
            }
        }
        self.threads[ti].pc = next;
        Step::Continue
    }

    fn jump(&mut self, t: ThreadId, label: crate::mir::LabelId) -> u32 {
        let th = &self.threads[t.index()];
        let target = self
            .program
            .body(th.kind)
            .label_target(label)
            .expect("unresolved label");
        if let Some(cov) = self.coverage.as_mut() {
            cov.insert(Edge {
                kind: th.kind,
                source: th.pc,
                target,
            });
        }
        target
    }

    fn race_found(&mut self, here: Location, t: ThreadId) -> Step {
        self.report(BugKind::DataRace, here, t);
        Step::Halt(Status::BugFound)
    }

    /// Report a memory-safety violation if that detector is on; otherwise
    /// the faulting instruction has no effect.
    fn memory_violation(&mut self, here: Location, t: ThreadId) -> Option<Step> {
        if self.detectors.memory {
            self.report(BugKind::MemorySafety, here, t);
            Some(Step::Halt(Status::BugFound))
        } else {
            None
        }
    }

    fn thread_exit(&mut self, t: ThreadId) -> Step {
        if t == ThreadId::MAIN {
            return Step::Halt(self.end_of_run());
        }
        self.threads[t.index()].finished = true;
        if self.atomic_owner == Some(t) {
            self.atomic_owner = None;
        }
        Step::Continue
    }

    /// The entry thread returned: the process exits. Unjoined threads and
    /// unfreed blocks are reported here.
    fn end_of_run(&mut self) -> Status {
        self.threads[0].finished = true;
        if self.detectors.thread_leak {
            for i in 1..self.threads.len() {
                let th = &self.threads[i];
                if !th.joined {
                    let site = th.origin.expect("created thread has an origin");
                    self.report(BugKind::ThreadLeak, site, ThreadId(i as u32));
                }
            }
        }
        if self.detectors.memory {
            for b in 0..self.heap.len() {
                if !self.heap[b].freed {
                    let site = self.heap[b].site;
                    let owner = ThreadId::MAIN;
                    self.report(BugKind::MemoryLeak, site, owner);
                }
            }
        }
        if self.findings.is_empty() {
            Status::Completed
        } else {
            Status::BugFound
        }
    }

    pub fn finish(self, status: Status, hooks: u64) -> ExecOutcome {
        ExecOutcome {
            status,
            findings: self.findings,
            coverage: self.coverage.unwrap_or_default(),
            events: self.events.unwrap_or_default(),
            trace: self.trace.unwrap_or_default(),
            steps: self.steps,
            tick: self.tick,
            shared: self.shared,
            active_threads: self.active,
            hooks,
        }
    }

    /// Exact encoding of the execution state, excluding the clock, wake
    /// times and recorded output. `last` is the thread that ran last.
    pub fn write_key(&self, last: Option<ThreadId>, out: &mut Vec<i64>) {
        out.push(last.map_or(-1, |t| i64::from(t.0)));
        out.push(self.threads.len() as i64);
        for th in &self.threads {
            out.push(i64::from(th.kind.0));
            out.push(i64::from(th.pc));
            out.push(i64::from(th.finished) | (i64::from(th.joined) << 1));
            out.push(th.origin.map_or(-1, |l| (i64::from(l.kind.0) << 32) | i64::from(l.index)));
            out.extend_from_slice(&th.regs);
        }
        out.extend_from_slice(&self.shared);
        out.extend(self.locks.iter().map(|l| l.map_or(-1, |t| i64::from(t.0))));
        out.push(self.atomic_owner.map_or(-1, |t| i64::from(t.0)));
        out.push(i64::from(self.active));
        out.push(self.heap.len() as i64);
        for b in &self.heap {
            out.push(i64::from(b.freed));
            out.push((i64::from(b.site.kind.0) << 32) | i64::from(b.site.index));
            out.push(b.cells.len() as i64);
            out.extend_from_slice(&b.cells);
        }
        if let Some(r) = &self.race {
            r.write_key(out);
        }
    }
}
