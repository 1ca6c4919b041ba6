//! Happens-before tracking with vector clocks.
//!
//! Synchronization edges come from thread creation, joins, mutexes and the
//! global atomic-region mutex. Releases join the releasing thread's clock
//! into the object's clock, so an acquire learns about every earlier release
//! of the same object.

use alloc::vec;
use alloc::vec::Vec;

use super::ThreadId;
use crate::mir::{MutexId, VarId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct VectorClock(Vec<u32>);

impl VectorClock {
    pub fn new() -> Self {
        VectorClock(Vec::new())
    }

    pub fn get(&self, thread: usize) -> u32 {
        self.0.get(thread).copied().unwrap_or(0)
    }

    pub fn set(&mut self, thread: usize, value: u32) {
        if self.0.len() <= thread {
            self.0.resize(thread + 1, 0);
        }
        self.0[thread] = value;
    }

    pub fn increment(&mut self, thread: usize) {
        let v = self.get(thread);
        self.set(thread, v + 1);
    }

    pub fn join(&mut self, other: &VectorClock) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), 0);
        }
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if *theirs > *mine {
                *mine = *theirs;
            }
        }
    }

    /// Pointwise `<=`.
    pub fn le(&self, other: &VectorClock) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| v <= other.get(i))
    }

    pub(crate) fn write_key(&self, out: &mut Vec<i64>) {
        let len = self.0.iter().rposition(|&v| v != 0).map_or(0, |p| p + 1);
        out.push(len as i64);
        out.extend(self.0[..len].iter().map(|&v| i64::from(v)));
    }
}

/// A memory location that can race.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemLoc {
    Shared(VarId),
    /// Allocation index and cell index.
    Heap(u32, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyncObj {
    Mutex(MutexId),
    Atomic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceOpKind {
    Read(MemLoc),
    Write(MemLoc),
    Acquire(SyncObj),
    Release(SyncObj),
    Fork(ThreadId),
    Join(ThreadId),
}

/// One synchronization or memory event of a run, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TraceOp {
    pub thread: ThreadId,
    pub op: TraceOpKind,
}

/// Two trace positions (`first < second`) that race on `loc`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RacePair {
    pub first: usize,
    pub second: usize,
    pub loc: MemLoc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Epoch {
    thread: u32,
    clock: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct History {
    write: Option<Epoch>,
    reads: Vec<Epoch>,
}

/// Online detector state. Keeps the last write and the last read per thread
/// for each location, which is exact up to and including the first race.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct RaceState {
    threads: Vec<VectorClock>,
    mutexes: Vec<VectorClock>,
    atomic: VectorClock,
    shared: Vec<History>,
    heap: Vec<Vec<History>>,
}

impl RaceState {
    pub fn new(shared: usize, mutexes: usize) -> Self {
        let mut main = VectorClock::new();
        main.set(0, 1);
        RaceState {
            threads: vec![main],
            mutexes: vec![VectorClock::new(); mutexes],
            atomic: VectorClock::new(),
            shared: vec![History::default(); shared],
            heap: Vec::new(),
        }
    }

    pub fn fork(&mut self, parent: ThreadId, child: ThreadId) {
        let p = parent.index();
        let mut clock = self.threads[p].clone();
        clock.set(child.index(), 1);
        if self.threads.len() <= child.index() {
            self.threads.resize(child.index() + 1, VectorClock::new());
        }
        self.threads[child.index()] = clock;
        self.threads[p].increment(p);
    }

    pub fn join(&mut self, parent: ThreadId, child: ThreadId) {
        let c = self.threads[child.index()].clone();
        self.threads[parent.index()].join(&c);
    }

    pub fn acquire(&mut self, t: ThreadId, obj: SyncObj) {
        let clock = match obj {
            SyncObj::Mutex(m) => &self.mutexes[m.index()],
            SyncObj::Atomic => &self.atomic,
        };
        let clock = clock.clone();
        self.threads[t.index()].join(&clock);
    }

    pub fn release(&mut self, t: ThreadId, obj: SyncObj) {
        let mine = &self.threads[t.index()];
        match obj {
            SyncObj::Mutex(m) => self.mutexes[m.index()].join(mine),
            SyncObj::Atomic => self.atomic.join(mine),
        }
        self.threads[t.index()].increment(t.index());
    }

    pub fn on_alloc(&mut self, cells: usize) {
        self.heap.push(vec![History::default(); cells]);
    }

    /// Record an access; returns `true` when it races with an earlier one.
    pub fn access(&mut self, t: ThreadId, loc: MemLoc, write: bool) -> bool {
        let ti = t.index();
        let clock = &self.threads[ti];
        let history = match loc {
            MemLoc::Shared(v) => &mut self.shared[v.index()],
            MemLoc::Heap(a, i) => &mut self.heap[a as usize][i as usize],
        };
        let ordered = |e: &Epoch| e.thread as usize == ti || e.clock <= clock.get(e.thread as usize);
        if let Some(w) = &history.write {
            if !ordered(w) {
                return true;
            }
        }
        let now = Epoch {
            thread: t.0,
            clock: clock.get(ti),
        };
        if write {
            if history.reads.iter().any(|r| !ordered(r)) {
                return true;
            }
            history.write = Some(now);
            history.reads.clear();
        } else if let Some(r) = history.reads.iter_mut().find(|r| r.thread == t.0) {
            *r = now;
        } else {
            history.reads.push(now);
        }
        false
    }

    pub fn write_key(&self, out: &mut Vec<i64>) {
        for c in self.threads.iter().chain(&self.mutexes) {
            c.write_key(out);
        }
        self.atomic.write_key(out);
        let mut hist = |h: &History| {
            match h.write {
                Some(e) => out.extend([i64::from(e.thread), i64::from(e.clock)]),
                None => out.push(-1),
            }
            let mut reads = h.reads.clone();
            reads.sort_by_key(|e| e.thread);
            out.push(reads.len() as i64);
            for e in reads {
                out.extend([i64::from(e.thread), i64::from(e.clock)]);
            }
        };
        for h in &self.shared {
            hist(h);
        }
        for cells in &self.heap {
            for h in cells {
                hist(h);
            }
        }
    }
}

/// All racing pairs of a trace, using vector clocks.
///
/// Threads that appear without a preceding `Fork` start with an empty clock
/// (only their own component set).
pub fn detect_races(trace: &[TraceOp]) -> Vec<RacePair> {
    let mut threads: Vec<Option<VectorClock>> = Vec::new();
    let mut sync: Vec<(SyncObj, VectorClock)> = Vec::new();
    // (position, thread, epoch clock, snapshot, loc, is_write)
    let mut accesses: Vec<(usize, usize, u32, VectorClock, MemLoc, bool)> = Vec::new();

    fn clock_of(threads: &mut Vec<Option<VectorClock>>, t: usize) -> &mut VectorClock {
        if threads.len() <= t {
            threads.resize(t + 1, None);
        }
        threads[t].get_or_insert_with(|| {
            let mut c = VectorClock::new();
            c.set(t, 1);
            c
        })
    }

    for (pos, op) in trace.iter().enumerate() {
        let t = op.thread.index();
        match op.op {
            TraceOpKind::Read(loc) | TraceOpKind::Write(loc) => {
                let c = clock_of(&mut threads, t).clone();
                let epoch = c.get(t);
                let write = matches!(op.op, TraceOpKind::Write(_));
                accesses.push((pos, t, epoch, c, loc, write));
            }
            TraceOpKind::Acquire(obj) => {
                let obj_clock = sync
                    .iter()
                    .find(|(o, _)| *o == obj)
                    .map(|(_, c)| c.clone())
                    .unwrap_or_default();
                clock_of(&mut threads, t).join(&obj_clock);
            }
            TraceOpKind::Release(obj) => {
                let mine = clock_of(&mut threads, t).clone();
                match sync.iter_mut().find(|(o, _)| *o == obj) {
                    Some((_, c)) => c.join(&mine),
                    None => sync.push((obj, mine)),
                }
                clock_of(&mut threads, t).increment(t);
            }
            TraceOpKind::Fork(child) => {
                let mut c = clock_of(&mut threads, t).clone();
                c.set(child.index(), 1);
                clock_of(&mut threads, child.index());
                threads[child.index()] = Some(c);
                clock_of(&mut threads, t).increment(t);
            }
            TraceOpKind::Join(child) => {
                let c = clock_of(&mut threads, child.index()).clone();
                clock_of(&mut threads, t).join(&c);
            }
        }
    }

    let mut out = Vec::new();
    for (j, later) in accesses.iter().enumerate() {
        for earlier in &accesses[..j] {
            if earlier.4 != later.4 || earlier.1 == later.1 || !(earlier.5 || later.5) {
                continue;
            }
            let ordered = earlier.2 <= later.3.get(earlier.1);
            if !ordered {
                out.push(RacePair {
                    first: earlier.0,
                    second: later.0,
                    loc: later.4,
                });
            }
        }
    }
    out.sort();
    out
}
