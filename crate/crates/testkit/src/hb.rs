//! Random well-formed synchronization traces and a direct happens-before
//! race oracle computed as a transitive closure over trace positions.

use ebf_core::exec::{MemLoc, RacePair, SyncObj, ThreadId, TraceOp, TraceOpKind};
use ebf_core::mir::{MutexId, VarId};
use ebf_core::rng::SplitMix64;

/// A trace of at most `max_len` events over up to four threads. Thread 0
/// exists from the start; other threads act only after being forked once
/// and never after being joined, as a joined thread has finished. Locks
/// are not required to be balanced.
pub fn random_trace(rng: &mut SplitMix64, max_len: usize) -> Vec<TraceOp> {
    let len = rng.below(max_len as u64 + 1) as usize;
    let mut started = [true, false, false, false];
    let mut joined = [false; 4];
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let live: Vec<usize> = (0..4).filter(|&t| started[t] && !joined[t]).collect();
        let t = live[rng.below(live.len() as u64) as usize];
        let loc = if rng.below(4) == 0 {
            MemLoc::Heap(rng.below(2) as u32, rng.below(2) as u32)
        } else {
            MemLoc::Shared(VarId(rng.below(3) as u32))
        };
        let obj = if rng.below(5) == 0 {
            SyncObj::Atomic
        } else {
            SyncObj::Mutex(MutexId(rng.below(2) as u32))
        };
        let op = match rng.below(7) {
            0 | 1 => TraceOpKind::Read(loc),
            2 | 3 => TraceOpKind::Write(loc),
            4 => TraceOpKind::Acquire(obj),
            5 => TraceOpKind::Release(obj),
            _ => {
                let unborn: Vec<usize> = (1..4).filter(|&c| !started[c]).collect();
                let joinable: Vec<usize> = (1..4).filter(|&c| started[c] && !joined[c] && c != t).collect();
                if !unborn.is_empty() && (joinable.is_empty() || rng.below(2) == 0) {
                    let c = unborn[rng.below(unborn.len() as u64) as usize];
                    started[c] = true;
                    TraceOpKind::Fork(ThreadId(c as u32))
                } else if !joinable.is_empty() {
                    let c = joinable[rng.below(joinable.len() as u64) as usize];
                    joined[c] = true;
                    TraceOpKind::Join(ThreadId(c as u32))
                } else {
                    continue;
                }
            }
        };
        out.push(TraceOp {
            thread: ThreadId(t as u32),
            op,
        });
    }
    out
}

/// All racing pairs, from the definition: two accesses to one location by
/// different threads, at least one a write, with neither ordered before
/// the other by the transitive closure of program order, release to every
/// later acquire of the same object, fork to the child's later events, the
/// child's earlier events to the join, and fork to join of the same child.
pub fn naive_races(trace: &[TraceOp]) -> Vec<RacePair> {
    let n = trace.len();
    let mut hb = vec![vec![false; n]; n];
    for j in 0..n {
        for i in 0..j {
            let (a, b) = (&trace[i], &trace[j]);
            let edge = a.thread == b.thread
                || matches!((a.op, b.op), (TraceOpKind::Release(x), TraceOpKind::Acquire(y)) if x == y)
                || matches!(a.op, TraceOpKind::Fork(c) if c == b.thread)
                || matches!(b.op, TraceOpKind::Join(c) if c == a.thread)
                || matches!((a.op, b.op), (TraceOpKind::Fork(x), TraceOpKind::Join(y)) if x == y);
            hb[i][j] = edge;
        }
    }
    // Edges only go forward, so one pass in position order closes them.
    for j in 0..n {
        for i in (0..j).rev() {
            if hb[i][j] {
                continue;
            }
            hb[i][j] = (i + 1..j).any(|m| hb[i][m] && hb[m][j]);
        }
    }
    let access = |op: TraceOpKind| match op {
        TraceOpKind::Read(l) => Some((l, false)),
        TraceOpKind::Write(l) => Some((l, true)),
        _ => None,
    };
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if let (Some((la, wa)), Some((lb, wb))) = (access(trace[i].op), access(trace[j].op)) {
                if la == lb && trace[i].thread != trace[j].thread && (wa || wb) && !hb[i][j] {
                    out.push(RacePair {
                        first: i,
                        second: j,
                        loc: la,
                    });
                }
            }
        }
    }
    out.sort();
    out
}
