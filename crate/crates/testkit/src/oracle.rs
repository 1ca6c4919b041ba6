//! A reference interpreter and exhaustive interleaving enumerator.
//!
//! Every instruction is a scheduling point and every `nondet()` branches
//! over the whole domain. Explored states are memoized, which is exact for
//! reachability because the reachable state space of the programs used
//! here is finite. There are no step or preemption bounds.

use std::collections::{BTreeSet, HashSet};

use ebf_core::mir;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Reg(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, regs: &[i64]) -> i64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Reg(r) => regs[*r],
            Expr::Add(a, b) => a.eval(regs).wrapping_add(b.eval(regs)),
            Expr::Sub(a, b) => a.eval(regs).wrapping_sub(b.eval(regs)),
            Expr::Mul(a, b) => a.eval(regs).wrapping_mul(b.eval(regs)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cond(pub Expr, pub Rel, pub Expr);

impl Cond {
    pub fn holds(&self, regs: &[i64]) -> bool {
        let (l, r) = (self.0.eval(regs), self.2.eval(regs));
        match self.1 {
            Rel::Eq => l == r,
            Rel::Ne => l != r,
            Rel::Lt => l < r,
            Rel::Le => l <= r,
            Rel::Gt => l > r,
            Rel::Ge => l >= r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Assign(usize, Expr),
    Load(usize, usize),
    Store(usize, Expr),
    Nondet(usize),
    Create(usize, usize),
    Join(usize),
    Lock(usize),
    Unlock(usize),
    Assume(Cond),
    Assert(Cond),
    Error,
    Goto(usize),
    IfGoto(Cond, usize),
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kind {
    pub name: String,
    pub regs: usize,
    pub ops: Vec<Op>,
}

/// A program for the reference interpreter. Kind 0 is the entry thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleProgram {
    pub shared: Vec<i64>,
    pub mutexes: usize,
    pub kinds: Vec<Kind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OracleBug {
    Assertion,
    Reachability,
    Deadlock,
    ThreadLeak,
    InvalidOperation,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Thread {
    kind: usize,
    pc: usize,
    regs: Vec<i64>,
    done: bool,
    joined: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct State {
    threads: Vec<Thread>,
    shared: Vec<i64>,
    owner: Vec<Option<usize>>,
}

pub struct Enumeration {
    /// Every bug kind that ends some interleaving.
    pub bugs: BTreeSet<OracleBug>,
    /// Final shared stores of runs that completed normally.
    pub finals: HashSet<Vec<i64>>,
    pub states: usize,
}

enum Next {
    Go(State),
    Bug(OracleBug),
    /// The run ended normally (entry returned or an assumption failed).
    End(State),
}

impl OracleProgram {
    fn initial(&self) -> State {
        State {
            threads: vec![Thread {
                kind: 0,
                pc: 0,
                regs: vec![0; self.kinds[0].regs],
                done: false,
                joined: false,
            }],
            shared: self.shared.clone(),
            owner: vec![None; self.mutexes],
        }
    }

    fn op(&self, s: &State, t: usize) -> &Op {
        let th = &s.threads[t];
        &self.kinds[th.kind].ops[th.pc]
    }

    fn join_target(s: &State, t: usize, reg: usize) -> Option<usize> {
        let v = s.threads[t].regs[reg];
        if v >= 1 && (v as usize) < s.threads.len() {
            Some(v as usize)
        } else {
            None
        }
    }

    fn waiting(&self, s: &State, t: usize) -> bool {
        match self.op(s, t) {
            Op::Lock(m) => s.owner[*m].is_some(),
            Op::Join(r) => match Self::join_target(s, t, *r) {
                Some(c) => !s.threads[c].done,
                None => false,
            },
            _ => false,
        }
    }

    /// All successors of running thread `t` once (one per input value).
    fn successors(&self, s: &State, t: usize, domain: &[i64]) -> Vec<Next> {
        let op = self.op(s, t).clone();
        let mut n = s.clone();
        let pc = n.threads[t].pc;
        n.threads[t].pc = pc + 1;
        let regs = s.threads[t].regs.clone();
        match op {
            Op::Assign(r, e) => n.threads[t].regs[r] = e.eval(&regs),
            Op::Load(r, v) => n.threads[t].regs[r] = s.shared[v],
            Op::Store(v, e) => n.shared[v] = e.eval(&regs),
            Op::Nondet(r) => {
                return domain
                    .iter()
                    .map(|&x| {
                        let mut m = n.clone();
                        m.threads[t].regs[r] = x;
                        Next::Go(m)
                    })
                    .collect();
            }
            Op::Create(r, k) => {
                n.threads.push(Thread {
                    kind: k,
                    pc: 0,
                    regs: vec![0; self.kinds[k].regs],
                    done: false,
                    joined: false,
                });
                n.threads[t].regs[r] = (n.threads.len() - 1) as i64;
            }
            Op::Join(r) => match Self::join_target(s, t, r) {
                Some(c) if c != t && !s.threads[c].joined => n.threads[c].joined = true,
                _ => return vec![Next::Bug(OracleBug::InvalidOperation)],
            },
            Op::Lock(m) => n.owner[m] = Some(t),
            Op::Unlock(m) => {
                if s.owner[m] != Some(t) {
                    return vec![Next::Bug(OracleBug::InvalidOperation)];
                }
                n.owner[m] = None;
            }
            Op::Assume(c) => {
                if !c.holds(&regs) {
                    return vec![Next::End(n)];
                }
            }
            Op::Assert(c) => {
                if !c.holds(&regs) {
                    return vec![Next::Bug(OracleBug::Assertion)];
                }
            }
            Op::Error => return vec![Next::Bug(OracleBug::Reachability)],
            Op::Goto(l) => n.threads[t].pc = l,
            Op::IfGoto(c, l) => {
                if c.holds(&regs) {
                    n.threads[t].pc = l;
                }
            }
            Op::Return => {
                n.threads[t].pc = pc;
                n.threads[t].done = true;
                if t == 0 {
                    if n.threads[1..].iter().any(|th| !th.joined) {
                        return vec![Next::Bug(OracleBug::ThreadLeak)];
                    }
                    return vec![Next::End(n)];
                }
            }
        }
        vec![Next::Go(n)]
    }

    /// Explore every interleaving and input choice.
    pub fn enumerate(&self, domain: &[i64]) -> Enumeration {
        let mut seen: HashSet<State> = HashSet::new();
        let mut finals = HashSet::new();
        let mut stack = vec![self.initial()];
        let mut bugs = BTreeSet::new();
        while let Some(s) = stack.pop() {
            if !seen.insert(s.clone()) {
                continue;
            }
            let live: Vec<usize> = (0..s.threads.len()).filter(|&t| !s.threads[t].done).collect();
            let ready: Vec<usize> = live.iter().copied().filter(|&t| !self.waiting(&s, t)).collect();
            if ready.is_empty() {
                bugs.insert(OracleBug::Deadlock);
                continue;
            }
            for t in ready {
                for next in self.successors(&s, t, domain) {
                    match next {
                        Next::Go(n) => stack.push(n),
                        Next::Bug(b) => {
                            bugs.insert(b);
                        }
                        Next::End(n) => {
                            finals.insert(n.shared);
                        }
                    }
                }
            }
        }
        Enumeration {
            bugs,
            finals,
            states: seen.len(),
        }
    }

    /// Convert a parsed program. Heap and atomic-region instructions are
    /// not supported.
    pub fn from_mir(p: &mir::Program) -> Result<OracleProgram, String> {
        let entry = p.entry().ok_or("no entry")?;
        let mut order: Vec<mir::KindId> = vec![entry];
        order.extend(p.bodies().map(|(k, _)| k).filter(|&k| k != entry));
        let kind_index = |k: mir::KindId| order.iter().position(|&o| o == k).unwrap();
        let mut kinds = Vec::new();
        for &k in &order {
            let body = p.body(k);
            let label = |l: mir::LabelId| body.labels[l.index()].target.unwrap() as usize;
            let mut ops = Vec::new();
            for ins in &body.instrs {
                use mir::Instruction as I;
                ops.push(match ins {
                    I::Assign { dst, value } => Op::Assign(dst.index(), expr(value)),
                    I::Load { dst, var } => Op::Load(dst.index(), var.index()),
                    I::Store { var, value } => Op::Store(var.index(), expr(value)),
                    I::Nondet { dst } => Op::Nondet(dst.index()),
                    I::Create { dst, kind } => Op::Create(dst.index(), kind_index(*kind)),
                    I::Join { thread } => Op::Join(thread.index()),
                    I::Lock(m) => Op::Lock(m.index()),
                    I::Unlock(m) => Op::Unlock(m.index()),
                    I::Assume(c) => Op::Assume(cond(c)),
                    I::Assert(c) => Op::Assert(cond(c)),
                    I::Error => Op::Error,
                    I::Goto(l) => Op::Goto(label(*l)),
                    I::Branch { cond: c, target } => Op::IfGoto(cond(c), label(*target)),
                    I::Return => Op::Return,
                    other => return Err(format!("unsupported instruction {:?}", other)),
                });
            }
            kinds.push(Kind {
                name: p.kind_name(k).to_string(),
                regs: body.registers.len(),
                ops,
            });
        }
        Ok(OracleProgram {
            shared: p.shared.iter().map(|v| v.init.unwrap_or(0)).collect(),
            mutexes: p.mutexes.len(),
            kinds,
        })
    }
}

fn operand(o: mir::Operand) -> Expr {
    match o {
        mir::Operand::Reg(r) => Expr::Reg(r.index()),
        mir::Operand::Const(c) => Expr::Const(c),
    }
}

/// Rebuild a precedence tree: products first, then a left-to-right sum.
fn expr(e: &mir::Expr) -> Expr {
    let mut terms: Vec<(bool, Expr)> = vec![(false, operand(e.head))];
    for &(op, o) in &e.tail {
        match op {
            mir::ArithOp::Mul => {
                let (neg, last) = terms.pop().unwrap();
                terms.push((neg, Expr::Mul(Box::new(last), Box::new(operand(o)))));
            }
            mir::ArithOp::Add => terms.push((false, operand(o))),
            mir::ArithOp::Sub => terms.push((true, operand(o))),
        }
    }
    let mut it = terms.into_iter();
    let (_, mut acc) = it.next().unwrap();
    for (neg, t) in it {
        acc = if neg {
            Expr::Sub(Box::new(acc), Box::new(t))
        } else {
            Expr::Add(Box::new(acc), Box::new(t))
        };
    }
    acc
}

fn cond(c: &mir::Cond) -> Cond {
    let rel = match c.op {
        mir::CmpOp::Eq => Rel::Eq,
        mir::CmpOp::Ne => Rel::Ne,
        mir::CmpOp::Lt => Rel::Lt,
        mir::CmpOp::Le => Rel::Le,
        mir::CmpOp::Gt => Rel::Gt,
        mir::CmpOp::Ge => Rel::Ge,
    };
    Cond(expr(&c.lhs), rel, expr(&c.rhs))
}
