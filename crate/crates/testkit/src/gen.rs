//! Random loop-free programs, produced both as source text and as a
//! reference AST built independently of the parser.
//!
//! Shape: an entry thread that creates one or two workers, at most six
//! instructions per thread, at most two `nondet()` sites overall, and only
//! forward branches to a label just before each thread's final `return`.

use std::fmt::Write;

use ebf_core::rng::SplitMix64;

use crate::oracle::{Cond, Expr, Kind, Op, OracleProgram, Rel};

pub struct Generated {
    pub text: String,
    pub oracle: OracleProgram,
}

pub const MAX_OPS: usize = 6;
pub const MAX_NONDET: usize = 2;

struct Body {
    text: String,
    ops: Vec<Op>,
    regs: Vec<String>,
}

impl Body {
    fn new() -> Self {
        Body {
            text: String::new(),
            ops: Vec::new(),
            regs: Vec::new(),
        }
    }

    fn reg(&mut self, name: &str) -> usize {
        match self.regs.iter().position(|r| r == name) {
            Some(i) => i,
            None => {
                self.regs.push(name.to_string());
                self.regs.len() - 1
            }
        }
    }

    fn push(&mut self, line: String, op: Op) {
        writeln!(self.text, "  {}", line).unwrap();
        self.ops.push(op);
    }

    fn fresh(&mut self) -> (String, usize) {
        let name = format!("r{}", self.regs.len());
        let idx = self.reg(&name);
        (name, idx)
    }
}

const RELS: [(Rel, &str); 6] = [
    (Rel::Eq, "=="),
    (Rel::Ne, "!="),
    (Rel::Lt, "<"),
    (Rel::Le, "<="),
    (Rel::Gt, ">"),
    (Rel::Ge, ">="),
];

struct Ctx<'a> {
    rng: &'a mut SplitMix64,
    vars: usize,
    mutexes: usize,
    nondet_left: usize,
}

impl Ctx<'_> {
    fn pick(&mut self, n: usize) -> usize {
        self.rng.below(n as u64) as usize
    }

    fn small(&mut self) -> i64 {
        self.rng.range_i64(-1, 3)
    }

    /// An existing register, or a constant when there is none.
    fn operand(&mut self, b: &Body) -> (String, Expr) {
        if !b.regs.is_empty() && self.pick(3) > 0 {
            let i = self.pick(b.regs.len());
            (b.regs[i].clone(), Expr::Reg(i))
        } else {
            let c = self.small();
            (c.to_string(), Expr::Const(c))
        }
    }

    fn expr(&mut self, b: &Body) -> (String, Expr) {
        let (lt, le) = self.operand(b);
        match self.pick(4) {
            0 => {
                let (rt, re) = self.operand(b);
                (format!("{} + {}", lt, rt), Expr::Add(Box::new(le), Box::new(re)))
            }
            1 => {
                let (rt, re) = self.operand(b);
                (format!("{} - {}", lt, rt), Expr::Sub(Box::new(le), Box::new(re)))
            }
            _ => (lt, le),
        }
    }

    fn cond(&mut self, b: &Body) -> (String, Cond) {
        let (lt, le) = self.operand(b);
        let (rel, sym) = RELS[self.pick(RELS.len())];
        let c = self.small();
        (format!("{} {} {}", lt, sym, c), Cond(le, rel, Expr::Const(c)))
    }

    /// One random instruction. Branch targets are fixed up later.
    fn instr(&mut self, b: &mut Body) {
        loop {
            match self.pick(12) {
                0 | 1 => {
                    let v = self.pick(self.vars);
                    let (name, r) = b.fresh();
                    b.push(format!("{} = load v{}", name, v), Op::Load(r, v));
                }
                2 | 3 => {
                    let v = self.pick(self.vars);
                    let (t, e) = self.expr(b);
                    b.push(format!("store v{} {}", v, t), Op::Store(v, e));
                }
                4 => {
                    let (t, e) = self.expr(b);
                    let (name, r) = b.fresh();
                    b.push(format!("{} = {}", name, t), Op::Assign(r, e));
                }
                5 if self.nondet_left > 0 => {
                    self.nondet_left -= 1;
                    let (name, r) = b.fresh();
                    b.push(format!("{} = nondet()", name), Op::Nondet(r));
                }
                6 if self.mutexes > 0 => {
                    let m = self.pick(self.mutexes);
                    b.push(format!("lock m{}", m), Op::Lock(m));
                }
                7 if self.mutexes > 0 => {
                    let m = self.pick(self.mutexes);
                    b.push(format!("unlock m{}", m), Op::Unlock(m));
                }
                8 => {
                    let (t, c) = self.cond(b);
                    b.push(format!("assert {}", t), Op::Assert(c));
                }
                9 => {
                    let (t, c) = self.cond(b);
                    b.push(format!("assume {}", t), Op::Assume(c));
                }
                10 => {
                    let (t, c) = self.cond(b);
                    b.push(format!("if {} goto end", t), Op::IfGoto(c, usize::MAX));
                }
                11 if self.pick(4) == 0 => b.push("error".to_string(), Op::Error),
                _ => continue,
            }
            return;
        }
    }
}

/// Append `end:` and the final `return`.
fn finish(b: &mut Body) {
    b.text.push_str("end:\n");
    b.push("return".to_string(), Op::Return);
}

pub fn random_program(rng: &mut SplitMix64) -> Generated {
    let vars = 1 + rng.below(2) as usize;
    let mutexes = rng.below(2) as usize;
    let workers = 1 + rng.below(2) as usize;
    let kinds_n = 1 + rng.below(workers as u64) as usize;
    let mut text = String::new();
    let mut shared = Vec::new();
    for v in 0..vars {
        let init = rng.range_i64(0, 2);
        writeln!(text, "shared v{} = {}", v, init).unwrap();
        shared.push(init);
    }
    for m in 0..mutexes {
        writeln!(text, "mutex m{}", m).unwrap();
    }
    let mut ctx = Ctx {
        rng,
        vars,
        mutexes,
        nondet_left: MAX_NONDET,
    };

    // Entry thread: creates, some work, joins (some may be skipped), return.
    let mut main = Body::new();
    let mut handles = Vec::new();
    for w in 0..workers {
        let k = 1 + w % kinds_n;
        let (name, r) = main.fresh();
        main.push(format!("{} = create w{}", name, k - 1), Op::Create(r, k));
        handles.push((name, r));
    }
    let joins: Vec<bool> = (0..workers).map(|_| ctx.pick(6) > 0).collect();
    let budget = MAX_OPS - 1 - workers - joins.iter().filter(|&&j| j).count();
    let before = ctx.pick(budget + 1);
    for _ in 0..before {
        ctx.instr(&mut main);
    }
    for ((name, r), j) in handles.iter().zip(&joins) {
        if *j {
            main.push(format!("join {}", name), Op::Join(*r));
        }
    }
    for _ in before..budget {
        if ctx.pick(2) == 0 {
            ctx.instr(&mut main);
        }
    }
    let mut bodies = vec![main];
    for _ in 0..kinds_n {
        let mut b = Body::new();
        let n = 1 + ctx.pick(MAX_OPS - 1);
        for _ in 0..n {
            ctx.instr(&mut b);
        }
        bodies.push(b);
    }

    // Every branch targets the final `return`.
    let mut kinds = Vec::new();
    for (i, mut b) in bodies.into_iter().enumerate() {
        let ret = b.ops.len();
        for op in &mut b.ops {
            if let Op::IfGoto(_, t) = op {
                *t = ret;
            }
        }
        finish(&mut b);
        let name = if i == 0 { "main".to_string() } else { format!("w{}", i - 1) };
        writeln!(text, "thread {}:", name).unwrap();
        text.push_str(&b.text);
        kinds.push(Kind {
            name,
            regs: b.regs.len(),
            ops: b.ops,
        });
    }
    Generated {
        text,
        oracle: OracleProgram {
            shared,
            mutexes,
            kinds,
        },
    }
}
