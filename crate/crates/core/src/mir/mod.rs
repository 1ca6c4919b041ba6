//! The concurrent intermediate representation.
//!
//! A program is a set of shared integer variables, declared mutexes and
//! thread kinds. Each thread kind has a flat instruction list operating on
//! thread-local registers. The thread kind named `main` is the entry thread.
//!
//! Names are interned into per-program tables when parsed. References to a
//! name that is never declared still get a table entry (with no definition),
//! so that any text that is syntactically well formed becomes a [`Program`]
//! and all semantic problems are reported by [`validate`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

mod parse;
mod print;
mod validate;

pub use parse::{parse_program, parse_unchecked, ParseError};
pub use print::instruction_text;
pub use validate::{validate, Diagnostic};

/// Name of the entry thread kind.
pub const ENTRY: &str = "main";

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Index into [`Program::shared`].
    VarId
);
id_type!(
    /// Index into [`Program::mutexes`].
    MutexId
);
id_type!(
    /// Index into [`Program::kinds`].
    KindId
);
id_type!(
    /// Index into [`Body::registers`].
    RegId
);
id_type!(
    /// Index into [`Body::labels`].
    LabelId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(RegId),
    Const(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// `head (op operand)*` with `*` binding tighter than `+` and `-`.
/// Arithmetic wraps at 64 bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub head: Operand,
    pub tail: Vec<(ArithOp, Operand)>,
}

impl Expr {
    pub fn constant(value: i64) -> Self {
        Expr {
            head: Operand::Const(value),
            tail: Vec::new(),
        }
    }

    pub fn reg(reg: RegId) -> Self {
        Expr {
            head: Operand::Reg(reg),
            tail: Vec::new(),
        }
    }

    pub fn eval(&self, regs: &[i64]) -> i64 {
        let read = |op: Operand| match op {
            Operand::Reg(r) => regs.get(r.index()).copied().unwrap_or(0),
            Operand::Const(c) => c,
        };
        let mut total: i64 = 0;
        let mut term = read(self.head);
        for &(op, operand) in &self.tail {
            let v = read(operand);
            match op {
                ArithOp::Mul => term = term.wrapping_mul(v),
                ArithOp::Add => {
                    total = total.wrapping_add(term);
                    term = v;
                }
                ArithOp::Sub => {
                    total = total.wrapping_add(term);
                    term = v.wrapping_neg();
                }
            }
        }
        total.wrapping_add(term)
    }

    pub fn operands(&self) -> impl Iterator<Item = Operand> + '_ {
        core::iter::once(self.head).chain(self.tail.iter().map(|&(_, o)| o))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn apply(self, l: i64, r: i64) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Lt => l < r,
            CmpOp::Le => l <= r,
            CmpOp::Gt => l > r,
            CmpOp::Ge => l >= r,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cond {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

impl Cond {
    pub fn eval(&self, regs: &[i64]) -> bool {
        self.op.apply(self.lhs.eval(regs), self.rhs.eval(regs))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// `r = <expr>`
    Assign { dst: RegId, value: Expr },
    /// `r = load a`
    Load { dst: RegId, var: VarId },
    /// `store a <expr>`
    Store { var: VarId, value: Expr },
    /// `r = nondet()`
    Nondet { dst: RegId },
    /// `t = create kind`
    Create { dst: RegId, kind: KindId },
    /// `join t`
    Join { thread: RegId },
    Lock(MutexId),
    Unlock(MutexId),
    AtomicBegin,
    AtomicEnd,
    Assume(Cond),
    Assert(Cond),
    Error,
    Goto(LabelId),
    /// `if <cond> goto L`
    Branch { cond: Cond, target: LabelId },
    /// `h = alloc <expr>`
    Alloc { dst: RegId, size: Expr },
    /// `free h`
    Free { handle: RegId },
    /// `x = hload h[<expr>]`
    HeapLoad {
        dst: RegId,
        handle: RegId,
        index: Expr,
    },
    /// `hstore h[<expr>] <expr>`
    HeapStore {
        handle: RegId,
        index: Expr,
        value: Expr,
    },
    Return,
}

impl Instruction {
    /// Instructions after which control never falls through.
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Instruction::Return | Instruction::Error | Instruction::Goto(_)
        )
    }

    /// Whether the instruction can observe or change state shared with
    /// other threads (shared store, heap, locks, thread table or input
    /// stream) or end the whole run without a finding (`assume`).
    /// Everything else only touches the thread's own registers and
    /// commutes with the steps of other threads.
    pub fn is_visible(&self) -> bool {
        !matches!(
            self,
            Instruction::Assign { .. }
                | Instruction::Assert(_)
                | Instruction::Error
                | Instruction::Goto(_)
                | Instruction::Branch { .. }
        )
    }

    pub(crate) fn conditions(&self) -> impl Iterator<Item = &Cond> {
        let cond = match self {
            Instruction::Assume(c) | Instruction::Assert(c) => Some(c),
            Instruction::Branch { cond, .. } => Some(cond),
            _ => None,
        };
        cond.into_iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SharedVar {
    pub name: String,
    /// `None` when the variable is referenced but never declared.
    pub init: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MutexDecl {
    pub name: String,
    pub declared: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub name: String,
    /// Instruction index the label points at; `None` if never defined.
    pub target: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Body {
    pub instrs: Vec<Instruction>,
    /// Source line of each instruction.
    pub lines: Vec<u32>,
    pub registers: Vec<String>,
    pub labels: Vec<Label>,
    /// Line of the `thread` header.
    pub header_line: u32,
}

impl Body {
    pub fn label_target(&self, label: LabelId) -> Option<u32> {
        self.labels.get(label.index()).and_then(|l| l.target)
    }

    pub fn line(&self, index: u32) -> u32 {
        self.lines.get(index as usize).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ThreadKind {
    pub name: String,
    /// `None` when the kind is referenced by `create` but never declared.
    pub body: Option<Body>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub shared: Vec<SharedVar>,
    pub mutexes: Vec<MutexDecl>,
    pub kinds: Vec<ThreadKind>,
}

impl Program {
    /// The first declared thread kind named `main`.
    pub fn entry(&self) -> Option<KindId> {
        self.kinds
            .iter()
            .position(|k| k.name == ENTRY && k.body.is_some())
            .map(|i| KindId(i as u32))
    }

    pub fn kind(&self, kind: KindId) -> &ThreadKind {
        &self.kinds[kind.index()]
    }

    /// Body of a declared kind. Panics for undeclared kinds, which a valid
    /// program never references.
    pub fn body(&self, kind: KindId) -> &Body {
        self.kinds[kind.index()]
            .body
            .as_ref()
            .expect("thread kind has no body")
    }

    pub fn kind_name(&self, kind: KindId) -> &str {
        &self.kinds[kind.index()].name
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.shared[var.index()].name
    }

    pub fn mutex_name(&self, m: MutexId) -> &str {
        &self.mutexes[m.index()].name
    }

    pub fn kind_by_name(&self, name: &str) -> Option<KindId> {
        self.kinds
            .iter()
            .position(|k| k.name == name)
            .map(|i| KindId(i as u32))
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.shared
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
    }

    /// Declared thread kinds with their ids.
    pub fn bodies(&self) -> impl Iterator<Item = (KindId, &Body)> {
        self.kinds
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.body.as_ref().map(|b| (KindId(i as u32), b)))
    }

    /// Number of `nondet()` instructions in the program text.
    pub fn nondet_sites(&self) -> usize {
        self.bodies()
            .map(|(_, b)| {
                b.instrs
                    .iter()
                    .filter(|i| matches!(i, Instruction::Nondet { .. }))
                    .count()
            })
            .sum()
    }

    /// Integer literals appearing in comparisons, sorted and deduplicated.
    pub fn comparison_constants(&self) -> Vec<i64> {
        let mut out = Vec::new();
        for (_, body) in self.bodies() {
            for instr in &body.instrs {
                for cond in instr.conditions() {
                    for op in cond.lhs.operands().chain(cond.rhs.operands()) {
                        if let Operand::Const(c) = op {
                            out.push(c);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Equality ignoring source line information.
    pub fn same_structure(&self, other: &Program) -> bool {
        if self.shared != other.shared || self.mutexes != other.mutexes {
            return false;
        }
        self.kinds.len() == other.kinds.len()
            && self.kinds.iter().zip(&other.kinds).all(|(a, b)| {
                a.name == b.name
                    && match (&a.body, &b.body) {
                        (None, None) => true,
                        (Some(x), Some(y)) => {
                            x.instrs == y.instrs
                                && x.registers == y.registers
                                && x.labels == y.labels
                        }
                        _ => false,
                    }
            })
    }

    /// 64-bit FNV-1a hash of the canonical pretty-printed program.
    pub fn fingerprint(&self) -> u64 {
        use core::hash::Hasher;
        let mut hasher = fnv::FnvHasher::default();
        hasher.write(alloc::format!("{}", self).as_bytes());
        hasher.finish()
    }

    pub fn fingerprint_hex(&self) -> String {
        alloc::format!("{:016x}", self.fingerprint())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_program(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regs_expr(text: &str) -> (Expr, Vec<String>) {
        let src = alloc::format!("thread main:\n x = {}\n return\n", text);
        let p = parse_program(&src).unwrap();
        let body = p.body(p.entry().unwrap()).clone();
        match &body.instrs[0] {
            Instruction::Assign { value, .. } => (value.clone(), body.registers),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn multiplication_binds_tighter() {
        let (e, _) = regs_expr("2 + 3 * 4 - 5");
        assert_eq!(e.eval(&[]), 9);
        let (e, _) = regs_expr("2 * 3 - 4 * 5");
        assert_eq!(e.eval(&[]), -14);
    }

    #[test]
    fn arithmetic_wraps() {
        let (e, _) = regs_expr("9223372036854775807 + 1");
        assert_eq!(e.eval(&[]), i64::MIN);
    }

    #[test]
    fn registers_read_from_file() {
        let (e, regs) = regs_expr("y * 2 + z");
        // x is interned first as the destination.
        assert_eq!(regs, ["x", "y", "z"]);
        assert_eq!(e.eval(&[0, 5, 1]), 11);
    }

    #[test]
    fn comparison_constants_are_collected() {
        let p = parse_program(
            "thread main:\n x = nondet()\n assume x > -3\n if x == 42 goto L\n return\nL:\n assert x != 7\n return\n",
        )
        .unwrap();
        assert_eq!(p.comparison_constants(), [-3, 7, 42]);
        assert_eq!(p.nondet_sites(), 1);
    }
}
