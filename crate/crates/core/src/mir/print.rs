use core::fmt::{self, Write};

use super::*;

pub(super) fn write_program(p: &Program, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let mut any_decl = false;
    for v in &p.shared {
        if let Some(init) = v.init {
            writeln!(f, "shared {} = {}", v.name, init)?;
            any_decl = true;
        }
    }
    for m in p.mutexes.iter().filter(|m| m.declared) {
        writeln!(f, "mutex {}", m.name)?;
        any_decl = true;
    }
    let mut first = !any_decl;
    for kind in &p.kinds {
        let Some(body) = &kind.body else { continue };
        if !first {
            f.write_char('\n')?;
        }
        first = false;
        writeln!(f, "thread {}:", kind.name)?;
        let n = body.instrs.len() as u32;
        for (i, instr) in body.instrs.iter().enumerate() {
            write_labels_at(body, f, |t| t == i as u32)?;
            f.write_str("  ")?;
            write_instr(p, body, instr, f)?;
            f.write_char('\n')?;
        }
        write_labels_at(body, f, |t| t >= n)?;
    }
    Ok(())
}

fn write_labels_at(
    body: &Body,
    f: &mut fmt::Formatter<'_>,
    at: impl Fn(u32) -> bool,
) -> fmt::Result {
    for l in &body.labels {
        if l.target.is_some_and(&at) {
            writeln!(f, "{}:", l.name)?;
        }
    }
    Ok(())
}

struct Ctx<'a> {
    body: &'a Body,
}

impl Ctx<'_> {
    fn reg(&self, r: RegId) -> &str {
        self.body
            .registers
            .get(r.index())
            .map(|s| s.as_str())
            .unwrap_or("?")
    }

    fn operand(&self, o: Operand, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match o {
            Operand::Reg(r) => f.write_str(self.reg(r)),
            Operand::Const(c) => write!(f, "{}", c),
        }
    }

    fn expr(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.operand(e.head, f)?;
        for &(op, o) in &e.tail {
            f.write_str(match op {
                ArithOp::Add => " + ",
                ArithOp::Sub => " - ",
                ArithOp::Mul => " * ",
            })?;
            self.operand(o, f)?;
        }
        Ok(())
    }

    fn cond(&self, c: &Cond, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr(&c.lhs, f)?;
        write!(f, " {} ", c.op.symbol())?;
        self.expr(&c.rhs, f)
    }

    fn label(&self, l: LabelId) -> &str {
        self.body
            .labels
            .get(l.index())
            .map(|l| l.name.as_str())
            .unwrap_or("?")
    }
}

fn write_instr(p: &Program, body: &Body, instr: &Instruction, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let cx = Ctx { body };
    match instr {
        Instruction::Assign { dst, value } => {
            write!(f, "{} = ", cx.reg(*dst))?;
            cx.expr(value, f)
        }
        Instruction::Load { dst, var } => write!(f, "{} = load {}", cx.reg(*dst), p.var_name(*var)),
        Instruction::Store { var, value } => {
            write!(f, "store {} ", p.var_name(*var))?;
            cx.expr(value, f)
        }
        Instruction::Nondet { dst } => write!(f, "{} = nondet()", cx.reg(*dst)),
        Instruction::Create { dst, kind } => {
            write!(f, "{} = create {}", cx.reg(*dst), p.kind_name(*kind))
        }
        Instruction::Join { thread } => write!(f, "join {}", cx.reg(*thread)),
        Instruction::Lock(m) => write!(f, "lock {}", p.mutex_name(*m)),
        Instruction::Unlock(m) => write!(f, "unlock {}", p.mutex_name(*m)),
        Instruction::AtomicBegin => f.write_str("atomic_begin"),
        Instruction::AtomicEnd => f.write_str("atomic_end"),
        Instruction::Assume(c) => {
            f.write_str("assume ")?;
            cx.cond(c, f)
        }
        Instruction::Assert(c) => {
            f.write_str("assert ")?;
            cx.cond(c, f)
        }
        Instruction::Error => f.write_str("error"),
        Instruction::Goto(l) => write!(f, "goto {}", cx.label(*l)),
        Instruction::Branch { cond, target } => {
            f.write_str("if ")?;
            cx.cond(cond, f)?;
            write!(f, " goto {}", cx.label(*target))
        }
        Instruction::Alloc { dst, size } => {
            write!(f, "{} = alloc ", cx.reg(*dst))?;
            cx.expr(size, f)
        }
        Instruction::Free { handle } => write!(f, "free {}", cx.reg(*handle)),
        Instruction::HeapLoad { dst, handle, index } => {
            write!(f, "{} = hload {}[", cx.reg(*dst), cx.reg(*handle))?;
            cx.expr(index, f)?;
            f.write_char(']')
        }
        Instruction::HeapStore {
            handle,
            index,
            value,
        } => {
            write!(f, "hstore {}[", cx.reg(*handle))?;
            cx.expr(index, f)?;
            f.write_str("] ")?;
            cx.expr(value, f)
        }
        Instruction::Return => f.write_str("return"),
    }
}

/// Render one instruction the way the pretty-printer does.
pub fn instruction_text(p: &Program, kind: KindId, index: u32) -> alloc::string::String {
    struct One<'a>(&'a Program, &'a Body, &'a Instruction);
    impl fmt::Display for One<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write_instr(self.0, self.1, self.2, f)
        }
    }
    let body = p.body(kind);
    alloc::format!("{}", One(p, body, &body.instrs[index as usize]))
}
