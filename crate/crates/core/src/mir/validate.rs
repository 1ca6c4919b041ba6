use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use super::*;

/// One well-formedness violation. `line` is 0 for program-wide problems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// Check every program invariant. Returns an empty list iff the program is
/// well formed.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |line: u32, message: String| out.push(Diagnostic { line, message });

    if p.entry().is_none() {
        diag(0, format!("no entry thread (expected `thread {}:`)", ENTRY));
    }

    for (i, v) in p.shared.iter().enumerate() {
        if v.init.is_some() && p.shared[..i].iter().any(|w| w.name == v.name && w.init.is_some()) {
            diag(0, format!("duplicate shared variable '{}'", v.name));
        }
    }
    for (i, m) in p.mutexes.iter().enumerate() {
        if m.declared && p.mutexes[..i].iter().any(|n| n.name == m.name && n.declared) {
            diag(0, format!("duplicate mutex '{}'", m.name));
        }
    }
    for (i, k) in p.kinds.iter().enumerate() {
        if let Some(body) = &k.body {
            if p.kinds[..i].iter().any(|o| o.name == k.name && o.body.is_some()) {
                diag(body.header_line, format!("duplicate thread kind '{}'", k.name));
            }
        }
    }

    for (kind, body) in p.bodies() {
        let kname = p.kind_name(kind);
        if body.instrs.is_empty() {
            diag(body.header_line, format!("thread '{}' has no instructions", kname));
            continue;
        }
        let mut seen_labels: Vec<&str> = vec![];
        for l in &body.labels {
            if l.target.is_some() {
                if seen_labels.contains(&l.name.as_str()) {
                    diag(body.header_line, format!("duplicate label '{}' in thread '{}'", l.name, kname));
                }
                seen_labels.push(&l.name);
            }
        }
        let n = body.instrs.len() as u32;
        for l in &body.labels {
            if let Some(t) = l.target {
                if t >= n {
                    diag(
                        body.lines.last().copied().unwrap_or(body.header_line),
                        format!("label '{}' does not precede an instruction", l.name),
                    );
                }
            }
        }

        let mut atomic_open: Option<u32> = None;
        for (idx, instr) in body.instrs.iter().enumerate() {
            let line = body.line(idx as u32);
            check_refs(p, body, instr, line, &mut diag);
            match instr {
                Instruction::AtomicBegin => {
                    if atomic_open.is_some() {
                        diag(line, String::from("nested atomic region"));
                    }
                    atomic_open = Some(line);
                }
                Instruction::AtomicEnd if atomic_open.take().is_none() => {
                    diag(line, String::from("atomic_end without atomic_begin"));
                }
                _ => {}
            }
        }
        if let Some(line) = atomic_open {
            diag(line, String::from("atomic region is never closed"));
        }
        let last = body.instrs.last().unwrap();
        if !last.is_terminator() {
            diag(
                body.line(n - 1),
                format!(
                    "thread '{}' does not end in return, error or goto",
                    kname
                ),
            );
        }
    }
    out
}

fn check_refs(
    p: &Program,
    body: &Body,
    instr: &Instruction,
    line: u32,
    diag: &mut impl FnMut(u32, String),
) {
    let var = |v: VarId, diag: &mut dyn FnMut(u32, String)| match p.shared.get(v.index()) {
        Some(s) if s.init.is_some() => {}
        Some(s) => diag(line, format!("undeclared shared variable '{}'", s.name)),
        None => diag(line, format!("shared variable #{} out of range", v.0)),
    };
    let mutex = |m: MutexId, diag: &mut dyn FnMut(u32, String)| match p.mutexes.get(m.index()) {
        Some(d) if d.declared => {}
        Some(d) => diag(line, format!("undeclared mutex '{}'", d.name)),
        None => diag(line, format!("mutex #{} out of range", m.0)),
    };
    let label = |l: LabelId, diag: &mut dyn FnMut(u32, String)| match body.labels.get(l.index()) {
        Some(d) if d.target.is_some() => {}
        Some(d) => diag(line, format!("unresolved label '{}'", d.name)),
        None => diag(line, format!("label #{} out of range", l.0)),
    };
    let regs_ok = |e: &Expr| {
        e.operands().all(|o| match o {
            Operand::Reg(r) => r.index() < body.registers.len(),
            Operand::Const(_) => true,
        })
    };
    let reg_ok = |r: RegId| r.index() < body.registers.len();
    let mut bad_reg = false;
    match instr {
        Instruction::Assign { dst, value } => bad_reg = !reg_ok(*dst) || !regs_ok(value),
        Instruction::Load { dst, var: v } => {
            bad_reg = !reg_ok(*dst);
            var(*v, diag);
        }
        Instruction::Store { var: v, value } => {
            bad_reg = !regs_ok(value);
            var(*v, diag);
        }
        Instruction::Nondet { dst } => bad_reg = !reg_ok(*dst),
        Instruction::Create { dst, kind } => {
            bad_reg = !reg_ok(*dst);
            match p.kinds.get(kind.index()) {
                Some(k) if p.kinds.iter().any(|o| o.name == k.name && o.body.is_some()) => {}
                Some(k) => diag(line, format!("unknown thread kind '{}'", k.name)),
                None => diag(line, format!("thread kind #{} out of range", kind.0)),
            }
        }
        Instruction::Join { thread } => bad_reg = !reg_ok(*thread),
        Instruction::Lock(m) | Instruction::Unlock(m) => mutex(*m, diag),
        Instruction::Assume(c) | Instruction::Assert(c) => {
            bad_reg = !regs_ok(&c.lhs) || !regs_ok(&c.rhs)
        }
        Instruction::Goto(l) => label(*l, diag),
        Instruction::Branch { cond, target } => {
            bad_reg = !regs_ok(&cond.lhs) || !regs_ok(&cond.rhs);
            label(*target, diag);
        }
        Instruction::Alloc { dst, size } => bad_reg = !reg_ok(*dst) || !regs_ok(size),
        Instruction::Free { handle } => bad_reg = !reg_ok(*handle),
        Instruction::HeapLoad { dst, handle, index } => {
            bad_reg = !reg_ok(*dst) || !reg_ok(*handle) || !regs_ok(index)
        }
        Instruction::HeapStore {
            handle,
            index,
            value,
        } => bad_reg = !reg_ok(*handle) || !regs_ok(index) || !regs_ok(value),
        Instruction::AtomicBegin | Instruction::AtomicEnd | Instruction::Error | Instruction::Return => {}
    }
    if bad_reg {
        diag(line, String::from("register index out of range"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse_unchecked;

    fn diags(src: &str) -> Vec<Diagnostic> {
        validate(&parse_unchecked(src).unwrap())
    }

    #[test]
    fn well_formed_program_has_no_diagnostics() {
        let src = "shared a = 0\nthread main:\n t = create w\n join t\n return\nthread w:\n x = load a\n store a x + 1\n return\n";
        assert!(diags(src).is_empty());
    }

    #[test]
    fn missing_terminator() {
        let d = diags("thread main:\n x = 1\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 2);
        assert!(d[0].message.contains("does not end"));
    }

    #[test]
    fn create_of_unknown_kind() {
        let d = diags("thread main:\n t = create ghost\n return\n");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("ghost"));
    }

    #[test]
    fn undeclared_names() {
        let d = diags("thread main:\n x = load nope\n lock m\n return\n");
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].line, d[1].line), (2, 3));
    }

    #[test]
    fn dangling_label_and_empty_body() {
        let d = diags("thread main:\n return\nend:\nthread w:\n");
        assert_eq!(d.len(), 2, "{:?}", d);
    }

    #[test]
    fn duplicates() {
        let d = diags("shared a = 0\nshared a = 1\nmutex m\nmutex m\nthread main:\nL:\n x = 1\nL:\n return\n");
        assert_eq!(d.len(), 3, "{:?}", d);
    }

    #[test]
    fn unbalanced_atomic() {
        assert_eq!(diags("thread main:\n atomic_end\n return\n").len(), 1);
        assert_eq!(diags("thread main:\n atomic_begin\n return\n").len(), 1);
    }
}
