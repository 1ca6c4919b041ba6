use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseError {
    /// The text does not follow the grammar.
    Syntax {
        line: u32,
        column: u32,
        message: String,
    },
    /// The text parsed but the program violates a well-formedness rule.
    Invalid(Vec<Diagnostic>),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Syntax {
                line,
                column,
                message,
            } => write!(f, "{}:{}: {}", line, column, message),
            ParseError::Invalid(diags) => {
                for (i, d) in diags.iter().enumerate() {
                    if i > 0 {
                        f.write_str("\n")?;
                    }
                    write!(f, "{}", d)?;
                }
                Ok(())
            }
        }
    }
}

/// Parse and validate. Any diagnostic from [`validate`] makes this fail.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let program = parse_unchecked(text)?;
    let diags = validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(ParseError::Invalid(diags))
    }
}

/// Parse without validating. Only grammar violations are errors.
pub fn parse_unchecked(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser {
        program: Program::default(),
        current: None,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u32 + 1;
        let code = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens = tokenize(code, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        parser.line(&tokens, line_no)?;
    }
    parser.finish();
    Ok(parser.program)
}

const KEYWORDS: &[&str] = &[
    "shared",
    "mutex",
    "thread",
    "return",
    "error",
    "atomic_begin",
    "atomic_end",
    "goto",
    "if",
    "assume",
    "assert",
    "join",
    "lock",
    "unlock",
    "free",
    "store",
    "hstore",
    "load",
    "nondet",
    "create",
    "alloc",
    "hload",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Int(&'a str),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token<'a> {
    tok: Tok<'a>,
    col: u32,
    width: u32,
}

fn tokenize(code: &str, line: u32) -> Result<Vec<Token<'_>>, ParseError> {
    let bytes = code.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = code[..i].chars().count() as u32 + 1;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(&code[start..i]),
                col,
                width: (i - start) as u32,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(syntax(line, col, "malformed number"));
            }
            out.push(Token {
                tok: Tok::Int(&code[start..i]),
                col,
                width: (i - start) as u32,
            });
            continue;
        }
        let two = bytes.get(i..i + 2).unwrap_or(&[]);
        let sym: &'static str = match two {
            b"==" => "==",
            b"!=" => "!=",
            b"<=" => "<=",
            b">=" => ">=",
            _ => match c {
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                b'+' => "+",
                b'-' => "-",
                b'*' => "*",
                b'(' => "(",
                b')' => ")",
                b'[' => "[",
                b']' => "]",
                b':' => ":",
                _ => {
                    let ch = code[i..].chars().next().unwrap_or('?');
                    return Err(syntax(
                        line,
                        col,
                        &alloc::format!("unexpected character '{}'", ch),
                    ));
                }
            },
        };
        i += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            col,
            width: sym.len() as u32,
        });
    }
    Ok(out)
}

fn syntax(line: u32, column: u32, message: &str) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.to_string(),
    }
}

struct Parser {
    program: Program,
    current: Option<(KindId, Body)>,
}

struct Cursor<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    line: u32,
}

impl<'t, 'a> Cursor<'t, 'a> {
    fn peek(&self) -> Option<&Tok<'a>> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> u32 {
        match self.tokens.get(self.pos) {
            Some(t) => t.col,
            None => self.tokens.last().map(|t| t.col + t.width).unwrap_or(1),
        }
    }

    fn err(&self, message: &str) -> ParseError {
        syntax(self.line, self.col(), message)
    }

    fn next(&mut self) -> Option<Tok<'a>> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Sym(s)) if *s == sym => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&alloc::format!("expected '{}'", sym))),
        }
    }

    fn name(&mut self, what: &str) -> Result<&'a str, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.contains(s) => {
                let s = *s;
                self.pos += 1;
                Ok(s)
            }
            Some(Tok::Ident(s)) => {
                Err(self.err(&alloc::format!("keyword '{}' cannot be used as {}", s, what)))
            }
            _ => Err(self.err(&alloc::format!("expected {}", what))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if *s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&alloc::format!("expected '{}'", kw))),
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let negative = matches!(self.peek(), Some(Tok::Sym("-")));
        if negative {
            self.pos += 1;
        }
        match self.peek() {
            Some(Tok::Int(digits)) => {
                let digits = *digits;
                let col = self.col();
                self.pos += 1;
                let text = if negative {
                    alloc::format!("-{}", digits)
                } else {
                    digits.to_string()
                };
                text.parse::<i64>()
                    .map_err(|_| syntax(self.line, col, "integer literal out of range"))
            }
            _ => Err(self.err("expected integer literal")),
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.pos < self.tokens.len() {
            Err(self.err("unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

fn intern(names: &mut Vec<String>, name: &str) -> u32 {
    if let Some(i) = names.iter().position(|n| n == name) {
        return i as u32;
    }
    names.push(name.to_string());
    (names.len() - 1) as u32
}

impl Parser {
    fn line(&mut self, tokens: &[Token<'_>], line: u32) -> Result<(), ParseError> {
        let mut cur = Cursor {
            tokens,
            pos: 0,
            line,
        };
        match cur.peek() {
            Some(Tok::Ident("shared")) => {
                cur.pos += 1;
                let name = cur.name("variable name")?;
                cur.expect_sym("=")?;
                let init = cur.int()?;
                cur.end()?;
                self.declare_var(name, init);
                Ok(())
            }
            Some(Tok::Ident("mutex")) => {
                cur.pos += 1;
                let name = cur.name("mutex name")?;
                cur.end()?;
                self.declare_mutex(name);
                Ok(())
            }
            Some(Tok::Ident("thread")) => {
                cur.pos += 1;
                let name = cur.name("thread kind name")?;
                cur.expect_sym(":")?;
                cur.end()?;
                self.start_thread(name, line);
                Ok(())
            }
            Some(Tok::Ident(name))
                if !KEYWORDS.contains(name)
                    && matches!(tokens.get(1).map(|t| &t.tok), Some(Tok::Sym(":"))) =>
            {
                let name = *name;
                cur.pos += 2;
                cur.end()?;
                let Some((_, body)) = self.current.as_mut() else {
                    return Err(syntax(line, 1, "label outside of a thread"));
                };
                define_label(body, name);
                Ok(())
            }
            _ => {
                if self.current.is_none() {
                    return Err(syntax(line, cur.col(), "instruction outside of a thread"));
                }
                let instr = self.instruction(&mut cur)?;
                cur.end()?;
                let (_, body) = self.current.as_mut().unwrap();
                body.instrs.push(instr);
                body.lines.push(line);
                Ok(())
            }
        }
    }

    fn declare_var(&mut self, name: &str, init: i64) {
        let shared = &mut self.program.shared;
        if let Some(v) = shared.iter_mut().find(|v| v.name == name && v.init.is_none()) {
            v.init = Some(init);
        } else {
            shared.push(SharedVar {
                name: name.to_string(),
                init: Some(init),
            });
        }
    }

    fn declare_mutex(&mut self, name: &str) {
        let mutexes = &mut self.program.mutexes;
        if let Some(m) = mutexes.iter_mut().find(|m| m.name == name && !m.declared) {
            m.declared = true;
        } else {
            mutexes.push(MutexDecl {
                name: name.to_string(),
                declared: true,
            });
        }
    }

    fn start_thread(&mut self, name: &str, line: u32) {
        self.finish();
        let kinds = &mut self.program.kinds;
        let id = match kinds.iter().position(|k| k.name == name && k.body.is_none()) {
            Some(i) => i,
            None => {
                kinds.push(ThreadKind {
                    name: name.to_string(),
                    body: None,
                });
                kinds.len() - 1
            }
        };
        let body = Body {
            header_line: line,
            ..Body::default()
        };
        self.current = Some((KindId(id as u32), body));
    }

    fn finish(&mut self) {
        if let Some((id, body)) = self.current.take() {
            self.program.kinds[id.index()].body = Some(body);
        }
    }

    fn var(&mut self, name: &str) -> VarId {
        let shared = &mut self.program.shared;
        if let Some(i) = shared.iter().position(|v| v.name == name) {
            return VarId(i as u32);
        }
        shared.push(SharedVar {
            name: name.to_string(),
            init: None,
        });
        VarId((shared.len() - 1) as u32)
    }

    fn mutex(&mut self, name: &str) -> MutexId {
        let mutexes = &mut self.program.mutexes;
        if let Some(i) = mutexes.iter().position(|m| m.name == name) {
            return MutexId(i as u32);
        }
        mutexes.push(MutexDecl {
            name: name.to_string(),
            declared: false,
        });
        MutexId((mutexes.len() - 1) as u32)
    }

    fn kind(&mut self, name: &str) -> KindId {
        let kinds = &mut self.program.kinds;
        if let Some(i) = kinds.iter().position(|k| k.name == name) {
            return KindId(i as u32);
        }
        kinds.push(ThreadKind {
            name: name.to_string(),
            body: None,
        });
        KindId((kinds.len() - 1) as u32)
    }

    fn body(&mut self) -> &mut Body {
        &mut self.current.as_mut().expect("inside a thread").1
    }

    fn reg(&mut self, name: &str) -> RegId {
        RegId(intern(&mut self.body().registers, name))
    }

    fn label(&mut self, name: &str) -> LabelId {
        let labels = &mut self.body().labels;
        if let Some(i) = labels.iter().position(|l| l.name == name) {
            return LabelId(i as u32);
        }
        labels.push(Label {
            name: name.to_string(),
            target: None,
        });
        LabelId((labels.len() - 1) as u32)
    }

    fn operand(&mut self, cur: &mut Cursor<'_, '_>) -> Result<Operand, ParseError> {
        match cur.peek() {
            Some(Tok::Int(_)) | Some(Tok::Sym("-")) => Ok(Operand::Const(cur.int()?)),
            Some(Tok::Ident(_)) => {
                let name = cur.name("register")?;
                Ok(Operand::Reg(self.reg(name)))
            }
            _ => Err(cur.err("expected register or integer")),
        }
    }

    fn expr(&mut self, cur: &mut Cursor<'_, '_>) -> Result<Expr, ParseError> {
        let head = self.operand(cur)?;
        let mut tail = Vec::new();
        loop {
            let op = match cur.peek() {
                Some(Tok::Sym("+")) => ArithOp::Add,
                Some(Tok::Sym("-")) => ArithOp::Sub,
                Some(Tok::Sym("*")) => ArithOp::Mul,
                _ => break,
            };
            cur.pos += 1;
            tail.push((op, self.operand(cur)?));
        }
        Ok(Expr { head, tail })
    }

    fn cond(&mut self, cur: &mut Cursor<'_, '_>) -> Result<Cond, ParseError> {
        let lhs = self.expr(cur)?;
        let op = match cur.next() {
            Some(Tok::Sym("==")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => {
                cur.pos = cur.pos.saturating_sub(1);
                return Err(cur.err("expected comparison operator"));
            }
        };
        let rhs = self.expr(cur)?;
        Ok(Cond { lhs, op, rhs })
    }

    fn instruction(&mut self, cur: &mut Cursor<'_, '_>) -> Result<Instruction, ParseError> {
        let Some(Tok::Ident(word)) = cur.peek().cloned() else {
            return Err(cur.err("expected instruction"));
        };
        let simple = match word {
            "return" => Some(Instruction::Return),
            "error" => Some(Instruction::Error),
            "atomic_begin" => Some(Instruction::AtomicBegin),
            "atomic_end" => Some(Instruction::AtomicEnd),
            _ => None,
        };
        if let Some(instr) = simple {
            cur.pos += 1;
            return Ok(instr);
        }
        match word {
            "goto" => {
                cur.pos += 1;
                let l = cur.name("label")?;
                Ok(Instruction::Goto(self.label(l)))
            }
            "if" => {
                cur.pos += 1;
                let cond = self.cond(cur)?;
                cur.keyword("goto")?;
                let l = cur.name("label")?;
                Ok(Instruction::Branch {
                    cond,
                    target: self.label(l),
                })
            }
            "assume" => {
                cur.pos += 1;
                Ok(Instruction::Assume(self.cond(cur)?))
            }
            "assert" => {
                cur.pos += 1;
                Ok(Instruction::Assert(self.cond(cur)?))
            }
            "join" => {
                cur.pos += 1;
                let r = cur.name("register")?;
                Ok(Instruction::Join {
                    thread: self.reg(r),
                })
            }
            "lock" | "unlock" => {
                cur.pos += 1;
                let m = cur.name("mutex name")?;
                let m = self.mutex(m);
                Ok(if word == "lock" {
                    Instruction::Lock(m)
                } else {
                    Instruction::Unlock(m)
                })
            }
            "free" => {
                cur.pos += 1;
                let r = cur.name("register")?;
                Ok(Instruction::Free { handle: self.reg(r) })
            }
            "store" => {
                cur.pos += 1;
                let v = cur.name("variable name")?;
                let var = self.var(v);
                let value = self.expr(cur)?;
                Ok(Instruction::Store { var, value })
            }
            "hstore" => {
                cur.pos += 1;
                let h = cur.name("register")?;
                let handle = self.reg(h);
                cur.expect_sym("[")?;
                let index = self.expr(cur)?;
                cur.expect_sym("]")?;
                let value = self.expr(cur)?;
                Ok(Instruction::HeapStore {
                    handle,
                    index,
                    value,
                })
            }
            _ if KEYWORDS.contains(&word) => Err(cur.err(&alloc::format!(
                "'{}' cannot start an instruction",
                word
            ))),
            _ => self.assignment(cur),
        }
    }

    fn assignment(&mut self, cur: &mut Cursor<'_, '_>) -> Result<Instruction, ParseError> {
        let dst_name = cur.name("register")?;
        if !matches!(cur.peek(), Some(Tok::Sym("="))) {
            return Err(cur.err("expected '=' or ':'"));
        }
        cur.pos += 1;
        let dst = self.reg(dst_name);
        match cur.peek().cloned() {
            Some(Tok::Ident("load")) => {
                cur.pos += 1;
                let v = cur.name("variable name")?;
                Ok(Instruction::Load {
                    dst,
                    var: self.var(v),
                })
            }
            Some(Tok::Ident("nondet")) => {
                cur.pos += 1;
                cur.expect_sym("(")?;
                cur.expect_sym(")")?;
                Ok(Instruction::Nondet { dst })
            }
            Some(Tok::Ident("create")) => {
                cur.pos += 1;
                let k = cur.name("thread kind name")?;
                Ok(Instruction::Create {
                    dst,
                    kind: self.kind(k),
                })
            }
            Some(Tok::Ident("alloc")) => {
                cur.pos += 1;
                let size = self.expr(cur)?;
                Ok(Instruction::Alloc { dst, size })
            }
            Some(Tok::Ident("hload")) => {
                cur.pos += 1;
                let h = cur.name("register")?;
                let handle = self.reg(h);
                cur.expect_sym("[")?;
                let index = self.expr(cur)?;
                cur.expect_sym("]")?;
                Ok(Instruction::HeapLoad { dst, handle, index })
            }
            _ => {
                let value = self.expr(cur)?;
                Ok(Instruction::Assign { dst, value })
            }
        }
    }
}

fn define_label(body: &mut Body, name: &str) {
    let here = body.instrs.len() as u32;
    if let Some(l) = body
        .labels
        .iter_mut()
        .find(|l| l.name == name && l.target.is_none())
    {
        l.target = Some(here);
    } else {
        body.labels.push(Label {
            name: name.to_string(),
            target: Some(here),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISTING1: &str = "\
# lost update on a shared counter
shared a = 0

thread main:
  t1 = create worker
  t2 = create worker
  join t1
  join t2
  r = load a
  assert r == 10
  return

thread worker:
  i = 1
loop:
  tmp = load a
  store a tmp + 1
  i = i + 1
  if i <= 5 goto loop
  return
";

    #[test]
    fn listing1_parses() {
        let p = parse_program(LISTING1).unwrap();
        assert_eq!(p.kinds.len(), 2);
        assert_eq!(p.shared.len(), 1);
        assert_eq!(p.shared[0].init, Some(0));
        let main = p.body(p.entry().unwrap());
        assert_eq!(main.instrs.len(), 7);
        assert_eq!(main.lines[5], 10);
        let worker = p.body(p.kind_by_name("worker").unwrap());
        assert_eq!(worker.labels[0].target, Some(1));
    }

    #[test]
    fn empty_text_has_no_entry() {
        let err = parse_program("").unwrap_err();
        let ParseError::Invalid(d) = err else {
            panic!("expected diagnostics")
        };
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("no entry thread"));
    }

    #[test]
    fn missing_label_is_named_with_its_line() {
        let err = parse_program("thread main:\n  x = 1\n  goto missing\n").unwrap_err();
        let ParseError::Invalid(d) = err else {
            panic!("expected diagnostics")
        };
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 3);
        assert!(d[0].message.contains("missing"));
    }

    #[test]
    fn syntax_errors_carry_column() {
        let err = parse_unchecked("thread main:\n  x = load\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                line: 2,
                column: 11,
                message: "expected variable name".into()
            }
        );
        let err = parse_unchecked("x = 1\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 1, .. }));
        let err = parse_unchecked("thread main:\n  x = 1 $\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { column: 9, .. }));
    }

    #[test]
    fn duplicate_kind_and_nested_atomic_are_rejected() {
        let dup = "thread main:\n return\nthread main:\n return\n";
        assert!(matches!(parse_program(dup), Err(ParseError::Invalid(_))));
        let nested = "thread main:\n atomic_begin\n atomic_begin\n atomic_end\n atomic_end\n return\n";
        let Err(ParseError::Invalid(d)) = parse_program(nested) else {
            panic!()
        };
        assert!(d.iter().any(|d| d.message.contains("nested atomic")));
    }

    #[test]
    fn keywords_are_not_names() {
        assert!(parse_unchecked("thread main:\n load = 1\n").is_err());
        assert!(parse_unchecked("shared thread = 1\n").is_err());
    }

    #[test]
    fn heap_and_negative_literals() {
        let src = "thread main:\n h = alloc 4\n hstore h[1] -7\n x = hload h[1]\n free h\n assert x == -7\n return\n";
        let p = parse_program(src).unwrap();
        let body = p.body(p.entry().unwrap());
        assert!(matches!(body.instrs[1], Instruction::HeapStore { .. }));
        assert!(matches!(body.instrs[2], Instruction::HeapLoad { .. }));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let src = "# header\n\nthread main:   # entry\n   return # done\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.body(p.entry().unwrap()).lines, [4]);
    }
}
