//! Crash reports: the events of a buggy run, a line-oriented text format
//! and deterministic replay.
//!
//! ```text
//! run 3 seed=7 detectors=deadlock,memory
//! program 9a1f03c2d4e5b6a7
//! DECL a global #0
//! SCHED 0 t0
//! CREATE t0 t1
//! SCHED 4 t1
//! STORE #0 12 worker 5
//! INPUT 42
//! JOIN t0 t1
//! FINDING AssertionFailure main:9 17
//! ```
//!
//! The `run` line carries the run id followed by `key=value` pairs echoing
//! the configuration. Addresses are per-run counters. Replay forces the
//! recorded schedule and inputs, so it does not depend on delays.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::exec::{
    run_forced, BugKind, DeclName, Detectors, Event, ExecOutcome, Finding, ScheduleError, Status,
    ThreadId,
};
use crate::mir::Program;

/// Function name used for shared-variable declarations.
pub const GLOBAL: &str = "global";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum WitnessEvent {
    Decl {
        name: String,
        function: String,
        addr: u32,
    },
    Store {
        addr: u32,
        line: u32,
        function: String,
        value: i64,
    },
    Sched {
        tick: u64,
        thread: u32,
    },
    Input(i64),
    Create {
        parent: u32,
        child: u32,
    },
    Join {
        parent: u32,
        child: u32,
    },
    Finding {
        kind: BugKind,
        function: String,
        line: u32,
        tick: u64,
    },
}

impl fmt::Display for WitnessEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessEvent::Decl {
                name,
                function,
                addr,
            } => write!(f, "DECL {} {} #{}", name, function, addr),
            WitnessEvent::Store {
                addr,
                line,
                function,
                value,
            } => write!(f, "STORE #{} {} {} {}", addr, line, function, value),
            WitnessEvent::Sched { tick, thread } => write!(f, "SCHED {} t{}", tick, thread),
            WitnessEvent::Input(v) => write!(f, "INPUT {}", v),
            WitnessEvent::Create { parent, child } => write!(f, "CREATE t{} t{}", parent, child),
            WitnessEvent::Join { parent, child } => write!(f, "JOIN t{} t{}", parent, child),
            WitnessEvent::Finding {
                kind,
                function,
                line,
                tick,
            } => write!(f, "FINDING {} {}:{} {}", kind, function, line, tick),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CrashReport {
    pub run_id: u64,
    pub fingerprint: u64,
    /// Configuration echo as ordered `key=value` pairs.
    pub config: Vec<(String, String)>,
    pub events: Vec<WitnessEvent>,
}

impl CrashReport {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn findings(&self) -> impl Iterator<Item = (BugKind, &str, u32)> {
        self.events.iter().filter_map(|e| match e {
            WitnessEvent::Finding {
                kind,
                function,
                line,
                ..
            } => Some((*kind, function.as_str(), *line)),
            _ => None,
        })
    }

    /// `(kind, "function:line")` of the first finding.
    pub fn first_finding(&self) -> Option<(BugKind, String)> {
        self.findings()
            .next()
            .map(|(k, f, l)| (k, format!("{}:{}", f, l)))
    }

    pub fn schedule(&self) -> Vec<ThreadId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                WitnessEvent::Sched { thread, .. } => Some(ThreadId(*thread)),
                _ => None,
            })
            .collect()
    }

    pub fn inputs(&self) -> Vec<i64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                WitnessEvent::Input(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Detectors from the `detectors` config entry, defaulting otherwise.
    pub fn detectors(&self) -> Result<Detectors, WitnessError> {
        match self.config_value("detectors") {
            None => Ok(Detectors::default()),
            Some(list) => Detectors::parse_list(list).map_err(|name| WitnessError {
                line: 1,
                message: format!("unknown detector '{}'", name),
            }),
        }
    }

    /// Whether `outcome` ends with the same first finding as this report.
    pub fn reproduced_by(&self, program: &Program, outcome: &ExecOutcome) -> bool {
        let got = outcome
            .first_finding()
            .map(|f| (f.kind, f.location.display(program).to_string()));
        got.is_some() && got == self.first_finding()
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn deserialize(text: &str) -> Result<CrashReport, WitnessError> {
        parse_report(text)
    }
}

impl fmt::Display for CrashReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run {}", self.run_id)?;
        for (k, v) in &self.config {
            write!(f, " {}={}", k, v)?;
        }
        writeln!(f)?;
        writeln!(f, "program {:016x}", self.fingerprint)?;
        for e in &self.events {
            writeln!(f, "{}", e)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessError {
    /// 1-based line in the witness text.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for WitnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "witness line {}: {}", self.line, self.message)
    }
}

/// Convert the events of a finished run into a report. Runs that did not
/// find a bug leave no report.
pub fn record(
    program: &Program,
    outcome: &ExecOutcome,
    run_id: u64,
    config: Vec<(String, String)>,
) -> Option<CrashReport> {
    if outcome.status != Status::BugFound {
        return None;
    }
    let events = outcome
        .events
        .iter()
        .map(|e| convert(program, e))
        .collect();
    Some(CrashReport {
        run_id,
        fingerprint: program.fingerprint(),
        config,
        events,
    })
}

fn convert(program: &Program, event: &Event) -> WitnessEvent {
    match *event {
        Event::Decl { addr, name } => {
            let (name, function) = match name {
                DeclName::Shared(v) => (program.var_name(v).to_string(), GLOBAL.to_string()),
                DeclName::Heap { kind, reg } => (
                    program.body(kind).registers[reg.index()].clone(),
                    program.kind_name(kind).to_string(),
                ),
            };
            WitnessEvent::Decl {
                name,
                function,
                addr,
            }
        }
        Event::Store {
            addr,
            location,
            value,
        } => WitnessEvent::Store {
            addr,
            line: location.line,
            function: program.kind_name(location.kind).to_string(),
            value,
        },
        Event::Sched { tick, thread } => WitnessEvent::Sched {
            tick,
            thread: thread.0,
        },
        Event::Input(v) => WitnessEvent::Input(v),
        Event::Create { parent, child } => WitnessEvent::Create {
            parent: parent.0,
            child: child.0,
        },
        Event::Join { parent, child } => WitnessEvent::Join {
            parent: parent.0,
            child: child.0,
        },
        Event::Finding(Finding {
            kind,
            location,
            tick,
            ..
        }) => WitnessEvent::Finding {
            kind,
            function: program.kind_name(location.kind).to_string(),
            line: location.line,
            tick,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayError {
    FingerprintMismatch { expected: u64, actual: u64 },
    BadConfig(WitnessError),
    Infeasible(ScheduleError),
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::FingerprintMismatch { expected, actual } => write!(
                f,
                "program fingerprint {:016x} does not match witness {:016x}",
                actual, expected
            ),
            ReplayError::BadConfig(e) => e.fmt(f),
            ReplayError::Infeasible(e) => write!(f, "infeasible schedule: {}", e),
        }
    }
}

/// Re-execute a report's schedule and inputs with delays disabled.
pub fn replay(program: &Program, report: &CrashReport) -> Result<ExecOutcome, ReplayError> {
    let actual = program.fingerprint();
    if actual != report.fingerprint {
        return Err(ReplayError::FingerprintMismatch {
            expected: report.fingerprint,
            actual,
        });
    }
    let detectors = report.detectors().map_err(ReplayError::BadConfig)?;
    run_forced(
        program,
        &report.inputs(),
        &report.schedule(),
        detectors,
        true,
    )
    .map_err(ReplayError::Infeasible)
}

fn parse_report(text: &str) -> Result<CrashReport, WitnessError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line: usize, message: &str| WitnessError {
        line,
        message: message.to_string(),
    };

    let (n, first) = lines.next().ok_or_else(|| err(1, "missing run line"))?;
    let mut words = first.split(' ');
    if words.next() != Some("run") {
        return Err(err(n, "expected `run <id>`"));
    }
    let run_id = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| err(n, "bad run id"))?;
    let mut config = Vec::new();
    for word in words {
        let (k, v) = word
            .split_once('=')
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| err(n, "expected key=value"))?;
        config.push((k.to_string(), v.to_string()));
    }

    let (n, second) = lines.next().ok_or_else(|| err(2, "missing program line"))?;
    let hex = second
        .strip_prefix("program ")
        .filter(|h| h.len() == 16)
        .ok_or_else(|| err(n, "expected `program <16 hex digits>`"))?;
    let fingerprint = u64::from_str_radix(hex, 16).map_err(|_| err(n, "bad fingerprint"))?;

    let mut events = Vec::new();
    let mut declared: Vec<u32> = Vec::new();
    let mut last = n;
    for (n, line) in lines {
        last = n;
        let e = parse_event(line).map_err(|m| err(n, m))?;
        match &e {
            WitnessEvent::Decl { addr, .. } => {
                if declared.contains(addr) {
                    return Err(err(n, "address declared twice"));
                }
                declared.push(*addr);
            }
            WitnessEvent::Store { addr, .. } if !declared.contains(addr) => {
                return Err(err(n, "store to undeclared address"));
            }
            _ => {}
        }
        events.push(e);
    }
    if !events
        .iter()
        .any(|e| matches!(e, WitnessEvent::Finding { .. }))
    {
        return Err(err(last, "report has no FINDING"));
    }
    Ok(CrashReport {
        run_id,
        fingerprint,
        config,
        events,
    })
}

fn parse_event(line: &str) -> Result<WitnessEvent, &'static str> {
    let words: Vec<&str> = line.split(' ').collect();
    let arity = |n: usize| {
        if words.len() == n + 1 {
            Ok(())
        } else {
            Err("wrong number of fields")
        }
    };
    let name = |w: &str| -> Result<String, &'static str> {
        let ok = !w.is_empty()
            && w.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !w.starts_with(|c: char| c.is_ascii_digit());
        if ok {
            Ok(w.to_string())
        } else {
            Err("bad name")
        }
    };
    let addr = |w: &str| {
        w.strip_prefix('#')
            .and_then(|a| a.parse::<u32>().ok())
            .ok_or("bad address")
    };
    let thread = |w: &str| {
        w.strip_prefix('t')
            .and_then(|t| t.parse::<u32>().ok())
            .ok_or("bad thread id")
    };
    let int = |w: &str| w.parse::<i64>().map_err(|_| "bad integer");
    let nat = |w: &str| w.parse::<u64>().map_err(|_| "bad number");
    let line_no = |w: &str| w.parse::<u32>().map_err(|_| "bad line number");

    match words[0] {
        "DECL" => {
            arity(3)?;
            Ok(WitnessEvent::Decl {
                name: name(words[1])?,
                function: name(words[2])?,
                addr: addr(words[3])?,
            })
        }
        "STORE" => {
            arity(4)?;
            Ok(WitnessEvent::Store {
                addr: addr(words[1])?,
                line: line_no(words[2])?,
                function: name(words[3])?,
                value: int(words[4])?,
            })
        }
        "SCHED" => {
            arity(2)?;
            Ok(WitnessEvent::Sched {
                tick: nat(words[1])?,
                thread: thread(words[2])?,
            })
        }
        "INPUT" => {
            arity(1)?;
            Ok(WitnessEvent::Input(int(words[1])?))
        }
        "CREATE" | "JOIN" => {
            arity(2)?;
            let (parent, child) = (thread(words[1])?, thread(words[2])?);
            Ok(if words[0] == "CREATE" {
                WitnessEvent::Create { parent, child }
            } else {
                WitnessEvent::Join { parent, child }
            })
        }
        "FINDING" => {
            arity(3)?;
            let kind = words[1].parse().map_err(|_| "unknown bug kind")?;
            let (function, line) = words[2].rsplit_once(':').ok_or("bad location")?;
            Ok(WitnessEvent::Finding {
                kind,
                function: name(function)?,
                line: line_no(line)?,
                tick: nat(words[3])?,
            })
        }
        _ => Err("unknown event"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{run, ExecConfig};
    use crate::mir::parse_program;
    use alloc::vec;

    const LEAK: &str = "shared a = 0\nthread main:\n  t = create w\n  x = load a\n  return\nthread w:\n  store a 3\n  return\n";

    fn report() -> (Program, CrashReport) {
        let p = parse_program(LEAK).unwrap();
        let cfg = ExecConfig {
            record_events: true,
            ..ExecConfig::default()
        };
        let out = run(&p, &[], 1, &cfg);
        let r = record(&p, &out, 0, vec![("detectors".into(), cfg.detectors.to_list())]).unwrap();
        (p, r)
    }

    #[test]
    fn round_trip_and_replay() {
        let (p, r) = report();
        let text = r.serialize();
        assert!(text.starts_with("run 0 detectors=deadlock,thread_leak,memory,assertion\nprogram "));
        assert!(text.contains("DECL a global #0\n"));
        assert!(text.contains("\nFINDING ThreadLeak main:3 "));
        let back = CrashReport::deserialize(&text).unwrap();
        assert_eq!(back, r);
        let out = replay(&p, &back).unwrap();
        assert!(back.reproduced_by(&p, &out));
    }

    #[test]
    fn completed_runs_leave_no_report() {
        let p = parse_program("thread main:\n  return\n").unwrap();
        let out = run(&p, &[], 0, &ExecConfig::default());
        assert!(record(&p, &out, 0, Vec::new()).is_none());
    }

    #[test]
    fn single_decl_report_has_three_lines() {
        let r = CrashReport {
            run_id: 4,
            fingerprint: 0xabc,
            config: Vec::new(),
            events: vec![WitnessEvent::Finding {
                kind: BugKind::Deadlock,
                function: "main".into(),
                line: 2,
                tick: 0,
            }],
        };
        assert_eq!(
            r.serialize(),
            "run 4\nprogram 0000000000000abc\nFINDING Deadlock main:2 0\n"
        );
    }

    #[test]
    fn malformed_lines_are_located() {
        let (_, r) = report();
        let text = r.serialize();
        let tampered = text.replace("FINDING ThreadLeak", "FINDING Leakage");
        let e = CrashReport::deserialize(&tampered).unwrap_err();
        assert_eq!(e.line, text.lines().count());
        assert_eq!(e.message, "unknown bug kind");

        let e = CrashReport::deserialize("run 1\nprogram 0000000000000000\nSTORE #0 1 main 1\n")
            .unwrap_err();
        assert_eq!(e.line, 3);
        let e = CrashReport::deserialize("run x\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = CrashReport::deserialize("run 1\nprogram 00\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn modified_program_is_rejected() {
        let (_, r) = report();
        let other = parse_program(&LEAK.replace("store a 3", "store a 4")).unwrap();
        assert!(matches!(
            replay(&other, &r),
            Err(ReplayError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn blocked_thread_in_schedule_is_infeasible() {
        let src = "mutex m\nthread main:\n  lock m\n  t = create w\n  join t\n  unlock m\n  return\nthread w:\n  lock m\n  unlock m\n  return\n";
        let p = parse_program(src).unwrap();
        let r = CrashReport {
            run_id: 0,
            fingerprint: p.fingerprint(),
            config: Vec::new(),
            events: vec![
                WitnessEvent::Sched { tick: 0, thread: 0 },
                WitnessEvent::Sched { tick: 0, thread: 0 },
                WitnessEvent::Sched { tick: 0, thread: 1 },
                WitnessEvent::Finding {
                    kind: BugKind::Deadlock,
                    function: "w".into(),
                    line: 9,
                    tick: 0,
                },
            ],
        };
        let e = replay(&p, &r).unwrap_err();
        assert_eq!(
            e,
            ReplayError::Infeasible(ScheduleError {
                position: 2,
                thread: ThreadId(1)
            })
        );
    }
}
