//! The machine-readable run report.

use std::collections::BTreeMap;
use std::time::Duration;

use ebf_core::ensemble::{Engine, Outcome, Timings};
use ebf_core::exec::{Finding, ThreadId};
use ebf_core::mir::Program;
use serde::Serialize;

pub const EXIT_ERROR: i32 = 4;

pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Safe => 0,
        Outcome::Unsafe => 1,
        Outcome::Unknown => 2,
        Outcome::Conflict => 3,
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FindingRecord {
    pub engine: String,
    pub kind: String,
    pub location: String,
    pub tick: u64,
    pub thread: String,
}

impl FindingRecord {
    pub fn new(engine: &str, program: &Program, f: &Finding) -> Self {
        FindingRecord {
            engine: engine.to_string(),
            kind: f.kind.to_string(),
            location: f.location.display(program).to_string(),
            tick: f.tick,
            thread: ThreadId::to_string(&f.thread),
        }
    }
}

pub fn engine_name(e: Engine) -> &'static str {
    match e {
        Engine::Bmc => "bmc",
        Engine::Gbf => "gbf",
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct PhaseMillis {
    pub bmc: u64,
    pub fuzz: u64,
    pub overhead: u64,
}

fn ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

impl From<Timings> for PhaseMillis {
    fn from(t: Timings) -> Self {
        PhaseMillis {
            bmc: ms(t.bmc),
            fuzz: ms(t.fuzz),
            overhead: ms(t.overhead),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct RunReport {
    pub program: String,
    pub mode: String,
    pub seed: u64,
    pub outcome: String,
    pub exit_code: i32,
    /// Raw verdict of each engine that ran.
    pub engines: BTreeMap<String, String>,
    pub contributors: Vec<String>,
    pub findings: Vec<FindingRecord>,
    pub timings_ms: PhaseMillis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub executions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crashes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub crash_seeds: Vec<String>,
    pub config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// A few lines for humans.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {} ({})\n", self.program, self.outcome, self.mode);
        for (engine, verdict) in &self.engines {
            s.push_str(&format!("  {}: {}\n", engine, verdict));
        }
        for f in &self.findings {
            s.push_str(&format!("  {} found {} at {} (tick {}, {})\n", f.engine, f.kind, f.location, f.tick, f.thread));
        }
        if let Some(n) = self.executions {
            s.push_str(&format!("  executions: {}", n));
            if let Some(c) = self.crashes {
                s.push_str(&format!(", crashes: {}", c));
            }
            s.push('\n');
        }
        if let Some(n) = self.states {
            s.push_str(&format!("  states: {}\n", n));
        }
        if let Some(w) = &self.witness {
            s.push_str(&format!("  witness: {}\n", w));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {}\n", n));
        }
        s
    }
}
