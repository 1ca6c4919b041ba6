//! Parameter sweeps over a corpus with ground truth.
//!
//! Interpreter axes (thread threshold, delay bound, exit probability) run
//! the fuzzer alone with an execution budget. The allocation axis runs the
//! whole ensemble with a work-unit budget split by the swept weights. Each
//! cell is scored against the program's sidecar: a correct verdict is
//! Safe on a safe program or Unsafe with the expected bug kind on an
//! unsafe one; a false verdict is Unsafe on a safe program or Safe on an
//! unsafe one; everything else counts as other.

use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use ebf_core::bmc::BmcConfig;
use ebf_core::ensemble::{run_ebf_with, EnsembleConfig, Outcome};
use ebf_core::exec::{BugKind, Detectors, ExecConfig};
use ebf_core::gbf::FuzzResult;
use ebf_core::mir::Program;
use ebf_core::rng::SplitMix64;
use ebf_core::time::NoClock;
use serde::Serialize;

use crate::args::Axis;
use crate::corpus::{Entry, Truth};
use crate::engine::{fuzz_jobs, random_seeds, GuardedBmc};

#[derive(Clone, Debug)]
pub struct SweepSettings {
    pub exec: ExecConfig,
    pub bmc: BmcConfig,
    /// Detectors for programs whose sidecar does not name any.
    pub detectors: Detectors,
    pub seed: u64,
    pub execs: u64,
    pub work: u64,
    pub seed_count: usize,
    pub jobs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            exec: ExecConfig::default(),
            bmc: BmcConfig::default(),
            detectors: Detectors::default(),
            seed: 0,
            execs: 20_000,
            work: 20_000,
            seed_count: 8,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Score {
    Correct,
    False,
    Other,
}

pub fn score(truth: Truth, outcome: Outcome, kinds: &[BugKind]) -> Score {
    match (truth, outcome) {
        (Truth::Safe, Outcome::Safe) => Score::Correct,
        (Truth::Unsafe(k), Outcome::Unsafe) if kinds.contains(&k) => Score::Correct,
        (Truth::Safe, Outcome::Unsafe) | (Truth::Unsafe(_), Outcome::Safe) => Score::False,
        _ => Score::Other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub program: String,
    pub outcome: String,
    pub kinds: Vec<String>,
    pub score: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub value: String,
    pub correct: usize,
    #[serde(rename = "false")]
    pub false_: usize,
    pub other: usize,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: String,
    pub programs: usize,
    pub columns: Vec<Column>,
}

impl SweepTable {
    pub fn column(&self, value: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.value == value)
    }

    pub fn render(&self) -> String {
        let width = self.columns.iter().map(|c| c.value.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        write!(s, "{:<10}", self.axis).unwrap();
        for c in &self.columns {
            write!(s, " {:>w$}", c.value, w = width).unwrap();
        }
        s.push('\n');
        type Row = (&'static str, fn(&Column) -> usize);
        let rows: [Row; 3] = [("correct", |c| c.correct), ("false", |c| c.false_), ("other", |c| c.other)];
        for (name, get) in rows {
            write!(s, "{:<10}", name).unwrap();
            for c in &self.columns {
                write!(s, " {:>w$}", get(c), w = width).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Ensemble split for an allocation value `bmc:fuzz[:overhead]`.
pub fn parse_allocation(value: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = value
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad allocation '{}'", value))?;
    let (b, f, o) = match parts[..] {
        [b, f] => (b, f, 0.0),
        [b, f, o] => (b, f, o),
        _ => bail!("allocation '{}' must be bmc:fuzz or bmc:fuzz:overhead", value),
    };
    let total = b + f + o;
    if [b, f, o].iter().any(|x| *x < 0.0) || total <= 0.0 {
        bail!("allocation '{}' needs nonnegative weights with a positive sum", value);
    }
    Ok((b / total, f / total, o / total))
}

enum Setting {
    Exec(ExecConfig),
    Split(f64, f64, f64),
}

fn setting(axis: Axis, value: &str, base: &ExecConfig) -> Result<Setting> {
    let bad = || format!("bad {} value '{}'", axis.name(), value);
    Ok(match axis {
        Axis::ThreadThreshold => Setting::Exec(ExecConfig {
            thread_threshold: value.parse().with_context(bad)?,
            ..base.clone()
        }),
        Axis::DelayMax => Setting::Exec(ExecConfig {
            delay_max: value.parse().with_context(bad)?,
            ..base.clone()
        }),
        Axis::ExitProb => Setting::Exec(ExecConfig {
            exit_prob: value.parse().with_context(bad)?,
            ..base.clone()
        }),
        Axis::Allocation => {
            let (b, f, o) = parse_allocation(value)?;
            Setting::Split(b, f, o)
        }
    })
}

/// One interpreter-axis cell: fuzz from random seeds until the first bug
/// or `execs` executions.
pub fn fuzz_until_bug(program: &Program, exec: &ExecConfig, seed: u64, seed_count: usize, execs: u64) -> FuzzResult {
    let seeds = random_seeds(program, seed_count, &mut SplitMix64::new(seed));
    fuzz_jobs(program, &seeds, execs, None, true, exec, seed, 1)
}

fn evaluate(entry: &Entry, setting: &Setting, s: &SweepSettings) -> Cell {
    let detectors = entry.detectors(s.detectors);
    let (outcome, kinds) = match setting {
        Setting::Exec(exec) => {
            let exec = ExecConfig {
                detectors,
                ..exec.clone()
            };
            let r = fuzz_until_bug(&entry.program, &exec, s.seed, s.seed_count, s.execs);
            let kinds: Vec<BugKind> = r.crashes.iter().map(|c| c.outcome.findings[0].kind).collect();
            let outcome = if r.found_bug() { Outcome::Unsafe } else { Outcome::Unknown };
            (outcome, kinds)
        }
        Setting::Split(b, f, o) => {
            let config = EnsembleConfig {
                work_units: Some(s.work),
                bmc_frac: *b,
                fuzz_frac: *f,
                overhead_frac: *o,
                seed_count: s.seed_count,
                exec: ExecConfig {
                    detectors,
                    ..s.exec.clone()
                },
                bmc: BmcConfig {
                    detectors,
                    ..s.bmc.clone()
                },
                ..EnsembleConfig::default()
            };
            let v = run_ebf_with(&entry.program, &config, s.seed, &NoClock, &mut GuardedBmc(config.bmc.clone()));
            (v.outcome, v.findings.iter().map(|(_, f)| f.kind).collect())
        }
    };
    let mut names: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
    names.sort();
    names.dedup();
    Cell {
        program: entry.name.clone(),
        outcome: outcome.name().to_string(),
        score: score(entry.expected.truth, outcome, &kinds),
        kinds: names,
    }
}

/// Evaluate every program at every value. Programs run on up to
/// `settings.jobs` threads; results do not depend on the thread count.
pub fn sweep(entries: &[Entry], axis: Axis, values: &[String], settings: &SweepSettings) -> Result<SweepTable> {
    let settings_per_value: Vec<Setting> = values
        .iter()
        .map(|v| setting(axis, v, &settings.exec))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|v| (0..entries.len()).map(move |e| (v, e)))
        .collect();
    let results: Mutex<Vec<Option<Cell>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    crate::engine::with_big_stack(|| {
        std::thread::scope(|scope| {
            for _ in 0..settings.jobs.max(1) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(v, e)) = tasks.get(i) else { break };
                    let cell = evaluate(&entries[e], &settings_per_value[v], settings);
                    results.lock().unwrap()[i] = Some(cell);
                });
            }
        })
    });
    let mut cells = results.into_inner().unwrap().into_iter().map(|c| c.expect("every cell evaluated"));
    let columns = values
        .iter()
        .map(|value| {
            let cells: Vec<Cell> = cells.by_ref().take(entries.len()).collect();
            let count = |s: Score| cells.iter().filter(|c| c.score == s).count();
            Column {
                value: value.clone(),
                correct: count(Score::Correct),
                false_: count(Score::False),
                other: count(Score::Other),
                cells,
            }
        })
        .collect();
    Ok(SweepTable {
        axis: axis.name().to_string(),
        programs: entries.len(),
        columns,
    })
}
