//! Command-line arguments.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ebf_core::bmc::BmcConfig;
use ebf_core::exec::{Detectors, ExecConfig};

#[derive(Debug, Parser)]
#[command(name = "ebf", version, about = "Ensemble bug finder for a small concurrent IR")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a program, then print it in canonical form.
    Parse {
        path: PathBuf,
    },
    /// Run the model checker, then the seeded fuzzer, and combine verdicts.
    Check {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exec: ExecArgs,
        #[command(flatten)]
        bmc: BmcArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Fuzz only.
    Fuzz {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exec: ExecArgs,
        #[command(flatten)]
        fuzz: FuzzArgs,
    },
    /// Model check only.
    Bmc {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bmc: BmcArgs,
        #[arg(long, value_parser = parse_duration)]
        budget: Option<Duration>,
    },
    /// Replay a crash report against a program.
    Replay {
        path: PathBuf,
        witness: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run a parameter sweep over a corpus of programs with `.expected` files.
    Sweep {
        dir: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values. Allocation values are `bmc:fuzz[:overhead]` weights.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exec: ExecArgs,
        #[command(flatten)]
        bmc: BmcArgs,
        /// Fuzzer executions per program for the interpreter axes.
        #[arg(long, default_value_t = 20_000)]
        execs: u64,
        /// Work units per program for the allocation axis.
        #[arg(long, default_value_t = 20_000)]
        work: u64,
        /// Programs checked in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    ThreadThreshold,
    DelayMax,
    ExitProb,
    Allocation,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::ThreadThreshold => "thread-threshold",
            Axis::DelayMax => "delay-max",
            Axis::ExitProb => "exit-prob",
            Axis::Allocation => "allocation",
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Master seed for every random choice.
    #[arg(long, env = "EBF_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Directory for reports, witnesses and crash seeds.
    #[arg(long, default_value = "ebf-out")]
    pub out: PathBuf,
    /// Print the machine-readable report instead of a summary.
    #[arg(long)]
    pub json: bool,
    /// Enabled detectors: comma-separated names, `all` or `none`.
    #[arg(long, value_parser = parse_detectors, default_value = "deadlock,thread_leak,memory,assertion")]
    pub detectors: Detectors,
}

#[derive(Clone, Debug, Args)]
pub struct ExecArgs {
    /// Active-thread threshold above which a run is abandoned.
    #[arg(long, default_value_t = 5)]
    pub max_threads: u32,
    /// Upper bound of the random delay, in ticks.
    #[arg(long, default_value_t = 100)]
    pub delay_max: u64,
    /// Probability of ending a run after each instruction.
    #[arg(long, default_value_t = 0.0001)]
    pub exit_prob: f64,
    /// Instruction budget per run.
    #[arg(long, default_value_t = 100_000)]
    pub step_budget: u64,
}

impl ExecArgs {
    pub fn config(&self, detectors: Detectors) -> ExecConfig {
        ExecConfig {
            thread_threshold: self.max_threads,
            delay_max: self.delay_max,
            exit_prob: self.exit_prob,
            step_budget: self.step_budget,
            detectors,
            ..ExecConfig::default()
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct BmcArgs {
    /// Step bound.
    #[arg(short = 'k', default_value_t = 200)]
    pub k: u32,
    /// Preemption bound.
    #[arg(short = 'C', default_value_t = 12)]
    pub c: u32,
    /// Base values for `nondet()`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-1,0,1")]
    pub input_domain: Vec<i64>,
    /// Do not add values around constants compared in the program.
    #[arg(long)]
    pub no_harvest: bool,
    /// Do not cache explored states.
    #[arg(long)]
    pub no_hashing: bool,
    /// Cap on explored states.
    #[arg(long)]
    pub max_states: Option<u64>,
}

impl BmcArgs {
    pub fn config(&self, detectors: Detectors) -> BmcConfig {
        BmcConfig {
            step_bound: self.k,
            context_bound: self.c,
            input_domain: self.input_domain.clone(),
            harvest_constants: !self.no_harvest,
            state_hashing: !self.no_hashing,
            max_states: self.max_states,
            detectors,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SplitArgs {
    /// Total wall-time budget.
    #[arg(long, value_parser = parse_duration, default_value = "15s")]
    pub budget: Duration,
    /// Deterministic work units (states plus executions), split like the budget.
    #[arg(long)]
    pub work: Option<u64>,
    #[arg(long, default_value_t = 6.0 / 15.0)]
    pub bmc_frac: f64,
    #[arg(long, default_value_t = 5.0 / 15.0)]
    pub fuzz_frac: f64,
    /// Random seeds given to the fuzzer.
    #[arg(long, default_value_t = 8)]
    pub seed_count: usize,
}

#[derive(Clone, Debug, Args)]
pub struct FuzzArgs {
    /// Executions (summed over jobs).
    #[arg(long, default_value_t = 100_000)]
    pub execs: u64,
    /// Optional wall-time budget.
    #[arg(long, value_parser = parse_duration)]
    pub budget: Option<Duration>,
    /// Parallel fuzzer instances.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory of initial seeds, one raw file per seed.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Random initial seeds when no seed directory is given.
    #[arg(long, default_value_t = 8)]
    pub seed_count: usize,
}

pub fn parse_duration(s: &str) -> Result<Duration, String> {
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

pub fn parse_detectors(s: &str) -> Result<Detectors, String> {
    match s.trim() {
        "all" => Ok(Detectors::all()),
        "none" => Ok(Detectors::none()),
        list => Detectors::parse_list(list).map_err(|bad| format!("unknown detector '{}'", bad)),
    }
}
