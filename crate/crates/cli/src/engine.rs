//! Engine plumbing for the std side: a wall clock, a panic guard for the
//! model checker, and parallel fuzzing.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ebf_core::bmc::{BmcConfig, BmcReport, BmcVerdict, UnknownReason};
use ebf_core::ensemble::{make_seeds, BoundedChecker, BuiltinBmc, EnsembleConfig};
use ebf_core::exec::ExecConfig;
use ebf_core::gbf::{fuzz, FuzzBudget, FuzzResult, FuzzSeed, StopReason};
use ebf_core::mir::Program;
use ebf_core::rng::SplitMix64;
use ebf_core::time::{Clock, Deadline};

/// Monotonic time since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }

    pub fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

pub fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".to_string())
}

/// The built-in model checker with panics turned into errors.
pub struct GuardedBmc(pub BmcConfig);

impl BoundedChecker for GuardedBmc {
    fn check(&mut self, program: &Program, deadline: Deadline<'_>, max_states: Option<u64>) -> Result<BmcReport, String> {
        let mut inner = BuiltinBmc(self.0.clone());
        catch_unwind(AssertUnwindSafe(|| inner.check(program, deadline, max_states)))
            .unwrap_or_else(|p| Err(format!("model checker panicked: {}", panic_message(p))))
    }
}

/// `count` random seeds with input lanes in the default seed range.
pub fn random_seeds(program: &Program, count: usize, rng: &mut SplitMix64) -> Vec<FuzzSeed> {
    let config = EnsembleConfig {
        seed_count: count.max(1),
        ..EnsembleConfig::default()
    };
    make_seeds(program, &BmcVerdict::Unknown(UnknownReason::Budget), &config, rng)
}

/// Fuzz with `jobs` independent instances. Executions are split evenly;
/// instance `j` uses the `j`-th seed forked from `master_seed`. A single
/// job is exactly [`fuzz`] with `master_seed`. Crashes are merged in job
/// order, so the result does not depend on thread timing when no wall
/// time limit applies.
#[allow(clippy::too_many_arguments)]
pub fn fuzz_jobs(
    program: &Program,
    seeds: &[FuzzSeed],
    executions: u64,
    time: Option<Duration>,
    first_bug: bool,
    config: &ExecConfig,
    master_seed: u64,
    jobs: usize,
) -> FuzzResult {
    let jobs = jobs.max(1);
    let one = |execs: u64, seed: u64| {
        let clock = WallClock::start();
        let deadline = Deadline::never(&clock).within(time);
        let budget = FuzzBudget {
            executions: Some(execs),
            deadline,
            first_bug,
        };
        fuzz(program, seeds, &budget, config, seed)
    };
    if jobs == 1 {
        return one(executions, master_seed);
    }
    let mut rng = SplitMix64::new(master_seed);
    let job_seeds: Vec<u64> = (0..jobs).map(|_| rng.next_u64()).collect();
    let results: Vec<FuzzResult> = std::thread::scope(|s| {
        let handles: Vec<_> = job_seeds
            .iter()
            .enumerate()
            .map(|(j, &seed)| {
                let share = executions / jobs as u64 + u64::from((j as u64) < executions % jobs as u64);
                let one = &one;
                s.spawn(move || one(share, seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fuzzer thread panicked")).collect()
    });
    let mut merged = FuzzResult {
        crashes: Vec::new(),
        crash_count: 0,
        queue: Vec::new(),
        coverage: Default::default(),
        executions: 0,
        stop: StopReason::Budget,
    };
    for r in results {
        merged.crashes.extend(r.crashes);
        merged.crash_count += r.crash_count;
        merged.queue.extend(r.queue);
        merged.coverage.extend(r.coverage);
        merged.executions += r.executions;
        if r.stop != StopReason::Budget {
            merged.stop = r.stop;
        }
    }
    merged
}

/// Run `f` on a thread with a large stack, for deep model-checker searches.
pub fn with_big_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(256 << 20)
            .spawn_scoped(s, f)
            .expect("spawning worker thread")
            .join()
            .unwrap_or_else(|p| std::panic::resume_unwind(p))
    })
}
