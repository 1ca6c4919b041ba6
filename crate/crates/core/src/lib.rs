//! Ensemble bug finding for a small concurrent IR.
//!
//! The crate is `no_std` (it needs `alloc`). It contains the program
//! representation ([`mir`]), a deterministic logical-time interpreter with
//! delay injection and bug detectors ([`exec`]), a coverage-guided gray-box
//! fuzzer ([`gbf`]), an explicit-state bounded model checker ([`bmc`]), the
//! orchestrator that combines both engines ([`ensemble`]), and crash reports
//! that can be serialized and replayed ([`witness`]).
//!
//! File IO, wall clocks and the command line live in the `ebf` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bmc;
pub mod ensemble;
pub mod exec;
pub mod gbf;
pub mod mir;
pub mod rng;
pub mod time;
pub mod witness;

pub use bmc::{bmc_check, counterexample_to_seed, BmcConfig, BmcReport, BmcVerdict, Counterexample};
pub use ensemble::{aggregate, make_seeds, run_ebf, EngineVerdict, EnsembleConfig, FinalVerdict, Outcome};
pub use exec::{run, run_forced, BugKind, Detectors, ExecConfig, ExecOutcome, Finding, Status};
pub use gbf::{covers_new_trace, fuzz, mutate_input, FuzzBudget, FuzzResult, FuzzSeed};
pub use mir::{parse_program, validate, Program};
pub use witness::{record, replay, CrashReport, WitnessEvent};
