//! Test support shared by the ebf crates: a reference interpreter that
//! enumerates every interleaving, a random program generator, a
//! happens-before race oracle over random traces, and random crash reports.

pub mod gen;
pub mod hb;
pub mod oracle;
pub mod report;

use ebf_core::exec::BugKind;

pub use gen::{random_program, Generated};
pub use hb::{naive_races, random_trace};
pub use oracle::{Enumeration, OracleBug, OracleProgram};
pub use report::random_report;

impl OracleBug {
    pub fn kind(self) -> BugKind {
        match self {
            OracleBug::Assertion => BugKind::AssertionFailure,
            OracleBug::Reachability => BugKind::Reachability,
            OracleBug::Deadlock => BugKind::Deadlock,
            OracleBug::ThreadLeak => BugKind::ThreadLeak,
            OracleBug::InvalidOperation => BugKind::MemorySafety,
        }
    }
}
