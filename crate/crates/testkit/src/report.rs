//! Random well-formed crash reports for serialization round trips.

use ebf_core::exec::BugKind;
use ebf_core::rng::SplitMix64;
use ebf_core::witness::{CrashReport, WitnessEvent};

fn pick(rng: &mut SplitMix64, alphabet: &[u8]) -> u8 {
    alphabet[rng.below(alphabet.len() as u64) as usize]
}

fn word(rng: &mut SplitMix64, first: &[u8], rest: &[u8], min: usize, max: usize) -> String {
    let len = min + rng.below((max - min + 1) as u64) as usize;
    (0..len)
        .map(|i| pick(rng, if i == 0 { first } else { rest }) as char)
        .collect()
}

fn ident(rng: &mut SplitMix64) -> String {
    word(
        rng,
        b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_",
        b"abcdefghijklmnopqrstuvwxyz0123456789_",
        1,
        10,
    )
}

fn int(rng: &mut SplitMix64) -> i64 {
    match rng.below(3) {
        0 => rng.range_i64(-10, 10),
        1 => rng.next_u64() as i64,
        _ => [i64::MIN, i64::MAX, 0][rng.below(3) as usize],
    }
}

/// A report with up to `max_events` events. Addresses are declared before
/// use and never twice, and at least one `FINDING` is present.
pub fn random_report(rng: &mut SplitMix64, max_events: usize) -> CrashReport {
    let mut config = Vec::new();
    for _ in 0..rng.below(5) {
        let key = word(rng, b"abcdefghijklmnopqrstuvwxyz_", b"abcdefghijklmnopqrstuvwxyz_-", 1, 12);
        let value = word(rng, b"abcdefghijklmnopqrstuvwxyz0123456789,.:-=", b"abcdefghijklmnopqrstuvwxyz0123456789,.:-=", 0, 16);
        config.push((key, value));
    }
    let mut declared: Vec<u32> = Vec::new();
    let mut events = Vec::new();
    let n = rng.below(max_events as u64 + 1) as usize;
    for _ in 0..n {
        let e = match rng.below(7) {
            0 => {
                let addr = loop {
                    let a = rng.below(64) as u32;
                    if !declared.contains(&a) {
                        break a;
                    }
                };
                declared.push(addr);
                WitnessEvent::Decl {
                    name: ident(rng),
                    function: ident(rng),
                    addr,
                }
            }
            1 if !declared.is_empty() => WitnessEvent::Store {
                addr: declared[rng.below(declared.len() as u64) as usize],
                line: rng.below(10_000) as u32,
                function: ident(rng),
                value: int(rng),
            },
            2 => WitnessEvent::Sched {
                tick: rng.next_u64() >> rng.below(64),
                thread: rng.below(16) as u32,
            },
            3 => WitnessEvent::Input(int(rng)),
            4 => WitnessEvent::Create {
                parent: rng.below(8) as u32,
                child: rng.below(8) as u32,
            },
            5 => WitnessEvent::Join {
                parent: rng.below(8) as u32,
                child: rng.below(8) as u32,
            },
            _ => finding(rng),
        };
        events.push(e);
    }
    if !events.iter().any(|e| matches!(e, WitnessEvent::Finding { .. })) {
        events.push(finding(rng));
    }
    CrashReport {
        run_id: rng.next_u64() >> rng.below(64),
        fingerprint: rng.next_u64(),
        config,
        events,
    }
}

fn finding(rng: &mut SplitMix64) -> WitnessEvent {
    WitnessEvent::Finding {
        kind: BugKind::ALL[rng.below(BugKind::ALL.len() as u64) as usize],
        function: ident(rng),
        line: rng.below(10_000) as u32,
        tick: rng.next_u64() >> rng.below(64),
    }
}
