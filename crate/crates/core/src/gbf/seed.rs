//! Fuzzer seeds and their mutations.
//!
//! A seed is a byte string. The last eight bytes (zero-padded when shorter)
//! are the delay seed; the bytes before them are little-endian 64-bit input
//! lanes, the last one zero-padded when partial. Decoding is total, and
//! padding a seed to whole lanes never changes what it decodes to.

use alloc::vec::Vec;

use crate::rng::SplitMix64;

const LANE: usize = 8;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuzzSeed {
    pub bytes: Vec<u8>,
}

fn lane_value(bytes: &[u8]) -> u64 {
    let mut buf = [0u8; LANE];
    buf[..bytes.len()].copy_from_slice(bytes);
    u64::from_le_bytes(buf)
}

impl FuzzSeed {
    pub fn new(bytes: Vec<u8>) -> Self {
        FuzzSeed { bytes }
    }

    pub fn encode(inputs: &[i64], delay_seed: u64) -> Self {
        let mut bytes = Vec::with_capacity((inputs.len() + 1) * LANE);
        for v in inputs {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&delay_seed.to_le_bytes());
        FuzzSeed { bytes }
    }

    fn split(&self) -> (&[u8], &[u8]) {
        self.bytes.split_at(self.bytes.len().saturating_sub(LANE))
    }

    pub fn delay_seed(&self) -> u64 {
        lane_value(self.split().1)
    }

    pub fn inputs(&self) -> Vec<i64> {
        self.split()
            .0
            .chunks(LANE)
            .map(|c| lane_value(c) as i64)
            .collect()
    }

    pub fn decode(&self) -> (Vec<i64>, u64) {
        (self.inputs(), self.delay_seed())
    }

    /// Pad to at least one lane and make the input part whole lanes.
    fn normalized(&self) -> Vec<u8> {
        let (prefix, suffix) = self.split();
        let mut out = prefix.to_vec();
        out.resize(prefix.len().div_ceil(LANE) * LANE, 0);
        out.extend_from_slice(suffix);
        out.resize(out.len().div_ceil(LANE).max(1) * LANE, 0);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    BitFlip,
    ByteFlip,
    Arith,
    Overwrite,
    Duplicate,
    Resize,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::BitFlip,
        Mutation::ByteFlip,
        Mutation::Arith,
        Mutation::Overwrite,
        Mutation::Duplicate,
        Mutation::Resize,
    ];
}

const INTERESTING: [i64; 16] = [
    -1,
    0,
    1,
    2,
    16,
    64,
    100,
    127,
    128,
    255,
    256,
    1000,
    1024,
    4096,
    32767,
    65535,
];

/// One mutation chosen uniformly from [`Mutation::ALL`].
pub fn mutate_input(seed: &FuzzSeed, rng: &mut SplitMix64) -> FuzzSeed {
    let m = Mutation::ALL[rng.below(Mutation::ALL.len() as u64) as usize];
    apply(seed, m, rng)
}

/// Apply one specific mutation. Lanes are counted on the normalized seed;
/// the last lane is the delay seed.
pub fn apply(seed: &FuzzSeed, m: Mutation, rng: &mut SplitMix64) -> FuzzSeed {
    if seed.bytes.is_empty() && m == Mutation::Resize {
        return FuzzSeed::new(rng.next_u64().to_le_bytes().to_vec());
    }
    let mut b = seed.normalized();
    let lanes = b.len() / LANE;
    let lane_at = |b: &[u8], i: usize| u64::from_le_bytes(b[i * LANE..(i + 1) * LANE].try_into().unwrap());
    match m {
        Mutation::BitFlip => {
            let bit = rng.below((b.len() * 8) as u64) as usize;
            b[bit / 8] ^= 1 << (bit % 8);
        }
        Mutation::ByteFlip => {
            let i = rng.below(b.len() as u64) as usize;
            b[i] ^= 0xFF;
        }
        Mutation::Arith => {
            let i = rng.below(lanes as u64) as usize;
            let k = 1 + rng.below(16);
            let v = lane_at(&b, i);
            let v = if rng.below(2) == 0 {
                v.wrapping_add(k)
            } else {
                v.wrapping_sub(k)
            };
            b[i * LANE..(i + 1) * LANE].copy_from_slice(&v.to_le_bytes());
        }
        Mutation::Overwrite => {
            let i = rng.below(lanes as u64) as usize;
            let old = lane_at(&b, i);
            let mut v = if rng.below(2) == 0 {
                rng.next_u64()
            } else {
                INTERESTING[rng.below(INTERESTING.len() as u64) as usize] as u64
            };
            if v == old {
                v ^= 1;
            }
            b[i * LANE..(i + 1) * LANE].copy_from_slice(&v.to_le_bytes());
        }
        Mutation::Duplicate => {
            let i = rng.below(lanes as u64) as usize;
            let copy: Vec<u8> = b[i * LANE..(i + 1) * LANE].to_vec();
            let at = (i * LANE).min(b.len() - LANE);
            b.splice(at..at, copy);
        }
        Mutation::Resize => {
            let extend = lanes < 2 || rng.below(2) == 0;
            let suffix = b.len() - LANE;
            if extend {
                let fresh = rng.next_u64().to_le_bytes();
                b.splice(suffix..suffix, fresh);
            } else {
                b.drain(suffix - LANE..suffix);
            }
        }
    }
    FuzzSeed { bytes: b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn encode_decode_round_trip() {
        let s = FuzzSeed::encode(&[1, -2, i64::MAX], 99);
        assert_eq!(s.bytes.len(), 32);
        assert_eq!(s.decode(), (vec![1, -2, i64::MAX], 99));
        assert_eq!(FuzzSeed::encode(&[], 5).decode(), (vec![], 5));
    }

    #[test]
    fn short_and_partial_seeds_pad_with_zeros() {
        assert_eq!(FuzzSeed::new(vec![]).decode(), (vec![], 0));
        assert_eq!(FuzzSeed::new(vec![7]).decode(), (vec![], 7));
        let s = FuzzSeed::new(vec![1, 2, 0, 0, 0, 0, 0, 0, 0, 9]);
        assert_eq!(s.decode(), (vec![0x0201], 9 << 56));
        let s = FuzzSeed::new(vec![3; 11]);
        let (inputs, _) = s.decode();
        assert_eq!(inputs, [0x030303]);
        assert_eq!(FuzzSeed::new(s.normalized()).decode(), s.decode());
    }

    #[test]
    fn bit_flip_at_bit_zero() {
        // Find an rng state whose first draw picks bit 0 of an 8-byte seed.
        let seed = FuzzSeed::new(vec![0x10; 8]);
        let state = (0..10_000u64)
            .find(|&s| SplitMix64::new(s).below(64) == 0)
            .unwrap();
        let out = apply(&seed, Mutation::BitFlip, &mut SplitMix64::new(state));
        assert_eq!(out.bytes[0], 0x11);
        assert_eq!(&out.bytes[1..], &seed.bytes[1..]);
    }

    #[test]
    fn empty_seed_grows_to_one_lane() {
        let out = apply(&FuzzSeed::default(), Mutation::Resize, &mut SplitMix64::new(3));
        assert_eq!(out.bytes.len(), 8);
        let out = apply(&FuzzSeed::default(), Mutation::ByteFlip, &mut SplitMix64::new(3));
        assert_eq!(out.bytes.len(), 8);
    }

    #[test]
    fn arithmetic_changes_one_lane_by_at_most_sixteen() {
        let base = FuzzSeed::encode(&[100, 200], 300);
        for s in 0..200 {
            let out = apply(&base, Mutation::Arith, &mut SplitMix64::new(s));
            let (a, d) = out.decode();
            let diffs: Vec<i64> = a
                .iter()
                .chain(core::iter::once(&(d as i64)))
                .zip([100i64, 200, 300])
                .map(|(x, y)| x - y)
                .filter(|&x| x != 0)
                .collect();
            assert_eq!(diffs.len(), 1);
            assert!((1..=16).contains(&diffs[0].abs()));
        }
    }

    #[test]
    fn every_mutation_changes_the_seed() {
        let mut rng = SplitMix64::new(11);
        let mut seed = FuzzSeed::encode(&[0], 0);
        for _ in 0..2_000 {
            let next = mutate_input(&seed, &mut rng);
            assert_ne!(next, seed);
            seed = next;
        }
    }

    #[test]
    fn mutation_is_a_function_of_seed_and_rng() {
        let seed = FuzzSeed::encode(&[5, 6], 7);
        for s in 0..50 {
            let a = mutate_input(&seed, &mut SplitMix64::new(s));
            let b = mutate_input(&seed, &mut SplitMix64::new(s));
            assert_eq!(a, b);
        }
    }
}
