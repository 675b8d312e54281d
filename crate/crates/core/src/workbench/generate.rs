//! Instance generators.
//!
//! Random traces come from SplitMix64 (Steele, Lea and Flood; the reference
//! `splitmix64.c`) seeded with the 64-bit seed as its initial state. A value
//! in `lo..=hi` is drawn as `lo + next_u64() % (hi - lo + 1)`. For each
//! trace:
//!
//! 1. With `Burstiness::Bursts { steps: k }`, draw `k` burst steps from
//!    `1..=T` first.
//! 2. For each packet `i` in `0..n` (id `i`), draw in order: the release
//!    (uniform in `1..=T`, or a uniformly chosen burst step), the deadline
//!    slack (`0..=max_slack`, deadline clamped to `T`), and the weight
//!    numerator (`weight_min..=weight_max`, divided by `weight_den`).
//!
//! Packets are then ordered by release, then id.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::model::{validate_trace, RawPacket, RawTrace, Time, Trace};
use crate::weight::{Rational, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Burstiness {
    /// Releases uniform over the horizon.
    Uniform,
    /// Releases concentrated on `steps` randomly chosen steps.
    Bursts { steps: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub horizon: Time,
    pub buffer_size: u32,
    pub weight_min: i64,
    pub weight_max: i64,
    pub weight_den: i64,
    /// Deadline is release plus a slack drawn from `0..=max_slack`.
    pub max_slack: Time,
    pub burstiness: Burstiness,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n: 8,
            horizon: 6,
            buffer_size: 2,
            weight_min: 1,
            weight_max: 16,
            weight_den: 1,
            max_slack: 6,
            burstiness: Burstiness::Uniform,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("killer traces need B >= 2, got {0}")]
    KillerBufferTooSmall(u32),
    #[error("eps must lie strictly between 0 and 1, got {0}")]
    BadEpsilon(Rational),
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::BadParams(m.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be >= 1");
        }
        if self.buffer_size < 1 {
            return bad("buffer size must be >= 1");
        }
        if self.weight_den < 1 {
            return bad("weight denominator must be >= 1");
        }
        if self.weight_min < 1 || self.weight_max < self.weight_min {
            return bad("need 1 <= weight_min <= weight_max");
        }
        if let Burstiness::Bursts { steps: 0 } = self.burstiness {
            return bad("burst count must be >= 1");
        }
        Ok(())
    }
}

/// Deterministic source shared by the generators and the search.
#[derive(Clone, Debug)]
pub struct Draw(SplitMix64);

impl Draw {
    pub fn new(seed: u64) -> Self {
        Draw(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform-ish in `lo..=hi` (plain modulo reduction).
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        lo + self.next_u64() % (span + 1)
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.range(0, len as u64 - 1) as usize
    }
}

pub fn gen_random(params: &GeneratorParams) -> Result<Trace, GenError> {
    params.validate()?;
    let mut rng = Draw::new(params.seed);
    let t_max = params.horizon as u64;
    let bursts: Vec<u64> = match params.burstiness {
        Burstiness::Uniform => Vec::new(),
        Burstiness::Bursts { steps } => (0..steps).map(|_| rng.range(1, t_max)).collect(),
    };
    let mut packets = Vec::with_capacity(params.n);
    for id in 0..params.n {
        let release = if bursts.is_empty() {
            rng.range(1, t_max)
        } else {
            bursts[rng.index(bursts.len())]
        };
        let slack = rng.range(0, params.max_slack as u64);
        let deadline = (release + slack).min(t_max);
        let num = rng.range(params.weight_min as u64, params.weight_max as u64);
        packets.push(RawPacket {
            id: id as i64,
            release: release as i64,
            deadline: deadline as i64,
            weight: Weight::ratio(num as i128, params.weight_den as i128),
        });
    }
    packets.sort_by_key(|p| (p.release, p.id));
    validate_trace(RawTrace {
        buffer_size: params.buffer_size as i64,
        packets,
    })
    .map_err(|e| GenError::BadParams(format!("{e:?}")))
}

/// `B` packets of weight 1 expiring immediately, plus `B - 1` packets of
/// weight `1 - eps` that can wait until step `B`; everything arrives at 1.
pub fn gen_killer(buffer_size: u32, eps: Rational) -> Result<Trace, GenError> {
    if buffer_size < 2 {
        return Err(GenError::KillerBufferTooSmall(buffer_size));
    }
    if eps <= Rational::from_integer(0) || eps >= Rational::from_integer(1) {
        return Err(GenError::BadEpsilon(eps));
    }
    let b = buffer_size as i64;
    let heavy = (0..b).map(|id| RawPacket {
        id,
        release: 1,
        deadline: 1,
        weight: Weight::integer(1),
    });
    let light = (b..2 * b - 1).map(|id| RawPacket {
        id,
        release: 1,
        deadline: b,
        weight: Weight(Rational::from_integer(1) - eps),
    });
    validate_trace(RawTrace {
        buffer_size: b,
        packets: heavy.chain(light).collect(),
    })
    .map_err(|e| GenError::BadParams(format!("{e:?}")))
}
