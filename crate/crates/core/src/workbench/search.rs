//! Random-restart hill climbing for traces with a large OPT / GRQ ratio.

use serde::Serialize;

use crate::model::{validate_trace, RawPacket, RawTrace, Trace};
use crate::oracle::{optimal_bounded_with, OracleConfig, OracleError};
use crate::schedulers::run_grq;
use crate::weight::{Rational, Weight};
use crate::workbench::generate::{gen_random, Draw, GenError, GeneratorParams};

/// `opt / alg`, with `0 / 0 = 1`. `None` when the online value is zero but
/// the offline one is not.
pub fn competitive_ratio(opt: Weight, alg: Weight) -> Option<Rational> {
    match (opt.is_zero(), alg.is_zero()) {
        (true, true) => Some(Rational::from_integer(1)),
        (false, true) => None,
        _ => Some(opt.as_rational() / alg.as_rational()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchOutcome {
    #[serde(skip)]
    pub worst: Trace,
    /// `None` only if GRQ earned nothing on a trace where OPT earned something.
    #[serde(serialize_with = "crate::workbench::ser_opt_rational")]
    pub worst_ratio: Option<Rational>,
    pub evaluated: usize,
    /// Candidates dropped because the oracle ran out of budget.
    pub skipped: usize,
}

impl SearchOutcome {
    pub fn exceeds(&self, bound: i128) -> bool {
        self.worst_ratio.is_none_or(|r| r > Rational::from_integer(bound))
    }
}

fn ratio_key(r: Option<Rational>) -> (bool, Rational) {
    match r {
        None => (true, Rational::from_integer(0)),
        Some(r) => (false, r),
    }
}

/// Searches traces shaped by `params` (at most `params.n` packets, times in
/// `1..=params.horizon`, weights in the same range) for the largest
/// bounded-OPT / GRQ ratio. Each iteration evaluates one candidate: either a
/// fresh random trace (one in eight, or when a mutation does not apply) or a
/// single mutation of the current one.
/// A candidate replaces the current trace when its ratio is at least as large.
pub fn adversarial_search(params: &GeneratorParams, iterations: usize, oracle: &OracleConfig) -> Result<SearchOutcome, GenError> {
    params.validate()?;
    let mut rng = Draw::new(params.seed ^ 0x5eed_5eed_5eed_5eed);
    let fresh = |rng: &mut Draw| {
        let p = GeneratorParams {
            n: rng.range(1, params.n.max(1) as u64) as usize,
            seed: rng.next_u64(),
            ..params.clone()
        };
        gen_random(&p)
    };

    let mut skipped = 0;
    let mut evaluated = 0;
    let evaluate = |trace: &Trace| -> Result<Option<Rational>, OracleError> {
        let opt = optimal_bounded_with(trace, oracle)?;
        Ok(competitive_ratio(opt.value, run_grq(trace).total))
    };

    let mut current = gen_random(params)?;
    let mut current_ratio = match evaluate(&current) {
        Ok(r) => r,
        Err(_) => {
            skipped += 1;
            Some(Rational::from_integer(1))
        }
    };
    let mut worst = current.clone();
    let mut worst_ratio = current_ratio;

    for _ in 0..iterations {
        let candidate = if rng.range(0, 7) == 0 {
            fresh(&mut rng)?
        } else {
            match mutate(&current, params, &mut rng) {
                Some(t) => t,
                None => fresh(&mut rng)?,
            }
        };
        evaluated += 1;
        let ratio = match evaluate(&candidate) {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if ratio_key(ratio) >= ratio_key(current_ratio) {
            current = candidate;
            current_ratio = ratio;
            if ratio_key(ratio) > ratio_key(worst_ratio) {
                worst = current.clone();
                worst_ratio = ratio;
            }
        }
    }
    Ok(SearchOutcome {
        worst,
        worst_ratio,
        evaluated,
        skipped,
    })
}

fn mutate(trace: &Trace, params: &GeneratorParams, rng: &mut Draw) -> Option<Trace> {
    let t_max = params.horizon as u64;
    let mut packets: Vec<RawPacket> = trace.packets().iter().map(RawPacket::from).collect();
    let random_weight =
        |rng: &mut Draw| Weight::ratio(rng.range(params.weight_min as u64, params.weight_max as u64) as i128, params.weight_den as i128);
    match rng.range(0, 4) {
        0 if !packets.is_empty() => {
            let i = rng.index(packets.len());
            packets[i].weight = random_weight(rng);
        }
        1 if !packets.is_empty() => {
            let i = rng.index(packets.len());
            let p = &mut packets[i];
            p.release = rng.range(1, p.deadline as u64) as i64;
        }
        2 if !packets.is_empty() => {
            let i = rng.index(packets.len());
            let p = &mut packets[i];
            p.deadline = rng.range(p.release as u64, t_max) as i64;
        }
        3 if packets.len() < params.n => {
            let id = packets.iter().map(|p| p.id).max().map_or(0, |m| m + 1);
            let release = rng.range(1, t_max);
            let deadline = rng.range(release, t_max);
            packets.push(RawPacket {
                id,
                release: release as i64,
                deadline: deadline as i64,
                weight: random_weight(rng),
            });
        }
        4 if packets.len() > 1 => {
            let i = rng.index(packets.len());
            packets.remove(i);
        }
        _ => return None,
    }
    packets.sort_by_key(|p| (p.release, p.id));
    validate_trace(RawTrace {
        buffer_size: trace.buffer_size() as i64,
        packets,
    })
    .ok()
}
