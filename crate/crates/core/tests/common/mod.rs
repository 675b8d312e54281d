#![allow(dead_code)]

use std::collections::BTreeMap;

use grq::model::{validate_trace, Packet, PacketId, RawPacket, RawTrace, Time};
use grq::oracle::{verify_schedule, OfflineSchedule};
use grq::{Trace, Weight};
use proptest::prelude::*;

pub fn trace(b: u32, packets: &[(PacketId, Time, Time, Weight)]) -> Trace {
    validate_trace(RawTrace {
        buffer_size: b as i64,
        packets: packets
            .iter()
            .map(|&(id, r, d, w)| RawPacket::from(&Packet::new(id, r, d, w)))
            .collect(),
    })
    .unwrap()
}

/// Small random traces: up to `max_n` packets, times in `1..=max_t`,
/// integer weights in `1..=16`, buffer in `1..=max_b`.
pub fn arb_trace(max_n: usize, max_t: Time, max_b: u32) -> impl Strategy<Value = Trace> {
    let packet = (1..=max_t, 0..max_t, 1i128..=16).prop_map(move |(r, slack, w)| (r, (r + slack).min(max_t), w));
    (1..=max_b, prop::collection::vec(packet, 0..=max_n)).prop_map(|(b, ps)| {
        let packets: Vec<_> = ps
            .into_iter()
            .enumerate()
            .map(|(i, (r, d, w))| (i as PacketId, r, d, Weight::integer(w)))
            .collect();
        trace(b, &packets)
    })
}

/// Independent oracle: tries every partial assignment of packets to steps
/// and keeps the best one that passes the feasibility checker.
pub fn brute_force_bounded(trace: &Trace) -> Weight {
    fn go(trace: &Trace, i: usize, current: &mut BTreeMap<PacketId, Time>, best: &mut Weight) {
        if i == trace.len() {
            let s = OfflineSchedule::from_assignment(trace, current.clone());
            if s.value > *best && verify_schedule(trace, &s).unwrap().is_empty() {
                *best = s.value;
            }
            return;
        }
        let p = &trace.packets()[i];
        go(trace, i + 1, current, best);
        for t in p.release..=p.deadline {
            if current.values().any(|&u| u == t) {
                continue;
            }
            current.insert(p.id, t);
            go(trace, i + 1, current, best);
            current.remove(&p.id);
        }
    }
    let mut best = Weight::ZERO;
    go(trace, 0, &mut BTreeMap::new(), &mut best);
    best
}

/// Independent oracle ignoring capacity: best set of packets that can be put
/// on distinct steps, by exhaustive assignment.
pub fn brute_force_unbounded(trace: &Trace) -> Weight {
    let wide = trace.with_buffer_size(trace.len().max(1) as u32).unwrap();
    brute_force_bounded(&wide)
}
