//! Online schedulers: GRQ and the naive greedy baseline.
//!
//! Both run the same loop per time step: an arrival stage that decides which
//! packets stay in the buffer, then a transmission stage that sends at most
//! one packet.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::model::{
    Algorithm, Packet, PacketId, RejectCause, Rejection, SlotBuffer, Step, Time, Trace, Transcript,
};
use crate::weight::Weight;

/// How equal-weight packets are ordered. Packet id is always the final key,
/// so every variant is a strict total order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Earlier deadline first, then smaller id.
    #[default]
    EarlierDeadline,
    /// Later deadline first, then smaller id.
    LaterDeadline,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub tie_break: TieBreak,
}

impl SchedulerConfig {
    /// Processing order: heavier first, ties per `tie_break`.
    pub fn priority(&self, a: &Packet, b: &Packet) -> Ordering {
        let by_deadline = match self.tie_break {
            TieBreak::EarlierDeadline => a.deadline.cmp(&b.deadline),
            TieBreak::LaterDeadline => b.deadline.cmp(&a.deadline),
        };
        b.weight
            .cmp(&a.weight)
            .then(by_deadline)
            .then(a.id.cmp(&b.id))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("packet {id} offered at {t} but its window is {release}..={deadline}")]
    OutsideWindow {
        id: PacketId,
        t: Time,
        release: Time,
        deadline: Time,
    },
    #[error("{held} packets carried into a buffer of size {capacity}")]
    Overfull { held: usize, capacity: u32 },
    #[error("buffer is labeled from {base} but the step is {t}")]
    WrongBase { base: Time, t: Time },
}

fn check_offered<'a>(packets: impl Iterator<Item = &'a Packet>, t: Time) -> Result<(), SchedulerError> {
    for p in packets {
        if !p.window_contains(t) {
            return Err(SchedulerError::OutsideWindow {
                id: p.id,
                t,
                release: p.release,
                deadline: p.deadline,
            });
        }
    }
    Ok(())
}

/// GRQ's arrival stage.
///
/// All candidates are taken in priority order and each goes to the
/// smallest-labeled empty slot whose label does not exceed its deadline. A
/// candidate with no such slot is rejected; a rejected candidate that was
/// already buffered counts as preempted.
pub fn grq_rebuild(
    buffered: &[Packet],
    arrivals: &[Packet],
    t: Time,
    buffer_size: u32,
    config: &SchedulerConfig,
) -> Result<(SlotBuffer, Vec<Rejection>), SchedulerError> {
    if buffered.len() > buffer_size as usize {
        return Err(SchedulerError::Overfull {
            held: buffered.len(),
            capacity: buffer_size,
        });
    }
    check_offered(buffered.iter().chain(arrivals), t)?;

    let was_buffered: HashSet<PacketId> = buffered.iter().map(|p| p.id).collect();
    let mut candidates: Vec<&Packet> = buffered.iter().chain(arrivals).collect();
    candidates.sort_by(|a, b| config.priority(a, b));

    let mut buffer = SlotBuffer::empty(t, buffer_size);
    let mut rejected = Vec::new();
    // Occupied slots always form a prefix, so the smallest empty label is
    // `t + filled`.
    let mut filled: u32 = 0;
    for p in candidates {
        let label = t + filled;
        if filled < buffer_size && label <= p.deadline {
            buffer.slots[filled as usize] = Some(p.clone());
            filled += 1;
        } else {
            let cause = if was_buffered.contains(&p.id) {
                RejectCause::Preempted
            } else {
                RejectCause::AdmissionRefused
            };
            rejected.push(Rejection { packet: p.id, cause });
        }
    }
    Ok((buffer, rejected))
}

/// GRQ's transmission stage: send whatever sits at label `t`.
pub fn grq_transmit(buffer: &SlotBuffer, t: Time) -> Result<(Option<Packet>, Vec<Packet>), SchedulerError> {
    if buffer.base_time != t {
        return Err(SchedulerError::WrongBase {
            base: buffer.base_time,
            t,
        });
    }
    let sent = buffer.front().cloned();
    debug_assert!(
        sent.as_ref().map(|p| p.weight) == buffer.max_weight(),
        "front slot is not the heaviest packet"
    );
    let remaining = buffer.slots.iter().skip(1).flatten().cloned().collect();
    Ok((sent, remaining))
}

pub fn run_grq(trace: &Trace) -> Transcript {
    run_grq_with(trace, &SchedulerConfig::default())
}

pub fn run_grq_with(trace: &Trace, config: &SchedulerConfig) -> Transcript {
    let b = trace.buffer_size();
    let mut held: Vec<Packet> = Vec::new();
    let mut steps = Vec::with_capacity(trace.horizon() as usize);
    let mut total = Weight::ZERO;
    for t in 1..=trace.horizon() {
        let arrivals: Vec<Packet> = trace.arrivals_at(t).cloned().collect();
        // Every buffered packet sits at a label <= its deadline, so nothing
        // carried over has expired and the preconditions always hold here.
        let (buffer, rejected) =
            grq_rebuild(&held, &arrivals, t, b, config).expect("GRQ invariant broken in rebuild");
        let (sent, remaining) = grq_transmit(&buffer, t).expect("buffer labeled at t");
        if let Some(p) = &sent {
            total += p.weight;
        }
        held = remaining;
        steps.push(Step {
            time: t,
            arrivals: arrivals.iter().map(|p| p.id).collect(),
            buffer,
            rejected,
            transmitted: sent,
        });
    }
    debug_assert!(held.is_empty());
    Transcript {
        algorithm: Algorithm::Grq,
        buffer_size: b,
        steps,
        total,
    }
}

/// Keep the heaviest packets, send the heaviest one.
///
/// On overflow the lightest packets are dropped; among equal weights the
/// later deadline goes first, then the larger id. Packets that reach their
/// deadline unsent are recorded as expired at that step.
pub fn run_naive_greedy(trace: &Trace) -> Transcript {
    let config = SchedulerConfig::default();
    let b = trace.buffer_size();
    let mut held: Vec<Packet> = Vec::new();
    let mut steps = Vec::with_capacity(trace.horizon() as usize);
    let mut total = Weight::ZERO;
    for t in 1..=trace.horizon() {
        let arrivals: Vec<Packet> = trace.arrivals_at(t).cloned().collect();
        let was_buffered: HashSet<PacketId> = held.iter().map(|p| p.id).collect();
        let mut pool: Vec<Packet> = held.drain(..).chain(arrivals.iter().cloned()).collect();
        pool.sort_by(|a, b| config.priority(a, b));

        let mut rejected = Vec::new();
        for p in pool.drain((b as usize).min(pool.len())..) {
            let cause = if was_buffered.contains(&p.id) {
                RejectCause::Preempted
            } else {
                RejectCause::AdmissionRefused
            };
            rejected.push(Rejection { packet: p.id, cause });
        }

        let mut buffer = SlotBuffer::empty(t, b);
        for (slot, p) in buffer.slots.iter_mut().zip(&pool) {
            *slot = Some(p.clone());
        }

        let sent = if pool.is_empty() { None } else { Some(pool.remove(0)) };
        if let Some(p) = &sent {
            total += p.weight;
        }
        for p in pool {
            if p.deadline <= t {
                rejected.push(Rejection {
                    packet: p.id,
                    cause: RejectCause::Expired,
                });
            } else {
                held.push(p);
            }
        }
        steps.push(Step {
            time: t,
            arrivals: arrivals.iter().map(|p| p.id).collect(),
            buffer,
            rejected,
            transmitted: sent,
        });
    }
    Transcript {
        algorithm: Algorithm::Greedy,
        buffer_size: b,
        steps,
        total,
    }
}
