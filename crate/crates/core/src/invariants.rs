//! Runtime checks of GRQ's structural properties on concrete transcripts.

use serde::Serialize;

use crate::model::{
    check_buffer_invariants, check_transcript, BufferPhase, BufferViolation, PacketId, RejectCause, Time, Trace,
    Transcript, TranscriptViolation,
};
use crate::oracle::OfflineSchedule;
use crate::weight::Weight;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub enum InvariantViolation {
    #[error("t={time}: {violation}")]
    Buffer { time: Time, violation: BufferViolation },
    #[error("{0}")]
    Transcript(TranscriptViolation),
    #[error("t={time}: sent {sent:?} but the front slot holds {front:?}")]
    NotFront {
        time: Time,
        sent: Option<PacketId>,
        front: Option<PacketId>,
    },
    #[error("t={time}: sent weight {sent} but buffer max is {max}")]
    NotHeaviest { time: Time, sent: Weight, max: Weight },
    #[error("t={time}: packet {packet} expired inside the buffer")]
    Expired { time: Time, packet: PacketId },
    #[error("label {label}: weight fell from {before:?} at t={} to {after:?} at t={time}", time - 1)]
    SlotWeightDecreased {
        label: Time,
        time: Time,
        before: Option<Weight>,
        after: Option<Weight>,
    },
    #[error("adversary sends {packet} at {time} heavier than GRQ's {grq_weight}, but GRQ never rejected it")]
    NeverRejected {
        packet: PacketId,
        time: Time,
        grq_weight: Weight,
    },
    #[error("packet {packet} rejected at {rejected}, adversary sends it at {time}: need rejection + {buffer_size} <= send")]
    RejectedTooLate {
        packet: PacketId,
        rejected: Time,
        time: Time,
        buffer_size: u32,
    },
    #[error("packet {packet} (weight {weight}) rejected at {rejected}, but at t={time} label {label} holds {found:?}")]
    LightSlotAfterRejection {
        packet: PacketId,
        weight: Weight,
        rejected: Time,
        time: Time,
        label: Time,
        found: Option<Weight>,
    },
}

/// Every structural property of a GRQ run: post-rebuild buffer shape,
/// front-is-heaviest transmission, the sent-or-rejected partition, no silent
/// expiry, and per-slot weight monotonicity.
pub fn check_grq_transcript(trace: &Trace, transcript: &Transcript) -> Vec<InvariantViolation> {
    let mut out: Vec<InvariantViolation> = check_transcript(trace, transcript)
        .into_iter()
        .map(InvariantViolation::Transcript)
        .collect();
    for step in &transcript.steps {
        let t = step.time;
        out.extend(
            check_buffer_invariants(&step.buffer, BufferPhase::PostRebuild)
                .into_iter()
                .map(|violation| InvariantViolation::Buffer { time: t, violation }),
        );
        let sent = step.transmitted.as_ref();
        let front = step.buffer.get(t);
        if sent.map(|p| p.id) != front.map(|p| p.id) {
            out.push(InvariantViolation::NotFront {
                time: t,
                sent: sent.map(|p| p.id),
                front: front.map(|p| p.id),
            });
        }
        if let Some(max) = step.buffer.max_weight() {
            let sent_w = step.transmitted_weight();
            if sent_w != max {
                out.push(InvariantViolation::NotHeaviest {
                    time: t,
                    sent: sent_w,
                    max,
                });
            }
        }
        for r in &step.rejected {
            if r.cause == RejectCause::Expired {
                out.push(InvariantViolation::Expired {
                    time: t,
                    packet: r.packet,
                });
            }
        }
    }
    out.extend(check_slot_monotonicity(transcript));
    out
}

/// The weight held at each label never decreases while the label exists.
/// An empty slot counts as lighter than any packet.
pub fn check_slot_monotonicity(transcript: &Transcript) -> Vec<InvariantViolation> {
    let mut out = Vec::new();
    for pair in transcript.steps.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        for label in next.buffer.labels() {
            if !prev.buffer.labels().contains(&label) {
                continue;
            }
            let before = prev.buffer.get(label).map(|p| p.weight);
            let after = next.buffer.get(label).map(|p| p.weight);
            // Option orders None below Some, matching "empty is lightest".
            if after < before {
                out.push(InvariantViolation::SlotWeightDecreased {
                    label,
                    time: next.time,
                    before,
                    after,
                });
            }
        }
    }
    out
}

/// Whenever the adversary sends `x` at `t`, GRQ sends something lighter at
/// `t`, and GRQ did not send `x` earlier, GRQ must have rejected `x` at some
/// `t0` with `t0 + B <= t`; from then on every slot labeled `t0..t0+B-1`
/// that still exists holds weight at least `w(x)`.
pub fn check_rejection_timing(trace: &Trace, grq: &Transcript, adversary: &OfflineSchedule) -> Vec<InvariantViolation> {
    let b = trace.buffer_size();
    let index = trace.packet_index();
    let sent = grq.sent_times();
    let rejected = grq.rejection_times();
    let mut out = Vec::new();
    for (t, id) in adversary.sends() {
        let Some(x) = index.get(&id) else { continue };
        if sent.get(&id).is_some_and(|&s| s < t) {
            continue;
        }
        let grq_weight = grq.transmitted_weight(t);
        if x.weight <= grq_weight {
            continue;
        }
        let Some(&(t0, _)) = rejected.get(&id) else {
            out.push(InvariantViolation::NeverRejected {
                packet: id,
                time: t,
                grq_weight,
            });
            continue;
        };
        if t0 + b > t {
            out.push(InvariantViolation::RejectedTooLate {
                packet: id,
                rejected: t0,
                time: t,
                buffer_size: b,
            });
        }
        for s in t0..t0 + b {
            let Some(step) = grq.step(s) else { break };
            for label in s..t0 + b {
                let found = step.buffer.get(label).map(|p| p.weight);
                if found.is_none_or(|w| w < x.weight) {
                    out.push(InvariantViolation::LightSlotAfterRejection {
                        packet: id,
                        weight: x.weight,
                        rejected: t0,
                        time: s,
                        label,
                        found,
                    });
                }
            }
        }
    }
    out
}
