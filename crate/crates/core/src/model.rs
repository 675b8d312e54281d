//! Problem instances, GRQ's labeled slot buffer, and execution transcripts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::weight::Weight;

/// Discrete time step. Time starts at 1.
pub type Time = u32;
pub type PacketId = u64;

/// A unit-length packet with a hard deadline.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Packet {
    pub id: PacketId,
    pub release: Time,
    pub deadline: Time,
    pub weight: Weight,
}

impl Packet {
    pub fn new(id: PacketId, release: Time, deadline: Time, weight: impl Into<Weight>) -> Self {
        Packet {
            id,
            release,
            deadline,
            weight: weight.into(),
        }
    }

    /// Whether the packet may be transmitted at `t`.
    pub fn window_contains(&self, t: Time) -> bool {
        self.release <= t && t <= self.deadline
    }
}

/// A validated problem instance. Construct through [`validate_trace`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trace {
    buffer_size: u32,
    packets: Vec<Packet>,
    horizon: Time,
}

impl Trace {
    pub fn buffer_size(&self) -> u32 {
        self.buffer_size
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    /// Max deadline over all packets, 0 for the empty trace.
    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.packets.iter().find(|p| p.id == id)
    }

    pub fn packet_index(&self) -> HashMap<PacketId, &Packet> {
        self.packets.iter().map(|p| (p.id, p)).collect()
    }

    /// Packets released at `t`, in trace order.
    pub fn arrivals_at(&self, t: Time) -> impl Iterator<Item = &Packet> {
        self.packets.iter().filter(move |p| p.release == t)
    }

    /// Same packets with a different buffer size.
    pub fn with_buffer_size(&self, buffer_size: u32) -> Result<Trace, Vec<TraceError>> {
        validate_trace(RawTrace {
            buffer_size: buffer_size as i64,
            packets: self.packets.iter().map(RawPacket::from).collect(),
        })
    }

    pub fn total_weight(&self) -> Weight {
        self.packets.iter().map(|p| p.weight).sum()
    }
}

/// Unvalidated instance, as read from a file or built by a generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTrace {
    pub buffer_size: i64,
    pub packets: Vec<RawPacket>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawPacket {
    pub id: i64,
    pub release: i64,
    pub deadline: i64,
    pub weight: Weight,
}

impl From<&Packet> for RawPacket {
    fn from(p: &Packet) -> Self {
        RawPacket {
            id: p.id as i64,
            release: p.release as i64,
            deadline: p.deadline as i64,
            weight: p.weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("buffer size {0} is below 1")]
    BufferTooSmall(i64),
    #[error("packet id {0} is negative or too large")]
    BadId(i64),
    #[error("duplicate packet id {0}")]
    DuplicateId(i64),
    #[error("packet {id}: release {release} is outside 1..={max}", max = Time::MAX)]
    BadRelease { id: i64, release: i64 },
    #[error("packet {id}: deadline {deadline} < release {release}")]
    DeadlineBeforeRelease { id: i64, release: i64, deadline: i64 },
    #[error("packet {id}: deadline {deadline} is too large")]
    BadDeadline { id: i64, deadline: i64 },
    #[error("packet {id}: negative weight {weight}")]
    NegativeWeight { id: i64, weight: Weight },
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate_trace(raw: RawTrace) -> Result<Trace, Vec<TraceError>> {
    let mut errors = Vec::new();
    if raw.buffer_size < 1 || raw.buffer_size > u32::MAX as i64 {
        errors.push(TraceError::BufferTooSmall(raw.buffer_size));
    }
    let mut seen = HashSet::new();
    let mut packets = Vec::with_capacity(raw.packets.len());
    for p in &raw.packets {
        let mut ok = true;
        if p.id < 0 {
            errors.push(TraceError::BadId(p.id));
            ok = false;
        } else if !seen.insert(p.id) {
            errors.push(TraceError::DuplicateId(p.id));
            ok = false;
        }
        if p.release < 1 || p.release > Time::MAX as i64 {
            errors.push(TraceError::BadRelease {
                id: p.id,
                release: p.release,
            });
            ok = false;
        }
        if p.deadline < p.release {
            errors.push(TraceError::DeadlineBeforeRelease {
                id: p.id,
                release: p.release,
                deadline: p.deadline,
            });
            ok = false;
        } else if p.deadline > Time::MAX as i64 {
            errors.push(TraceError::BadDeadline {
                id: p.id,
                deadline: p.deadline,
            });
            ok = false;
        }
        if p.weight.is_negative() {
            errors.push(TraceError::NegativeWeight {
                id: p.id,
                weight: p.weight,
            });
            ok = false;
        }
        if ok {
            packets.push(Packet::new(
                p.id as PacketId,
                p.release as Time,
                p.deadline as Time,
                p.weight,
            ));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let horizon = packets.iter().map(|p| p.deadline).max().unwrap_or(0);
    Ok(Trace {
        buffer_size: raw.buffer_size as u32,
        packets,
        horizon,
    })
}

/// Labels of GRQ's slots at time `t`: `t..=t+B-1`.
pub fn slot_window(t: Time, buffer_size: u32) -> RangeInclusive<Time> {
    debug_assert!(t >= 1 && buffer_size >= 1);
    t..=t + buffer_size - 1
}

/// GRQ's queue at one time step. Slot `i` of `slots` carries label `base_time + i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlotBuffer {
    pub base_time: Time,
    pub slots: Vec<Option<Packet>>,
}

impl SlotBuffer {
    pub fn empty(base_time: Time, buffer_size: u32) -> Self {
        SlotBuffer {
            base_time,
            slots: vec![None; buffer_size as usize],
        }
    }

    pub fn capacity(&self) -> u32 {
        self.slots.len() as u32
    }

    pub fn labels(&self) -> RangeInclusive<Time> {
        slot_window(self.base_time, self.capacity())
    }

    pub fn get(&self, label: Time) -> Option<&Packet> {
        let idx = label.checked_sub(self.base_time)? as usize;
        self.slots.get(idx).and_then(Option::as_ref)
    }

    /// `(label, packet)` for every occupied slot, in label order.
    pub fn occupied(&self) -> impl Iterator<Item = (Time, &Packet)> {
        let base = self.base_time;
        self.slots
            .iter()
            .enumerate()
            .filter_map(move |(i, s)| s.as_ref().map(|p| (base + i as Time, p)))
    }

    pub fn occupancy(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    pub fn front(&self) -> Option<&Packet> {
        self.slots.first().and_then(Option::as_ref)
    }

    pub fn max_weight(&self) -> Option<Weight> {
        self.occupied().map(|(_, p)| p.weight).max()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferPhase {
    PostRebuild,
    PostTransmit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub enum BufferViolation {
    #[error("packet {packet} at label {label} has deadline {deadline} < label")]
    DeadlineBeforeLabel {
        label: Time,
        packet: PacketId,
        deadline: Time,
    },
    #[error("empty slot at label {empty} precedes occupied label {occupied}")]
    Gap { empty: Time, occupied: Time },
    #[error("weight increases from {before} at label {label} to {after} at label {}", label + 1)]
    WeightIncrease {
        label: Time,
        before: Weight,
        after: Weight,
    },
}

pub fn check_buffer_invariants(buffer: &SlotBuffer, phase: BufferPhase) -> Vec<BufferViolation> {
    let mut out = Vec::new();
    for (label, p) in buffer.occupied() {
        if p.deadline < label {
            out.push(BufferViolation::DeadlineBeforeLabel {
                label,
                packet: p.id,
                deadline: p.deadline,
            });
        }
    }
    if phase == BufferPhase::PostRebuild {
        let mut first_empty = None;
        let mut prev: Option<Weight> = None;
        for (i, slot) in buffer.slots.iter().enumerate() {
            let label = buffer.base_time + i as Time;
            match slot {
                None => {
                    first_empty.get_or_insert(label);
                    prev = None;
                }
                Some(p) => {
                    if let Some(empty) = first_empty {
                        out.push(BufferViolation::Gap {
                            empty,
                            occupied: label,
                        });
                    }
                    if let Some(before) = prev {
                        if p.weight > before {
                            out.push(BufferViolation::WeightIncrease {
                                label: label - 1,
                                before,
                                after: p.weight,
                            });
                        }
                    }
                    prev = Some(p.weight);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Grq,
    Greedy,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Grq => "grq",
            Algorithm::Greedy => "greedy",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectCause {
    /// Arrived this step and was not admitted.
    AdmissionRefused,
    /// Was buffered and got squeezed out.
    Preempted,
    /// Still buffered when its deadline passed (never happens under GRQ).
    Expired,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub packet: PacketId,
    pub cause: RejectCause,
}

/// One time step: arrival stage, then transmission stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub time: Time,
    pub arrivals: Vec<PacketId>,
    /// Buffer contents after the arrival stage.
    pub buffer: SlotBuffer,
    pub rejected: Vec<Rejection>,
    /// `None` is an idle step.
    pub transmitted: Option<Packet>,
}

impl Step {
    pub fn transmitted_weight(&self) -> Weight {
        self.transmitted.as_ref().map_or(Weight::ZERO, |p| p.weight)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub algorithm: Algorithm,
    pub buffer_size: u32,
    /// `steps[i]` is time `i + 1`; runs through the trace horizon.
    pub steps: Vec<Step>,
    pub total: Weight,
}

impl Transcript {
    pub fn horizon(&self) -> Time {
        self.steps.len() as Time
    }

    pub fn step(&self, t: Time) -> Option<&Step> {
        t.checked_sub(1).and_then(|i| self.steps.get(i as usize))
    }

    /// Weight sent at `t`, zero when idle or out of range.
    pub fn transmitted_weight(&self, t: Time) -> Weight {
        self.step(t).map_or(Weight::ZERO, Step::transmitted_weight)
    }

    pub fn is_transmitting(&self, t: Time) -> bool {
        self.step(t).is_some_and(|s| s.transmitted.is_some())
    }

    pub fn sent_times(&self) -> HashMap<PacketId, Time> {
        self.steps
            .iter()
            .filter_map(|s| s.transmitted.as_ref().map(|p| (p.id, s.time)))
            .collect()
    }

    pub fn rejection_times(&self) -> HashMap<PacketId, (Time, RejectCause)> {
        self.steps
            .iter()
            .flat_map(|s| s.rejected.iter().map(move |r| (r.packet, (s.time, r.cause))))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub enum TranscriptViolation {
    #[error("transcript covers {actual} steps, trace horizon is {expected}")]
    HorizonMismatch { expected: Time, actual: Time },
    #[error("step record {index} carries time {time}")]
    StepMisnumbered { index: usize, time: Time },
    #[error("packet {0} is neither transmitted nor rejected")]
    Unaccounted(PacketId),
    #[error("packet {packet} is accounted for {count} times")]
    MultiplyAccounted { packet: PacketId, count: usize },
    #[error("packet {packet} handled at {time}, outside its window")]
    OutsideWindow { packet: PacketId, time: Time },
    #[error("unknown packet {0} in transcript")]
    UnknownPacket(PacketId),
    #[error("total {recorded} does not match transmitted sum {actual}")]
    TotalMismatch { recorded: Weight, actual: Weight },
}

/// Each packet is transmitted or rejected exactly once, inside its window.
pub fn check_transcript(trace: &Trace, transcript: &Transcript) -> Vec<TranscriptViolation> {
    let mut out = Vec::new();
    if transcript.horizon() != trace.horizon() {
        out.push(TranscriptViolation::HorizonMismatch {
            expected: trace.horizon(),
            actual: transcript.horizon(),
        });
    }
    for (i, s) in transcript.steps.iter().enumerate() {
        if s.time as usize != i + 1 {
            out.push(TranscriptViolation::StepMisnumbered {
                index: i,
                time: s.time,
            });
        }
    }
    let index = trace.packet_index();
    let mut events: BTreeMap<PacketId, Vec<Time>> = BTreeMap::new();
    for s in &transcript.steps {
        let handled = s
            .transmitted
            .iter()
            .map(|p| p.id)
            .chain(s.rejected.iter().map(|r| r.packet));
        for id in handled {
            events.entry(id).or_default().push(s.time);
        }
    }
    for (&id, times) in &events {
        let Some(p) = index.get(&id) else {
            out.push(TranscriptViolation::UnknownPacket(id));
            continue;
        };
        if times.len() > 1 {
            out.push(TranscriptViolation::MultiplyAccounted {
                packet: id,
                count: times.len(),
            });
        }
        for &t in times {
            if !p.window_contains(t) {
                out.push(TranscriptViolation::OutsideWindow { packet: id, time: t });
            }
        }
    }
    for p in trace.packets() {
        if !events.contains_key(&p.id) {
            out.push(TranscriptViolation::Unaccounted(p.id));
        }
    }
    let actual: Weight = transcript.steps.iter().map(Step::transmitted_weight).sum();
    if actual != transcript.total {
        out.push(TranscriptViolation::TotalMismatch {
            recorded: transcript.total,
            actual,
        });
    }
    out
}
