//! Charging-scheme verifier.
//!
//! Maps every transmission of an adversary schedule onto a GRQ transmission so
//! that each GRQ step absorbs at most two charges, each no heavier than what
//! GRQ sent there. That bounds the adversary's value by twice GRQ's.
//!
//! For an adversary transmission of `x` at `t`, with `y` the packet GRQ sends
//! at `t`:
//! - S (self): GRQ sent `x` itself before `t`; charge that earlier step.
//! - D (down): `w(x) <= w(y)`, an idle GRQ step counting as weight zero;
//!   charge step `t`.
//! - F (forward): otherwise. GRQ must have rejected `x` at some `t0`; the
//!   charge goes to the earliest transmitting GRQ step at or after `t0` that
//!   holds fewer than two charges.
//!
//! S and D charges are fixed by the two transcripts and installed first. F
//! charges are placed in increasing `t0`, and within one `t0` in increasing
//! adversary send time. Placements are never revised.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::model::{PacketId, Time, Trace, Transcript};
use crate::oracle::OfflineSchedule;
use crate::weight::Weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ChargeKind {
    S,
    D,
    F,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Charge {
    pub kind: ChargeKind,
    /// Adversary send step of the source packet.
    pub source_time: Time,
    pub source_packet: PacketId,
    pub source_weight: Weight,
    /// GRQ step receiving the charge.
    pub target: Time,
    /// GRQ's rejection step of the source packet; F charges only.
    pub rejection_time: Option<Time>,
}

/// Classification of one adversary transmission before F placement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classified {
    pub kind: ChargeKind,
    pub source_time: Time,
    pub source_packet: PacketId,
    pub source_weight: Weight,
    /// Fixed target for S and D; `None` for F until placement.
    pub target: Option<Time>,
    pub rejection_time: Option<Time>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ChargeMap {
    pub buffer_size: u32,
    pub charges: Vec<Charge>,
}

impl ChargeMap {
    /// Number of charges landing on each GRQ step.
    pub fn target_counts(&self) -> BTreeMap<Time, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.charges {
            *counts.entry(c.target).or_default() += 1;
        }
        counts
    }

    pub fn count(&self, kind: ChargeKind) -> usize {
        self.charges.iter().filter(|c| c.kind == kind).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub enum ChargingError {
    #[error("adversary schedule refers to unknown packet {0}")]
    UnknownPacket(PacketId),
    #[error("adversary sends {packet} at {time} heavier than GRQ's {grq_weight}, but GRQ has no rejection for it")]
    MissingRejection {
        packet: PacketId,
        time: Time,
        grq_weight: Weight,
    },
    #[error("no GRQ step in {t0}..={last} has room for the F-charge of packet {packet}")]
    NoForwardTarget { packet: PacketId, t0: Time, last: Time },
}

pub fn classify_charges(trace: &Trace, grq: &Transcript, adversary: &OfflineSchedule) -> Result<Vec<Classified>, ChargingError> {
    let index = trace.packet_index();
    let sent = grq.sent_times();
    let rejected = grq.rejection_times();
    let mut out = Vec::with_capacity(adversary.assignment.len());
    for (t, id) in adversary.sends() {
        let x = index.get(&id).ok_or(ChargingError::UnknownPacket(id))?;
        let base = Classified {
            kind: ChargeKind::S,
            source_time: t,
            source_packet: id,
            source_weight: x.weight,
            target: None,
            rejection_time: None,
        };
        if let Some(&s) = sent.get(&id).filter(|&&s| s < t) {
            out.push(Classified { target: Some(s), ..base });
            continue;
        }
        let grq_weight = grq.transmitted_weight(t);
        if x.weight <= grq_weight {
            out.push(Classified {
                kind: ChargeKind::D,
                target: Some(t),
                ..base
            });
            continue;
        }
        let Some(&(t0, _)) = rejected.get(&id) else {
            return Err(ChargingError::MissingRejection {
                packet: id,
                time: t,
                grq_weight,
            });
        };
        out.push(Classified {
            kind: ChargeKind::F,
            rejection_time: Some(t0),
            ..base
        });
    }
    Ok(out)
}

/// Places F charges on top of the fixed S and D charges.
pub fn assign_f_charges(grq: &Transcript, classified: &[Classified]) -> Result<ChargeMap, ChargingError> {
    let b = grq.buffer_size;
    let mut counts: HashMap<Time, usize> = HashMap::new();
    let mut charges = Vec::with_capacity(classified.len());
    for c in classified.iter().filter(|c| c.kind != ChargeKind::F) {
        let target = c.target.expect("S and D charges carry a target");
        *counts.entry(target).or_default() += 1;
        charges.push(to_charge(c, target));
    }

    let mut forward: Vec<&Classified> = classified.iter().filter(|c| c.kind == ChargeKind::F).collect();
    forward.sort_by_key(|c| (c.rejection_time, c.source_time));
    for c in forward {
        let t0 = c.rejection_time.expect("F charges carry a rejection time");
        let last = t0 + b - 1;
        let target = (t0..=last)
            .find(|&s| grq.is_transmitting(s) && counts.get(&s).copied().unwrap_or(0) < 2)
            .ok_or(ChargingError::NoForwardTarget {
                packet: c.source_packet,
                t0,
                last,
            })?;
        *counts.entry(target).or_default() += 1;
        charges.push(to_charge(c, target));
    }
    charges.sort_by_key(|c| (c.source_time, c.source_packet));
    Ok(ChargeMap {
        buffer_size: b,
        charges,
    })
}

fn to_charge(c: &Classified, target: Time) -> Charge {
    Charge {
        kind: c.kind,
        source_time: c.source_time,
        source_packet: c.source_packet,
        source_weight: c.source_weight,
        target,
        rejection_time: c.rejection_time,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Every adversary transmission is the source of exactly one charge.
    Coverage,
    /// No GRQ step receives more than two charges.
    Capacity,
    /// Each charge is no heavier than what GRQ sent at its target.
    Domination,
    /// F charges land in `t0..=t0+B-1` and originate at or after `t0+B`.
    ForwardWindow,
    /// GRQ's buffer at `t0` was full of packets at least as heavy.
    RejectionBuffer,
    /// The two counting inequalities at every `t0` that produced F charges.
    Counting,
    /// Adversary value at most twice GRQ's value.
    Ratio,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Coverage,
        Check::Capacity,
        Check::Domination,
        Check::ForwardWindow,
        Check::RejectionBuffer,
        Check::Counting,
        Check::Ratio,
    ];
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Coverage => "coverage",
            Check::Capacity => "capacity",
            Check::Domination => "domination",
            Check::ForwardWindow => "forward-window",
            Check::RejectionBuffer => "rejection-buffer",
            Check::Counting => "counting",
            Check::Ratio => "ratio",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub failures: Vec<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Set sizes behind the counting inequalities at one rejection step `t0`,
/// over the window `W = t0..=t0+B-1`. Superscript 1 means the adversary sends
/// the source inside `W`, superscript 2 after it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CountingSets {
    pub t0: Time,
    pub g1: usize,
    pub g2: usize,
    pub d: usize,
    pub s1: usize,
    pub s2: usize,
    pub f: usize,
}

impl CountingSets {
    pub fn in_window(&self) -> usize {
        self.g1 + self.d + self.s1
    }

    pub fn after_window(&self) -> usize {
        self.g2 + self.f + self.s2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChargingReport {
    pub adversary_value: Weight,
    pub grq_value: Weight,
    pub s_charges: usize,
    pub d_charges: usize,
    pub f_charges: usize,
    /// Set when the charge map could not be built at all.
    pub construction_error: Option<ChargingError>,
    pub checks: Vec<CheckOutcome>,
    pub counting: Vec<CountingSets>,
}

impl ChargingReport {
    pub fn passed(&self) -> bool {
        self.construction_error.is_none() && self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.construction_error.iter().map(|e| format!("construction: {e}")).collect();
        for c in &self.checks {
            out.extend(c.failures.iter().map(|f| format!("{}: {f}", c.check)));
        }
        out
    }
}

/// Runs the seven checks against an already-built map.
pub fn verify_charge_map(map: &ChargeMap, grq: &Transcript, adversary: &OfflineSchedule) -> ChargingReport {
    let b = map.buffer_size;
    let mut checks: BTreeMap<u8, Vec<String>> = (0..7).map(|i| (i, Vec::new())).collect();
    let mut fail = |check: Check, msg: String| {
        checks.get_mut(&(check as u8)).unwrap().push(msg);
    };

    // Coverage.
    let mut sources: HashMap<(Time, PacketId), usize> = HashMap::new();
    for c in &map.charges {
        *sources.entry((c.source_time, c.source_packet)).or_default() += 1;
    }
    for (t, id) in adversary.sends() {
        match sources.remove(&(t, id)) {
            Some(1) => {}
            Some(n) => fail(Check::Coverage, format!("adversary send of {id} at {t} is charged {n} times")),
            None => fail(Check::Coverage, format!("adversary send of {id} at {t} is not charged")),
        }
    }
    for ((t, id), _) in sources {
        fail(
            Check::Coverage,
            format!("charge from {id} at {t} has no adversary transmission behind it"),
        );
    }

    // Capacity.
    for (target, n) in map.target_counts() {
        if n > 2 {
            fail(Check::Capacity, format!("GRQ step {target} receives {n} charges"));
        }
    }

    // Domination.
    for c in &map.charges {
        let sent = grq.transmitted_weight(c.target);
        if c.source_weight > sent {
            fail(
                Check::Domination,
                format!(
                    "{:?}-charge from {} (weight {}) exceeds GRQ's {} at step {}",
                    c.kind, c.source_packet, c.source_weight, sent, c.target
                ),
            );
        }
    }

    let step_of = |t: Time| grq.step(t);
    for c in map.charges.iter().filter(|c| c.kind == ChargeKind::F) {
        let Some(t0) = c.rejection_time else {
            fail(Check::ForwardWindow, format!("F-charge from {} lacks a rejection time", c.source_packet));
            continue;
        };
        // Forward window.
        if c.target < t0 || c.target > t0 + b - 1 {
            fail(
                Check::ForwardWindow,
                format!("F-charge from {} targets {} outside {t0}..={}", c.source_packet, c.target, t0 + b - 1),
            );
        }
        if t0 + b > c.source_time {
            fail(
                Check::ForwardWindow,
                format!(
                    "packet {} rejected at {t0} but sent by the adversary at {} < {t0} + {b}",
                    c.source_packet, c.source_time
                ),
            );
        }
        // Rejection buffer.
        match step_of(t0) {
            None => fail(Check::RejectionBuffer, format!("no GRQ step {t0}")),
            Some(step) => {
                if !step.buffer.is_full() {
                    fail(
                        Check::RejectionBuffer,
                        format!("packet {} rejected at {t0} while the buffer had a free slot", c.source_packet),
                    );
                }
                for (label, p) in step.buffer.occupied() {
                    if p.weight < c.source_weight {
                        fail(
                            Check::RejectionBuffer,
                            format!(
                                "packet {} (weight {}) rejected at {t0}, but label {label} holds {} (weight {})",
                                c.source_packet, c.source_weight, p.id, p.weight
                            ),
                        );
                    }
                }
            }
        }
    }

    // Counting.
    let counting = counting_sets(map);
    for cs in &counting {
        if cs.in_window() > b as usize {
            fail(
                Check::Counting,
                format!("t0={}: |G1|+|D|+|S1| = {}+{}+{} > {b}", cs.t0, cs.g1, cs.d, cs.s1),
            );
        }
        if cs.after_window() > b as usize {
            fail(
                Check::Counting,
                format!("t0={}: |G2|+|F|+|S2| = {}+{}+{} > {b}", cs.t0, cs.g2, cs.f, cs.s2),
            );
        }
    }

    // Ratio, both per target and overall.
    let charged: Weight = map.charges.iter().map(|c| c.source_weight).sum();
    if charged != adversary.value {
        fail(
            Check::Ratio,
            format!("charges sum to {charged}, adversary value is {}", adversary.value),
        );
    }
    let mut per_target: BTreeMap<Time, Weight> = BTreeMap::new();
    for c in &map.charges {
        *per_target.entry(c.target).or_default() += c.source_weight;
    }
    for (t, w) in per_target {
        let sent = grq.transmitted_weight(t);
        if w > sent * 2 {
            fail(Check::Ratio, format!("step {t} absorbs {w} > 2 x {sent}"));
        }
    }
    if adversary.value > grq.total * 2 {
        fail(
            Check::Ratio,
            format!("adversary value {} > 2 x GRQ value {}", adversary.value, grq.total),
        );
    }

    ChargingReport {
        adversary_value: adversary.value,
        grq_value: grq.total,
        s_charges: map.count(ChargeKind::S),
        d_charges: map.count(ChargeKind::D),
        f_charges: map.count(ChargeKind::F),
        construction_error: None,
        checks: Check::ALL
            .iter()
            .map(|&check| CheckOutcome {
                check,
                failures: checks.remove(&(check as u8)).unwrap_or_default(),
            })
            .collect(),
        counting,
    }
}

/// Set sizes for every rejection step that produced F charges.
pub fn counting_sets(map: &ChargeMap) -> Vec<CountingSets> {
    let b = map.buffer_size;
    let mut rejection_steps: Vec<Time> = map.charges.iter().filter_map(|c| c.rejection_time).collect();
    rejection_steps.sort_unstable();
    rejection_steps.dedup();
    rejection_steps
        .into_iter()
        .map(|t0| {
            let last = t0 + b - 1;
            let mut cs = CountingSets {
                t0,
                ..CountingSets::default()
            };
            for c in &map.charges {
                let in_window = (t0..=last).contains(&c.target);
                let source_inside = c.source_time <= last;
                match (c.kind, c.rejection_time) {
                    (ChargeKind::F, Some(r)) if r == t0 => cs.f += 1,
                    (ChargeKind::F, Some(r)) if r < t0 && c.target >= t0 => {
                        if source_inside {
                            cs.g1 += 1
                        } else {
                            cs.g2 += 1
                        }
                    }
                    (ChargeKind::D, _) if in_window => cs.d += 1,
                    (ChargeKind::S, _) if in_window => {
                        if source_inside {
                            cs.s1 += 1
                        } else {
                            cs.s2 += 1
                        }
                    }
                    _ => {}
                }
            }
            cs
        })
        .collect()
}

/// Classify, place, and verify in one go. Construction failures are reported
/// rather than returned as errors.
pub fn check_charging(trace: &Trace, grq: &Transcript, adversary: &OfflineSchedule) -> ChargingReport {
    let built = classify_charges(trace, grq, adversary).and_then(|c| assign_f_charges(grq, &c));
    match built {
        Ok(map) => verify_charge_map(&map, grq, adversary),
        Err(e) => ChargingReport {
            adversary_value: adversary.value,
            grq_value: grq.total,
            s_charges: 0,
            d_charges: 0,
            f_charges: 0,
            construction_error: Some(e),
            checks: Vec::new(),
            counting: Vec::new(),
        },
    }
}
