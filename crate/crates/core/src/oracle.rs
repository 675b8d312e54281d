//! Exact offline schedules.
//!
//! An offline schedule decides, with full knowledge of the instance, which
//! packets to keep and when to send them. A kept packet occupies the buffer
//! from its release step through its send step, inclusive; packets that are
//! not kept are dropped on arrival and occupy nothing.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::model::{Packet, PacketId, Time, Trace};
use crate::weight::Weight;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OfflineSchedule {
    /// Packet id to send step. Packets absent from the map are not sent.
    pub assignment: BTreeMap<PacketId, Time>,
    pub value: Weight,
}

impl OfflineSchedule {
    /// Builds a schedule and sums its value; unknown ids contribute nothing.
    pub fn from_assignment(trace: &Trace, assignment: BTreeMap<PacketId, Time>) -> Self {
        let index = trace.packet_index();
        let value = assignment
            .keys()
            .filter_map(|id| index.get(id).map(|p| p.weight))
            .sum();
        OfflineSchedule { assignment, value }
    }

    /// `(time, packet)` pairs in time order.
    pub fn sends(&self) -> Vec<(Time, PacketId)> {
        let mut v: Vec<_> = self.assignment.iter().map(|(&id, &t)| (t, id)).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("search budget exceeded: more than {limit} states")]
    BudgetExceeded { limit: usize },
    #[error("horizon {horizon} exceeds the oracle limit {limit}")]
    HorizonTooLarge { horizon: Time, limit: Time },
    #[error("schedule refers to unknown packet {0}")]
    UnknownPacket(PacketId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    /// Upper bound on memoized search states.
    pub max_states: usize,
    pub max_horizon: Time,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_states: 2_000_000,
            max_horizon: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub enum ScheduleViolation {
    #[error("packet {packet} sent at {time}, outside {release}..={deadline}")]
    OutsideWindow {
        packet: PacketId,
        time: Time,
        release: Time,
        deadline: Time,
    },
    #[error("packets {packets:?} all sent at {time}")]
    SlotCollision { time: Time, packets: Vec<PacketId> },
    #[error("{occupancy} packets held at {time}, buffer size {capacity}")]
    Overfull {
        time: Time,
        occupancy: usize,
        capacity: u32,
    },
    #[error("recorded value {recorded} but assigned weights sum to {actual}")]
    ValueMismatch { recorded: Weight, actual: Weight },
}

/// Checks window, one-send-per-step and buffer-capacity feasibility.
pub fn verify_schedule(trace: &Trace, schedule: &OfflineSchedule) -> Result<Vec<ScheduleViolation>, OracleError> {
    let index = trace.packet_index();
    let mut out = Vec::new();
    let mut by_time: BTreeMap<Time, Vec<PacketId>> = BTreeMap::new();
    let mut occupancy: BTreeMap<Time, usize> = BTreeMap::new();
    let mut actual = Weight::ZERO;
    for (&id, &t) in &schedule.assignment {
        let p = index.get(&id).ok_or(OracleError::UnknownPacket(id))?;
        actual += p.weight;
        if !p.window_contains(t) {
            out.push(ScheduleViolation::OutsideWindow {
                packet: id,
                time: t,
                release: p.release,
                deadline: p.deadline,
            });
        }
        by_time.entry(t).or_default().push(id);
        for s in p.release..=t.max(p.release) {
            *occupancy.entry(s).or_default() += 1;
        }
    }
    for (time, packets) in by_time {
        if packets.len() > 1 {
            out.push(ScheduleViolation::SlotCollision { time, packets });
        }
    }
    for (time, occ) in occupancy {
        if occ > trace.buffer_size() as usize {
            out.push(ScheduleViolation::Overfull {
                time,
                occupancy: occ,
                capacity: trace.buffer_size(),
            });
        }
    }
    if actual != schedule.value {
        out.push(ScheduleViolation::ValueMismatch {
            recorded: schedule.value,
            actual,
        });
    }
    Ok(out)
}

pub fn optimal_bounded(trace: &Trace) -> Result<OfflineSchedule, OracleError> {
    optimal_bounded_with(trace, &OracleConfig::default())
}

/// Held packets, summarized by `(deadline, weight)` and kept sorted.
type HeldKey = Vec<(Time, Weight)>;

/// Maximum-value schedule under the buffer-capacity constraint.
///
/// Memoized search over `(step, held packets)`. Two exchange arguments keep
/// it small without losing exactness: among arrivals of one step sharing a
/// deadline, keeping `k` of them is never worse with the `k` heaviest; and
/// among held packets sharing a deadline, which one is sent first does not
/// change the value, so only the heaviest is tried.
pub fn optimal_bounded_with(trace: &Trace, config: &OracleConfig) -> Result<OfflineSchedule, OracleError> {
    if trace.horizon() > config.max_horizon {
        return Err(OracleError::HorizonTooLarge {
            horizon: trace.horizon(),
            limit: config.max_horizon,
        });
    }
    let mut search = BoundedSearch::new(trace, config.max_states);
    search.retain_stage(1, Vec::new())?;
    Ok(search.reconstruct())
}

#[derive(Clone, Debug)]
struct SendChoice {
    value: Option<Weight>,
    send: Option<(Time, Weight)>,
}

#[derive(Clone, Debug)]
struct RetainChoice {
    value: Option<Weight>,
    /// How many of each arrival group (by deadline) are kept.
    keep: Vec<usize>,
}

struct BoundedSearch<'a> {
    trace: &'a Trace,
    capacity: usize,
    max_states: usize,
    /// Arrivals per step, grouped by deadline, heaviest first within a group.
    groups: HashMap<Time, Vec<Vec<&'a Packet>>>,
    send_memo: HashMap<(Time, HeldKey), SendChoice>,
    retain_memo: HashMap<(Time, HeldKey), RetainChoice>,
}

impl<'a> BoundedSearch<'a> {
    fn new(trace: &'a Trace, max_states: usize) -> Self {
        let mut by_step: HashMap<Time, BTreeMap<Time, Vec<&Packet>>> = HashMap::new();
        for p in trace.packets() {
            by_step
                .entry(p.release)
                .or_default()
                .entry(p.deadline)
                .or_default()
                .push(p);
        }
        let groups = by_step
            .into_iter()
            .map(|(t, by_deadline)| {
                let gs = by_deadline
                    .into_values()
                    .map(|mut g| {
                        g.sort_by(|a, b| b.weight.cmp(&a.weight).then(a.id.cmp(&b.id)));
                        g
                    })
                    .collect();
                (t, gs)
            })
            .collect();
        BoundedSearch {
            trace,
            capacity: trace.buffer_size() as usize,
            max_states,
            groups,
            send_memo: HashMap::new(),
            retain_memo: HashMap::new(),
        }
    }

    fn charge_state(&self) -> Result<(), OracleError> {
        if self.send_memo.len() + self.retain_memo.len() >= self.max_states {
            Err(OracleError::BudgetExceeded { limit: self.max_states })
        } else {
            Ok(())
        }
    }

    /// Every held packet must still be sendable, one per step from `t` on.
    fn sendable(held: &HeldKey, t: Time) -> bool {
        held.iter().enumerate().all(|(i, &(d, _))| d >= t + i as Time)
    }

    /// Best value from the arrival stage of `t` onward, given `held` carried in.
    fn retain_stage(&mut self, t: Time, held: HeldKey) -> Result<Option<Weight>, OracleError> {
        if t > self.trace.horizon() {
            return Ok(held.is_empty().then_some(Weight::ZERO));
        }
        if !Self::sendable(&held, t) {
            return Ok(None);
        }
        let key = (t, held);
        if let Some(c) = self.retain_memo.get(&key) {
            return Ok(c.value);
        }
        self.charge_state()?;
        let held = key.1.clone();
        let groups = self.groups.get(&t).cloned().unwrap_or_default();
        let room = self.capacity.saturating_sub(held.len());
        let mut best = RetainChoice {
            value: None,
            keep: vec![0; groups.len()],
        };
        let mut keep = vec![0usize; groups.len()];
        self.enumerate_keep(t, &held, &groups, 0, room, &mut keep, &mut best)?;
        let value = best.value;
        self.retain_memo.insert(key, best);
        Ok(value)
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_keep(
        &mut self,
        t: Time,
        held: &HeldKey,
        groups: &[Vec<&'a Packet>],
        gi: usize,
        room: usize,
        keep: &mut Vec<usize>,
        best: &mut RetainChoice,
    ) -> Result<(), OracleError> {
        if gi == groups.len() {
            let mut next = held.clone();
            for (g, &k) in groups.iter().zip(keep.iter()) {
                next.extend(g[..k].iter().map(|p| (p.deadline, p.weight)));
            }
            next.sort_unstable();
            if let Some(v) = self.send_stage(t, next)? {
                if best.value.is_none_or(|b| v > b) {
                    best.value = Some(v);
                    best.keep = keep.clone();
                }
            }
            return Ok(());
        }
        for k in 0..=groups[gi].len().min(room) {
            keep[gi] = k;
            self.enumerate_keep(t, held, groups, gi + 1, room - k, keep, best)?;
        }
        keep[gi] = 0;
        Ok(())
    }

    /// Best value from the transmission stage of `t` onward.
    fn send_stage(&mut self, t: Time, held: HeldKey) -> Result<Option<Weight>, OracleError> {
        if !Self::sendable(&held, t) {
            return Ok(None);
        }
        let key = (t, held);
        if let Some(c) = self.send_memo.get(&key) {
            return Ok(c.value);
        }
        self.charge_state()?;
        let held = key.1.clone();
        let mut best = SendChoice {
            value: self.retain_stage(t + 1, held.clone())?,
            send: None,
        };
        // Heaviest of each deadline group; `held` is sorted so it is the last.
        let mut i = 0;
        while i < held.len() {
            let mut j = i;
            while j + 1 < held.len() && held[j + 1].0 == held[i].0 {
                j += 1;
            }
            let class = held[j];
            let mut rest = held.clone();
            rest.remove(j);
            if let Some(v) = self.retain_stage(t + 1, rest)? {
                let v = v + class.1;
                if best.value.is_none_or(|b| v > b) {
                    best = SendChoice {
                        value: Some(v),
                        send: Some(class),
                    };
                }
            }
            i = j + 1;
        }
        let value = best.value;
        self.send_memo.insert(key, best);
        Ok(value)
    }

    fn reconstruct(&self) -> OfflineSchedule {
        let mut assignment = BTreeMap::new();
        let mut held: Vec<&Packet> = Vec::new();
        for t in 1..=self.trace.horizon() {
            let key = (t, Self::key_of(&held));
            let Some(retain) = self.retain_memo.get(&key) else {
                break;
            };
            if let Some(groups) = self.groups.get(&t) {
                for (g, &k) in groups.iter().zip(&retain.keep) {
                    held.extend(&g[..k]);
                }
            }
            let send = &self.send_memo[&(t, Self::key_of(&held))];
            if let Some((d, w)) = send.send {
                let pos = held
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.deadline == d && p.weight == w)
                    .min_by_key(|(_, p)| p.id)
                    .map(|(i, _)| i)
                    .expect("chosen class is held");
                let p = held.remove(pos);
                assignment.insert(p.id, t);
            }
        }
        OfflineSchedule::from_assignment(self.trace, assignment)
    }

    fn key_of(held: &[&Packet]) -> HeldKey {
        let mut k: HeldKey = held.iter().map(|p| (p.deadline, p.weight)).collect();
        k.sort_unstable();
        k
    }
}

/// Maximum-weight assignment of packets to distinct steps, ignoring capacity.
///
/// Sets of packets that can be matched to distinct steps inside their windows
/// form a transversal matroid, so adding packets heaviest-first whenever an
/// augmenting path exists is optimal.
pub fn optimal_unbounded(trace: &Trace) -> OfflineSchedule {
    let n = trace.len() as Time;
    let mut order: Vec<&Packet> = trace.packets().iter().collect();
    order.sort_by(|a, b| b.weight.cmp(&a.weight).then(a.id.cmp(&b.id)));

    // A feasible set of n unit jobs can always be sent by EDF without any job
    // waiting more than n - 1 steps past its release.
    let window = |p: &Packet| p.release..=p.deadline.min(p.release.saturating_add(n.saturating_sub(1)));

    let mut slot_owner: HashMap<Time, &Packet> = HashMap::new();
    for p in order {
        if p.weight.is_zero() {
            continue;
        }
        let mut visited = HashSet::new();
        augment(p, &window, &mut slot_owner, &mut visited);
    }
    let assignment = slot_owner.into_iter().map(|(t, p)| (p.id, t)).collect();
    OfflineSchedule::from_assignment(trace, assignment)
}

fn augment<'a, W>(
    p: &'a Packet,
    window: &W,
    owner: &mut HashMap<Time, &'a Packet>,
    visited: &mut HashSet<Time>,
) -> bool
where
    W: Fn(&Packet) -> std::ops::RangeInclusive<Time>,
{
    for t in window(p) {
        if !visited.insert(t) {
            continue;
        }
        let free = match owner.get(&t) {
            None => true,
            Some(&q) => augment(q, window, owner, visited),
        };
        if free {
            owner.insert(t, p);
            return true;
        }
    }
    false
}

/// Up to `limit` distinct feasible schedules, in a fixed depth-first order.
///
/// At each step the search tries sending each eligible packet (heaviest
/// first) before idling, so early results are busy schedules and the
/// all-idle schedule comes last.
pub fn enumerate_feasible(trace: &Trace, limit: usize) -> Vec<OfflineSchedule> {
    let mut packets: Vec<&Packet> = trace.packets().iter().collect();
    packets.sort_by(|a, b| b.weight.cmp(&a.weight).then(a.id.cmp(&b.id)));
    let mut e = Enumerator {
        trace,
        packets,
        used: vec![false; trace.len()],
        occupancy: vec![0; trace.horizon() as usize + 2],
        current: BTreeMap::new(),
        out: Vec::new(),
        limit,
    };
    if limit > 0 {
        e.step(1);
    }
    e.out
}

struct Enumerator<'a> {
    trace: &'a Trace,
    packets: Vec<&'a Packet>,
    used: Vec<bool>,
    occupancy: Vec<usize>,
    current: BTreeMap<PacketId, Time>,
    out: Vec<OfflineSchedule>,
    limit: usize,
}

impl Enumerator<'_> {
    fn step(&mut self, t: Time) {
        if self.out.len() >= self.limit {
            return;
        }
        if t > self.trace.horizon() {
            self.out
                .push(OfflineSchedule::from_assignment(self.trace, self.current.clone()));
            return;
        }
        let cap = self.trace.buffer_size() as usize;
        for i in 0..self.packets.len() {
            let p = self.packets[i];
            if self.used[i] || !p.window_contains(t) {
                continue;
            }
            let span = p.release as usize..=t as usize;
            if self.occupancy[span.clone()].iter().any(|&o| o + 1 > cap) {
                continue;
            }
            self.occupancy[span.clone()].iter_mut().for_each(|o| *o += 1);
            self.used[i] = true;
            self.current.insert(p.id, t);
            self.step(t + 1);
            self.current.remove(&p.id);
            self.used[i] = false;
            self.occupancy[span].iter_mut().for_each(|o| *o -= 1);
            if self.out.len() >= self.limit {
                return;
            }
        }
        self.step(t + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_trace, RawPacket, RawTrace};

    fn trace(b: i64, packets: &[(PacketId, Time, Time, i128)]) -> Trace {
        validate_trace(RawTrace {
            buffer_size: b,
            packets: packets
                .iter()
                .map(|&(id, r, d, w)| RawPacket::from(&Packet::new(id, r, d, w)))
                .collect(),
        })
        .unwrap()
    }

    /// Brute force over every partial assignment of packets to steps.
    fn brute_force(trace: &Trace) -> Weight {
        fn go(trace: &Trace, i: usize, current: &mut BTreeMap<PacketId, Time>, best: &mut Weight) {
            if i == trace.len() {
                let s = OfflineSchedule::from_assignment(trace, current.clone());
                if verify_schedule(trace, &s).unwrap().is_empty() && s.value > *best {
                    *best = s.value;
                }
                return;
            }
            let p = &trace.packets()[i];
            go(trace, i + 1, current, best);
            for t in p.release..=p.deadline {
                current.insert(p.id, t);
                go(trace, i + 1, current, best);
                current.remove(&p.id);
            }
        }
        let mut best = Weight::ZERO;
        go(trace, 0, &mut BTreeMap::new(), &mut best);
        best
    }

    const ABC: [(PacketId, Time, Time, i128); 3] = [(0, 1, 1, 3), (1, 1, 2, 2), (2, 1, 2, 1)];

    #[test]
    fn bounded_b1() {
        let tr = trace(1, &ABC);
        assert_eq!(brute_force(&tr), Weight::integer(3));
        let s = optimal_bounded(&tr).unwrap();
        assert_eq!(s.value, Weight::integer(3));
        assert!(verify_schedule(&tr, &s).unwrap().is_empty());
    }

    #[test]
    fn bounded_b2() {
        let tr = trace(2, &ABC);
        assert_eq!(brute_force(&tr), Weight::integer(5));
        let s = optimal_bounded(&tr).unwrap();
        assert_eq!(s.value, Weight::integer(5));
        assert_eq!(s.assignment, BTreeMap::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn bounded_empty() {
        let s = optimal_bounded(&trace(1, &[])).unwrap();
        assert_eq!(s.value, Weight::ZERO);
        assert!(s.assignment.is_empty());
    }

    #[test]
    fn bounded_reports_budget_overflow() {
        let tr = trace(2, &ABC);
        let cfg = OracleConfig {
            max_states: 2,
            ..OracleConfig::default()
        };
        assert_eq!(
            optimal_bounded_with(&tr, &cfg),
            Err(OracleError::BudgetExceeded { limit: 2 })
        );
    }

    #[test]
    fn bounded_keeps_packet_through_idle_steps() {
        // With B=1 the heavy packet must be dropped or held; holding it until
        // t=3 would block the t=2 arrival, so sending it at once is best.
        let tr = trace(1, &[(0, 1, 3, 5), (1, 2, 2, 1)]);
        assert_eq!(brute_force(&tr), Weight::integer(6));
        assert_eq!(optimal_bounded(&tr).unwrap().value, Weight::integer(6));
        // A packet released at 3 is only reachable after idling.
        let tr = trace(1, &[(0, 3, 4, 2), (1, 3, 3, 1)]);
        assert_eq!(brute_force(&tr), Weight::integer(2));
        assert_eq!(optimal_bounded(&tr).unwrap().value, Weight::integer(2));
    }

    #[test]
    fn unbounded_examples() {
        assert_eq!(optimal_unbounded(&trace(1, &ABC)).value, Weight::integer(5));
        assert_eq!(
            optimal_unbounded(&trace(1, &[(0, 1, 1, 4), (1, 1, 1, 7)])).value,
            Weight::integer(7)
        );
        assert_eq!(optimal_unbounded(&trace(1, &[(0, 2, 5, 9)])).value, Weight::integer(9));
    }

    #[test]
    fn unbounded_needs_augmenting_paths() {
        // Heaviest packet first grabs t=1, then the deadline-1 packet must
        // displace it to t=2.
        let tr = trace(5, &[(0, 1, 2, 9), (1, 1, 1, 5), (2, 2, 2, 1)]);
        let s = optimal_unbounded(&tr);
        assert_eq!(s.value, Weight::integer(14));
        assert_eq!(s.assignment, BTreeMap::from([(0, 2), (1, 1)]));
    }

    #[test]
    fn verify_flags_occupancy() {
        let tr = trace(1, &[(0, 1, 2, 1), (1, 1, 2, 1)]);
        let s = OfflineSchedule::from_assignment(&tr, BTreeMap::from([(0, 1), (1, 2)]));
        let v = verify_schedule(&tr, &s).unwrap();
        assert_eq!(
            v,
            vec![ScheduleViolation::Overfull {
                time: 1,
                occupancy: 2,
                capacity: 1
            }]
        );
    }

    #[test]
    fn verify_flags_window_and_collision() {
        let tr = trace(3, &[(0, 1, 2, 1), (1, 1, 3, 1)]);
        let s = OfflineSchedule::from_assignment(&tr, BTreeMap::from([(0, 3), (1, 3)]));
        let v = verify_schedule(&tr, &s).unwrap();
        assert!(v.iter().any(|x| matches!(x, ScheduleViolation::OutsideWindow { packet: 0, .. })));
        assert!(v.iter().any(|x| matches!(x, ScheduleViolation::SlotCollision { time: 3, .. })));
    }

    #[test]
    fn verify_flags_unknown_packet_and_bad_value() {
        let tr = trace(1, &[(0, 1, 2, 1)]);
        let s = OfflineSchedule {
            assignment: BTreeMap::from([(9, 1)]),
            value: Weight::ZERO,
        };
        assert_eq!(verify_schedule(&tr, &s), Err(OracleError::UnknownPacket(9)));
        let s = OfflineSchedule {
            assignment: BTreeMap::from([(0, 1)]),
            value: Weight::integer(4),
        };
        assert!(matches!(
            verify_schedule(&tr, &s).unwrap()[..],
            [ScheduleViolation::ValueMismatch { .. }]
        ));
    }

    #[test]
    fn enumerate_single_packet() {
        let tr = trace(1, &[(0, 1, 2, 1)]);
        let all = enumerate_feasible(&tr, 100);
        let got: Vec<_> = all.iter().map(|s| s.assignment.clone()).collect();
        assert_eq!(
            got,
            vec![BTreeMap::from([(0, 1)]), BTreeMap::from([(0, 2)]), BTreeMap::new()]
        );
    }

    #[test]
    fn enumerate_empty_trace() {
        let all = enumerate_feasible(&trace(1, &[]), 10);
        assert_eq!(all.len(), 1);
        assert!(all[0].assignment.is_empty());
    }

    #[test]
    fn enumerate_respects_occupancy() {
        let tr = trace(1, &[(1, 1, 1, 1), (2, 1, 2, 1)]);
        let mut got: Vec<_> = enumerate_feasible(&tr, 100)
            .into_iter()
            .map(|s| s.assignment)
            .filter(|a| !a.is_empty())
            .collect();
        got.sort();
        let mut want = vec![
            BTreeMap::from([(1, 1)]),
            BTreeMap::from([(2, 1)]),
            BTreeMap::from([(2, 2)]),
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn enumerate_honors_limit() {
        let tr = trace(2, &[(0, 1, 3, 1), (1, 1, 3, 2), (2, 2, 3, 3)]);
        assert_eq!(enumerate_feasible(&tr, 4).len(), 4);
        assert!(enumerate_feasible(&tr, 0).is_empty());
    }
}
