//! Greedy-queue (GRQ) online packet scheduling for a single bounded buffer
//! with per-packet deadlines, plus the machinery to check it: exact offline
//! oracles, structural invariant checks, a charging-scheme verifier, and an
//! experiment workbench.

pub mod charging;
pub mod invariants;
pub mod model;
pub mod oracle;
pub mod schedulers;
pub mod weight;
pub mod workbench;

pub use model::{Packet, PacketId, SlotBuffer, Time, Trace, Transcript};
pub use weight::Weight;
