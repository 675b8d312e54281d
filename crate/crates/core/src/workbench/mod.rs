//! Generators, adversarial search, batch experiments and trace files.

pub mod experiment;
pub mod format;
pub mod generate;
pub mod search;

use serde::Serializer;

use crate::weight::{fmt_fraction, Rational};

pub(crate) fn ser_opt_rational<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&fmt_fraction(r)),
        None => s.serialize_none(),
    }
}
