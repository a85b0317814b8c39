//! Deterministic JSON rendering.
//!
//! Objects serialize in field declaration order, floats are rounded to 12
//! significant digits (or 12 decimal places for checksums) before being
//! printed in their shortest round-trip form, non-finite values become
//! `null`, and every document ends with a newline.

use serde::{Serialize, Serializer};

/// A float rounded to 12 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig12(pub f64);

/// A float rounded to 12 decimal places.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed12(pub f64);

pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn round_fixed12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.12}").parse().expect("formatted float parses")
}

fn finite_or_null<S: Serializer>(x: f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        // Normalize -0.0 so equal values print identically.
        s.serialize_f64(if x == 0.0 { 0.0 } else { x })
    } else {
        s.serialize_none()
    }
}

impl Serialize for Sig12 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        finite_or_null(round_sig12(self.0), s)
    }
}

impl Serialize for Fixed12 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        finite_or_null(round_fixed12(self.0), s)
    }
}

pub fn sig12_vec(values: &[f64]) -> Vec<Sig12> {
    values.iter().copied().map(Sig12).collect()
}

/// Compact JSON followed by a newline.
pub fn to_line<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string(value).expect("output types serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(to_line(&Sig12(1.0 / 3.0)), "0.333333333333\n");
        assert_eq!(to_line(&Sig12(-2.5e-20)), "-2.5e-20\n");
        assert_eq!(to_line(&Sig12(f64::NAN)), "null\n");
        assert_eq!(to_line(&Fixed12(1.0 / 3.0)), "0.333333333333\n");
        assert_eq!(to_line(&Fixed12(-1e-14)), "0.0\n");
        assert_eq!(to_line(&Sig12(123456.0)), "123456.0\n");
    }
}
