//! Round-trip exact decimal formatting for persisted numbers.

use crate::error::{Error, Result};

/// Shortest decimal string that parses back to exactly `v`. Plain notation
/// for moderate magnitudes, exponent notation otherwise.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::invalid(format!("cannot parse `{s}` as a number: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn readable_forms() {
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(1e-300), "1e-300");
        assert_eq!(fmt_f64(0.0), "0");
    }

    proptest! {
        #[test]
        fn round_trips_exactly(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }
}
