//! Shared number formatting for CSV/JSON outputs.

/// Shortest round-trip decimal; infinities print as `inf`/`-inf` and NaN as
/// an empty field.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Parses what [`fmt_f64`] writes; an empty field reads as NaN.
pub fn parse_f64(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Some(f64::NAN);
    }
    s.parse().ok()
}

/// JSON encoding of floats that may be non-finite: infinities as the
/// strings `"inf"`/`"-inf"`, NaN as `null`.
pub mod nullable_f64 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(f64::NAN),
            Some(Repr::Num(x)) => Ok(x),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1e-300, -3.5, 1.0 / 3.0, 4e-31, 2.5e20, 0.0, f64::INFINITY, f64::NEG_INFINITY] {
            assert_eq!(parse_f64(&fmt_f64(x)), Some(x));
        }
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(3.9e-30), "3.9e-30");
        assert_eq!(fmt_f64(0.25), "0.25");
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
        assert!(parse_f64("").unwrap().is_nan());
        assert_eq!(parse_f64("x"), None);
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    struct Wrap(#[serde(with = "nullable_f64")] f64);

    #[test]
    fn json_non_finite() {
        assert_eq!(serde_json::to_string(&Wrap(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Wrap(f64::NAN)).unwrap(), "null");
        assert_eq!(serde_json::from_str::<Wrap>("\"-inf\"").unwrap().0, f64::NEG_INFINITY);
        assert_eq!(serde_json::from_str::<Wrap>("2.5").unwrap().0, 2.5);
        assert!(serde_json::from_str::<Wrap>("null").unwrap().0.is_nan());
        assert!(serde_json::from_str::<Wrap>("\"x\"").is_err());
    }
}
