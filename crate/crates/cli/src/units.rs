//! Annotated physical quantities such as `"28 GHz"` or `"-97 dBm"`.
//!
//! A bare JSON number is taken to be in SI units already.

use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Frequency,
    Power,
    Rate,
    Time,
    Plain,
}

impl Kind {
    fn scale(self, unit: &str) -> Option<Scale> {
        let s = match (self, unit) {
            (Kind::Frequency, "Hz") => Scale::Linear(1.0),
            (Kind::Frequency, "kHz") => Scale::Linear(1e3),
            (Kind::Frequency, "MHz") => Scale::Linear(1e6),
            (Kind::Frequency, "GHz") => Scale::Linear(1e9),
            (Kind::Power, "W") => Scale::Linear(1.0),
            (Kind::Power, "mW") => Scale::Linear(1e-3),
            (Kind::Power, "dBm") => Scale::Dbm,
            (Kind::Power, "dBW") => Scale::Dbw,
            (Kind::Rate, "bps" | "bit/s") => Scale::Linear(1.0),
            (Kind::Rate, "kbps") => Scale::Linear(1e3),
            (Kind::Rate, "Mbps") => Scale::Linear(1e6),
            (Kind::Rate, "Gbps") => Scale::Linear(1e9),
            (Kind::Time, "s") => Scale::Linear(1.0),
            (Kind::Time, "ms") => Scale::Linear(1e-3),
            (Kind::Time, "us") => Scale::Linear(1e-6),
            (Kind::Time, "ns") => Scale::Linear(1e-9),
            _ => return None,
        };
        Some(s)
    }

    fn units(self) -> &'static str {
        match self {
            Kind::Frequency => "Hz, kHz, MHz, GHz",
            Kind::Power => "W, mW, dBm, dBW",
            Kind::Rate => "bps, kbps, Mbps, Gbps",
            Kind::Time => "s, ms, us, ns",
            Kind::Plain => "none",
        }
    }
}

enum Scale {
    Linear(f64),
    Dbm,
    Dbw,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Parses a number or a `"<value> <unit>"` string into SI units.
pub fn parse_quantity(value: &Value, kind: Kind) -> Result<f64, String> {
    match value {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{n} is not representable as f64")),
        Value::String(s) => {
            let s = s.trim();
            let (num, unit) = match s.split_once(char::is_whitespace) {
                Some((n, u)) => (n, u.trim()),
                None => (s, ""),
            };
            let x: f64 = num.parse().map_err(|_| format!("cannot parse number in {s:?}"))?;
            if unit.is_empty() {
                return Ok(x);
            }
            match kind.scale(unit) {
                Some(Scale::Linear(f)) => Ok(x * f),
                Some(Scale::Dbm) => Ok(dbm_to_watts(x)),
                Some(Scale::Dbw) => Ok(dbm_to_watts(x + 30.0)),
                None => Err(format!("unknown unit {unit:?} (expected one of: {})", kind.units())),
            }
        }
        other => Err(format!("expected a number or a quantity string, got {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn annotated_quantities() {
        assert_eq!(parse_quantity(&json!("28 GHz"), Kind::Frequency).unwrap(), 28e9);
        assert_eq!(parse_quantity(&json!("120 kHz"), Kind::Frequency).unwrap(), 120e3);
        assert_eq!(parse_quantity(&json!("100 Mbps"), Kind::Rate).unwrap(), 1e8);
        assert_eq!(parse_quantity(&json!("30 dBm"), Kind::Power).unwrap(), 1.0);
        assert_eq!(parse_quantity(&json!("0 dBW"), Kind::Power).unwrap(), 1.0);
        assert_eq!(parse_quantity(&json!(2.5), Kind::Power).unwrap(), 2.5);
        assert_eq!(parse_quantity(&json!("1e-12"), Kind::Power).unwrap(), 1e-12);
        assert!((parse_quantity(&json!("-97 dBm"), Kind::Power).unwrap() - 1.9952623149688786e-13).abs() < 1e-25);
    }

    #[test]
    fn rejects_bad_quantities() {
        assert!(parse_quantity(&json!("28 GHz"), Kind::Power).is_err());
        assert!(parse_quantity(&json!("fast"), Kind::Rate).is_err());
        assert!(parse_quantity(&json!([1]), Kind::Plain).is_err());
    }

    #[test]
    fn dbm_round_trip() {
        for x in [-120.0, -97.0, -30.0, 0.0, 13.5, 30.0, 46.0] {
            assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() < 1e-12, "{x}");
        }
    }
}
