//! CSV and JSON encodings for fields and paths, and content digests.
//!
//! Reals are written with 17 significant digits, which round-trips every
//! finite `f64` bit for bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::field::{InterpolatedPath, LatticeField, PathKind};

/// Decimal text with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// CSV with header `index_or_y,value`; rows `i, φ_i` for `i = 1..=n`.
pub fn field_to_csv(field: &LatticeField) -> String {
    let mut out = String::from("index_or_y,value\n");
    for (i, v) in field.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, fmt_real(*v));
    }
    out
}

/// CSV with header `index_or_y,value`; rows `j/M, path(j/M)`.
pub fn path_to_csv(path: &InterpolatedPath) -> String {
    let m = path.resolution() as f64;
    let mut out = String::from("index_or_y,value\n");
    for (j, v) in path.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_real(j as f64 / m), fmt_real(*v));
    }
    out
}

fn parse_two_columns(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("index_or_y") {
            continue;
        }
        let mut cols = line.split(',');
        let parse = |c: Option<&str>| -> Result<f64> {
            c.and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| invalid("csv", format!("malformed row {}: {line}", lineno + 1)))
        };
        let a = parse(cols.next())?;
        let b = parse(cols.next())?;
        if cols.next().is_some() {
            return Err(invalid("csv", format!("extra column in row {}", lineno + 1)));
        }
        rows.push((a, b));
    }
    Ok(rows)
}

pub fn field_from_csv(text: &str) -> Result<LatticeField> {
    let rows = parse_two_columns(text)?;
    for (k, (i, _)) in rows.iter().enumerate() {
        if *i != (k + 1) as f64 {
            return Err(invalid("csv", format!("expected site {} , found {i}", k + 1)));
        }
    }
    LatticeField::new(rows.into_iter().map(|r| r.1).collect())
}

pub fn path_from_csv(text: &str, kind: PathKind) -> Result<InterpolatedPath> {
    let rows = parse_two_columns(text)?;
    InterpolatedPath::new(rows.into_iter().map(|r| r.1).collect(), kind)
}

#[derive(Serialize, Deserialize)]
struct FieldRecord {
    n: usize,
    values: Vec<f64>,
}

/// JSON record `{n, values}`.
pub fn field_to_json(field: &LatticeField) -> Result<String> {
    Ok(serde_json::to_string(&FieldRecord {
        n: field.n(),
        values: field.values().to_vec(),
    })?)
}

pub fn field_from_json(text: &str) -> Result<LatticeField> {
    let rec: FieldRecord = serde_json::from_str(text)?;
    if rec.n != rec.values.len() {
        return Err(invalid("n", format!("declares {} sites but holds {}", rec.n, rec.values.len())));
    }
    LatticeField::new(rec.values)
}

/// JSON record `{n, values}` with `n = M` grid intervals.
pub fn path_to_json(path: &InterpolatedPath) -> Result<String> {
    Ok(serde_json::to_string(&FieldRecord {
        n: path.resolution(),
        values: path.values().to_vec(),
    })?)
}

pub fn path_from_json(text: &str, kind: PathKind) -> Result<InterpolatedPath> {
    let rec: FieldRecord = serde_json::from_str(text)?;
    if rec.n + 1 != rec.values.len() {
        return Err(invalid("n", "path record needs n + 1 values"));
    }
    InterpolatedPath::new(rec.values, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn path_round_trip() {
        let p = InterpolatedPath::from_fn(7, |t| (t * 3.1).sin() / 3.0).unwrap();
        let back = path_from_csv(&path_to_csv(&p), PathKind::Affine).unwrap();
        assert_eq!(p, back);
        let back = path_from_json(&path_to_json(&p).unwrap(), PathKind::Affine).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn json_length_mismatch_is_rejected() {
        assert!(field_from_json(r#"{"n":3,"values":[1.0,2.0]}"#).is_err());
        assert!(field_from_csv("index_or_y,value\n1,abc\n").is_err());
    }

    proptest! {
        #[test]
        fn field_round_trip_is_bit_exact(v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..30)) {
            let f = LatticeField::new(v).unwrap();
            let csv = field_from_csv(&field_to_csv(&f)).unwrap();
            let json = field_from_json(&field_to_json(&f).unwrap()).unwrap();
            for ((a, b), c) in f.values().iter().zip(csv.values()).zip(json.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
                prop_assert_eq!(a.to_bits(), c.to_bits());
            }
        }
    }
}
