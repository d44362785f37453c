//! Exact rational scalars and their extended-real companion.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational number in canonical reduced form.
pub type Scalar = BigRational;

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Scalar {
    Scalar::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Scalar {
    Scalar::zero()
}

pub fn one() -> Scalar {
    Scalar::one()
}

pub fn pow2(k: i64) -> Scalar {
    let base = BigInt::from(2).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        Scalar::from_integer(base)
    } else {
        Scalar::new(BigInt::one(), base)
    }
}

pub fn half_sum(a: &Scalar, b: &Scalar) -> Scalar {
    (a + b) / int(2)
}

/// Parses `"p/q"`, an integer, or a finite decimal such as `"-0.125"` exactly.
pub fn parse_scalar(text: &str) -> Result<Scalar> {
    let t = text.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty number literal".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad_number(text))?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad_number(text))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {text:?}")));
        }
        return Ok(Scalar::new(n, d));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], i64::from_str(&t[i + 1..]).map_err(|_| bad_number(text))?),
        None => (t, 0),
    };
    let negative = mantissa.starts_with('-');
    let body = mantissa.trim_start_matches(['-', '+']);
    let (whole, fraction) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && fraction.is_empty() {
        return Err(bad_number(text));
    }
    if !whole.chars().chain(fraction.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad_number(text));
    }
    let digits = format!("{whole}{fraction}");
    let numerator = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad_number(text))?;
    let mut value = Scalar::new(numerator, BigInt::from(10).pow(fraction.len() as u32));
    let ten = int(10);
    for _ in 0..exponent.unsigned_abs() {
        if exponent > 0 {
            value *= &ten;
        } else {
            value /= &ten;
        }
    }
    Ok(if negative { -value } else { value })
}

fn bad_number(text: &str) -> Error {
    Error::Parse(format!("not an exact number: {text:?}"))
}

pub fn format_scalar(x: &Scalar) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Decimal rendering truncated toward zero at `digits` significant digits.
pub fn format_decimal(x: &Scalar, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let negative = x.is_negative();
    let a = x.abs();
    let int_part = a.to_integer();
    let mut out = int_part.to_string();
    let mut rem = a - Scalar::from_integer(int_part.clone());
    let used = if int_part.is_zero() { 0 } else { out.len() };
    let mut budget = digits.saturating_sub(used);
    let mut leading = int_part.is_zero();
    if !rem.is_zero() && budget > 0 {
        out.push('.');
        let ten = int(10);
        while !rem.is_zero() && budget > 0 {
            rem *= &ten;
            let d = rem.to_integer();
            rem -= Scalar::from_integer(d.clone());
            out.push_str(&d.to_string());
            if !(leading && d.is_zero()) {
                leading = false;
                budget -= 1;
            }
        }
    }
    if negative {
        format!("-{out}")
    } else {
        out
    }
}

pub fn to_f64(x: &Scalar) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub mod serde_scalar {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Scalar, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_scalar(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Scalar, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        value_to_scalar(&v).map_err(serde::de::Error::custom)
    }

    pub fn value_to_scalar(v: &serde_json::Value) -> Result<Scalar> {
        match v {
            serde_json::Value::String(s) => parse_scalar(s),
            serde_json::Value::Number(n) => parse_scalar(&n.to_string()),
            other => Err(Error::Parse(format!("expected a number, found {other}"))),
        }
    }
}

pub mod serde_scalar_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[Scalar], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&format_scalar(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Scalar>, D::Error> {
        let v = Vec::<serde_json::Value>::deserialize(d)?;
        v.iter().map(|x| serde_scalar::value_to_scalar(x).map_err(serde::de::Error::custom)).collect()
    }
}

pub mod serde_scalar_opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<Scalar>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(x) => s.serialize_str(&format_scalar(x)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Scalar>, D::Error> {
        let v = Option::<serde_json::Value>::deserialize(d)?;
        match v {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => serde_scalar::value_to_scalar(&v).map(Some).map_err(serde::de::Error::custom),
        }
    }
}

pub mod serde_scalar_pairs {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[(Scalar, Scalar)], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for (a, b) in xs {
            seq.serialize_element(&[format_scalar(a), format_scalar(b)])?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(Scalar, Scalar)>, D::Error> {
        let v = Vec::<(serde_json::Value, serde_json::Value)>::deserialize(d)?;
        v.iter()
            .map(|(a, b)| {
                let conv = |x| serde_scalar::value_to_scalar(x).map_err(serde::de::Error::custom);
                Ok((conv(a)?, conv(b)?))
            })
            .collect()
    }
}

/// A rational extended by the two infinities.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ext {
    NegInf,
    Fin(Scalar),
    PosInf,
}

impl Ext {
    pub fn fin(x: Scalar) -> Self {
        Ext::Fin(x)
    }

    pub fn finite(&self) -> Option<&Scalar> {
        match self {
            Ext::Fin(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Ext::Fin(_))
    }

    pub fn neg(&self) -> Ext {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Fin(x) => Ext::Fin(-x),
        }
    }

    pub fn gt(&self, x: &Scalar) -> bool {
        match self {
            Ext::NegInf => false,
            Ext::PosInf => true,
            Ext::Fin(y) => y > x,
        }
    }

    pub fn ge(&self, x: &Scalar) -> bool {
        match self {
            Ext::NegInf => false,
            Ext::PosInf => true,
            Ext::Fin(y) => y >= x,
        }
    }

    pub fn lt(&self, x: &Scalar) -> bool {
        !self.ge(x)
    }

    pub fn le(&self, x: &Scalar) -> bool {
        !self.gt(x)
    }
}

impl From<Scalar> for Ext {
    fn from(x: Scalar) -> Self {
        Ext::Fin(x)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ext {
    fn cmp(&self, other: &Self) -> Ordering {
        use Ext::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Fin(a), Fin(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::NegInf => write!(f, "-inf"),
            Ext::PosInf => write!(f, "inf"),
            Ext::Fin(x) => write!(f, "{}", format_scalar(x)),
        }
    }
}

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v.as_str() {
            Some("inf") | Some("+inf") => Ok(Ext::PosInf),
            Some("-inf") => Ok(Ext::NegInf),
            _ => serde_scalar::value_to_scalar(&v).map(Ext::Fin).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_literal_forms() {
        assert_eq!(parse_scalar("50/43").unwrap(), frac(50, 43));
        assert_eq!(parse_scalar("0.43").unwrap(), frac(43, 100));
        assert_eq!(parse_scalar("-1.25").unwrap(), frac(-5, 4));
        assert_eq!(parse_scalar("7").unwrap(), int(7));
        assert_eq!(parse_scalar("1e-2").unwrap(), frac(1, 100));
        assert!(parse_scalar("1/0").is_err());
        assert!(parse_scalar("abc").is_err());
    }

    #[test]
    fn decimal_rendering_truncates() {
        assert_eq!(format_decimal(&frac(50, 43), 6), "1.16279");
        assert_eq!(format_decimal(&frac(-1, 3), 3), "-0.333");
        assert_eq!(format_decimal(&int(2), 20), "2");
    }

    #[test]
    fn extended_order() {
        assert!(Ext::NegInf < Ext::Fin(int(-5)));
        assert!(Ext::Fin(int(5)) < Ext::PosInf);
        assert!(Ext::PosInf.gt(&int(3)));
        assert!(!Ext::NegInf.ge(&int(3)));
    }
}
