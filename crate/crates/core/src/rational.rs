//! Exact rational numbers and their textual encoding.
//!
//! Every distance, coefficient and norm in this crate is a [`Rational`].
//! Rationals are written as `"p/q"` strings (or plain integers when the
//! denominator is 1) and never as floats.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serializer};

use crate::error::Error;

pub type Rational = num_rational::BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `"p/q"`, an integer, or a finite decimal such as `"0.75"` or
/// `"-1.5e-2"` into an exact rational.
pub fn parse(text: &str) -> Result<Rational, Error> {
    let s = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(p, q));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let numer: BigInt = format!("{whole}{frac}").parse().map_err(|_| bad())?;
    let ten = BigInt::from(10);
    let scale = exponent - frac.len() as i32;
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

pub fn format(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Exponent `n` with `2^n <= value < 2^(n+1)`, found by doubling or halving
/// an exact power of two.
pub fn dyadic_floor_exponent(value: &Rational) -> Result<i64, Error> {
    if !value.is_positive() {
        return Err(Error::Domain(format!(
            "dyadic exponent of non-positive value {}",
            format(value)
        )));
    }
    let two = int(2);
    let mut power = Rational::one();
    let mut n = 0i64;
    while &power > value {
        power /= &two;
        n -= 1;
    }
    loop {
        let next = &power * &two;
        if &next > value {
            return Ok(n);
        }
        power = next;
        n += 1;
    }
}

pub fn pow2(n: i64) -> Rational {
    let p = Rational::from_integer(num_traits::pow(BigInt::from(2), n.unsigned_abs() as usize));
    if n >= 0 {
        p
    } else {
        p.recip()
    }
}

/// True iff `value` equals `2^n` for some integer `n`.
pub fn is_power_of_two(value: &Rational) -> bool {
    if !value.is_positive() {
        return false;
    }
    let pow2_int = |n: &BigInt| n.is_positive() && (n & (n - BigInt::one())).is_zero();
    let (p, q) = (value.numer(), value.denom());
    (p.is_one() && pow2_int(q)) || (q.is_one() && pow2_int(p))
}

pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

pub fn max<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    match a.cmp(b) {
        Ordering::Less => b,
        _ => a,
    }
}

pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(value))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
    let raw = serde_json::Value::deserialize(d)?;
    from_json(&raw).map_err(serde::de::Error::custom)
}

/// Accepts a JSON string (`"p/q"`, decimal) or a JSON number.
pub fn from_json(value: &serde_json::Value) -> Result<Rational, Error> {
    match value {
        serde_json::Value::String(s) => parse(s),
        serde_json::Value::Number(n) => parse(&n.to_string()),
        other => Err(Error::Parse(format!("expected a rational, found {other}"))),
    }
}

pub fn to_json(value: &Rational) -> serde_json::Value {
    serde_json::Value::String(format(value))
}

pub mod vec {
    use super::Rational;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&super::format(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<serde_json::Value>::deserialize(d)?;
        raw.iter()
            .map(|v| super::from_json(v).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod opt {
    use super::Rational;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(value: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&super::format(v)),
            None => s.serialize_none(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse("1/2").unwrap(), ratio(1, 2));
        assert_eq!(parse(" 6/4 ").unwrap(), ratio(3, 2));
        assert_eq!(parse("-3").unwrap(), int(-3));
        assert_eq!(parse("0.75").unwrap(), ratio(3, 4));
        assert_eq!(parse("-1.5e-2").unwrap(), ratio(-3, 200));
        assert_eq!(parse(".5").unwrap(), ratio(1, 2));
        assert_eq!(parse("2E3").unwrap(), int(2000));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("1.2.3").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn formats_without_unit_denominator() {
        assert_eq!(format(&ratio(4, 2)), "2");
        assert_eq!(format(&ratio(-3, 6)), "-1/2");
    }

    #[test]
    fn dyadic_exponents_by_bracketing() {
        assert_eq!(dyadic_floor_exponent(&int(3)).unwrap(), 1);
        assert_eq!(dyadic_floor_exponent(&int(1)).unwrap(), 0);
        assert_eq!(dyadic_floor_exponent(&ratio(3, 4)).unwrap(), -1);
        assert_eq!(dyadic_floor_exponent(&ratio(1, 1024)).unwrap(), -10);
        assert_eq!(dyadic_floor_exponent(&ratio(1023, 1024)).unwrap(), -1);
        assert!(dyadic_floor_exponent(&int(0)).is_err());
        assert_eq!(pow2(-3), ratio(1, 8));
        assert_eq!(pow2(4), int(16));
    }

    #[test]
    fn power_of_two_membership() {
        assert!(is_power_of_two(&ratio(1, 2)));
        assert!(is_power_of_two(&int(1)));
        assert!(is_power_of_two(&int(8)));
        assert!(!is_power_of_two(&ratio(3, 4)));
        assert!(!is_power_of_two(&int(6)));
        assert!(!is_power_of_two(&int(0)));
        assert!(!is_power_of_two(&ratio(-1, 2)));
    }
}
