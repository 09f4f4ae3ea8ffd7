//! Scalar abstraction shared by numeric normalization, the aggregation oracle
//! and the metrics.
//!
//! Cell values are parsed from decimal literals. The exact route
//! ([`BigRational`]) keeps sums and differences free of binary rounding and is
//! what the library uses by default; `f64`/`f32` provide an independent
//! floating-point route for cross-checking.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Currency symbols stripped before numeric parsing.
pub const CURRENCY_SYMBOLS: &[char] = &['$', '€', '£', '¥', '₹', '₩'];

/// Fractional digits kept when an exact value has no terminating decimal
/// expansion (e.g. the mean of `1, 1, 2`).
pub const NON_TERMINATING_DIGITS: usize = 6;

/// A number type cells can be parsed into and rendered back from.
pub trait Scalar: Clone + PartialOrd + Num + Signed + FromPrimitive + Debug {
    /// Parses a plain decimal literal: optional sign, digits, optional
    /// fractional part. Decorations must already be stripped.
    fn from_literal(literal: &str) -> Option<Self>;

    /// Canonical decimal rendering: no exponent, no trailing zeros, no
    /// leading plus, and no negative zero.
    fn to_canonical(&self) -> String;

    /// Parses a raw cell/answer string, tolerating thousands separators,
    /// currency symbols and a trailing percent sign.
    fn parse_decimal(raw: &str) -> Option<Self> {
        strip_numeric_decorations(raw).and_then(|lit| Self::from_literal(&lit))
    }
}

/// Removes thousands separators, currency symbols, surrounding whitespace and
/// a single trailing percent sign; returns the remaining literal when it has
/// the shape `[+-]?(digits[.digits*] | .digits)`.
pub fn strip_numeric_decorations(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    let trimmed = trimmed.strip_suffix('%').unwrap_or(trimmed).trim_end();
    let literal: String = trimmed
        .chars()
        .filter(|c| *c != ',' && !CURRENCY_SYMBOLS.contains(c))
        .collect();
    let literal = literal.trim();
    is_decimal_literal(literal).then(|| literal.to_string())
}

fn is_decimal_literal(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    if !digits(int_part) {
        return false;
    }
    match frac_part {
        None => !int_part.is_empty(),
        Some(f) => digits(f) && (!int_part.is_empty() || !f.is_empty()),
    }
}

fn strip_fraction_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Floats cannot tell terminating from repeating expansions, so a shortest
/// rendering longer than [`NON_TERMINATING_DIGITS`] fractional digits is
/// rounded to that many.
fn float_canonical(shortest: String, rounded: impl FnOnce() -> String) -> String {
    let frac_len = shortest.split_once('.').map_or(0, |(_, f)| f.len());
    if frac_len > NON_TERMINATING_DIGITS {
        strip_fraction_zeros(rounded())
    } else {
        strip_fraction_zeros(shortest)
    }
}

impl Scalar for BigRational {
    fn from_literal(literal: &str) -> Option<Self> {
        if !is_decimal_literal(literal) {
            return None;
        }
        let (negative, body) = match literal.as_bytes()[0] {
            b'-' => (true, &literal[1..]),
            b'+' => (false, &literal[1..]),
            _ => (false, literal),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        let digits = format!("{int_part}{frac_part}");
        let numer = if digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::parse_bytes(digits.as_bytes(), 10)?
        };
        let denom = num_traits::pow(BigInt::from(10u8), frac_part.len());
        let value = BigRational::new(numer, denom);
        Some(if negative { -value } else { value })
    }

    fn to_canonical(&self) -> String {
        let negative = self.is_negative();
        let magnitude = self.abs();
        let mut denom = magnitude.denom().clone();
        let two = BigInt::from(2u8);
        let five = BigInt::from(5u8);
        let mut scale = 0usize;
        let mut twos = 0usize;
        let mut fives = 0usize;
        while denom.is_even() {
            denom /= &two;
            twos += 1;
        }
        while (&denom % &five).is_zero() {
            denom /= &five;
            fives += 1;
        }
        let terminating = denom.is_one();
        if terminating {
            scale = twos.max(fives);
        }
        let digits = if terminating {
            scale
        } else {
            NON_TERMINATING_DIGITS
        };
        let factor = num_traits::pow(BigInt::from(10u8), digits);
        let scaled = magnitude * BigRational::from_integer(factor);
        // round half away from zero on the magnitude
        let half = BigRational::new(BigInt::one(), two);
        let units = (scaled + half).floor().to_integer();
        let text = units.to_string();
        let rendered = if digits == 0 {
            text
        } else {
            let padded = format!("{:0>width$}", text, width = digits + 1);
            let (i, f) = padded.split_at(padded.len() - digits);
            format!("{i}.{f}")
        };
        let rendered = strip_fraction_zeros(rendered);
        if negative && rendered != "0" {
            format!("-{rendered}")
        } else {
            rendered
        }
    }
}

impl Scalar for f64 {
    fn from_literal(literal: &str) -> Option<Self> {
        if !is_decimal_literal(literal) {
            return None;
        }
        literal.parse::<f64>().ok().filter(|v| v.is_finite())
    }

    fn to_canonical(&self) -> String {
        float_canonical(format!("{self}"), || {
            format!("{self:.NON_TERMINATING_DIGITS$}")
        })
    }
}

impl Scalar for f32 {
    fn from_literal(literal: &str) -> Option<Self> {
        if !is_decimal_literal(literal) {
            return None;
        }
        literal.parse::<f32>().ok().filter(|v| v.is_finite())
    }

    fn to_canonical(&self) -> String {
        float_canonical(format!("{self}"), || {
            format!("{self:.NON_TERMINATING_DIGITS$}")
        })
    }
}

/// Converts an exact value to a float, saturating on overflow.
pub fn exact_to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(if value.is_negative() {
        f64::MIN
    } else {
        f64::MAX
    })
}
