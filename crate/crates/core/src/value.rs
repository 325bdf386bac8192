//! Leaf values and the closed type registry.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of fractional digits a [`Decimal`] can carry.
pub const FRACTION_DIGITS: u32 = 6;
const SCALE: i64 = 1_000_000;

/// Upper bound on the byte length of a string leaf value.
pub const MAX_STR_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("invalid decimal literal `{0}`")]
    BadDecimal(String),
    #[error("decimal `{0}` has more than 6 fractional digits")]
    TooPrecise(String),
    #[error("decimal `{0}` is out of range")]
    OutOfRange(String),
    #[error("invalid boolean literal `{0}`")]
    BadBool(String),
    #[error("string value is {0} bytes, limit is 4096")]
    StrTooLong(usize),
}

/// Fixed-point decimal with six fractional digits, stored as an integer
/// count of millionths. Finite by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal(i64);

impl Decimal {
    pub const ZERO: Decimal = Decimal(0);

    pub const fn from_micros(micros: i64) -> Self {
        Decimal(micros)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    pub fn from_int(v: i64) -> Option<Self> {
        v.checked_mul(SCALE).map(Decimal)
    }

    /// Rounds to the nearest millionth. Non-finite or out-of-range inputs
    /// yield `None`.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        let scaled = (v * SCALE as f64).round();
        if scaled.abs() >= i64::MAX as f64 {
            return None;
        }
        Some(Decimal(scaled as i64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

impl FromStr for Decimal {
    type Err = ValueError;

    /// Exact parse of `[-+]?digits[.digits]`; at most six fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ValueError::BadDecimal(s.to_string());
        let (neg, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || (body.contains('.') && frac_part.is_empty())
        {
            return Err(bad());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > FRACTION_DIGITS as usize {
            return Err(ValueError::TooPrecise(s.to_string()));
        }
        let range = || ValueError::OutOfRange(s.to_string());
        let int_val: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| range())?
        };
        let mut frac_val: i64 = 0;
        for (i, b) in frac_trimmed.bytes().enumerate() {
            frac_val += i64::from(b - b'0') * 10i64.pow(FRACTION_DIGITS - 1 - i as u32);
        }
        let micros = int_val
            .checked_mul(SCALE)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(range)?;
        Ok(Decimal(if neg { -micros } else { micros }))
    }
}

impl fmt::Display for Decimal {
    /// Canonical rendering: no trailing zeros, no trailing point, no `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.0 < 0;
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u64;
        let frac = abs % SCALE as u64;
        if neg {
            f.write_str("-")?;
        }
        write!(f, "{int}")?;
        if frac != 0 {
            let digits = format!("{frac:06}");
            write!(f, ".{}", digits.trim_end_matches('0'))?;
        }
        Ok(())
    }
}

/// A leaf value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Num(Decimal),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn num(text: &str) -> Result<Self, ValueError> {
        text.parse().map(Value::Num)
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Num(_) => ValueKind::Num,
            Value::Str(_) => ValueKind::Str,
            Value::Bool(_) => ValueKind::Bool,
        }
    }

    /// Parses `text` as a value of `kind`.
    pub fn parse_as(kind: ValueKind, text: &str) -> Result<Self, ValueError> {
        match kind {
            ValueKind::Num => Value::num(text),
            ValueKind::Str => {
                if text.len() > MAX_STR_LEN {
                    Err(ValueError::StrTooLong(text.len()))
                } else {
                    Ok(Value::Str(text.to_string()))
                }
            }
            ValueKind::Bool => match text {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => Err(ValueError::BadBool(text.to_string())),
            },
        }
    }

    /// Checks the value-level invariants (string length).
    pub fn check(&self) -> Result<(), ValueError> {
        match self {
            Value::Str(s) if s.len() > MAX_STR_LEN => Err(ValueError::StrTooLong(s.len())),
            _ => Ok(()),
        }
    }

    /// Total order used for list entries: numbers numerically, strings
    /// lexicographically, `false < true`; across kinds Num < Str < Bool.
    pub fn key_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            _ => self.kind().cmp(&other.kind()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(d) => d.fmt(f),
            Value::Str(s) => f.write_str(s),
            Value::Bool(b) => b.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValueKind {
    Num,
    Str,
    Bool,
}

impl FromStr for ValueKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "num" | "Num" => Ok(ValueKind::Num),
            "str" | "Str" => Ok(ValueKind::Str),
            "bool" | "Bool" => Ok(ValueKind::Bool),
            other => Err(format!("unknown value kind `{other}`")),
        }
    }
}

/// Built-in leaf types. The registry is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafType {
    /// Sensor reading: a decimal with optional unit metadata.
    AirSensor,
    Decimal,
    String,
    Boolean,
}

impl LeafType {
    pub const ALL: [LeafType; 4] = [
        LeafType::AirSensor,
        LeafType::Decimal,
        LeafType::String,
        LeafType::Boolean,
    ];

    pub fn lookup(name: &str) -> Option<LeafType> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            LeafType::AirSensor => "air-sensor",
            LeafType::Decimal => "decimal",
            LeafType::String => "string",
            LeafType::Boolean => "boolean",
        }
    }

    pub fn value_kind(self) -> ValueKind {
        match self {
            LeafType::AirSensor | LeafType::Decimal => ValueKind::Num,
            LeafType::String => ValueKind::Str,
            LeafType::Boolean => ValueKind::Bool,
        }
    }

    /// Unit metadata attached by the registry, if any.
    pub fn unit(self) -> Option<&'static str> {
        None
    }

    pub fn accepts(self, value: &Value) -> bool {
        value.kind() == self.value_kind() && value.check().is_ok()
    }
}
