use crate::error::SsbError;
use serde::{Deserialize, Serialize};

/// Soft-constraint strength `beta ∈ [0, ∞]`.
///
/// The hard-constrained bridge corresponds to `Beta::Infinite` and is a
/// distinct code path throughout the crate, so the value is a tagged enum
/// rather than a float with a sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn new(value: f64) -> Result<Self, SsbError> {
        if value.is_infinite() && value > 0.0 {
            return Ok(Beta::Infinite);
        }
        if !value.is_finite() || value < 0.0 {
            return Err(SsbError::invalid(format!(
                "beta must be a nonnegative real or infinite, got {value}"
            )));
        }
        Ok(Beta::Finite(value))
    }

    pub const fn infinite() -> Self {
        Beta::Infinite
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Beta::Infinite)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Beta::Finite(v) if v == 0.0)
    }

    /// Exponent pair `(1/(1+beta), beta/(1+beta))`; sums to 1 exactly at the
    /// endpoints: `(1, 0)` at zero, `(0, 1)` at infinity.
    pub fn exponents(self) -> (f64, f64) {
        match self {
            Beta::Infinite => (0.0, 1.0),
            Beta::Finite(b) => (1.0 / (1.0 + b), b / (1.0 + b)),
        }
    }

    /// The target-side exponent `beta/(1+beta)`.
    pub fn gamma(self) -> f64 {
        self.exponents().1
    }

    pub fn value(self) -> f64 {
        match self {
            Beta::Finite(b) => b,
            Beta::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Beta::new(v).map_err(serde::de::Error::custom),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(Beta::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "beta must be a number or \"inf\", got {s:?}"
            ))),
        }
    }
}
