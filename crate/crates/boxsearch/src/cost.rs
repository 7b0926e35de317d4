//! Extended nonnegative costs.
//!
//! A box either reveals a finite nonnegative cost or is unusable in the
//! current scenario. The unusable state is a dedicated sentinel, never a
//! large float, so arithmetic and comparisons cannot silently saturate.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box value: finite nonnegative, or unusable in this scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    /// Validates the finite branch: no NaN, no negative, no float infinity.
    pub fn new(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::invalid_instance(format!(
                "finite cost must be a finite float, got {v}"
            )));
        }
        if v < 0.0 {
            return Err(Error::invalid_instance(format!("cost must be nonnegative, got {v}")));
        }
        Ok(Cost::Finite(v))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cost::Infinite)
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    /// Finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Adds a finite amount, absorbing into the sentinel.
    pub fn add_finite(self, amount: f64) -> Cost {
        match self {
            Cost::Finite(v) => Cost::Finite(v + amount),
            Cost::Infinite => Cost::Infinite,
        }
    }

    pub fn add(self, other: Cost) -> Cost {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }

    /// Stable bit pattern used for value-identity hashing of scenarios.
    pub fn canonical_bits(self) -> u64 {
        match self {
            Cost::Finite(v) => v.to_bits(),
            Cost::Infinite => u64::MAX,
        }
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let ord = match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.partial_cmp(b)?,
            (Cost::Finite(_), Cost::Infinite) => Ordering::Less,
            (Cost::Infinite, Cost::Finite(_)) => Ordering::Greater,
            (Cost::Infinite, Cost::Infinite) => Ordering::Equal,
        };
        Some(ord)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cost::Finite(v) => serializer.serialize_f64(*v),
            Cost::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct CostVisitor;

        impl<'de> Visitor<'de> for CostVisitor {
            type Value = Cost;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Cost, E> {
                Cost::new(v).map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Cost, E> {
                Cost::new(v as f64).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Cost, E> {
                Cost::new(v as f64).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Cost, E> {
                if v == "inf" {
                    Ok(Cost::Infinite)
                } else {
                    Err(E::custom(format!("unknown cost string {v:?}, expected \"inf\"")))
                }
            }
        }

        deserializer.deserialize_any(CostVisitor)
    }
}
