//! Canonical JSON encodings.
//!
//! * lamplighter: `{"lamps": [int, ...], "t": int}` with lamps strictly increasing
//! * free abelian: `[int, ...]`
//! * Heisenberg: `[a, b, c]`
//!
//! Integers inside the IEEE-754 safe range are written as JSON numbers and as
//! decimal strings beyond it. Decoding accepts either form.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use super::{GroupDescriptor, GroupElement, GroupError, LampConfig};

const SAFE_INTEGER: i64 = (1 << 53) - 1;

pub fn bigint_to_json(x: &BigInt) -> Value {
    match x.to_i64() {
        Some(v) if (-SAFE_INTEGER..=SAFE_INTEGER).contains(&v) => Value::from(v),
        _ => Value::String(x.to_string()),
    }
}

pub fn bigint_from_json(v: &Value) -> Result<BigInt, GroupError> {
    match v {
        Value::Number(n) => n.as_i64().map(BigInt::from).ok_or_else(|| GroupError::Decode {
            what: "integer",
            reason: format!("{n} is not an integer in the safe range"),
        }),
        Value::String(s) => s.parse().map_err(|_| GroupError::Decode {
            what: "integer",
            reason: format!("`{s}` is not a decimal integer"),
        }),
        other => Err(GroupError::Decode { what: "integer", reason: format!("found {other}") }),
    }
}

/// Serde adapter for `u64` fields: a number inside the safe range, a
/// decimal string beyond it.
pub mod safe_u64 {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Number(u64),
        Text(String),
    }

    impl Repr {
        pub(crate) fn of(x: u64) -> Self {
            if x <= super::SAFE_INTEGER as u64 {
                Repr::Number(x)
            } else {
                Repr::Text(x.to_string())
            }
        }

        pub(crate) fn value<E: Error>(self) -> Result<u64, E> {
            match self {
                Repr::Number(x) => Ok(x),
                Repr::Text(s) => s.parse().map_err(|_| E::custom(format!("`{s}` is not an unsigned integer"))),
            }
        }
    }

    pub fn serialize<S: Serializer>(x: &u64, s: S) -> Result<S::Ok, S::Error> {
        Repr::of(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        Repr::deserialize(d)?.value()
    }
}

/// [`safe_u64`] for `(u64, f64)` pairs.
pub mod safe_u64_pairs {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::safe_u64::Repr;

    pub fn serialize<S: Serializer>(xs: &[(u64, f64)], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|&(x, y)| (Repr::of(x), y)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(u64, f64)>, D::Error> {
        Vec::<(Repr, f64)>::deserialize(d)?.into_iter().map(|(x, y)| Ok((x.value()?, y))).collect()
    }
}

fn int_array(v: &Value, len: Option<usize>) -> Result<Vec<BigInt>, GroupError> {
    let arr = v.as_array().ok_or_else(|| GroupError::Decode {
        what: "element",
        reason: format!("expected an array, found {v}"),
    })?;
    if let Some(len) = len {
        if arr.len() != len {
            return Err(GroupError::Decode {
                what: "element",
                reason: format!("expected {len} coordinates, found {}", arr.len()),
            });
        }
    }
    arr.iter().map(bigint_from_json).collect()
}

impl GroupElement {
    pub fn to_json(&self) -> Value {
        match self {
            GroupElement::Lamplighter(l) => json!({
                "lamps": l.lamps().iter().map(bigint_to_json).collect::<Vec<_>>(),
                "t": bigint_to_json(l.shift()),
            }),
            GroupElement::FreeAbelian(v) => Value::Array(v.iter().map(bigint_to_json).collect()),
            GroupElement::Heisenberg(h) => Value::Array(h.iter().map(bigint_to_json).collect()),
        }
    }

    /// Decodes a canonical encoding. Lamp lists must be strictly increasing.
    pub fn from_json(desc: GroupDescriptor, v: &Value) -> Result<GroupElement, GroupError> {
        match desc {
            GroupDescriptor::Lamplighter => {
                let obj = v.as_object().ok_or_else(|| GroupError::Decode {
                    what: "lamplighter element",
                    reason: format!("expected an object, found {v}"),
                })?;
                let lamps = int_array(obj.get("lamps").unwrap_or(&Value::Null), None)?;
                if lamps.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(GroupError::Decode {
                        what: "lamplighter element",
                        reason: "lamp positions are not strictly increasing".into(),
                    });
                }
                let t = bigint_from_json(obj.get("t").unwrap_or(&Value::Null))?;
                Ok(GroupElement::Lamplighter(LampConfig::new(lamps, t)))
            }
            GroupDescriptor::FreeAbelian { d } => Ok(GroupElement::FreeAbelian(int_array(v, Some(d))?)),
            GroupDescriptor::Heisenberg => {
                let [a, b, c]: [BigInt; 3] = int_array(v, Some(3))?.try_into().expect("length checked");
                Ok(GroupElement::Heisenberg([a, b, c]))
            }
        }
    }
}


/// Serde adapter writing a `BigInt` as a decimal string.
pub mod bigint_string {
    use num_bigint::BigInt;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(x)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| D::Error::custom(format!("`{s}` is not a decimal integer")))
    }
}
