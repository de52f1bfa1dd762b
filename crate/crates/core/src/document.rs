//! JSON model documents.
//!
//! A document is either an explicit pool,
//! `{"servers": [{"id": 1, "mu": 1.0}, ...], "classes": [{"id": 1, "lambda": 0.5, "servers": [1]}, ...]}`,
//! or a structured descriptor under a `structured` key with a `family`
//! discriminator, e.g.
//! `{"structured": {"family": "randomized_homogeneous", "K": 3, "d": 2, "rho": 0.5}}`.
//!
//! The randomized families accept either `lambda` (per-server arrival rate)
//! or `rho` (load), and default `mu` to 1 where the descriptor has one.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::RawModel;
use crate::structured::Structured;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelDocument {
    Explicit(RawModel),
    Structured(Structured),
}

fn schema(msg: impl std::fmt::Display) -> Error {
    Error::InvalidDescriptor(msg.to_string())
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(schema)?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| schema("model document must be an object"))?;
        if let Some(inner) = obj.get("structured") {
            if obj.len() != 1 {
                return Err(schema(
                    "a structured document has no keys besides \"structured\"",
                ));
            }
            let normalized = normalize_structured(inner)?;
            let s: Structured = serde_json::from_value(normalized).map_err(schema)?;
            Ok(ModelDocument::Structured(s))
        } else {
            let raw: RawModel = serde_json::from_value(value.clone()).map_err(schema)?;
            Ok(ModelDocument::Explicit(raw))
        }
    }

    /// Canonical JSON form: arrival rates always spelled out as `lambda`.
    pub fn to_value(&self) -> Value {
        match self {
            ModelDocument::Explicit(raw) => serde_json::to_value(raw),
            ModelDocument::Structured(s) => serde_json::to_value(s)
                .map(|v| Value::Object(Map::from_iter([("structured".into(), v)]))),
        }
        .expect("documents serialize")
    }
}

/// Resolves `rho` and the default `mu` of the randomized families.
fn normalize_structured(inner: &Value) -> Result<Value> {
    let mut obj = inner
        .as_object()
        .cloned()
        .ok_or_else(|| schema("\"structured\" must be an object"))?;
    let family = obj
        .get("family")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let number = |obj: &Map<String, Value>, key: &str| -> Result<Option<f64>> {
        match obj.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| schema(format!("{key} must be a number"))),
        }
    };
    match family.as_str() {
        "randomized_homogeneous" | "heterogeneous_degrees" => {
            let mu = number(&obj, "mu")?.unwrap_or(1.0);
            obj.insert("mu".into(), mu.into());
            if let Some(rho) = number(&obj, "rho")? {
                if obj.contains_key("lambda") {
                    return Err(schema("give either lambda or rho, not both"));
                }
                obj.remove("rho");
                obj.insert("lambda".into(), (rho * mu).into());
            }
        }
        "heterogeneous_groups" => {
            if let Some(rho) = number(&obj, "rho")? {
                if obj.contains_key("lambda") {
                    return Err(schema("give either lambda or rho, not both"));
                }
                let groups = obj
                    .get("groups")
                    .and_then(Value::as_array)
                    .ok_or_else(|| schema("heterogeneous_groups needs a groups array"))?;
                let (mut servers, mut capacity) = (0.0, 0.0);
                for g in groups {
                    let k = g
                        .get("K")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| schema("group K"))?;
                    let mu = g
                        .get("mu")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| schema("group mu"))?;
                    servers += k;
                    capacity += k * mu;
                }
                if servers == 0.0 {
                    return Err(schema("heterogeneous_groups needs at least one server"));
                }
                obj.remove("rho");
                obj.insert("lambda".into(), (rho * capacity / servers).into());
            }
        }
        _ => {}
    }
    Ok(Value::Object(obj))
}
