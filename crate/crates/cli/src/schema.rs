//! Structural validation of emitted JSON against the shipped schema files
//! (the JSON-Schema subset those schemas actually use: type, properties,
//! required, items, enum, minimum/maximum, anyOf).

use anyhow::{bail, Result};
use serde_json::Value;

pub fn validate(schema: &Value, value: &Value, path: &str) -> Result<()> {
    if let Some(any_of) = schema.get("anyOf").and_then(|v| v.as_array()) {
        for candidate in any_of {
            if validate(candidate, value, path).is_ok() {
                return Ok(());
            }
        }
        bail!("{path}: no anyOf branch matched");
    }

    if let Some(types) = schema.get("type") {
        let names: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        let ok = names.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        });
        if !ok {
            bail!("{path}: expected type {names:?}, got {value}");
        }
    }

    if let Some(options) = schema.get("enum").and_then(|v| v.as_array()) {
        if !options.contains(value) {
            bail!("{path}: value {value} not in enum {options:?}");
        }
    }

    if let Some(min) = schema.get("minimum").and_then(|v| v.as_f64()) {
        match value.as_f64() {
            Some(x) if x >= min => {}
            _ => bail!("{path}: {value} below minimum {min}"),
        }
    }
    if let Some(max) = schema.get("maximum").and_then(|v| v.as_f64()) {
        match value.as_f64() {
            Some(x) if x <= max => {}
            _ => bail!("{path}: {value} above maximum {max}"),
        }
    }

    if let Some(required) = schema.get("required").and_then(|v| v.as_array()) {
        let obj = value
            .as_object()
            .ok_or_else(|| anyhow::anyhow!("{path}: required fields on a non-object"))?;
        for key in required.iter().filter_map(|v| v.as_str()) {
            if !obj.contains_key(key) {
                bail!("{path}: missing required field {key}");
            }
        }
    }

    if let Some(props) = schema.get("properties").and_then(|v| v.as_object()) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate(sub, v, &format!("{path}.{key}"))?;
                }
            }
        }
    }

    if let Some(items) = schema.get("items") {
        if let Some(arr) = value.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate(items, v, &format!("{path}[{i}]"))?;
            }
        }
    }

    Ok(())
}

pub struct Schemas;

impl Schemas {
    pub fn fit_sidecar() -> Value {
        serde_json::from_str(include_str!("../schemas/fit_sidecar.schema.json")).unwrap()
    }

    pub fn loo_summary() -> Value {
        serde_json::from_str(include_str!("../schemas/loo_summary.schema.json")).unwrap()
    }

    pub fn weights_report() -> Value {
        serde_json::from_str(include_str!("../schemas/weights_report.schema.json")).unwrap()
    }

    pub fn ppc_report() -> Value {
        serde_json::from_str(include_str!("../schemas/ppc_report.schema.json")).unwrap()
    }

    pub fn synth_truth() -> Value {
        serde_json::from_str(include_str!("../schemas/synth_truth.schema.json")).unwrap()
    }
}

/// Parses a just-written JSON artifact and validates it against its schema.
pub fn check_file(schema: &Value, path: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    validate(schema, &value, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_matching_object() {
        let schema = json!({
            "type": "object",
            "required": ["name", "value"],
            "properties": {
                "name": {"type": "string"},
                "value": {"type": "number", "minimum": 0.0, "maximum": 1.0},
                "tags": {"type": "array", "items": {"type": "string"}}
            }
        });
        let good = json!({"name": "w", "value": 0.4, "tags": ["a"]});
        assert!(validate(&schema, &good, "t").is_ok());
    }

    #[test]
    fn rejects_missing_field_and_bad_range() {
        let schema = json!({
            "type": "object",
            "required": ["value"],
            "properties": {"value": {"type": "number", "maximum": 1.0}}
        });
        assert!(validate(&schema, &json!({}), "t").is_err());
        assert!(validate(&schema, &json!({"value": 1.5}), "t").is_err());
    }

    #[test]
    fn any_of_allows_null_weight() {
        let schema = json!({"anyOf": [{"type": "null"}, {"type": "number"}]});
        assert!(validate(&schema, &json!(null), "t").is_ok());
        assert!(validate(&schema, &json!(0.5), "t").is_ok());
        assert!(validate(&schema, &json!("x"), "t").is_err());
    }

    #[test]
    fn shipped_schemas_parse() {
        let _ = Schemas::fit_sidecar();
        let _ = Schemas::loo_summary();
        let _ = Schemas::weights_report();
        let _ = Schemas::ppc_report();
        let _ = Schemas::synth_truth();
    }
}
