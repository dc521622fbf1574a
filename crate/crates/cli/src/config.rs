//! Layered configuration: built-in defaults, then a JSON file, then
//! `--set key=value` overrides.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Loads `T` from its defaults, the optional JSON file and the overrides.
///
/// Override keys are dotted paths that must exist in the serialized default
/// (or, below a field whose default is `null`, in the file being overridden).
/// Values are parsed as JSON and fall back to plain strings.
pub fn load<T>(path: Option<&Path>, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let defaults = serde_json::to_value(T::default())?;
    let base: T = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => T::default(),
    };
    let mut value = serde_json::to_value(base)?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override {item:?} is not of the form key=value"))?;
        let path: Vec<&str> = key.split('.').collect();
        if path.iter().any(|s| s.is_empty()) {
            bail!("invalid config key {key:?}");
        }
        check_key(&defaults, &value, &path).map_err(|_| anyhow!("unknown config key {key:?}"))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set(&mut value, &path, parsed);
        let typed: T = serde_json::from_value(value.clone()).with_context(|| format!("invalid value for {key}"))?;
        value = serde_json::to_value(typed)?;
    }
    Ok(serde_json::from_value(value)?)
}

fn check_key(defaults: &Value, current: &Value, path: &[&str]) -> Result<(), ()> {
    let Some((head, rest)) = path.split_first() else {
        return Ok(());
    };
    match defaults {
        Value::Object(map) => {
            let next = map.get(*head).ok_or(())?;
            let cur = current.get(*head).unwrap_or(&Value::Null);
            check_key(next, cur, rest)
        }
        Value::Null if !current.is_null() => check_key(current, &Value::Null, path),
        _ => Err(()),
    }
}

fn set(target: &mut Value, path: &[&str], value: Value) {
    let (head, rest) = path.split_first().expect("non-empty key");
    if !target.is_object() {
        *target = Value::Object(Map::new());
    }
    let map = target.as_object_mut().expect("object");
    if rest.is_empty() {
        map.insert(head.to_string(), value);
    } else {
        set(map.entry(head.to_string()).or_insert(Value::Null), rest, value);
    }
}
