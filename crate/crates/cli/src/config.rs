//! Settings resolution: defaults, then a JSON config file, then flags.
//!
//! A config file is either a flat settings object or a run manifest, in
//! which case its recorded settings are used; a manifest therefore doubles
//! as the config for an exact rerun.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub fn read_config(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })?;
    if !value.is_object() {
        return Err(CliError::settings(format!("{} is not a JSON object", path.display())));
    }
    Ok(value)
}

/// Recursive merge; objects merge key by key, anything else is replaced.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Flag overrides addressed by dotted keys (`train.lambda`).
#[derive(Clone, Debug, Default)]
pub struct Overrides(Value);

impl Overrides {
    pub fn new() -> Self {
        Overrides(Value::Object(Map::new()))
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        let mut slot = &mut self.0;
        for part in key.split('.') {
            if !slot.is_object() {
                *slot = Value::Object(Map::new());
            }
            slot = slot
                .as_object_mut()
                .expect("object")
                .entry(part.to_string())
                .or_insert(Value::Null);
        }
        *slot = value.into();
        self
    }

    pub fn set_opt<T: Into<Value>>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.set(key, v);
        }
        self
    }

    pub fn into_value(self) -> Value {
        self.0
    }
}

/// Settings of type `T` for `command` from an optional config file and flags.
pub fn resolve<T: DeserializeOwned>(command: &str, config: Option<&Path>, overrides: Overrides) -> Result<T> {
    let mut value = Value::Object(Map::new());
    if let Some(path) = config {
        let mut file = read_config(path)?;
        if let Some(recorded) = file.get("command").and_then(Value::as_str) {
            if recorded != command {
                return Err(CliError::settings(format!(
                    "{} records a `{recorded}` run, not `{command}`",
                    path.display()
                )));
            }
            file = file.get("settings").cloned().unwrap_or(Value::Object(Map::new()));
        }
        merge(&mut value, file);
    }
    merge(&mut value, overrides.into_value());
    serde_json::from_value(value).map_err(|e| CliError::settings(e.to_string()))
}
