//! Layered configuration: defaults, then a JSON file, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};
use crate::output::read_text;

/// Recursively overlays `over` onto `base`; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
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

/// Flag overrides collected as a sparse JSON object.
#[derive(Debug, Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    /// Sets `path` (dot-separated) when `value` is present.
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) {
        let Some(v) = value else { return };
        let v = serde_json::to_value(v).expect("serialisable flag");
        let mut node = &mut self.0;
        let mut parts = path.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), v);
                return;
            }
            node = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("override paths do not collide");
        }
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

/// Resolves a configuration from `base`, an optional JSON file and flag overrides.
pub fn resolve<T: Serialize + DeserializeOwned>(base: &T, file: Option<&Path>, overrides: Overrides) -> CliResult<T> {
    let mut value = serde_json::to_value(base).expect("serialisable config");
    if let Some(path) = file {
        let text = read_text(path)?;
        let layer: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        if !layer.is_object() {
            return Err(CliError::Usage(format!("config file {} must hold a JSON object", path.display())));
        }
        merge(&mut value, layer);
    }
    merge(&mut value, overrides.into_value());
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

/// Parses `start:stop:step`, a comma list, or a single number.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("invalid sweep '{spec}'; expected start:stop:step, a,b,c or a number"));
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [a, b, c] => {
            let (a, b, c) = (num(a).ok_or_else(bad)?, num(b).ok_or_else(bad)?, num(c).ok_or_else(bad)?);
            aenode_core::dynsys::stepped_range(a, b, c).map_err(|_| bad())
        }
        [one] => one.split(',').map(|s| num(s).ok_or_else(bad)).collect(),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: f64,
        b: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Cfg {
        name: String,
        inner: Inner,
    }

    fn base() -> Cfg {
        Cfg { name: "x".into(), inner: Inner { a: 1.0, b: 2 } }
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("c.json");
        std::fs::write(&file, r#"{"name": "file", "inner": {"a": 5.0}}"#).unwrap();
        let mut o = Overrides::default();
        o.set("inner.a", Some(9.0));
        o.set::<usize>("inner.b", None);
        let c = resolve(&base(), Some(&file), o).unwrap();
        assert_eq!(c, Cfg { name: "file".into(), inner: Inner { a: 9.0, b: 2 } });
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("c.json");
        std::fs::write(&file, r#"{"nmae": "typo"}"#).unwrap();
        assert!(matches!(resolve(&base(), Some(&file), Overrides::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("900:1100:100").unwrap(), vec![900.0, 1000.0, 1100.0]);
        assert_eq!(parse_grid("1.0").unwrap(), vec![1.0]);
        assert_eq!(parse_grid("0.8,1.2").unwrap(), vec![0.8, 1.2]);
        for bad in ["1100:900:100", "1:2", "a:b:c", "1:2:0", ""] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
