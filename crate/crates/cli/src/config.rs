//! Optional JSON config files for subcommands. A config file holds the same
//! keys as the long flags (with underscores); flags given on the command
//! line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Overlays the non-null fields of `flags` on the contents of `file`. A bool
/// flag left at `false` does not override the file.
pub fn merge<T: Serialize + DeserializeOwned>(flags: T, file: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = file else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
    };
    let Value::Object(flag_map) = serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))? else {
        unreachable!("argument structs serialize to objects");
    };
    for (k, v) in flag_map {
        if !v.is_null() && v != Value::Bool(false) {
            base_map.insert(k, v);
        }
    }
    serde_json::from_value(base)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Args {
        a: Option<u32>,
        b: Option<String>,
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("tdof-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"a": 1, "b": "file"}"#).unwrap();
        let merged = merge(Args { a: None, b: Some("flag".into()) }, Some(&path)).unwrap();
        assert_eq!(merged, Args { a: Some(1), b: Some("flag".into()) });
        std::fs::write(&path, r#"{"c": 1}"#).unwrap();
        assert!(merge(Args::default(), Some(&path)).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
