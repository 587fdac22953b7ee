//! Deterministic result serialization.
//!
//! Identical configurations must produce byte-identical files: object keys
//! keep insertion order, every float is rounded to 12 significant digits
//! before serialization, and files are written to a temporary sibling and
//! renamed so failures never leave partial output behind.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::Result;

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

/// A float as a JSON value in the reporting precision (12 significant
/// digits).
pub fn json_f64(x: f64) -> Value {
    match serde_json::Number::from_f64(round_sig(x, 12)) {
        Some(n) => Value::Number(n),
        // NaN / infinity cannot be JSON numbers; report as strings
        None => Value::String(format!("{x}")),
    }
}

/// A float slice as a JSON array in the reporting precision.
pub fn json_f64_slice(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| json_f64(x)).collect())
}

/// An insertion-ordered JSON object under construction.
#[derive(Debug, Default, Clone)]
pub struct JsonObject {
    map: Map<String, Value>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        self.map.insert(key.to_string(), value);
        self
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, json_f64(value))
    }

    pub fn set_u64(&mut self, key: &str, value: u64) -> &mut Self {
        self.set(key, Value::Number(value.into()))
    }

    pub fn set_bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.set(key, Value::Bool(value))
    }

    pub fn set_str(&mut self, key: &str, value: &str) -> &mut Self {
        self.set(key, Value::String(value.to_string()))
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.map)
    }
}

/// One verification check: a named value against its tolerance.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `value <= tolerance` for upper bounds, `value >= tolerance` when
    /// the check asserts a quantity stays away from zero.
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn upper(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.to_string(), value, tolerance, pass: value <= tolerance }
    }

    /// Passes when `value >= tolerance` (detection-style checks).
    pub fn lower(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.to_string(), value, tolerance, pass: value >= tolerance }
    }

    pub fn to_value(&self) -> Value {
        let mut o = JsonObject::new();
        o.set_str("name", &self.name);
        o.set_f64("value", self.value);
        o.set_f64("tolerance", self.tolerance);
        o.set_bool("pass", self.pass);
        o.into_value()
    }
}

pub fn checks_to_value(checks: &[Check]) -> Value {
    Value::Array(checks.iter().map(Check::to_value).collect())
}

/// Writes pretty JSON atomically: temporary sibling file, then rename.
pub fn write_json_atomic(path: &Path, value: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON serialization cannot fail");
    bytes.push(b'\n');
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy().to_string()).unwrap_or_default()
    ));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_to_significant_digits() {
        assert_eq!(round_sig(1.23456789012345e-7, 12), 1.23456789012e-7);
        assert_eq!(round_sig(-987654.321098765, 12), -987654.321099);
        assert_eq!(round_sig(0.0, 12), 0.0);
        assert_eq!(round_sig(1.0, 12), 1.0);
        // idempotent
        let x = round_sig(std::f64::consts::PI, 12);
        assert_eq!(round_sig(x, 12), x);
    }

    #[test]
    fn object_preserves_insertion_order() {
        let mut o = JsonObject::new();
        o.set_str("zebra", "1");
        o.set_str("alpha", "2");
        let s = serde_json::to_string(&o.into_value()).unwrap();
        assert!(s.find("zebra").unwrap() < s.find("alpha").unwrap());
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json_atomic(&path, &serde_json::json!({"a": 1})).unwrap();
        write_json_atomic(&path, &serde_json::json!({"a": 2})).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("2"));
        assert!(!dir.path().join(".r.json.tmp").exists());
    }

    #[test]
    fn checks_serialize_with_direction() {
        let up = Check::upper("gap", 1e-7, 1e-6);
        assert!(up.pass);
        let low = Check::lower("deviation_detected", 0.5, 1e-2);
        assert!(low.pass);
        let low2 = Check::lower("deviation_detected", 1e-3, 1e-2);
        assert!(!low2.pass);
    }
}
