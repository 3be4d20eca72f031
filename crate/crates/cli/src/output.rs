//! Output files, run metadata and exit-code mapping.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use vshp::params::penstock_mode_name;
use vshp::{LoadedParams, ModelKind, PenstockMode, SCHEMA_VERSION};

/// A failed command with its exit code.
#[derive(Debug)]
pub enum Failure {
    Numerical(String),
    Usage(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Usage(format!("{}: {e}", path.display()))
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Numerical(m) | Failure::Usage(m) => m,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<vshp::Error> for Failure {
    fn from(e: vshp::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

/// SHA-256 of the canonical parameter text.
pub fn params_hash(loaded: &LoadedParams) -> String {
    let digest = Sha256::digest(loaded.params.to_text().as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Metadata carried by every output file. Contains nothing run-dependent
/// (no clock, no host), so identical inputs give identical files.
#[derive(Debug, Clone)]
pub struct Meta {
    fields: Map<String, Value>,
}

impl Meta {
    pub fn new(command: &str, loaded: &LoadedParams, model: ModelKind, penstock: PenstockMode) -> Self {
        let mut fields = Map::new();
        fields.insert("schema_version".into(), json!(SCHEMA_VERSION));
        fields.insert("generator".into(), json!(format!("vshp {}", env!("CARGO_PKG_VERSION"))));
        fields.insert("command".into(), json!(command));
        fields.insert("model".into(), json!(model.to_string()));
        fields.insert("penstock_mode".into(), json!(penstock_mode_name(penstock)));
        fields.insert("params_hash".into(), json!(params_hash(loaded)));
        let defaulted: Vec<String> = loaded.defaulted.iter().map(|(k, v)| format!("{k}={v}")).collect();
        fields.insert("params_defaulted".into(), json!(defaulted));
        Self { fields }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.fields.insert(key.into(), value);
    }

    pub fn hash(&self) -> Value {
        self.fields["params_hash"].clone()
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.fields.clone())
    }

    /// `{"meta": …, …body}`.
    pub fn wrap(&self, body: Value) -> Value {
        let mut out = Map::new();
        out.insert("schema_version".into(), json!(SCHEMA_VERSION));
        out.insert("meta".into(), self.to_json());
        match body {
            Value::Object(m) => out.extend(m),
            other => {
                out.insert("data".into(), other);
            }
        }
        Value::Object(out)
    }

    /// `# key: value` lines for the top of a CSV file.
    pub fn csv_header(&self) -> String {
        self.fields
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("# {k}: {s}\n"),
                other => format!("# {k}: {other}\n"),
            })
            .collect()
    }
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write(dir, name, &text)
}
