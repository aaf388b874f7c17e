#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus(rel: &str) -> PathBuf {
    root().join("corpus").join(rel)
}

pub fn brickfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brickfill"))
        .args(args)
        .env("BRICKFILL_LOG", "off")
        .output()
        .expect("spawn brickfill")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(path: impl AsRef<Path>) -> Value {
    let text = std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()));
    serde_json::from_str(&text).expect("json")
}

/// Validation errors of `doc` against `docs/schemas/{name}.schema.json`.
pub fn schema_errors(name: &str, doc: &Value) -> Vec<String> {
    let schema = read(root().join(format!("docs/schemas/{name}.schema.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator.iter_errors(doc).map(|e| format!("{}: {e}", e.instance_path())).collect()
}

pub fn assert_schema(name: &str, doc: &Value) {
    let errs = schema_errors(name, doc);
    assert!(errs.is_empty(), "{name}: {errs:#?}");
}

/// Drops wall-clock fields so two runs can be compared.
pub fn without_timing(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| !matches!(k.as_str(), "wall_seconds" | "seconds"))
                .map(|(k, v)| (k.clone(), without_timing(v)))
                .collect(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(without_timing).collect()),
        other => other.clone(),
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
