//! Deterministic JSON reports: keys sorted, floats at 17 significant digits.

use bilocal::numerics::Matrix;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

/// A float with 17 significant digits; non-finite values become strings.
pub fn num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::String(v.to_string());
    }
    let text = format!("{v:.16e}");
    // arbitrary_precision keeps the digits exactly as written
    Value::Number(serde_json::from_str::<Number>(&text).expect("formatted float is a JSON number"))
}

pub fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

pub fn vec(v: &[f64]) -> Value {
    Value::Array(v.iter().copied().map(num).collect())
}

pub fn mat(m: &Matrix) -> Value {
    Value::Array(m.to_rows().iter().map(|r| vec(r)).collect())
}

pub fn indices(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&i| Value::from(i)).collect())
}

pub fn problem_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Top-level report with the stable keys
/// `command`, `problem_hash`, `inputs`, `verdicts`, `evidence`, `matrices`, `trace`.
#[derive(Debug, Default)]
pub struct Report {
    pub command: Vec<String>,
    pub problem_hash: Option<String>,
    pub inputs: Map<String, Value>,
    pub verdicts: Map<String, Value>,
    pub evidence: Map<String, Value>,
    pub matrices: Map<String, Value>,
    pub trace: Option<Value>,
    pub wall_time: Option<f64>,
}

impl Report {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            ..Self::default()
        }
    }

    pub fn to_json(&self) -> String {
        let mut top = Map::new();
        top.insert("command".into(), Value::from(self.command.clone()));
        top.insert("problem_hash".into(), self.problem_hash.clone().map_or(Value::Null, Value::String));
        top.insert("inputs".into(), Value::Object(self.inputs.clone()));
        top.insert("verdicts".into(), Value::Object(self.verdicts.clone()));
        top.insert("evidence".into(), Value::Object(self.evidence.clone()));
        top.insert("matrices".into(), Value::Object(self.matrices.clone()));
        top.insert("trace".into(), self.trace.clone().unwrap_or(Value::Null));
        if let Some(t) = self.wall_time {
            top.insert("wall_time_s".into(), num(t));
        }
        let mut out = serde_json::to_string_pretty(&Value::Object(top)).expect("report serializes");
        out.push('\n');
        out
    }
}
