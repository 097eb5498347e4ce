//! Instance files: one JSON document per instance.
//!
//! ```json
//! { "kind": "covering", "n": 2,
//!   "objective": { "type": "linear", "costs": [1.0, 1.0] },
//!   "rows": [[{ "j": 0, "a": 1.0 }, { "j": 1, "a": 1.0 }]],
//!   "advice": [0.5, 0.5], "lambda": 0.5 }
//! ```
//!
//! Columns are 0-based. Packing files also carry `b`, and their objective is
//! `linear` (optional `costs`) or `separable`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{PdlaError, Result};
use crate::lq::LqInstance;
use crate::model::{CoveringInstance, Entry, PackingInstance, SparseRow};
use crate::objective::{ObjectiveSpec, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Covering,
    Packing,
    LqCovering,
}

/// On-disk layout; `objective` is validated against `kind` on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: InstanceKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    pub objective: Value,
    pub rows: Vec<Vec<Entry>>,
    #[serde(default)]
    pub advice: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bound: Option<usize>,
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub enum Instance {
    Covering(CoveringInstance),
    Packing(PackingInstance),
    Lq(LqInstance),
}

impl Instance {
    pub fn kind(&self) -> InstanceKind {
        match self {
            Instance::Covering(_) => InstanceKind::Covering,
            Instance::Packing(_) => InstanceKind::Packing,
            Instance::Lq(_) => InstanceKind::LqCovering,
        }
    }

    pub fn rounds(&self) -> usize {
        match self {
            Instance::Covering(c) => c.rows.len(),
            Instance::Packing(p) => p.rows.len(),
            Instance::Lq(l) => l.rows.len(),
        }
    }
}

/// A parsed instance with the advice and confidence stored alongside it.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub name: Option<String>,
    pub instance: Instance,
    pub advice: Vec<f64>,
    pub lambda: f64,
}

fn objective_tag(objective: &Value) -> Result<&str> {
    objective
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| PdlaError::InvalidInput("objective needs a string `type` field".into()))
}

fn build_rows(rows: Vec<Vec<Entry>>, n: usize) -> Result<Vec<SparseRow>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, entries)| {
            let row = SparseRow::try_from(entries).map_err(|e| PdlaError::InvalidInput(format!("row {i}: {e}")))?;
            row.check_columns(n).map_err(|e| PdlaError::InvalidInput(format!("row {i}: {e}")))?;
            Ok(row)
        })
        .collect()
}

impl InstanceFile {
    pub fn into_loaded(self) -> Result<LoadedInstance> {
        let tag = objective_tag(&self.objective)?;
        if tag == "custom" {
            return Err(PdlaError::InvalidInput(
                "objective type `custom` cannot be loaded from a file; build it through the library".into(),
            ));
        }
        let rows = build_rows(self.rows, self.n)?;
        if !self.advice.is_empty() && self.kind != InstanceKind::Packing && self.advice.len() != self.n {
            return Err(PdlaError::DimensionMismatch { expected: self.n, got: self.advice.len() });
        }
        let instance = match self.kind {
            InstanceKind::Covering | InstanceKind::LqCovering => {
                if self.b.is_some() {
                    return Err(PdlaError::InvalidInput("`b` is only allowed for packing instances".into()));
                }
                let spec: ObjectiveSpec = serde_json::from_value(self.objective)?;
                if self.kind == InstanceKind::LqCovering && !matches!(spec, ObjectiveSpec::LqSum { .. }) {
                    return Err(PdlaError::InvalidInput("lq_covering instances need an lq_sum objective".into()));
                }
                let mut inst = CoveringInstance::from_spec(self.n, rows, spec)?;
                if let Some(d) = self.d_bound {
                    inst = inst.with_d_bound(d)?;
                }
                match self.kind {
                    InstanceKind::LqCovering => Instance::Lq(LqInstance::from_covering(&inst)?),
                    _ => Instance::Covering(inst),
                }
            }
            InstanceKind::Packing => {
                let b = self.b.ok_or_else(|| PdlaError::InvalidInput("packing instances need `b`".into()))?;
                if b.len() != self.n {
                    return Err(PdlaError::DimensionMismatch { expected: self.n, got: b.len() });
                }
                let spec: UtilitySpec = serde_json::from_value(self.objective)?;
                Instance::Packing(PackingInstance::from_spec(b, rows, spec)?)
            }
        };
        Ok(LoadedInstance { name: self.name, instance, advice: self.advice, lambda: self.lambda })
    }

    pub fn from_covering(instance: &CoveringInstance, advice: Vec<f64>, lambda: f64) -> Result<Self> {
        let spec = instance
            .spec
            .as_ref()
            .ok_or_else(|| PdlaError::InvalidInput("only built-in objectives can be written to a file".into()))?;
        Ok(Self {
            name: None,
            kind: if matches!(spec, ObjectiveSpec::LqSum { .. }) { InstanceKind::LqCovering } else { InstanceKind::Covering },
            n: instance.n,
            b: None,
            objective: serde_json::to_value(spec)?,
            rows: instance.rows.iter().map(|r| r.entries().to_vec()).collect(),
            advice,
            lambda,
            d_bound: instance.d_bound,
        })
    }

    pub fn from_packing(instance: &PackingInstance, advice: Vec<f64>, lambda: f64) -> Result<Self> {
        let spec = instance
            .spec
            .as_ref()
            .ok_or_else(|| PdlaError::InvalidInput("only built-in utilities can be written to a file".into()))?;
        Ok(Self {
            name: None,
            kind: InstanceKind::Packing,
            n: instance.n,
            b: Some(instance.b.clone()),
            objective: serde_json::to_value(spec)?,
            rows: instance.rows.iter().map(|r| r.entries().to_vec()).collect(),
            advice,
            lambda,
            d_bound: None,
        })
    }

    pub fn from_instance(instance: &Instance, advice: Vec<f64>, lambda: f64) -> Result<Self> {
        match instance {
            Instance::Covering(c) => Self::from_covering(c, advice, lambda),
            Instance::Lq(l) => Self::from_covering(&l.to_covering(), advice, lambda),
            Instance::Packing(p) => Self::from_packing(p, advice, lambda),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn parse_instance(text: &str) -> Result<LoadedInstance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_loaded()
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<LoadedInstance> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, file: &InstanceFile) -> Result<()> {
    std::fs::write(path, file.to_json()? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const COVERING: &str = r#"{
        "kind": "covering", "n": 2,
        "objective": { "type": "linear", "costs": [1.0, 2.0] },
        "rows": [[{ "j": 0, "a": 1.0 }, { "j": 1, "a": 0.5 }]],
        "advice": [1.0, 0.0], "lambda": 0.5
    }"#;

    #[test]
    fn covering_roundtrip() {
        let loaded = parse_instance(COVERING).unwrap();
        assert_eq!(loaded.lambda, 0.5);
        let Instance::Covering(c) = &loaded.instance else { panic!("wrong kind") };
        assert_eq!(c.rows[0].coefficient(1), 0.5);
        let back = InstanceFile::from_instance(&loaded.instance, loaded.advice.clone(), 0.5).unwrap();
        let again = parse_instance(&back.to_json().unwrap()).unwrap();
        let Instance::Covering(c2) = again.instance else { panic!("wrong kind") };
        assert_eq!(c2.rows, c.rows);
    }

    #[test]
    fn custom_objective_is_rejected() {
        let text = COVERING.replace(r#""type": "linear", "costs": [1.0, 2.0]"#, r#""type": "custom""#);
        let err = parse_instance(&text).unwrap_err();
        assert!(err.to_string().contains("custom"));
    }

    #[test]
    fn bad_rows_are_rejected() {
        let text = COVERING.replace(r#""a": 0.5"#, r#""a": -0.5"#);
        assert!(parse_instance(&text).is_err());
        let text = COVERING.replace(r#""j": 1"#, r#""j": 7"#);
        assert!(parse_instance(&text).is_err());
    }

    #[test]
    fn packing_and_lq_files() {
        let packing = r#"{
            "kind": "packing", "n": 1, "b": [2.0],
            "objective": { "type": "linear" },
            "rows": [[{ "j": 0, "a": 1.0 }], [{ "j": 0, "a": 1.0 }]],
            "advice": [1.0, 1.0]
        }"#;
        let p = parse_instance(packing).unwrap();
        assert!(matches!(p.instance, Instance::Packing(_)));
        assert_eq!(p.lambda, 1.0);

        let lq = r#"{
            "kind": "lq_covering", "n": 2,
            "objective": { "type": "lq_sum", "groups": [{ "indices": [0, 1], "c": 1.0, "q": 2.0 }] },
            "rows": [[{ "j": 0, "a": 1.0 }]]
        }"#;
        assert!(matches!(parse_instance(lq).unwrap().instance, Instance::Lq(_)));
        let overlapping = lq.replace(
            r#"[{ "indices": [0, 1], "c": 1.0, "q": 2.0 }]"#,
            r#"[{ "indices": [0, 1], "c": 1.0, "q": 2.0 }, { "indices": [1], "c": 1.0, "q": 1.0 }]"#,
        );
        assert!(parse_instance(&overlapping).unwrap_err().to_string().contains("disjoint"));
    }
}
