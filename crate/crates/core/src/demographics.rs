//! Demographic records encoded as fixed vectors in [0,1]^8.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEMOGRAPHIC_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Categorical,
    Ordinal,
}

/// One demographic field and its ordered categories or levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    #[serde(alias = "levels", alias = "categories")]
    pub values: Vec<String>,
}

impl FieldSchema {
    /// Position of `raw` in the declared order, mapped to `i / (L − 1)`.
    pub fn encode(&self, raw: &str) -> Result<f64> {
        let index = self.values.iter().position(|v| v == raw).ok_or_else(|| Error::UnknownCategory {
            field: self.name.clone(),
            value: raw.to_string(),
        })?;
        let span = self.values.len() - 1;
        if span == 0 {
            return Ok(0.0);
        }
        Ok(index as f64 / span as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicSchema {
    pub fields: Vec<FieldSchema>,
}

impl DemographicSchema {
    pub fn new(fields: Vec<FieldSchema>) -> Result<Self> {
        let schema = DemographicSchema { fields };
        schema.check()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DemographicSchema = serde_json::from_str(text)?;
        schema.check()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    fn check(&self) -> Result<()> {
        if self.fields.len() != DEMOGRAPHIC_DIM {
            return Err(Error::InvalidSchema(format!(
                "expected {DEMOGRAPHIC_DIM} fields, found {}",
                self.fields.len()
            )));
        }
        for (i, f) in self.fields.iter().enumerate() {
            if f.values.is_empty() {
                return Err(Error::InvalidSchema(format!("field `{}` has no values", f.name)));
            }
            if self.fields[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidSchema(format!("duplicate field `{}`", f.name)));
            }
            let mut seen: Vec<&String> = f.values.iter().collect();
            seen.sort();
            seen.dedup();
            if seen.len() != f.values.len() {
                return Err(Error::InvalidSchema(format!("field `{}` repeats a value", f.name)));
            }
        }
        Ok(())
    }
}

/// Eight normalized navigator attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicVector(pub [f64; DEMOGRAPHIC_DIM]);

impl DemographicVector {
    pub fn new(values: [f64; DEMOGRAPHIC_DIM]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("demographic value {v} outside [0,1]")));
        }
        Ok(DemographicVector(values))
    }

    pub fn values(&self) -> &[f64; DEMOGRAPHIC_DIM] {
        &self.0
    }
}

/// Encodes a record of raw field values, keyed by field name.
pub fn encode_demographics(record: &BTreeMap<String, String>, schema: &DemographicSchema) -> Result<DemographicVector> {
    let mut out = [0.0; DEMOGRAPHIC_DIM];
    for (slot, field) in out.iter_mut().zip(&schema.fields) {
        let raw = record.get(&field.name).ok_or_else(|| Error::MissingField(field.name.clone()))?;
        *slot = field.encode(raw)?;
    }
    Ok(DemographicVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DemographicSchema {
        let mut fields = vec![FieldSchema {
            name: "education".into(),
            kind: FieldKind::Ordinal,
            values: vec!["none".into(), "school".into(), "college".into(), "university".into()],
        }];
        fields.push(FieldSchema {
            name: "gender".into(),
            kind: FieldKind::Categorical,
            values: vec!["f".into(), "m".into(), "other".into()],
        });
        for i in 0..6 {
            fields.push(FieldSchema {
                name: format!("f{i}"),
                kind: FieldKind::Ordinal,
                values: (0..5).map(|l| l.to_string()).collect(),
            });
        }
        DemographicSchema::new(fields).unwrap()
    }

    fn record(edu: &str) -> BTreeMap<String, String> {
        let mut r = BTreeMap::new();
        r.insert("education".to_string(), edu.to_string());
        r.insert("gender".to_string(), "m".to_string());
        for i in 0..6 {
            r.insert(format!("f{i}"), (i % 5).to_string());
        }
        r
    }

    #[test]
    fn ordinal_levels_are_evenly_spaced() {
        let s = schema();
        assert_eq!(s.fields[0].encode("none").unwrap(), 0.0);
        assert!((s.fields[0].encode("college").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.fields[0].encode("university").unwrap(), 1.0);
    }

    #[test]
    fn full_record_is_deterministic() {
        let s = schema();
        let a = encode_demographics(&record("school"), &s).unwrap();
        let b = encode_demographics(&record("school"), &s).unwrap();
        assert_eq!(a.0.map(f64::to_bits), b.0.map(f64::to_bits));
        assert_eq!(a.0[1], 0.5);
        assert!(a.0.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn errors_on_unknown_and_missing() {
        let s = schema();
        assert!(matches!(
            encode_demographics(&record("phd"), &s),
            Err(Error::UnknownCategory { .. })
        ));
        let mut r = record("school");
        r.remove("gender");
        assert_eq!(encode_demographics(&r, &s), Err(Error::MissingField("gender".into())));
    }

    #[test]
    fn schema_json_round_trip_and_aliases() {
        let s = schema();
        assert_eq!(DemographicSchema::from_json(&s.to_json()).unwrap(), s);
        let text = r#"{"fields":[{"name":"a","kind":"ordinal","levels":["x","y"]}]}"#;
        assert!(matches!(DemographicSchema::from_json(text), Err(Error::InvalidSchema(_))));
    }
}
