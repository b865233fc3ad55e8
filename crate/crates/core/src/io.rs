//! CSV readers and writers for trajectories and demographic records.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use crate::demographics::{encode_demographics, DemographicSchema, DemographicVector};
use crate::error::{Error, Result};
use crate::features::{RawTrajectory, Sample};

const TRAJ_HEADER: [&str; 4] = ["traj_id", "t", "x", "y"];

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingField(name.to_string()))
}

fn number(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| {
        let line = record.position().map_or(0, |p| p.line());
        Error::Parse(format!("line {line}: `{raw}` is not a number in column {name}"))
    })
}

/// Reads `traj_id,t,x,y` rows. Rows of one trajectory must be contiguous.
///
/// Samples are returned as written; [`crate::features::validate_trajectory`]
/// does the cleaning.
pub fn read_trajectories<R: Read>(reader: R) -> Result<Vec<RawTrajectory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let [id_col, t_col, x_col, y_col] = TRAJ_HEADER.map(|h| column(&headers, h));
    let (id_col, t_col, x_col, y_col) = (id_col?, t_col?, x_col?, y_col?);
    let mut out: Vec<RawTrajectory> = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::MissingField("traj_id".into()));
        }
        let sample = Sample::new(
            number(&record, t_col, "t")?,
            number(&record, x_col, "x")?,
            number(&record, y_col, "y")?,
        );
        match out.last_mut() {
            Some(last) if last.id == id => last.samples.push(sample),
            _ => {
                if finished.contains(&id) {
                    return Err(Error::Parse(format!("rows of trajectory `{id}` are not contiguous")));
                }
                if let Some(last) = out.last() {
                    finished.insert(last.id.clone());
                }
                out.push(RawTrajectory::new(id, vec![sample]));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("trajectory CSV"));
    }
    Ok(out)
}

pub fn write_trajectories<W: Write>(writer: W, trajs: &[RawTrajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAJ_HEADER)?;
    for traj in trajs {
        for s in &traj.samples {
            w.write_record([traj.id.clone(), s.t.to_string(), s.x.to_string(), s.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `traj_id,<field>...` rows and encodes them with `schema`.
pub fn read_demographics<R: Read>(reader: R, schema: &DemographicSchema) -> Result<Vec<(String, DemographicVector)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "traj_id")?;
    let field_cols = schema
        .fields
        .iter()
        .map(|f| column(&headers, &f.name).map(|c| (f.name.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id = record.get(id_col).unwrap_or("").to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Parse(format!("duplicate demographic record for `{id}`")));
        }
        let raw: BTreeMap<String, String> = field_cols
            .iter()
            .map(|(name, c)| (name.clone(), record.get(*c).unwrap_or("").to_string()))
            .collect();
        out.push((id, encode_demographics(&raw, schema)?));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("demographics CSV"));
    }
    Ok(out)
}

/// Writes raw field values, one row per `(traj_id, values)` pair.
pub fn write_demographics<W: Write>(writer: W, schema: &DemographicSchema, rows: &[(String, Vec<String>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["traj_id".to_string()];
    header.extend(schema.fields.iter().map(|f| f.name.clone()));
    w.write_record(&header)?;
    for (id, values) in rows {
        if values.len() != schema.fields.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.fields.len(),
                actual: values.len(),
            });
        }
        let mut record = vec![id.clone()];
        record.extend(values.iter().cloned());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Demographic vectors reordered to match `trajs`.
pub fn align_demographics(trajs: &[RawTrajectory], records: &[(String, DemographicVector)]) -> Result<Vec<DemographicVector>> {
    let by_id: BTreeMap<&str, &DemographicVector> = records.iter().map(|(id, v)| (id.as_str(), v)).collect();
    trajs
        .iter()
        .map(|t| {
            by_id
                .get(t.id.as_str())
                .map(|v| **v)
                .ok_or_else(|| Error::MissingField(format!("demographics for trajectory `{}`", t.id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demographics::{FieldKind, FieldSchema};

    fn schema() -> DemographicSchema {
        DemographicSchema::new(
            (1..=8)
                .map(|i| FieldSchema {
                    name: format!("f{i}"),
                    kind: FieldKind::Ordinal,
                    values: vec!["lo".into(), "mid".into(), "hi".into()],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn trajectories_round_trip() {
        let trajs = vec![
            RawTrajectory::new("a", vec![Sample::new(0.0, 1.5, -2.0), Sample::new(0.5, 0.1 + 0.2, 3.0)]),
            RawTrajectory::new("b", vec![Sample::new(0.0, 1e-9, 7.0)]),
        ];
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs).unwrap();
        assert!(buf.starts_with(b"traj_id,t,x,y\n"));
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), trajs);
    }

    #[test]
    fn trajectory_errors() {
        assert!(matches!(read_trajectories("traj_id,t,x\n".as_bytes()), Err(Error::MissingField(_))));
        assert!(matches!(read_trajectories("traj_id,t,x,y\n".as_bytes()), Err(Error::EmptyInput(_))));
        assert!(matches!(
            read_trajectories("traj_id,t,x,y\na,0,zz,1\n".as_bytes()),
            Err(Error::Parse(_))
        ));
        let split = "traj_id,t,x,y\na,0,0,0\nb,0,0,0\na,1,0,0\n";
        assert!(matches!(read_trajectories(split.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn column_order_is_free() {
        let t = read_trajectories("x,y,traj_id,t\n1,2,q,0\n".as_bytes()).unwrap();
        assert_eq!(t[0].samples[0], Sample::new(0.0, 1.0, 2.0));
    }

    #[test]
    fn demographics_round_trip_and_align() {
        let s = schema();
        let rows = vec![
            ("b".to_string(), vec!["hi".to_string(); 8]),
            (
                "a".to_string(),
                vec![
                    "lo".into(),
                    "mid".into(),
                    "hi".into(),
                    "lo".into(),
                    "lo".into(),
                    "lo".into(),
                    "lo".into(),
                    "lo".into(),
                ],
            ),
        ];
        let mut buf = Vec::new();
        write_demographics(&mut buf, &s, &rows).unwrap();
        let recs = read_demographics(buf.as_slice(), &s).unwrap();
        assert_eq!(recs[0].1 .0, [1.0; 8]);
        assert_eq!(recs[1].1 .0[..3], [0.0, 0.5, 1.0]);
        let trajs = vec![RawTrajectory::new("a", vec![]), RawTrajectory::new("b", vec![])];
        let aligned = align_demographics(&trajs, &recs).unwrap();
        assert_eq!(aligned[1].0, [1.0; 8]);
        let missing = vec![RawTrajectory::new("c", vec![])];
        assert!(align_demographics(&missing, &recs).is_err());
    }

    #[test]
    fn demographic_errors() {
        let s = schema();
        let bad = "traj_id,f1,f2,f3,f4,f5,f6,f7,f8\na,lo,lo,lo,lo,lo,lo,lo,huge\n";
        assert!(matches!(read_demographics(bad.as_bytes(), &s), Err(Error::UnknownCategory { .. })));
        let missing = "traj_id,f1\na,lo\n";
        assert!(matches!(read_demographics(missing.as_bytes(), &s), Err(Error::MissingField(_))));
        let dup = "traj_id,f1,f2,f3,f4,f5,f6,f7,f8\na,lo,lo,lo,lo,lo,lo,lo,lo\na,lo,lo,lo,lo,lo,lo,lo,lo\n";
        assert!(matches!(read_demographics(dup.as_bytes(), &s), Err(Error::Parse(_))));
    }
}
