//! Plaintext dataset format: CSV with a header row whose last column is
//! `label`; every other column is a real-valued feature.

use serde::{Deserialize, Serialize};

use super::ComputeError;
use crate::types::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Row>,
}

fn parse_err(e: impl std::fmt::Display) -> ComputeError {
    ComputeError::Parse(e.to_string())
}

fn parse_feature(field: &str, line: usize) -> Result<f64, ComputeError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| ComputeError::Parse(format!("line {line}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(ComputeError::Parse(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

impl Dataset {
    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn parse_csv(bytes: &[u8]) -> Result<Dataset, ComputeError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
        let header = reader.headers().map_err(parse_err)?.clone();
        let columns: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
        if columns.last().map(String::as_str) != Some("label") {
            return Err(ComputeError::Parse("last column must be `label`".into()));
        }
        let feature_names = columns[..columns.len() - 1].to_vec();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(parse_err)?;
            let line = i + 2;
            if record.len() != columns.len() {
                return Err(ComputeError::Parse(format!(
                    "line {line}: {} fields, header has {}",
                    record.len(),
                    columns.len()
                )));
            }
            let features = record
                .iter()
                .take(feature_names.len())
                .map(|f| parse_feature(f, line))
                .collect::<Result<Vec<_>, _>>()?;
            let label = record[feature_names.len()].trim().to_string();
            if label.is_empty() {
                return Err(ComputeError::Parse(format!("line {line}: empty label")));
            }
            rows.push(Row { features, label });
        }
        Ok(Dataset { feature_names, rows })
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
            rec.push(row.label.clone());
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn check_labels(&self, label_set: &[Label]) -> Result<(), ComputeError> {
        match self.rows.iter().find(|r| !label_set.contains(&r.label)) {
            Some(r) => Err(ComputeError::UnknownLabel(r.label.clone())),
            None => Ok(()),
        }
    }

    /// Row-wise concatenation in argument order. Empty inputs contribute no
    /// rows and impose no dimension.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset, ComputeError> {
        let mut out: Option<Dataset> = None;
        for part in parts.iter().filter(|p| !p.is_empty()) {
            match &mut out {
                None => out = Some(part.clone()),
                Some(acc) => {
                    if acc.dimension() != part.dimension() {
                        return Err(ComputeError::DimensionMismatch {
                            expected: acc.dimension(),
                            got: part.dimension(),
                        });
                    }
                    acc.rows.extend(part.rows.iter().cloned());
                }
            }
        }
        Ok(out.unwrap_or(Dataset {
            feature_names: Vec::new(),
            rows: Vec::new(),
        }))
    }
}

/// Feature rows for a prediction request. A trailing `label` column, if
/// present, is ignored.
pub fn parse_unlabeled_csv(bytes: &[u8]) -> Result<Vec<Vec<f64>>, ComputeError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(parse_err)?.clone();
    let has_label = header.iter().next_back().map(str::trim) == Some("label");
    let width = header.len() - usize::from(has_label);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(parse_err)?;
        if record.len() != header.len() {
            return Err(ComputeError::Parse(format!("line {}: wrong field count", i + 2)));
        }
        rows.push(
            record
                .iter()
                .take(width)
                .map(|f| parse_feature(f, i + 2))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(rows)
}
