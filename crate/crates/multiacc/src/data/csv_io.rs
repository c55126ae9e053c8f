//! Dataset CSV reader/writer. UTF-8, header row, decimal floats; group
//! columns carry the schema prefix and never enter the feature matrix.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{Dataset, GroupColumn, Schema};

enum ColumnRole {
    Label,
    Group(usize),
    Feature(usize),
    /// One-hot expanded: starting feature slot and category list.
    OneHot(usize, Vec<String>),
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();

    let mut roles: Vec<ColumnRole> = Vec::with_capacity(headers.len());
    let mut feature_names: Vec<String> = Vec::new();
    let mut group_names: Vec<String> = Vec::new();
    let mut label_seen = false;
    for h in headers.iter() {
        if h == schema.label_column {
            roles.push(ColumnRole::Label);
            label_seen = true;
        } else if let Some(stripped) = h.strip_prefix(&schema.group_prefix) {
            roles.push(ColumnRole::Group(group_names.len()));
            group_names.push(stripped.to_string());
        } else if let Some(cats) = schema.one_hot.get(h) {
            roles.push(ColumnRole::OneHot(feature_names.len(), cats.clone()));
            for c in cats {
                feature_names.push(format!("{h}={c}"));
            }
        } else {
            roles.push(ColumnRole::Feature(feature_names.len()));
            feature_names.push(h.to_string());
        }
    }
    if !label_seen {
        return Err(Error::format(
            "1:1",
            format!("missing label column '{}'", schema.label_column),
        ));
    }

    let d = feature_names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut group_values: Vec<Vec<String>> = vec![Vec::new(); group_names.len()];

    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row_no = ri + 2; // 1-based, after the header
        let mut row = vec![0.0; d];
        for (ci, cell) in record.iter().enumerate() {
            match &roles[ci] {
                ColumnRole::Label => {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        Error::format(
                            format!("{row_no}:{}", ci + 1),
                            format!("unparseable label '{cell}'"),
                        )
                    })?;
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::format(
                            format!("{row_no}:{}", ci + 1),
                            format!("label must be 0 or 1, got '{cell}'"),
                        ));
                    }
                    labels.push(v);
                }
                ColumnRole::Group(g) => group_values[*g].push(cell.to_string()),
                ColumnRole::Feature(k) => {
                    let v: f64 = cell.trim().parse().map_err(|_| {
                        Error::format(
                            format!("{row_no}:{}", ci + 1),
                            format!("unparseable cell '{cell}'"),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(Error::format(
                            format!("{row_no}:{}", ci + 1),
                            "non-finite feature value",
                        ));
                    }
                    row[*k] = v;
                }
                ColumnRole::OneHot(start, cats) => {
                    let pos = cats.iter().position(|c| c == cell.trim()).ok_or_else(|| {
                        Error::format(
                            format!("{row_no}:{}", ci + 1),
                            format!("unknown category '{cell}' for one-hot column"),
                        )
                    })?;
                    row[start + pos] = 1.0;
                }
            }
        }
        rows.push(row);
    }

    let groups = group_names
        .into_iter()
        .zip(group_values)
        .map(|(name, values)| GroupColumn { name, values })
        .collect();
    Dataset::new(
        Matrix::from_rows(rows)?,
        labels,
        feature_names,
        groups,
        format!("csv:{}", path.display()),
    )
}

pub fn write_csv(dataset: &Dataset, schema: &Schema, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = dataset.feature_names.clone();
    for g in &dataset.groups {
        header.push(format!("{}{}", schema.group_prefix, g.name));
    }
    header.push(schema.label_column.clone());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..dataset.n() {
        let mut rec: Vec<String> = dataset.features.row(i).iter().map(|v| v.to_string()).collect();
        for g in &dataset.groups {
            rec.push(g.values[i].clone());
        }
        rec.push((dataset.labels[i] as i64).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let location = match e.position() {
        Some(p) => format!("{}:1", p.line()),
        None => "0:0".to_string(),
    };
    Error::format(location, e.to_string())
}
