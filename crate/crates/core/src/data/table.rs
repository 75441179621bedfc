//! CSV and JSONL ingestion and emission for [`FeatureMatrix`] tables.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64` (never more than 17 significant digits), so a save/load cycle is
//! exact.

use std::path::Path;

use serde_json::{Map, Value};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Jsonl,
}

impl TableFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(TableFormat::Csv),
            Some("jsonl") | Some("ndjson") => Ok(TableFormat::Jsonl),
            _ => Err(Error::invalid(format!(
                "cannot infer table format of {}",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TableOptions {
    /// Column to split off as integer class labels.
    pub label_column: Option<String>,
    /// Accept empty cells and `NaN` as missing values (stored as NaN).
    pub allow_missing: bool,
}

impl TableOptions {
    pub fn labelled(col: &str) -> Self {
        Self {
            label_column: Some(col.to_string()),
            allow_missing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub matrix: FeatureMatrix,
    pub labels: Option<Vec<usize>>,
}

pub fn load_table(path: &Path, format: TableFormat, opts: &TableOptions) -> Result<Table> {
    let text = fsutil::read_string(path)?;
    match format {
        TableFormat::Csv => parse_csv(&text, opts),
        TableFormat::Jsonl => parse_jsonl(&text, opts),
    }
}

fn parse_cell(raw: &str, row: usize, col: &str, allow_missing: bool) -> Result<f64> {
    let s = raw.trim();
    if allow_missing && (s.is_empty() || s.eq_ignore_ascii_case("nan")) {
        return Ok(f64::NAN);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::format(format!(
            "row {row}, column {col:?}: non-numeric value {raw:?}"
        ))),
    }
}

fn parse_label(raw: &str, row: usize) -> Result<usize> {
    let s = raw.trim();
    s.parse::<usize>()
        .or_else(|_| match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
            _ => Err(()),
        })
        .map_err(|_| Error::format(format!("row {row}: label {raw:?} is not a class id")))
}

pub fn parse_csv(text: &str, opts: &TableOptions) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::format(format!("header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let label_idx = match &opts.label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::format(format!("label column {name:?} not in header")))?,
        ),
        None => None,
    };
    let col_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::format(format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::format(format!(
                "row {row}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(parse_label(cell, row)?);
            } else {
                values.push(parse_cell(cell, row, &header[j], opts.allow_missing)?);
            }
        }
        rows += 1;
    }
    let matrix = FeatureMatrix::new(rows, col_names.len(), values, col_names)?;
    Ok(Table {
        matrix,
        labels: label_idx.map(|_| labels),
    })
}

pub fn parse_jsonl(text: &str, opts: &TableOptions) -> Result<Table> {
    let mut keys: Option<Vec<String>> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = rows + 1;
        let obj: Map<String, Value> = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?;
        let these: Vec<String> = obj.keys().cloned().collect();
        let expected = keys.get_or_insert_with(|| these.clone());
        if *expected != these {
            return Err(Error::format(format!(
                "row {row}: expected fields {expected:?}, found {these:?}"
            )));
        }
        for (k, v) in &obj {
            let is_label = opts.label_column.as_deref() == Some(k.as_str());
            let cell = match v {
                Value::Number(n) => n.to_string(),
                Value::Null if opts.allow_missing => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if is_label {
                labels.push(parse_label(&cell, row)?);
            } else if matches!(v, Value::Number(_) | Value::Null) || opts.allow_missing {
                values.push(parse_cell(&cell, row, k, opts.allow_missing)?);
            } else {
                return Err(Error::format(format!(
                    "row {row}, column {k:?}: non-numeric value {v}"
                )));
            }
        }
        rows += 1;
    }
    let keys = keys.unwrap_or_default();
    if let Some(name) = &opts.label_column {
        if rows > 0 && !keys.contains(name) {
            return Err(Error::format(format!("label column {name:?} not in records")));
        }
    }
    let col_names: Vec<String> = keys
        .into_iter()
        .filter(|k| opts.label_column.as_deref() != Some(k.as_str()))
        .collect();
    let matrix = FeatureMatrix::new(rows, col_names.len(), values, col_names)?;
    Ok(Table {
        matrix,
        labels: opts.label_column.as_ref().map(|_| labels),
    })
}

pub(crate) fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v.is_nan() {
        "NaN".to_string()
    } else if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Render a table as CSV text; labels, when given, form the last column.
pub fn to_csv(m: &FeatureMatrix, labels: Option<(&str, &[usize])>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = m.col_names().iter().map(String::as_str).collect();
    if let Some((name, _)) = labels {
        header.push(name);
    }
    w.write_record(&header)
        .map_err(|e| Error::format(e.to_string()))?;
    for r in 0..m.rows() {
        let mut rec: Vec<String> = m.row(r).iter().map(|&v| fmt_f64(v)).collect();
        if let Some((_, ys)) = labels {
            rec.push(ys[r].to_string());
        }
        w.write_record(&rec).map_err(|e| Error::format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::format(e.to_string()))
}

pub fn to_jsonl(m: &FeatureMatrix, labels: Option<(&str, &[usize])>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let mut obj = Map::new();
        for (name, &v) in m.col_names().iter().zip(m.row(r)) {
            let val = serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number);
            obj.insert(name.clone(), val);
        }
        if let Some((name, ys)) = labels {
            obj.insert(name.to_string(), Value::from(ys[r]));
        }
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

pub fn save_table(
    path: &Path,
    format: TableFormat,
    m: &FeatureMatrix,
    labels: Option<(&str, &[usize])>,
) -> Result<()> {
    if let Some((_, ys)) = labels {
        if ys.len() != m.rows() {
            return Err(Error::shape(format!("{} labels for {} rows", ys.len(), m.rows())));
        }
    }
    let text = match format {
        TableFormat::Csv => to_csv(m, labels)?,
        TableFormat::Jsonl => to_jsonl(m, labels),
    };
    fsutil::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_with_label() {
        let t = parse_csv("a,b,label\n1,2,0\n", &TableOptions::labelled("label")).unwrap();
        assert_eq!((t.matrix.rows(), t.matrix.cols()), (1, 2));
        assert_eq!(t.matrix.row(0), &[1.0, 2.0]);
        assert_eq!(t.matrix.col_names(), &["a", "b"]);
        assert_eq!(t.labels, Some(vec![0]));
    }

    #[test]
    fn csv_ragged_row() {
        let err = parse_csv("a,b,label\n1,2,0\n3,4\n", &TableOptions::labelled("label")).unwrap_err();
        assert!(err.to_string().starts_with("row 2: expected 3 fields"), "{err}");
    }

    #[test]
    fn csv_non_numeric() {
        let err = parse_csv("a,b\n1,x\n", &TableOptions::default()).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "{err}");
    }

    #[test]
    fn csv_missing_markers() {
        let opts = TableOptions {
            label_column: None,
            allow_missing: true,
        };
        let t = parse_csv("a,b\n,NaN\n1,2\n", &opts).unwrap();
        assert!(t.matrix.get(0, 0).is_nan() && t.matrix.get(0, 1).is_nan());
        assert!(parse_csv("a,b\n,NaN\n", &TableOptions::default()).is_err());
    }

    #[test]
    fn csv_quoted_header() {
        let t = parse_csv("\"a,1\",b\n1,2\n", &TableOptions::default()).unwrap();
        assert_eq!(t.matrix.col_names()[0], "a,1");
    }

    #[test]
    fn jsonl_matches_csv() {
        let opts = TableOptions::labelled("label");
        let c = parse_csv("a,b,label\n1,2,0\n3.5,-4,1\n", &opts).unwrap();
        let j = parse_jsonl(
            "{\"a\":1,\"b\":2,\"label\":0}\n{\"a\":3.5,\"b\":-4,\"label\":1}\n",
            &opts,
        )
        .unwrap();
        assert_eq!(c, j);
    }

    #[test]
    fn jsonl_inconsistent_keys() {
        let err = parse_jsonl("{\"a\":1}\n{\"b\":2}\n", &TableOptions::default()).unwrap_err();
        assert!(err.to_string().starts_with("row 2"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_table(
            Path::new("/definitely/not/here.csv"),
            TableFormat::Csv,
            &TableOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn save_load_roundtrip(vals in proptest::collection::vec(-1e300f64..1e300, 1..30), jsonl in any::<bool>()) {
            let n = vals.len();
            let m = FeatureMatrix::with_prefix(n, 1, vals, "v").unwrap();
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let dir = tempfile::tempdir().unwrap();
            let (fmt, name) = if jsonl { (TableFormat::Jsonl, "t.jsonl") } else { (TableFormat::Csv, "t.csv") };
            let path = dir.path().join(name);
            save_table(&path, fmt, &m, Some(("label", &labels))).unwrap();
            let t = load_table(&path, fmt, &TableOptions::labelled("label")).unwrap();
            prop_assert_eq!(t.matrix, m);
            prop_assert_eq!(t.labels.unwrap(), labels);
        }
    }
}
