//! Tabular input: schema, CSV loading, target-class labels, splits and
//! synthetic data generation.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file is empty")]
    EmptyFile,
    #[error("no data rows")]
    NoRows,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid synthetic data request: {0}")]
    Synth(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical(name: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub label_column: String,
    pub target_class: String,
    /// Shown in the ELSE branch of rendered rule sets. Derived from the
    /// target class when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_label: Option<String>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, label_column: &str, target_class: &str) -> Self {
        Schema {
            features,
            label_column: label_column.to_string(),
            target_class: target_class.to_string(),
            negative_label: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.features.is_empty() {
            return Err(DataError::Schema("no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.trim().is_empty() {
                return Err(DataError::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate feature `{}`", f.name)));
            }
        }
        if seen.contains(self.label_column.as_str()) {
            return Err(DataError::Schema(format!(
                "label column `{}` is listed as a feature",
                self.label_column
            )));
        }
        Ok(())
    }

    pub fn negative_label(&self) -> String {
        if let Some(n) = &self.negative_label {
            return n.clone();
        }
        match self.target_class.as_str() {
            "1" => "0".into(),
            "True" => "False".into(),
            "true" => "false".into(),
            "yes" => "no".into(),
            t => format!("not {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub schema: Schema,
    pub rows: Vec<Record>,
}

impl RawDataset {
    pub fn new(schema: Schema, rows: Vec<Record>) -> Result<Self, DataError> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(DataError::NoRows);
        }
        for (i, r) in rows.iter().enumerate() {
            if r.values.len() != schema.features.len() {
                return Err(DataError::Schema(format!(
                    "row {} has {} values, expected {}",
                    i + 1,
                    r.values.len(),
                    schema.features.len()
                )));
            }
        }
        Ok(RawDataset { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r.values[feature])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.schema.features.iter().map(|f| f.name.as_str()).collect();
        header.push(&self.schema.label_column);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            rec.push(r.label.clone());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        self.write_csv(f)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "?" | "NaN" | "nan")
}

fn parse_cell(kind: FeatureKind, cell: &str, row: usize, column: &str) -> Result<Value, DataError> {
    if is_missing(cell) {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match kind {
        FeatureKind::Continuous => match cell.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Number(x)),
            _ => Err(DataError::NotNumeric {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            }),
        },
        FeatureKind::Categorical => Ok(Value::Category(cell.trim().to_string())),
    }
}

fn column_positions(headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>, DataError> {
    names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))
        })
        .collect()
}

/// Reads a labeled dataset. Columns are matched by header name; extra
/// columns are ignored. Row numbers in errors are one-based data rows.
pub fn read_csv<R: Read>(input: R, schema: &Schema) -> Result<RawDataset, DataError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut names: Vec<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
    names.push(&schema.label_column);
    let pos = column_positions(&headers, &names)?;
    let label_pos = pos[pos.len() - 1];

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let values = schema
            .features
            .iter()
            .zip(&pos)
            .map(|(f, &p)| parse_cell(f.kind, rec.get(p).unwrap_or(""), row, &f.name))
            .collect::<Result<Vec<_>, _>>()?;
        let label = rec.get(label_pos).unwrap_or("").trim();
        if is_missing(label) {
            return Err(DataError::MissingValue {
                row,
                column: schema.label_column.clone(),
            });
        }
        rows.push(Record {
            values,
            label: label.to_string(),
        });
    }
    RawDataset::new(schema.clone(), rows)
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawDataset, DataError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    if f.metadata().map(|m| m.len() == 0).unwrap_or(false) {
        return Err(DataError::EmptyFile);
    }
    read_csv(f, schema)
}

/// Reads only the feature columns, allowing zero rows. Used at prediction
/// time, where the label column may be absent.
pub fn read_feature_rows<R: Read>(input: R, features: &[FeatureSpec]) -> Result<Vec<Vec<Value>>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let names: Vec<&str> = features.iter().map(|f| f.name.as_str()).collect();
    let pos = column_positions(&headers, &names)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let values = features
            .iter()
            .zip(&pos)
            .map(|(f, &p)| parse_cell(f.kind, rec.get(p).unwrap_or(""), i + 1, &f.name))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    Ok(rows)
}

/// `true` for rows whose raw label equals the target class.
pub fn binarize_labels(ds: &RawDataset) -> Vec<bool> {
    let labels: Vec<bool> = ds.rows.iter().map(|r| r.label == ds.schema.target_class).collect();
    if !labels.iter().any(|&l| l) {
        log::warn!(
            "target class `{}` does not occur in column `{}`; every row is negative",
            ds.schema.target_class,
            ds.schema.label_column
        );
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Holdout(f64),
    StratifiedKFold(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified partitions of the row indices. Holdout yields one fold.
pub fn split(labels: &[bool], spec: &SplitSpec) -> Result<Vec<Fold>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    match spec.kind {
        SplitKind::Holdout(fraction) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(DataError::Split(format!("holdout fraction {fraction} outside (0, 1)")));
            }
            let n = labels.len();
            let n_test = ((n as f64) * fraction).round() as usize;
            if n_test == 0 || n_test >= n {
                return Err(DataError::Split(format!(
                    "holdout fraction {fraction} leaves an empty side on {n} rows"
                )));
            }
            let test_pos = (((pos.len() as f64) * fraction).round() as usize).min(n_test);
            let test_neg = (n_test - test_pos).min(neg.len());
            let test_pos = n_test - test_neg;
            let mut test: Vec<usize> = pos[..test_pos].iter().chain(&neg[..test_neg]).copied().collect();
            let mut train: Vec<usize> = pos[test_pos..].iter().chain(&neg[test_neg..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            Ok(vec![Fold { train, test }])
        }
        SplitKind::StratifiedKFold(k) => {
            if k < 2 {
                return Err(DataError::Split(format!("k = {k}, need at least 2 folds")));
            }
            if pos.is_empty() || neg.is_empty() {
                return Err(DataError::Split(
                    "stratified folds need both positive and negative rows".into(),
                ));
            }
            if k > pos.len() {
                return Err(DataError::Split(format!(
                    "k = {k} exceeds the {} positive rows",
                    pos.len()
                )));
            }
            let mut buckets = vec![Vec::new(); k];
            // negatives continue the round-robin where positives stopped so
            // fold sizes differ by at most one
            for (j, &i) in pos.iter().chain(&neg).enumerate() {
                buckets[j % k].push(i);
            }
            let folds = (0..k)
                .map(|f| {
                    let mut test = buckets[f].clone();
                    test.sort_unstable();
                    let mut train: Vec<usize> = buckets
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, b)| b.iter().copied())
                        .collect();
                    train.sort_unstable();
                    Fold { train, test }
                })
                .collect();
            Ok(folds)
        }
    }
}

/// Uniform `[0, 100]` continuous features `f1..fD` with independent labels;
/// each row is positive with probability `imbalance_ratio`.
pub fn synth_generate(
    n_records: usize,
    n_features: usize,
    imbalance_ratio: f64,
    seed: u64,
) -> Result<(RawDataset, Vec<bool>), DataError> {
    if n_records == 0 {
        return Err(DataError::Synth("n_records must be at least 1".into()));
    }
    if n_features == 0 {
        return Err(DataError::Synth("n_features must be at least 1".into()));
    }
    if !(imbalance_ratio > 0.0 && imbalance_ratio <= 0.5) {
        return Err(DataError::Synth(format!(
            "imbalance ratio {imbalance_ratio} outside (0, 0.5]"
        )));
    }
    let features = (1..=n_features)
        .map(|i| FeatureSpec::continuous(&format!("f{i}")))
        .collect();
    let schema = Schema::new(features, "label", "1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_records);
    let mut labels = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        // two decimals keeps the CSV form short and exact on reload
        let values = (0..n_features)
            .map(|_| Value::Number(rng.gen_range(0..=10_000u32) as f64 / 100.0))
            .collect();
        let positive = rng.gen_bool(imbalance_ratio);
        labels.push(positive);
        rows.push(Record {
            values,
            label: if positive { "1" } else { "0" }.to_string(),
        });
    }
    Ok((RawDataset::new(schema, rows)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE5: &str =
        "CPU,MEM,Label\n95,10,1\n80,10,0\n81,85,1\n10,85,0\n10,10,0\n82,10,0\n85,10,0\n81,10,0\n";

    fn table5_schema() -> Schema {
        Schema::new(
            vec![FeatureSpec::continuous("CPU"), FeatureSpec::continuous("MEM")],
            "Label",
            "1",
        )
    }

    #[test]
    fn loads_table5() {
        let ds = read_csv(TABLE5.as_bytes(), &table5_schema()).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.rows[0].values, vec![Value::Number(95.0), Value::Number(10.0)]);
        let labels = binarize_labels(&ds);
        let pos: Vec<usize> = (0..8).filter(|&i| labels[i]).collect();
        assert_eq!(pos, vec![0, 2]);
    }

    #[test]
    fn single_row() {
        let ds = read_csv("CPU,MEM,Label\n1,2,0\n".as_bytes(), &table5_schema()).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn load_errors_name_coordinates() {
        let err = read_csv("CPU,MEM,Label\n1,2,0\nabc,3,1\n".as_bytes(), &table5_schema()).unwrap_err();
        assert_eq!(err.to_string(), "row 2, column `CPU`: `abc` is not a finite number");
        let err = read_csv("CPU,Label\n1,0\n".as_bytes(), &table5_schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "MEM"));
        let err = read_csv("CPU,MEM,Label\n1,,0\n".as_bytes(), &table5_schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingValue { row: 1, .. }));
        assert!(matches!(
            read_csv("".as_bytes(), &table5_schema()).unwrap_err(),
            DataError::EmptyFile
        ));
        assert!(matches!(
            read_csv("CPU,MEM,Label\n".as_bytes(), &table5_schema()).unwrap_err(),
            DataError::NoRows
        ));
    }

    #[test]
    fn schema_validation() {
        let mut s = table5_schema();
        s.features.push(FeatureSpec::continuous("CPU"));
        assert!(s.validate().is_err());
        let mut s = table5_schema();
        s.label_column = "MEM".into();
        assert!(s.validate().is_err());
        let mut s = table5_schema();
        s.features[0].name = " ".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn label_edge_cases() {
        let mut ds = read_csv(TABLE5.as_bytes(), &table5_schema()).unwrap();
        ds.schema.target_class = "7".into();
        assert!(binarize_labels(&ds).iter().all(|&l| !l));
        ds.schema.target_class = "1".into();
        for r in &mut ds.rows {
            r.label = "1".into();
        }
        assert!(binarize_labels(&ds).iter().all(|&l| l));
    }

    #[test]
    fn holdout_is_deterministic() {
        let ds = read_csv(TABLE5.as_bytes(), &table5_schema()).unwrap();
        let labels = binarize_labels(&ds);
        let spec = SplitSpec {
            kind: SplitKind::Holdout(0.25),
            seed: 11,
        };
        let a = split(&labels, &spec).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].train.len(), a[0].test.len()), (6, 2));
        assert_eq!(a, split(&labels, &spec).unwrap());
    }

    #[test]
    fn stratified_two_fold() {
        let ds = read_csv(TABLE5.as_bytes(), &table5_schema()).unwrap();
        let labels = binarize_labels(&ds);
        let folds = split(
            &labels,
            &SplitSpec {
                kind: SplitKind::StratifiedKFold(2),
                seed: 3,
            },
        )
        .unwrap();
        for f in &folds {
            assert_eq!(f.test.iter().filter(|&&i| labels[i]).count(), 1);
        }
        let err = split(
            &labels,
            &SplitSpec {
                kind: SplitKind::StratifiedKFold(5),
                seed: 3,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn synth_basic() {
        let (ds, labels) = synth_generate(100, 5, 0.5, 9).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.schema.features.len(), 5);
        let pos = labels.iter().filter(|&&l| l).count();
        assert!((30..=70).contains(&pos), "{pos}");
        let (again, _) = synth_generate(100, 5, 0.5, 9).unwrap();
        assert_eq!(ds, again);
        assert!(synth_generate(10, 2, 0.6, 1).is_err());
        assert!(synth_generate(0, 2, 0.1, 1).is_err());
    }

    #[test]
    fn negative_label_defaults() {
        let mut s = table5_schema();
        assert_eq!(s.negative_label(), "0");
        s.target_class = "malignant".into();
        assert_eq!(s.negative_label(), "not malignant");
        s.negative_label = Some("benign".into());
        assert_eq!(s.negative_label(), "benign");
    }
}
