//! Interval rules, the rule-set classifier and its model file.
//!
//! A boundary point becomes a conjunction of per-feature conditions; the
//! zeros of a feature's span are the permitted intervals. A record is
//! positive when any rule fires.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binarize::{decode_point, encode_row, BinarizeError, BitLayout, Condition, Discretization, Range};
use crate::data::{Schema, Value};
use crate::lattice::BitVector;

pub const MODEL_FORMAT: &str = "rulelattice-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot access model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("rule {index}: {source}")]
    Rule {
        index: usize,
        #[source]
        source: BinarizeError,
    },
    #[error("rule {0}: stored conditions do not match its bits")]
    Inconsistent(usize),
    #[error("row has {got} values, model expects {expected}")]
    RowLength { expected: usize, got: usize },
}

/// One constrained feature of a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub feature: usize,
    pub name: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub point: BitVector,
    /// Constrained features in schema order.
    pub atoms: Vec<Atom>,
}

impl Rule {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Whether the rule holds for a row given each feature's interval index
    /// (`None` for values that match no interval).
    pub fn fires(&self, intervals: &[Option<usize>]) -> bool {
        self.atoms
            .iter()
            .all(|a| intervals[a.feature].is_some_and(|z| a.condition.permits(z)))
    }
}

pub fn point_to_rule(a: &BitVector, layout: &BitLayout, disc: &Discretization) -> Result<Rule, BinarizeError> {
    let conditions = decode_point(a, layout, disc)?;
    let atoms = conditions
        .into_iter()
        .enumerate()
        .filter_map(|(feature, c)| {
            c.map(|condition| Atom {
                feature,
                name: disc.features[feature].name.clone(),
                condition,
            })
        })
        .collect();
    Ok(Rule {
        point: a.clone(),
        atoms,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub positive: bool,
    /// Indices of the rules that fired, ascending.
    pub fired: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub schema: Schema,
    pub discretization: Discretization,
    pub layout: BitLayout,
    pub rules: Vec<Rule>,
    /// Effective training configuration, echoed verbatim into the file.
    pub metadata: serde_json::Value,
}

impl RuleSet {
    pub fn from_points(
        points: &[BitVector],
        schema: Schema,
        discretization: Discretization,
        metadata: serde_json::Value,
    ) -> Result<Self, ModelError> {
        let layout = discretization.layout();
        let rules = points
            .iter()
            .enumerate()
            .map(|(index, a)| {
                point_to_rule(a, &layout, &discretization).map_err(|source| ModelError::Rule { index, source })
            })
            .collect::<Result<_, _>>()?;
        Ok(RuleSet {
            schema,
            discretization,
            layout,
            rules,
            metadata,
        })
    }

    pub fn points(&self) -> Vec<BitVector> {
        self.rules.iter().map(|r| r.point.clone()).collect()
    }

    /// Number of rules and mean atoms per rule; `(0, 0.0)` when empty.
    pub fn complexity(&self) -> (usize, f64) {
        let n = self.rules.len();
        if n == 0 {
            return (0, 0.0);
        }
        let atoms: usize = self.rules.iter().map(Rule::atom_count).sum();
        (n, atoms as f64 / n as f64)
    }

    fn intervals(&self, row: &[Value]) -> Result<Vec<Option<usize>>, ModelError> {
        if row.len() != self.discretization.features.len() {
            return Err(ModelError::RowLength {
                expected: self.discretization.features.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.discretization.features)
            .map(|(v, fb)| fb.bins.locate(v).map(|(z, _)| z))
            .collect())
    }

    /// Classifies a raw row through the interval conditions.
    pub fn predict(&self, row: &[Value]) -> Result<Prediction, ModelError> {
        let intervals = self.intervals(row)?;
        let fired: Vec<usize> = (0..self.rules.len())
            .filter(|&i| self.rules[i].fires(&intervals))
            .collect();
        Ok(Prediction {
            positive: !fired.is_empty(),
            fired,
        })
    }

    /// Classifies by lattice cover of the encoded row. Agrees with
    /// [`RuleSet::predict`] on every row.
    pub fn predict_encoded(&self, row: &[Value]) -> Result<Prediction, ModelError> {
        if row.len() != self.discretization.features.len() {
            return Err(ModelError::RowLength {
                expected: self.discretization.features.len(),
                got: row.len(),
            });
        }
        let x = encode_row(row, &self.discretization, &self.layout);
        let fired: Vec<usize> = (0..self.rules.len()).filter(|&i| self.rules[i].point.leq(&x)).collect();
        Ok(Prediction {
            positive: !fired.is_empty(),
            fired,
        })
    }

    /// IF/OR/THEN/ELSE text, one rule per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.rules.is_empty() {
            out.push_str("IF (nothing)\n");
        }
        for (i, rule) in self.rules.iter().enumerate() {
            let head = if i == 0 { "IF" } else { "OR" };
            let body = if rule.atoms.is_empty() {
                "true".to_string()
            } else {
                rule.atoms
                    .iter()
                    .map(|a| format!("{} ∈ {}", a.name, render_condition(&a.condition)))
                    .collect::<Vec<_>>()
                    .join(" and ")
            };
            let _ = writeln!(out, "{head} {body}");
        }
        let label = &self.schema.label_column;
        let _ = writeln!(out, "THEN {label} = {}", self.schema.target_class);
        let _ = writeln!(out, "ELSE {label} = {}", self.schema.negative_label());
        out
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            schema: self.schema.clone(),
            discretization: self.discretization.clone(),
            layout: self.layout.clone(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleEntry {
                    bits: self.layout.format(&r.point),
                    atoms: r.atoms.clone(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let head: FileHeader = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if head.format != MODEL_FORMAT {
            return Err(ModelError::Malformed(format!("unknown format `{}`", head.format)));
        }
        if head.version != MODEL_VERSION {
            return Err(ModelError::Version {
                found: head.version,
                expected: MODEL_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if file.layout != file.discretization.layout() {
            return Err(ModelError::Malformed("layout does not match discretization".into()));
        }
        if file.discretization.features.len() != file.schema.features.len() {
            return Err(ModelError::Malformed("discretization does not match schema".into()));
        }
        let mut rules = Vec::with_capacity(file.rules.len());
        for (index, entry) in file.rules.into_iter().enumerate() {
            let point: BitVector = entry
                .bits
                .parse()
                .map_err(|e| ModelError::Malformed(format!("rule {index}: {e}")))?;
            let rule = point_to_rule(&point, &file.layout, &file.discretization)
                .map_err(|source| ModelError::Rule { index, source })?;
            if rule.atoms != entry.atoms {
                return Err(ModelError::Inconsistent(index));
            }
            rules.push(rule);
        }
        Ok(RuleSet {
            schema: file.schema,
            discretization: file.discretization,
            layout: file.layout,
            rules,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn render_range(r: &Range) -> String {
    if r.to_max {
        format!("[{}, max)", r.lo)
    } else {
        format!("[{}, {})", r.lo, r.hi)
    }
}

pub fn render_condition(c: &Condition) -> String {
    match c {
        Condition::Ranges { ranges } => ranges.iter().map(render_range).collect::<Vec<_>>().join(", "),
        Condition::Categories { values, .. } => format!("{{{}}}", values.join(", ")),
    }
}

#[derive(Deserialize)]
struct FileHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RuleEntry {
    bits: String,
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    schema: Schema,
    discretization: Discretization,
    layout: BitLayout,
    rules: Vec<RuleEntry>,
    metadata: serde_json::Value,
}
