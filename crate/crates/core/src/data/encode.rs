use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{FeatureColumn, FeatureKind, Provenance, TabularDataset, IMPUTED_PROTECTED_VALUE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Fixed level order for a categorical column. When absent the levels
    /// seen while fitting are used, sorted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: None,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            levels: None,
        }
    }
}

/// Describes how a raw CSV maps onto model inputs.
///
/// The protected column must be one of `columns`; it is always encoded as a
/// single 0/1 slot (1 where the raw value equals `protected_one_value`),
/// whatever kind it is declared with. The label column is never a feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub label: String,
    pub protected: String,
    pub positive_label_value: String,
    pub protected_one_value: String,
    /// Standardize numeric columns with statistics of the fitting table.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// The protected attribute is unavailable at prediction time; monitors
    /// impute its slot.
    #[serde(default)]
    pub protected_deploy_absent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn yes() -> bool {
    true
}

impl Schema {
    pub fn from_json(s: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("column {} declared twice", c.name)));
            }
            if c.name == self.label {
                return Err(Error::Schema(format!(
                    "label column {} cannot also be a feature",
                    c.name
                )));
            }
        }
        if !seen.contains(self.protected.as_str()) {
            return Err(Error::Schema(format!(
                "protected column {} is not among the declared columns",
                self.protected
            )));
        }
        Ok(())
    }
}

/// CSV contents as trimmed strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in rdr.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(RawTable { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name} not found in CSV header")))
    }

    pub fn subset(&self, indices: &[usize]) -> RawTable {
        RawTable {
            headers: self.headers.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SourceEncoding {
    Numeric { mean: f64, std: f64 },
    Categorical { levels: Vec<String> },
    Protected,
}

/// Counts of categorical values mapped to an all-zero group because the
/// level was not seen when fitting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeReport {
    pub unseen_levels: BTreeMap<String, usize>,
}

impl EncodeReport {
    pub fn total_unseen(&self) -> usize {
        self.unseen_levels.values().sum()
    }
}

/// A schema frozen together with the levels and standardization statistics
/// of the table it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    schema: Schema,
    sources: Vec<SourceEncoding>,
}

impl Encoder {
    pub fn fit(table: &RawTable, schema: &Schema) -> Result<Self> {
        schema.validate()?;
        table.column_index(&schema.label)?;
        let mut sources = Vec::with_capacity(schema.columns.len());
        for spec in &schema.columns {
            let col = table.column_index(&spec.name)?;
            let source = if spec.name == schema.protected {
                SourceEncoding::Protected
            } else {
                match spec.kind {
                    ColumnKind::Numeric => {
                        let values = table
                            .rows
                            .iter()
                            .enumerate()
                            .map(|(i, r)| parse_numeric(&r[col], i, &spec.name))
                            .collect::<Result<Vec<f64>>>()?;
                        let (mean, std) = if schema.standardize {
                            mean_and_std(&values)
                        } else {
                            (0.0, 1.0)
                        };
                        SourceEncoding::Numeric { mean, std }
                    }
                    ColumnKind::Categorical => {
                        let levels = match &spec.levels {
                            Some(levels) => levels.clone(),
                            None => table
                                .rows
                                .iter()
                                .map(|r| r[col].clone())
                                .collect::<BTreeSet<_>>()
                                .into_iter()
                                .collect(),
                        };
                        SourceEncoding::Categorical { levels }
                    }
                }
            };
            sources.push(source);
        }
        Ok(Encoder {
            schema: schema.clone(),
            sources,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Encoded column layout.
    pub fn feature_columns(&self) -> Vec<FeatureColumn> {
        let mut cols = Vec::new();
        for (spec, source) in self.schema.columns.iter().zip(&self.sources) {
            match source {
                SourceEncoding::Categorical { levels } => {
                    cols.extend(levels.iter().map(|level| FeatureColumn {
                        name: format!("{}={}", spec.name, level),
                        kind: FeatureKind::OneHot {
                            group: spec.name.clone(),
                            level: level.clone(),
                        },
                    }))
                }
                _ => cols.push(FeatureColumn::numeric(spec.name.clone())),
            }
        }
        cols
    }

    pub fn n_features(&self) -> usize {
        self.sources
            .iter()
            .map(|s| match s {
                SourceEncoding::Categorical { levels } => levels.len(),
                _ => 1,
            })
            .sum()
    }

    /// Encoded index of the protected slot.
    pub fn protected_index(&self) -> usize {
        let mut idx = 0;
        for source in &self.sources {
            match source {
                SourceEncoding::Protected => return idx,
                SourceEncoding::Categorical { levels } => idx += levels.len(),
                SourceEncoding::Numeric { .. } => idx += 1,
            }
        }
        unreachable!("validated schema always has a protected column")
    }

    pub fn encode(&self, table: &RawTable) -> Result<(TabularDataset, EncodeReport)> {
        let label_col = table.column_index(&self.schema.label)?;
        let cols = self
            .schema
            .columns
            .iter()
            .map(|c| table.column_index(&c.name))
            .collect::<Result<Vec<_>>>()?;

        let mut report = EncodeReport::default();
        let mut features = Vec::with_capacity(table.rows.len() * self.n_features());
        let mut labels = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            if row.len() != table.headers.len() {
                return Err(Error::Data(format!(
                    "row {} has {} cells, header has {}",
                    i + 1,
                    row.len(),
                    table.headers.len()
                )));
            }
            self.encode_cells(
                |c| Some(row[cols[c]].as_str()),
                i,
                false,
                &mut features,
                &mut report,
            )?;
            labels.push(u8::from(row[label_col] == self.schema.positive_label_value));
        }
        let dataset = TabularDataset::new(
            self.feature_columns(),
            features,
            labels,
            self.protected_index(),
            self.schema.provenance.unwrap_or(Provenance::Original),
        )?
        .with_label_name(self.schema.label.clone());
        Ok((dataset, report))
    }

    /// Encodes one record keyed by column name, e.g. a deployment-time
    /// request. The label is not needed. The protected slot is imputed when
    /// the schema marks it deploy-absent or `impute_protected` is set.
    pub fn encode_record<'a, F>(&self, lookup: F, impute_protected: bool) -> Result<Vec<f64>>
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        let impute = impute_protected || self.schema.protected_deploy_absent;
        let mut out = Vec::with_capacity(self.n_features());
        let mut report = EncodeReport::default();
        self.encode_cells(
            |c| lookup(&self.schema.columns[c].name),
            0,
            impute,
            &mut out,
            &mut report,
        )?;
        Ok(out)
    }

    fn encode_cells<'a>(
        &self,
        cell: impl Fn(usize) -> Option<&'a str>,
        row: usize,
        impute_protected: bool,
        out: &mut Vec<f64>,
        report: &mut EncodeReport,
    ) -> Result<()> {
        for (c, (spec, source)) in self.schema.columns.iter().zip(&self.sources).enumerate() {
            if impute_protected && matches!(source, SourceEncoding::Protected) {
                out.push(IMPUTED_PROTECTED_VALUE);
                continue;
            }
            let value = cell(c)
                .ok_or_else(|| Error::Schema(format!("column {} is missing", spec.name)))?;
            match source {
                SourceEncoding::Protected => {
                    out.push(if value == self.schema.protected_one_value { 1.0 } else { 0.0 })
                }
                SourceEncoding::Numeric { mean, std } => {
                    out.push((parse_numeric(value, row, &spec.name)? - mean) / std)
                }
                SourceEncoding::Categorical { levels } => {
                    let hit = levels.iter().position(|l| l == value);
                    if hit.is_none() {
                        *report.unseen_levels.entry(spec.name.clone()).or_default() += 1;
                    }
                    out.extend((0..levels.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(())
    }
}

fn parse_numeric(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!(
            "row {}, column {column}: cannot parse {cell:?} as a number",
            row + 1
        ))),
    }
}

/// Population mean and standard deviation; a zero spread maps to 1.
fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}
