use std::fs::{self, File};
use std::path::Path;

use super::encode::{ColumnSpec, EncodeReport, Encoder, RawTable, Schema};
use super::{split_indices, TabularDataset};
use crate::{Error, Result};

pub fn read_raw(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    RawTable::from_reader(file)
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::from_json(&text)
}

/// Reads `path`, fits the encoder on the whole file and encodes it.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<(TabularDataset, Encoder)> {
    let table = read_raw(path.as_ref())?;
    let encoder = Encoder::fit(&table, schema)?;
    let (data, _) = encoder.encode(&table)?;
    Ok((data, encoder))
}

#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub train: TabularDataset,
    pub test: TabularDataset,
    /// Fitted on the training rows only.
    pub encoder: Encoder,
    /// Unseen categorical levels in the test rows.
    pub test_report: EncodeReport,
}

/// Splits the raw rows, fits the encoder on the training part and encodes
/// both parts with it.
pub fn load_csv_split(
    path: impl AsRef<Path>,
    schema: &Schema,
    test_fraction: f64,
    seed: u64,
) -> Result<LoadedSplit> {
    let table = read_raw(path.as_ref())?;
    split_raw(&table, schema, test_fraction, seed)
}

pub fn split_raw(
    table: &RawTable,
    schema: &Schema,
    test_fraction: f64,
    seed: u64,
) -> Result<LoadedSplit> {
    let (train_idx, test_idx) = split_indices(table.rows.len(), test_fraction, seed)?;
    let train_raw = table.subset(&train_idx);
    let test_raw = table.subset(&test_idx);
    let encoder = Encoder::fit(&train_raw, schema)?;
    let (train, _) = encoder.encode(&train_raw)?;
    let (test, test_report) = encoder.encode(&test_raw)?;
    Ok(LoadedSplit {
        train,
        test,
        encoder,
        test_report,
    })
}

pub fn write_raw(table: &RawTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.headers)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Counterfactual augmentation before encoding: the rows, then a copy of
/// each with the protected cell swapped for the column's other value.
pub fn augment_raw(table: &RawTable, schema: &Schema) -> Result<RawTable> {
    let col = table.column_index(&schema.protected)?;
    let mut values: Vec<&str> = table.rows.iter().map(|r| r[col].as_str()).collect();
    values.sort_unstable();
    values.dedup();
    let one = schema.protected_one_value.as_str();
    let other = match values.as_slice() {
        [a, b] if *a == one => b.to_string(),
        [a, b] if *b == one => a.to_string(),
        _ => {
            return Err(Error::Data(format!(
                "protected column {} must hold {one:?} and exactly one other value to be negated, found {values:?}",
                schema.protected
            )))
        }
    };
    let mut rows = table.rows.clone();
    rows.extend(table.rows.iter().map(|r| {
        let mut copy = r.clone();
        copy[col] = if copy[col] == one { other.clone() } else { one.to_string() };
        copy
    }));
    Ok(RawTable {
        headers: table.headers.clone(),
        rows,
    })
}

/// Schema describing an already-encoded dataset: every feature is numeric
/// and left unstandardized, so reading the pair back reproduces the data.
pub fn encoded_schema(data: &TabularDataset) -> Schema {
    Schema {
        columns: data.column_names().into_iter().map(ColumnSpec::numeric).collect(),
        label: data.label_name().to_string(),
        protected: data.columns()[data.protected_index()].name.clone(),
        positive_label_value: "1".into(),
        protected_one_value: "1".into(),
        standardize: false,
        protected_deploy_absent: false,
        provenance: Some(data.provenance()),
    }
}

/// Writes the encoded rows as CSV (features then label) and the matching
/// schema JSON.
pub fn write_dataset(
    data: &TabularDataset,
    csv_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = data.column_names();
    header.push(data.label_name().to_string());
    w.write_record(&header)?;
    let mut cells = Vec::with_capacity(header.len());
    for (row, label) in data.rows().zip(data.labels()) {
        cells.clear();
        // `Display` for f64 prints the shortest string that parses back exactly.
        cells.extend(row.iter().map(|v| v.to_string()));
        cells.push(label.to_string());
        w.write_record(&cells)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let schema_path = schema_path.as_ref();
    let json = serde_json::to_string_pretty(&encoded_schema(data))?;
    fs::write(schema_path, json + "\n").map_err(|e| Error::io(schema_path, e))
}
