//! Monitor input: rows keyed by column name, as newline-delimited JSON
//! objects or CSV with a header. A row that cannot be read or encoded
//! becomes an `Err` carrying the reason, so the stream keeps going.

use std::collections::HashMap;
use std::io::BufRead;

use predsens_core::data::Encoder;
use predsens_core::monitor::RowInput;
use serde_json::Value;

fn encode(encoder: &Encoder, cells: &HashMap<String, String>) -> RowInput {
    encoder
        .encode_record(|name| cells.get(name).map(String::as_str), false)
        .map_err(|e| e.to_string())
}

fn json_cells(line: &str) -> Result<HashMap<String, String>, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err("expected a JSON object keyed by column name".into());
    };
    let mut cells = HashMap::with_capacity(map.len());
    for (key, v) in map {
        let text = match v {
            Value::Null => continue,
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Array(_) | Value::Object(_) => {
                return Err(format!("column {key}: expected a scalar value"))
            }
        };
        cells.insert(key, text);
    }
    Ok(cells)
}

pub fn ndjson_rows<'a, R: BufRead + 'a>(
    reader: R,
    encoder: &'a Encoder,
) -> impl Iterator<Item = RowInput> + 'a {
    reader.lines().filter_map(move |line| match line {
        Err(e) => Some(Err(format!("read error: {e}"))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(json_cells(&l).and_then(|cells| encode(encoder, &cells))),
    })
}

pub fn csv_rows<'a, R: BufRead + 'a>(
    reader: R,
    encoder: &'a Encoder,
) -> Result<Box<dyn Iterator<Item = RowInput> + 'a>, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    Ok(Box::new(rdr.into_records().map(move |record| {
        let record = record.map_err(|e| format!("malformed CSV row: {e}"))?;
        let cells = headers
            .iter()
            .cloned()
            .zip(record.iter().map(str::to_string))
            .collect();
        encode(encoder, &cells)
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use predsens_core::data::{ColumnSpec, RawTable, Schema};

    fn encoder() -> Encoder {
        let table = RawTable::from_reader("x,g,y\n1,a,1\n3,b,0\n".as_bytes()).unwrap();
        let schema = Schema {
            columns: vec![ColumnSpec::numeric("x"), ColumnSpec::categorical("g")],
            label: "y".into(),
            protected: "g".into(),
            positive_label_value: "1".into(),
            protected_one_value: "a".into(),
            standardize: true,
            protected_deploy_absent: false,
            provenance: None,
        };
        Encoder::fit(&table, &schema).unwrap()
    }

    #[test]
    fn ndjson_accepts_numbers_and_strings_and_reports_bad_lines() {
        let enc = encoder();
        let text = "{\"x\": 3, \"g\": \"a\"}\n\n{\"x\": \"1\", \"g\": \"b\"}\nnot json\n{\"g\": \"a\"}\n[1]\n";
        let rows: Vec<RowInput> = ndjson_rows(text.as_bytes(), &enc).collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], Ok(vec![1.0, 1.0]));
        assert_eq!(rows[1], Ok(vec![-1.0, 0.0]));
        assert!(rows[2].as_ref().unwrap_err().contains("invalid JSON"));
        assert!(rows[3].as_ref().unwrap_err().contains("x"));
        assert!(rows[4].is_err());
    }

    #[test]
    fn csv_rows_ignore_extra_columns_and_flag_short_rows() {
        let enc = encoder();
        let text = "g,x,extra\na,3,z\nb\n";
        let rows: Vec<RowInput> = csv_rows(text.as_bytes(), &enc).unwrap().collect();
        assert_eq!(rows[0], Ok(vec![1.0, 1.0]));
        assert!(rows[1].is_err());
    }
}
