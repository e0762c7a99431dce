//! CSV dataset ingestion with strict validation.
//!
//! Ingestion is total: every malformed cell produces a typed error carrying
//! the data row (1-based, excluding the header) and column name; a partial
//! dataset is never returned. Missing values are a hard error.

use std::path::Path;

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::DesignMatrix;

struct ColumnIndex {
    outcome: usize,
    receipt: usize,
    assignment: usize,
    covariates: Vec<usize>,
    block: Option<usize>,
    cluster: Option<usize>,
    weight: Option<usize>,
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn raw_cell<'a>(
    record: &'a csv::StringRecord,
    row: usize,
    column: &str,
    index: usize,
) -> Result<&'a str> {
    let value = record.get(index).unwrap_or("").trim();
    if value.is_empty() {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    Ok(value)
}

fn numeric_cell(record: &csv::StringRecord, row: usize, column: &str, index: usize) -> Result<f64> {
    let raw = raw_cell(record, row, column, index)?;
    let parsed: f64 = raw.parse().map_err(|_| Error::NonFiniteValue {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !parsed.is_finite() {
        return Err(Error::NonFiniteValue {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(parsed)
}

fn binary_cell(record: &csv::StringRecord, row: usize, column: &str, index: usize) -> Result<u8> {
    let value = numeric_cell(record, row, column, index)?;
    if value == 0.0 {
        Ok(0)
    } else if value == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryValue {
            row,
            column: column.to_string(),
            value: format!("{value}"),
        })
    }
}

/// Loads and validates a dataset according to the config's column map.
pub fn load_dataset(path: &Path, config: &RunConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let columns = &config.columns;
    let index = ColumnIndex {
        outcome: find_column(&headers, &columns.outcome)?,
        receipt: find_column(&headers, &columns.receipt)?,
        assignment: find_column(&headers, &columns.assignment)?,
        covariates: columns
            .covariates
            .iter()
            .map(|c| find_column(&headers, c))
            .collect::<Result<Vec<_>>>()?,
        block: columns
            .block
            .as_ref()
            .map(|c| find_column(&headers, c))
            .transpose()?,
        cluster: columns
            .cluster
            .as_ref()
            .map(|c| find_column(&headers, c))
            .transpose()?,
        weight: columns
            .weight
            .as_ref()
            .map(|c| find_column(&headers, c))
            .transpose()?,
    };

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut t = Vec::new();
    let mut covariate_rows: Vec<f64> = Vec::new();
    let mut blocks = Vec::new();
    let mut clusters = Vec::new();
    let mut weights = Vec::new();

    for (offset, record) in reader.records().enumerate() {
        let record = record?;
        let row = offset + 1;
        y.push(numeric_cell(&record, row, &columns.outcome, index.outcome)?);
        d.push(binary_cell(&record, row, &columns.receipt, index.receipt)?);
        t.push(binary_cell(
            &record,
            row,
            &columns.assignment,
            index.assignment,
        )?);
        for (name, &col) in columns.covariates.iter().zip(&index.covariates) {
            covariate_rows.push(numeric_cell(&record, row, name, col)?);
        }
        if let (Some(name), Some(col)) = (&columns.block, index.block) {
            blocks.push(raw_cell(&record, row, name, col)?.to_string());
        }
        if let (Some(name), Some(col)) = (&columns.cluster, index.cluster) {
            clusters.push(raw_cell(&record, row, name, col)?.to_string());
        }
        if let (Some(name), Some(col)) = (&columns.weight, index.weight) {
            let w = numeric_cell(&record, row, name, col)?;
            if w <= 0.0 {
                return Err(Error::InvalidValue {
                    row,
                    column: name.clone(),
                    message: format!("weight must be positive, got {w}"),
                });
            }
            weights.push(w);
        }
    }

    let n = y.len();
    let v = columns.covariates.len();
    let x = DesignMatrix::new(n, v, covariate_rows)?;
    let mut data = Dataset::new(y, d, t, x)?;
    if !blocks.is_empty() {
        data = data.with_blocks(blocks)?;
    }
    if !clusters.is_empty() {
        data = data.with_clusters(clusters)?;
    }
    if !weights.is_empty() {
        data = data.with_weights(weights)?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ColumnMap, Design};
    use std::io::Write;

    fn config_for(covariates: Vec<&str>) -> RunConfig {
        RunConfig {
            design: Design::Simple,
            columns: ColumnMap {
                outcome: "y".into(),
                receipt: "d".into(),
                assignment: "t".into(),
                covariates: covariates.into_iter().map(String::from).collect(),
                block: None,
                cluster: None,
                weight: None,
            },
            variance_methods: vec![crate::estimator::VarianceMethod::Db],
            inference: crate::estimator::Reference::T,
            alpha: 0.05,
            block_policy: Default::default(),
            weight_scheme: Default::default(),
            pooling_scheme: Default::default(),
            output: None,
        }
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn loads_hand_fixture() {
        let file = write_csv("y,d,t\n4,1,1\n1,0,1\n2,0,0\n1,0,0\n");
        let data = load_dataset(file.path(), &config_for(vec![])).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(data.n_treated(), 2);
        assert_eq!(data.outcome(), &[4.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn non_binary_receipt_reports_row() {
        let file = write_csv("y,d,t\n4,1,1\n1,2,1\n2,0,0\n1,0,0\n");
        let err = load_dataset(file.path(), &config_for(vec![])).unwrap_err();
        match err {
            Error::NonBinaryValue { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "d");
            }
            other => panic!("expected NonBinaryValue, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_detected() {
        let file = write_csv("y,d,t\n4,1,1\n1,0,0\n");
        let mut config = config_for(vec![]);
        config.columns.outcome = "score".into();
        assert!(matches!(
            load_dataset(file.path(), &config),
            Err(Error::MissingColumn(name)) if name == "score"
        ));
    }

    #[test]
    fn missing_value_reports_locus() {
        let file = write_csv("y,d,t,x\n4,1,1,0.5\n,0,1,0.25\n2,0,0,1\n1,0,0,2\n");
        let err = load_dataset(file.path(), &config_for(vec!["x"])).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 2, .. }));
    }

    #[test]
    fn non_numeric_value_rejected() {
        let file = write_csv("y,d,t\n4,1,1\nabc,0,1\n2,0,0\n1,0,0\n");
        let err = load_dataset(file.path(), &config_for(vec![])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { row: 2, .. }));
        let file = write_csv("y,d,t\n4,1,1\ninf,0,1\n2,0,0\n1,0,0\n");
        assert!(load_dataset(file.path(), &config_for(vec![])).is_err());
    }

    #[test]
    fn all_treated_is_empty_arm() {
        let file = write_csv("y,d,t\n4,1,1\n1,0,1\n");
        assert!(matches!(
            load_dataset(file.path(), &config_for(vec![])),
            Err(Error::EmptyArm)
        ));
    }
}
