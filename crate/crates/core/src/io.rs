//! CSV ingestion and machine-readable reports.
//!
//! CSV files must carry a header row, use `,` as delimiter and `.` as the
//! decimal point. Non-numeric columns are never dropped silently: they
//! must be excluded by name or parsing fails with a cell-level diagnostic.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blinding::BlindedSample;
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::pca::EigenSystem;
use crate::search::SelectionResult;
use crate::simgen::ProportionTable;

/// Reads a numeric matrix from a CSV file, dropping `exclude_cols` (by
/// header name) first.
pub fn read_csv(path: &Path, exclude_cols: &[String]) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::invalid_data(format!("cannot read {}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::invalid_data(format!("bad header row: {e}")))?
        .iter()
        .map(|h| h.to_string())
        .collect();

    for ex in exclude_cols {
        if !headers.iter().any(|h| h == ex) {
            return Err(Error::invalid_argument(format!(
                "excluded column '{ex}' not present in header"
            )));
        }
    }
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !exclude_cols.contains(&headers[i]))
        .collect();
    if keep.len() < 2 {
        return Err(Error::invalid_data(
            "fewer than 2 numeric columns after exclusions",
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| Error::invalid_data(format!("row {}: {e}", line + 2)))?;
        if record.len() != headers.len() {
            return Err(Error::invalid_data(format!(
                "row {} has {} fields, header has {}",
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(keep.len());
        for &i in &keep {
            let cell = &record[i];
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid_data(format!(
                    "row {}, column '{}': non-numeric value '{}' \
                     (exclude the column with --exclude-cols if intended)",
                    line + 2,
                    headers[i],
                    cell
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::invalid_data(format!(
            "need at least 2 data rows, got {}",
            rows.len()
        )));
    }

    let n = rows.len();
    let p = keep.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n, p), flat)
        .map_err(|e| Error::invalid_data(format!("shape error: {e}")))?;
    let names = keep.iter().map(|&i| headers[i].clone()).collect();
    DataMatrix::with_names(values, names)
}

/// Writes a proportion table as CSV: one row per group pair, one column
/// per method, float formatting chosen so a write-read cycle is lossless.
pub fn write_table_csv(table: &ProportionTable, mut out: impl Write) -> Result<()> {
    let io_err = |e: std::io::Error| Error::invalid_data(format!("write failed: {e}"));
    write!(out, "pair").map_err(io_err)?;
    for m in &table.methods {
        write!(out, ",{m}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for (ri, row) in table.rows.iter().enumerate() {
        write!(out, "\"{row}\"").map_err(io_err)?;
        for mi in 0..table.methods.len() {
            write!(out, ",{}", table.proportions[ri][mi]).map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    Ok(())
}

/// Projected scores behind the diagnostic plots: per observation, the
/// first q original-PC scores and the first q blinded-PC scores.
pub fn write_scores_csv(
    x: &DataMatrix,
    eig_x: &EigenSystem,
    blinded: &BlindedSample,
    eig_y: &EigenSystem,
    q: usize,
    mut out: impl Write,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::invalid_data(format!("write failed: {e}"));
    let n = x.n_rows();
    let p = x.n_cols();
    let xm = x.values();
    let ym = &blinded.values;
    let x_means: Vec<f64> = (0..p).map(|j| xm.column(j).sum() / n as f64).collect();
    let y_means: Vec<f64> = (0..p).map(|j| ym.column(j).sum() / n as f64).collect();

    let headers: Vec<String> = (1..=q)
        .map(|k| format!("pc{k}"))
        .chain((1..=q).map(|k| format!("blinded_pc{k}")))
        .collect();
    writeln!(out, "{}", headers.join(",")).map_err(io_err)?;
    for j in 0..n {
        let mut fields = Vec::with_capacity(2 * q);
        for k in 0..q {
            let v = eig_x.eigenvector(k);
            let score: f64 = (0..p).map(|i| (xm[(j, i)] - x_means[i]) * v[i]).sum();
            fields.push(score.to_string());
        }
        for k in 0..q {
            let v = eig_y.eigenvector(k);
            let score: f64 = (0..p).map(|i| (ym[(j, i)] - y_means[i]) * v[i]).sum();
            fields.push(score.to_string());
        }
        writeln!(out, "{}", fields.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Machine-readable record of one selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub input: String,
    pub config: serde_json::Value,
    pub selection: SelectionResult,
    /// 1-based indices of the selected variables.
    pub selected_one_based: Vec<usize>,
    pub selected_names: Vec<String>,
    /// (column name, r) for each blinded column of the final subset.
    pub r_used_named: Vec<(String, usize)>,
    pub degenerate: bool,
    pub threshold_unmet: bool,
    pub elapsed_ms: u128,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid_data(format!("report serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid_data(format!("report parse failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!(
            "blindpca-io-test-{}-{}.csv",
            std::process::id(),
            content.len()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn reads_numeric_csv() {
        let path = write_temp("a,b,c\n1,2.5,3\n4,5,6.25\n7,8,9\n");
        let x = read_csv(&path, &[]).unwrap();
        assert_eq!(x.n_rows(), 3);
        assert_eq!(x.n_cols(), 3);
        assert_eq!(x.values()[(1, 2)], 6.25);
        assert_eq!(x.col_label(0), "a");
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn non_numeric_cell_is_loud() {
        let path = write_temp("a,b,class\n1,2,DH\n3,4,NO\n");
        let err = read_csv(&path, &[]).unwrap_err();
        assert!(err.to_string().contains("class"));
        assert!(err.to_string().contains("DH"));
        let ok = read_csv(&path, &["class".to_string()]).unwrap();
        assert_eq!(ok.n_cols(), 2);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn unknown_exclusion_rejected() {
        let path = write_temp("a,b\n1,2\n3,4\n");
        assert!(read_csv(&path, &["missing".to_string()]).is_err());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn table_csv_roundtrip_is_lossless() {
        let table = ProportionTable {
            rows: vec!["X1,X2".into(), "X1,X3".into()],
            methods: vec!["blinding".into(), "b2".into()],
            proportions: vec![vec![0.1234567890123456, 0.5], vec![1.0 / 3.0, 0.25]],
            replicates: 500,
            angle_gt_gamma_rate: vec![],
            gamma_deg: 20.0,
        };
        let mut buf = Vec::new();
        write_table_csv(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec.unwrap();
            values.push(rec[1].parse::<f64>().unwrap());
            values.push(rec[2].parse::<f64>().unwrap());
        }
        assert_eq!(
            values,
            vec![0.1234567890123456, 0.5, 1.0 / 3.0, 0.25],
            "values must round-trip exactly"
        );
    }
}
