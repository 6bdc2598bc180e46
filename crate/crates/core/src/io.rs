//! CSV and JSON formats used by the command-line tool.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::block_model::PrecisionEstimate;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::selection::BicRow;

/// Decimal text with 17 significant digits; round-trips every finite f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Parses a numeric CSV. A first row containing any non-numeric field is
/// treated as a header and skipped.
pub fn parse_csv_matrix(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::invalid(format!("csv: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(Error::invalid(format!("csv line {}: non-numeric field", line + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("csv: no data rows"));
    }
    let cols = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::invalid(format!("csv row {}: {} fields, expected {cols}", i + 1, r.len())));
    }
    let m = Matrix::from_rows(&rows)?;
    if !m.is_finite() {
        return Err(Error::invalid("csv contains non-finite values"));
    }
    Ok(m)
}

pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    parse_csv_matrix(&text).map_err(|e| e.context(path.display()))
}

pub fn format_csv_matrix(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn lower_triplets(omega: &SymMatrix, out: &mut String) {
    let mut first = true;
    out.push('[');
    for i in 0..omega.dim() {
        for j in 0..=i {
            let v = omega[(i, j)];
            if v != 0.0 {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "[{i},{j},{}]", fmt_f64(v));
            }
        }
    }
    out.push(']');
}

fn json_list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = items.into_iter().map(|v| v.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// `{"p", "groups", "lambda1", "lambda2", "omega": [[i, j, v], ...],
/// "iterations", "converged"}` with the nonzero lower triangle of Ω.
pub fn estimate_json(est: &PrecisionEstimate) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"p\":{},\"groups\":{},\"lambda1\":{},\"lambda2\":{},\"omega\":",
        est.omega.dim(),
        json_list(est.partition.sizes()),
        fmt_f64(est.lambda1),
        fmt_f64(est.lambda2)
    );
    lower_triplets(&est.omega, &mut out);
    let _ = write!(
        out,
        ",\"iterations\":{},\"converged\":{}}}",
        json_list(&est.per_group_iterations),
        json_list(&est.converged_flags)
    );
    out.push('\n');
    out
}

/// Same triplet layout for a bare symmetric matrix (simulation truths).
pub fn matrix_json(omega: &SymMatrix) -> String {
    let mut out = format!("{{\"p\":{},\"omega\":", omega.dim());
    lower_triplets(omega, &mut out);
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EstimateFile {
    pub p: usize,
    #[serde(default)]
    pub groups: Vec<usize>,
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    pub omega: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub iterations: Vec<usize>,
    #[serde(default)]
    pub converged: Vec<bool>,
}

impl EstimateFile {
    pub fn omega_matrix(&self) -> Result<SymMatrix> {
        let mut m = Matrix::zeros(self.p, self.p);
        for &(i, j, v) in &self.omega {
            if i >= self.p || j >= self.p {
                return Err(Error::invalid(format!("triplet ({i}, {j}) outside p = {}", self.p)));
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(SymMatrix::from_lower(m))
    }
}

pub fn parse_estimate_json(text: &str) -> Result<EstimateFile> {
    serde_json::from_str(text).map_err(|e| Error::invalid(format!("estimate json: {e}")))
}

pub fn bic_table_csv(rows: &[BicRow]) -> String {
    let mut out = String::from("lambda1,lambda2,bic,nnz,converged\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", fmt_f64(r.lambda1), fmt_f64(r.lambda2), fmt_f64(r.bic), r.nnz, r.converged);
    }
    out
}

/// Edges `(i, j, ω_ij)` with `i < j` and `|ω_ij| > threshold`.
pub fn edge_list(omega: &SymMatrix, threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..omega.dim() {
        for j in (i + 1)..omega.dim() {
            let v = omega[(i, j)];
            if v.abs() > threshold {
                edges.push((i, j, v));
            }
        }
    }
    edges
}

pub fn edges_csv(edges: &[(usize, usize, f64)]) -> String {
    let mut out = String::from("i,j,value\n");
    for (i, j, v) in edges {
        let _ = writeln!(out, "{i},{j},{}", fmt_f64(*v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_model::{BlockDiagSpd, BlockLowerUnit, GroupPartition};
    use crate::testutil::{random_matrix, random_spd};
    use proptest::prelude::*;

    #[test]
    fn header_is_detected() {
        let m = parse_csv_matrix("a,b\n1,2\n3.5,-4e-3\n").unwrap();
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.5, -4e-3]);
        let m = parse_csv_matrix("1,2\n3,4\n").unwrap();
        assert_eq!(m.rows(), 2);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_csv_matrix("1,2\n3,x\n").is_err());
        assert!(parse_csv_matrix("1,2\n3\n").is_err());
        assert!(parse_csv_matrix("a,b\n").is_err());
        assert!(parse_csv_matrix("1,inf\n").is_err());
    }

    #[test]
    fn estimate_json_round_trip() {
        let part = GroupPartition::new(vec![2, 1]).unwrap();
        let omega = SymMatrix::from_rows(&[[2.0, 0.0, 0.1], [0.0, 1.0, 0.0], [0.1, 0.0, 3.0]]).unwrap();
        let est = PrecisionEstimate {
            t: BlockLowerUnit::identity(part.clone()),
            dinv: BlockDiagSpd::identity(part.clone()),
            partition: part,
            omega: omega.clone(),
            lambda1: 0.25,
            lambda2: 1.0 / 3.0,
            per_group_iterations: vec![1, 4],
            converged_flags: vec![true, false],
        };
        let text = estimate_json(&est);
        let parsed = parse_estimate_json(&text).unwrap();
        assert_eq!(parsed.omega.len(), 4);
        assert_eq!(parsed.omega_matrix().unwrap(), omega);
        assert_eq!(parsed.lambda2, Some(1.0 / 3.0));
        assert_eq!(parsed.groups, vec![2, 1]);
        assert_eq!(parsed.converged, vec![true, false]);
    }

    #[test]
    fn edge_examples() {
        assert!(edge_list(&SymMatrix::from_diag(&[1.0, 2.0]), 1e-6).is_empty());
        let tri = SymMatrix::from_lower(Matrix::from_fn(4, 4, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -0.5,
            _ => 0.0,
        }));
        assert_eq!(edge_list(&tri, 1e-6).len(), 3);
        assert!(edge_list(&tri, 0.6).is_empty());
        let s = random_spd(3, 1);
        assert_eq!(edges_csv(&edge_list(&s, 0.0)).lines().count(), 4);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..6) {
            let mut m = random_matrix(rows, cols, seed);
            m[(0, 0)] *= 1e-300;
            let back = parse_csv_matrix(&format_csv_matrix(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
