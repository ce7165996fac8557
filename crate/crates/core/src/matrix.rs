//! Dense row-major feature matrix with column metadata, plus its two on-disk
//! forms: CSV with a header row, and the `RDM1` little-endian binary layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix of one-hot device columns; also how CSV headers recover kinds.
pub const ONE_HOT_PREFIX: &str = "device=";

const RDM_MAGIC: &[u8; 4] = b"RDM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Continuous }
    }

    pub fn one_hot(device: &str) -> Self {
        Column { name: format!("{ONE_HOT_PREFIX}{device}"), kind: ColumnKind::OneHot }
    }

    fn from_header(name: &str) -> Self {
        let kind = if name.starts_with(ONE_HOT_PREFIX) {
            ColumnKind::OneHot
        } else {
            ColumnKind::Continuous
        };
        Column { name: name.to_string(), kind }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    columns: Vec<Column>,
}

impl FeatureMatrix {
    /// Builds a matrix from row-major values; every entry must be finite.
    pub fn new(values: Vec<f64>, n_rows: usize, columns: Vec<Column>) -> Result<Self> {
        let n_cols = columns.len();
        if values.len() != n_rows * n_cols {
            return Err(Error::shape(format!(
                "{} values for {n_rows} x {n_cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!(
                "non-finite entry at row {}, column {}",
                pos / n_cols.max(1),
                pos % n_cols.max(1)
            )));
        }
        Ok(FeatureMatrix { values, n_rows, columns })
    }

    /// All-continuous matrix with generated column names `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::shape("ragged rows"));
        }
        let columns = (0..n_cols).map(|j| Column::continuous(format!("x{j}"))).collect();
        Self::new(rows.concat(), rows.len(), columns)
    }

    pub fn empty(columns: Vec<Column>) -> Self {
        FeatureMatrix { values: Vec::new(), n_rows: 0, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let n = self.n_cols().max(1);
        self.values.chunks(n).take(self.n_rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Indices of columns of the given kind, ascending.
    pub fn columns_of_kind(&self, kind: ColumnKind) -> Vec<usize> {
        (0..self.n_cols()).filter(|&j| self.columns[j].kind == kind).collect()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols());
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix { values, n_rows: idx.len(), columns: self.columns.clone() }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.n_cols()) {
            return Err(Error::shape(format!("column {bad} out of range ({})", self.n_cols())));
        }
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&j| r[j]));
        }
        let columns = cols.iter().map(|&j| self.columns[j].clone()).collect();
        Ok(FeatureMatrix { values, n_rows: self.n_rows, columns })
    }

    /// Column-wise concatenation.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::shape(format!(
                "hstack of {} and {} rows",
                self.n_rows, other.n_rows
            )));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for i in 0..self.n_rows {
            values.extend_from_slice(self.row(i));
            values.extend_from_slice(other.row(i));
        }
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Ok(FeatureMatrix { values, n_rows: self.n_rows, columns })
    }

    /// Row-wise concatenation; column names and kinds must agree.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.columns != other.columns {
            return Err(Error::shape("vstack of matrices with different columns"));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(FeatureMatrix { values, n_rows: self.n_rows + other.n_rows, columns: self.columns.clone() })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in self.rows() {
            out.write_record(r.iter().map(|v| v.to_string()))?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let columns: Vec<Column> = rdr.headers()?.iter().map(Column::from_header).collect();
        let mut values = Vec::new();
        let mut n_rows = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(Error::shape(format!("row {}: {} fields", line + 1, rec.len())));
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::shape(format!("row {}: non-numeric field {field:?}", line + 1))
                })?;
                values.push(v);
            }
            n_rows += 1;
        }
        FeatureMatrix::new(values, n_rows, columns)
    }

    /// `RDM1` layout: magic, u32 rows, u32 cols, f32 entries row-major.
    pub fn write_rdm<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<rdm>", e);
        let rows = u32::try_from(self.n_rows).map_err(|_| Error::shape("too many rows for RDM1"))?;
        let cols = u32::try_from(self.n_cols()).map_err(|_| Error::shape("too many cols for RDM1"))?;
        w.write_all(RDM_MAGIC).map_err(io)?;
        w.write_all(&rows.to_le_bytes()).map_err(io)?;
        w.write_all(&cols.to_le_bytes()).map_err(io)?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    /// Reads `RDM1`. The format carries no names, so columns come back as
    /// continuous `x0, x1, ...`.
    pub fn read_rdm<R: Read>(mut r: R) -> Result<FeatureMatrix> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head).map_err(|e| Error::io("<rdm>", e))?;
        if &head[..4] != RDM_MAGIC {
            return Err(Error::shape("matrix file does not start with RDM1"));
        }
        let rows = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; rows * cols * 4];
        r.read_exact(&mut buf).map_err(|e| Error::io("<rdm>", e))?;
        let values = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let columns = (0..cols).map(|j| Column::continuous(format!("x{j}"))).collect();
        FeatureMatrix::new(values, rows, columns)
    }

    /// Saves as `RDM1` when the extension is `rdm`/`rdm1`, CSV otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let w = BufWriter::new(file);
        if is_rdm(path) {
            self.write_rdm(w)
        } else {
            self.write_csv(w)
        }
    }

    pub fn load(path: &Path) -> Result<FeatureMatrix> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let r = BufReader::new(file);
        if is_rdm(path) {
            Self::read_rdm(r)
        } else {
            Self::read_csv(r)
        }
    }
}

fn is_rdm(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("rdm" | "rdm1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        FeatureMatrix::new(
            vec![1.0, 0.0, 2.5, 1.0, -3.0, 0.0],
            3,
            vec![Column::continuous("a"), Column::one_hot("X")],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(FeatureMatrix::new(vec![1.0, f64::NAN], 1, vec![Column::continuous("a"), Column::continuous("b")]).is_err());
        assert!(FeatureMatrix::new(vec![1.0], 1, vec![Column::continuous("a"), Column::continuous("b")]).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_kinds() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.columns_of_kind(ColumnKind::OneHot), vec![1]);
    }

    #[test]
    fn rdm_layout_is_exact() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_rdm(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 6 * 4);
        assert_eq!(&buf[..4], b"RDM1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(buf[12..16].try_into().unwrap()), 1.0);
        let back = FeatureMatrix::read_rdm(buf.as_slice()).unwrap();
        assert_eq!(back.values(), m.values());
    }

    #[test]
    fn stacking_and_selection() {
        let m = sample();
        let v = m.vstack(&m).unwrap();
        assert_eq!(v.n_rows(), 6);
        assert_eq!(v.row(4), m.row(1));
        let s = v.select_columns(&[1]).unwrap();
        assert_eq!(s.column(0), vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let h = m.hstack(&m.select_columns(&[0]).unwrap()).unwrap();
        assert_eq!(h.row(2), &[-3.0, 0.0, -3.0]);
        assert!(m.select_columns(&[2]).is_err());
    }
}
