use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Synthetic,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// Feature rows with binary labels (1 = anomaly/attack) and per-row origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
    pub provenance: Vec<Provenance>,
}

impl LabeledDataset {
    pub fn new(matrix: FeatureMatrix, labels: Vec<u8>, provenance: Vec<Provenance>) -> Result<Self> {
        if labels.len() != matrix.n_rows() || provenance.len() != matrix.n_rows() {
            return Err(Error::shape(format!(
                "{} rows but {} labels / {} provenance tags",
                matrix.n_rows(),
                labels.len(),
                provenance.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::param("labels must be 0 or 1"));
        }
        if labels.iter().zip(&provenance).any(|(&l, &p)| p == Provenance::Synthetic && l != 1) {
            return Err(Error::param("synthetic rows must carry label 1"));
        }
        Ok(LabeledDataset { matrix, labels, provenance })
    }

    /// All rows tagged as original data.
    pub fn original(matrix: FeatureMatrix, labels: Vec<u8>) -> Result<Self> {
        let n = matrix.n_rows();
        Self::new(matrix, labels, vec![Provenance::Original; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn positive_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == 1).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            matrix: self.matrix.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<LabeledDataset> {
        Ok(LabeledDataset {
            matrix: self.matrix.select_columns(cols)?,
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut provenance = self.provenance.clone();
        provenance.extend_from_slice(&other.provenance);
        LabeledDataset::new(self.matrix.vstack(&other.matrix)?, labels, provenance)
    }

    pub fn write_sidecar<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["label", "provenance"])?;
        for (l, p) in self.labels.iter().zip(&self.provenance) {
            out.write_record([l.to_string().as_str(), p.as_str()])?;
        }
        out.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }

    pub fn read_sidecar<R: Read>(r: R) -> Result<(Vec<u8>, Vec<Provenance>)> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut labels = Vec::new();
        let mut prov = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::shape(format!("label sidecar row {}: {:?}", line + 1, rec));
            labels.push(rec.get(0).and_then(|s| s.parse::<u8>().ok()).ok_or_else(bad)?);
            prov.push(match rec.get(1) {
                Some("original") => Provenance::Original,
                Some("synthetic") => Provenance::Synthetic,
                _ => return Err(bad()),
            });
        }
        Ok((labels, prov))
    }

    /// Matrix file plus `<stem>.labels.csv` next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.matrix.save(path)?;
        let side = sidecar_path(path);
        let f = File::create(&side).map_err(|e| Error::io(&side, e))?;
        self.write_sidecar(BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<LabeledDataset> {
        let matrix = FeatureMatrix::load(path)?;
        let side = sidecar_path(path);
        let f = File::open(&side).map_err(|e| Error::io(&side, e))?;
        let (labels, provenance) = Self::read_sidecar(BufReader::new(f))?;
        LabeledDataset::new(matrix, labels, provenance)
    }
}

pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    let stem = matrix_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    matrix_path.with_file_name(format!("{stem}.labels.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_synthetic_negatives_and_bad_lengths() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(LabeledDataset::new(m.clone(), vec![0, 0], vec![Provenance::Original, Provenance::Synthetic]).is_err());
        assert!(LabeledDataset::new(m.clone(), vec![0], vec![Provenance::Original]).is_err());
        assert!(LabeledDataset::original(m, vec![0, 2]).is_err());
    }

    #[test]
    fn save_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::from_rows(&[vec![0.25, 1.0], vec![0.5, 0.0], vec![0.75, 0.0]]).unwrap();
        let ds = LabeledDataset::new(m, vec![0, 1, 1], vec![Provenance::Original, Provenance::Original, Provenance::Synthetic]).unwrap();
        let path = dir.path().join("attack.csv");
        ds.save(&path).unwrap();
        assert!(dir.path().join("attack.labels.csv").exists());
        assert_eq!(LabeledDataset::load(&path).unwrap(), ds);
    }
}
