//! Column-major tabular data: named feature columns plus one target column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the target column in CSV files.
pub const TARGET_COLUMN: &str = "y";
/// Name of the optional noise-free target column in CSV files.
pub const CLEAN_TARGET_COLUMN: &str = "y_clean";

/// Provenance carried alongside a dataset and written as its JSON sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: Option<String>,
    pub params: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub noise_level: f64,
    pub noise_seed: Option<u64>,
    pub dropped_rows: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
    clean_target: Option<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::data("column names and columns differ in count"));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::data(format!("duplicate column `{name}`")));
            }
            if name == TARGET_COLUMN || name == CLEAN_TARGET_COLUMN {
                return Err(Error::data(format!("`{name}` is reserved for the target")));
            }
        }
        if let Some(c) = columns.iter().find(|c| c.len() != target.len()) {
            return Err(Error::data(format!(
                "column length {} does not match target length {}",
                c.len(),
                target.len()
            )));
        }
        let rows = target.len();
        Ok(Self {
            names,
            columns,
            target,
            clean_target: None,
            meta: DatasetMeta {
                rows,
                ..DatasetMeta::default()
            },
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_slices(&self) -> Vec<&[f64]> {
        self.columns.iter().map(Vec::as_slice).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.feature_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Noise-free target if noise was injected, otherwise the target itself.
    pub fn clean_target(&self) -> &[f64] {
        self.clean_target.as_deref().unwrap_or(&self.target)
    }

    pub fn has_clean_copy(&self) -> bool {
        self.clean_target.is_some()
    }

    pub(crate) fn set_target(&mut self, target: Vec<f64>, clean: Option<Vec<f64>>) {
        debug_assert_eq!(target.len(), self.n_rows());
        self.target = target;
        self.clean_target = clean;
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Population standard deviation of the target.
    pub fn target_std(&self) -> f64 {
        population_std(&self.target)
    }

    pub fn feature_stats(&self) -> Vec<(f64, f64)> {
        self.columns.iter().map(|c| (mean(c), population_std(c))).collect()
    }

    /// A dataset with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| pick(c)).collect(),
            target: pick(&self.target),
            clean_target: self.clean_target.as_deref().map(pick),
            meta: DatasetMeta {
                rows: rows.len(),
                ..self.meta.clone()
            },
        }
    }

    /// Writes the CSV (features, `y`, and `y_clean` when a clean copy exists).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(TARGET_COLUMN);
        if self.clean_target.is_some() {
            header.push(CLEAN_TARGET_COLUMN);
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| fmt_f64(c[i])));
            record.push(fmt_f64(self.target[i]));
            if let Some(clean) = &self.clean_target {
                record.push(fmt_f64(clean[i]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::write_csv`] (or any CSV with a `y` column).
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let target_at = header
            .iter()
            .position(|h| h == TARGET_COLUMN)
            .ok_or_else(|| Error::data(format!("{} has no `{TARGET_COLUMN}` column", path.display())))?;
        let clean_at = header.iter().position(|h| h == CLEAN_TARGET_COLUMN);
        let feature_at: Vec<usize> = (0..header.len())
            .filter(|&i| i != target_at && Some(i) != clean_at)
            .collect();
        let mut columns = vec![Vec::new(); feature_at.len()];
        let mut target = Vec::new();
        let mut clean = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::data(format!("bad number in row {} column {}", line + 1, header[i])))
            };
            for (slot, &i) in feature_at.iter().enumerate() {
                columns[slot].push(parse(i)?);
            }
            target.push(parse(target_at)?);
            if let Some(c) = clean_at {
                clean.push(parse(c)?);
            }
        }
        let names = feature_at.iter().map(|&i| header[i].clone()).collect();
        let mut ds = Dataset::new(names, columns, target)?;
        if clean_at.is_some() {
            ds.clean_target = Some(clean);
        }
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar)?;
            ds.meta = serde_json::from_str(&text)?;
        }
        ds.meta.rows = ds.n_rows();
        Ok(ds)
    }

    pub fn write_sidecar(&self, csv_path: &Path) -> Result<std::path::PathBuf> {
        let path = sidecar_path(csv_path);
        std::fs::write(&path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(path)
    }
}

/// `data.csv` -> `data.json`
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

// Shortest round-trip representation, so CSVs reproduce values bit for bit.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 1.0 / 3.0]],
            vec![1.5, 2.5, 3.5],
        )
        .unwrap()
    }

    #[test]
    fn rejects_ragged_and_reserved_columns() {
        assert!(Dataset::new(vec!["a".into()], vec![vec![1.0]], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec!["y".into()], vec![vec![1.0]], vec![1.0]).is_err());
        assert!(Dataset::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![1.0]], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut ds = tiny();
        ds.set_target(vec![1.0, 2.0, 3.0], Some(vec![1.5, 2.5, 3.5]));
        ds.write_csv(&path).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.columns(), ds.columns());
        assert_eq!(back.target(), ds.target());
        assert_eq!(back.clean_target(), ds.clean_target());
    }

    #[test]
    fn population_std_matches_hand_value() {
        assert_eq!(population_std(&[0.0, 2.0]), 1.0);
        assert_eq!(tiny().target_std(), (2.0f64 / 3.0).sqrt());
    }
}
