use std::path::Path;

use crate::channel::MAX_CURVATURE;
use crate::error::{Error, Result};

/// Labelled feature rows. All rows share one feature dimension and every
/// curvature lies in `[0, MAX_CURVATURE]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    features: Vec<Vec<f64>>,
    kappa: Vec<f64>,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=MAX_CURVATURE).contains(&kappa) {
        return Err(Error::CurvatureRange {
            kappa,
            min: 0.0,
            max: MAX_CURVATURE,
        });
    }
    Ok(())
}

impl Dataset {
    /// Empty dataset with the given feature column names.
    pub fn new(names: Vec<String>) -> Self {
        Dataset {
            names,
            features: Vec::new(),
            kappa: Vec::new(),
        }
    }

    pub fn from_rows(names: Vec<String>, rows: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let mut d = Dataset::new(names);
        for (x, k) in rows {
            d.push(x, k)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, features: Vec<f64>, kappa: f64) -> Result<()> {
        if features.len() != self.names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.names.len(),
                got: features.len(),
            });
        }
        check_kappa(kappa)?;
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature value {v}")));
        }
        self.features.push(features);
        self.kappa.push(kappa);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.kappa
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            kappa: idx.iter().map(|&i| self.kappa[i]).collect(),
        }
    }

    /// Appends another dataset with the same columns.
    pub fn extend(&mut self, other: Dataset) -> Result<()> {
        if other.names != self.names {
            return Err(Error::InvalidInput(
                "datasets have different feature columns".into(),
            ));
        }
        self.features.extend(other.features);
        self.kappa.extend(other.kappa);
        Ok(())
    }

    /// Reads a CSV whose header is `kappa` followed by the feature columns.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(file);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.get(0).map(str::trim) != Some("kappa") || header.len() < 2 {
            return Err(parse_err(
                1,
                "header must be `kappa` followed by feature columns".into(),
            ));
        }
        let names: Vec<String> = header
            .iter()
            .skip(1)
            .map(|s| s.trim().to_string())
            .collect();
        let mut data = Dataset::new(names);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let vals = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(line, format!("`{f}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            data.push(vals[1..].to_vec(), vals[0])
                .map_err(|e| parse_err(line, e.to_string()))?;
        }
        Ok(data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let to_err = |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{other:?}")),
        };
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        let mut header = vec!["kappa".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(to_err)?;
        for (x, k) in self.features.iter().zip(&self.kappa) {
            let mut rec = vec![k.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
