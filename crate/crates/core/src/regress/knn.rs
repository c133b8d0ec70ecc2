use serde::{Deserialize, Serialize};

use super::kernel::distance;
use super::scaling::Standardizer;
use crate::error::{Error, Result};

/// k-nearest-neighbour regression under Euclidean distance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    scaler: Option<Standardizer>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize, standardize: bool) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if k == 0 || k > x.len() {
            return Err(Error::InvalidParams(format!(
                "k = {k} must lie in [1, {}]",
                x.len()
            )));
        }
        let scaler = if standardize {
            Some(Standardizer::fit(x)?)
        } else {
            None
        };
        let x = match &scaler {
            Some(s) => x.iter().map(|r| s.apply(r)).collect(),
            None => x.to_vec(),
        };
        Ok(KnnModel {
            k,
            scaler,
            x,
            y: y.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Mean target of the k nearest rows; equal distances go to the lower
    /// row index.
    pub fn predict(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        let q = match &self.scaler {
            Some(s) => s.apply(q),
            None => q.to_vec(),
        };
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (distance(r, &q), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(d[..self.k].iter().map(|(_, i)| self.y[*i]).sum::<f64>() / self.k as f64)
    }
}
