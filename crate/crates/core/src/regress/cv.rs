use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::model::ModelSpec;
use crate::error::{Error, Result};

/// Deterministic stratified fold assignment. Rows are grouped by label,
/// each group is shuffled, and rows are dealt to folds round robin with the
/// offset carried across groups so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, k) in labels.iter().enumerate() {
        // total order on the bit pattern keeps the grouping deterministic
        groups.entry(k.to_bits()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        for i in idx {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Stratified holdout: returns (train, test) with about `test_fraction` of
/// each label in the test part.
pub fn holdout_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParams(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, k) in data.targets().iter().enumerate() {
        groups.entry(k.to_bits()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        let n_test = n_test.min(idx.len().saturating_sub(1));
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot be split {:.0}:{:.0}",
            data.len(),
            100.0 * (1.0 - test_fraction),
            100.0 * test_fraction
        )));
    }
    Ok((data.subset(&train), data.subset(&test)))
}

/// Root mean squared error of the spec pooled over held-out folds.
pub fn cross_validate(data: &Dataset, spec: &ModelSpec, folds: usize, seed: u64) -> Result<f64> {
    if folds < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if data.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot fill {folds} folds",
            data.len()
        )));
    }
    let parts = stratified_folds(data.targets(), folds, seed);
    let sse: Vec<f64> = parts
        .par_iter()
        .map(|held| {
            let mut in_test = vec![false; data.len()];
            for &i in held {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..data.len()).filter(|i| !in_test[*i]).collect();
            let model = spec.fit(&data.subset(&train))?;
            let mut s = 0.0;
            for &i in held {
                let e = model.predict(&data.features()[i])?.mean - data.targets()[i];
                s += e * e;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok((sse.iter().sum::<f64>() / data.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub name: String,
    /// Spec with hyperparameters fixed as used for validation.
    pub spec: ModelSpec,
    pub validation_rmse: f64,
}

/// Candidates ranked by validation RMSE, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub folds: usize,
    pub rows: Vec<RankedModel>,
}

impl SelectionReport {
    pub fn best(&self) -> &RankedModel {
        &self.rows[0]
    }

    pub const CSV_HEADER: &'static str = "rank,model,validation_rmse";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, r.name, r.validation_rmse));
        }
        s
    }
}

impl fmt::Display for SelectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(f, "{:<4} {:<width$}  {:>12}", "Rank", "Model", "RMSE (1/m)")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "{:<4} {:<width$}  {:>12.4}",
                i + 1,
                r.name,
                r.validation_rmse
            )?;
        }
        write!(f, "({}-fold cross-validation)", self.folds)
    }
}

/// Cross-validates every candidate and ranks them by RMSE. Free GPR
/// hyperparameters are fitted once on `data` before the folds run.
pub fn model_select(
    data: &Dataset,
    candidates: &[ModelSpec],
    folds: usize,
    seed: u64,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidParams("no candidate models".into()));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let spec = spec.resolve(data)?;
        let rmse = cross_validate(data, &spec, folds, seed)?;
        rows.push(RankedModel {
            name: spec.name(),
            spec,
            validation_rmse: rmse,
        });
    }
    // stable: ties keep candidate order
    rows.sort_by(|a, b| a.validation_rmse.total_cmp(&b.validation_rmse));
    Ok(SelectionReport { folds, rows })
}
