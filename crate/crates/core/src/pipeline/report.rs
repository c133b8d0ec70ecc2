use std::fmt;

use serde::{Deserialize, Serialize};

/// Absolute error statistics at one test curvature, m^-1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub kappa: f64,
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

/// Per-curvature error table plus the raw (actual, predicted) pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub predictions: Vec<(f64, f64)>,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "kappa,min_abs_error,avg_abs_error,max_abs_error";
    pub const SCATTER_HEADER: &'static str = "kappa,kappa_hat";

    /// Groups (actual, predicted) pairs by actual curvature, keeping the
    /// order of first appearance.
    pub fn from_predictions(pairs: &[(f64, f64)]) -> Self {
        let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
        for &(k, p) in pairs {
            let e = (p - k).abs();
            match rows.iter_mut().find(|r| r.0 == k) {
                Some(r) => r.1.push(e),
                None => rows.push((k, vec![e])),
            }
        }
        ErrorReport {
            rows: rows
                .into_iter()
                .map(|(kappa, e)| ErrorRow {
                    kappa,
                    min: e.iter().cloned().fold(f64::INFINITY, f64::min),
                    avg: e.iter().sum::<f64>() / e.len() as f64,
                    max: e.iter().cloned().fold(0.0, f64::max),
                })
                .collect(),
            predictions: pairs.to_vec(),
        }
    }

    pub fn global_max(&self) -> f64 {
        self.rows.iter().map(|r| r.max).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.kappa, r.min, r.avg, r.max));
        }
        s
    }

    pub fn scatter_csv(&self) -> String {
        let mut s = format!("{}\n", Self::SCATTER_HEADER);
        for (k, p) in &self.predictions {
            s.push_str(&format!("{k},{p}\n"));
        }
        s
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>12}  {:>8}  {:>8}  {:>8}",
            "kappa (1/m)", "min", "avg", "max"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>12.1}  {:>8.3}  {:>8.3}  {:>8.3}",
                r.kappa, r.min, r.avg, r.max
            )?;
        }
        write!(f, "global max error {:.3} 1/m", self.global_max())
    }
}

/// Average error at one injected noise level; `snr_db` is `None` for the
/// noise-free baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub snr_db: Option<f64>,
    pub avg_error: f64,
}

pub const ROBUSTNESS_HEADER: &str = "snr_db,avg_abs_error";

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut s = format!("{ROBUSTNESS_HEADER}\n");
    for r in rows {
        let snr = r.snr_db.map_or("inf".to_string(), |v| v.to_string());
        s.push_str(&format!("{snr},{}\n", r.avg_error));
    }
    s
}
