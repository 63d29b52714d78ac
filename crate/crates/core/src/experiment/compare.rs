//! Side-by-side comparison of two runs.

use serde::{Deserialize, Serialize};

use super::pipeline::RunManifest;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedMetric {
    pub name: String,
    pub a: f64,
    pub b: f64,
    /// `b / a`; exactly 1 when the values are equal, absent when `a` is 0.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: String,
    pub b: String,
    pub metrics: Vec<PairedMetric>,
}

impl ComparisonReport {
    pub fn metric(&self, name: &str) -> Option<&PairedMetric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(1.0)
    } else if a == 0.0 {
        None
    } else {
        Some(b / a)
    }
}

/// Pairs the recovery metrics of two runs over the same image grid.
pub fn compare_runs(a: &RunManifest, b: &RunManifest) -> Result<ComparisonReport> {
    if a.grid != b.grid {
        return Err(Error::Incompatible(format!(
            "grids differ: {}x{} at {} vs {}x{} at {}",
            a.grid.rows, a.grid.cols, a.grid.spacing, b.grid.rows, b.grid.cols, b.grid.spacing
        )));
    }
    let (da, db) = (&a.diagnostics, &b.diagnostics);
    let mut pairs = vec![
        ("coherent_misfit", da.coherent_misfit, db.coherent_misfit),
        ("incoherent_remainder", da.incoherent_remainder, db.incoherent_remainder),
        ("true_l1", da.true_l1, db.true_l1),
        ("image_l1", da.image_l1, db.image_l1),
        ("collector_l1", da.collector_l1, db.collector_l1),
        ("max_error", da.max_error, db.max_error),
        ("recovered_fraction", da.recovered_fraction, db.recovered_fraction),
        ("spurious", da.spurious as f64, db.spurious as f64),
        ("residual_l2", da.residual_l2, db.residual_l2),
        ("iterations", da.iterations as f64, db.iterations as f64),
        ("data_len", da.data_len as f64, db.data_len as f64),
    ];
    if let (Some(ga), Some(gb)) = (&da.gamma, &db.gamma) {
        pairs.push(("gamma", ga.value, gb.value));
    }
    Ok(ComparisonReport {
        a: a.scenario.clone(),
        b: b.scenario.clone(),
        metrics: pairs
            .into_iter()
            .map(|(name, x, y)| PairedMetric {
                name: name.to_string(),
                a: x,
                b: y,
                ratio: ratio(x, y),
            })
            .collect(),
    })
}
