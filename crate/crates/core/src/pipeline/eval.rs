use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ModelBundle, PipelineError};
use crate::features::WindowSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse_ah: f64,
    pub mae_ah: f64,
    pub max_abs_err_ah: f64,
    pub n_windows: usize,
}

/// RMSE, MAE and maximum absolute error of `predictions` against `targets`.
/// All zero for empty input.
pub fn compute_metrics(predictions: &[f64], targets: &[f64]) -> Metrics {
    assert_eq!(predictions.len(), targets.len(), "prediction/target length mismatch");
    let n = predictions.len();
    if n == 0 {
        return Metrics {
            rmse_ah: 0.0,
            mae_ah: 0.0,
            max_abs_err_ah: 0.0,
            n_windows: 0,
        };
    }
    let (mut sq, mut abs, mut max) = (0.0, 0.0, 0.0f64);
    for (p, t) in predictions.iter().zip(targets) {
        let e = (p - t).abs();
        sq += e * e;
        abs += e;
        max = max.max(e);
    }
    let mae = abs / n as f64;
    // Rounding can leave sqrt(mean e²) a hair outside [mae, max] when all
    // errors are equal; pin the chain.
    let rmse = (sq / n as f64).sqrt().clamp(mae, max);
    Metrics {
        rmse_ah: rmse,
        mae_ah: mae,
        max_abs_err_ah: max,
        n_windows: n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub cell_id: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_ah: f64,
    pub mae_ah: f64,
    pub max_abs_err_ah: f64,
    pub n_windows: usize,
    /// Mean training throughput-to-EOL, the unit for the fractions below.
    pub life_scale_ah: f64,
    pub rmse_fraction_of_life: f64,
    pub mae_fraction_of_life: f64,
    /// RMSE of always predicting the training-mean remaining Ah.
    pub baseline_rmse_ah: f64,
    pub per_cell: Vec<CellMetrics>,
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per cell plus the total.
    pub fn to_table(&self) -> String {
        let width = self
            .per_cell
            .iter()
            .map(|c| c.cell_id.len())
            .chain(["cell".len(), "all".len()])
            .max()
            .unwrap_or(4);
        let mut out = String::new();
        let line = |out: &mut String, id: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{id:<width$}  {:>9}  {:>10.4}  {:>10.4}  {:>10.4}",
                m.n_windows, m.rmse_ah, m.mae_ah, m.max_abs_err_ah
            );
        };
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>10}  {:>10}  {:>10}", "cell", "windows", "rmse_ah", "mae_ah", "max_ah");
        for c in &self.per_cell {
            line(&mut out, &c.cell_id, &c.metrics);
        }
        line(
            &mut out,
            "all",
            &Metrics {
                rmse_ah: self.rmse_ah,
                mae_ah: self.mae_ah,
                max_abs_err_ah: self.max_abs_err_ah,
                n_windows: self.n_windows,
            },
        );
        let _ = writeln!(
            out,
            "rmse {:.2}% of life ({:.3} Ah), baseline rmse {:.4} Ah",
            100.0 * self.rmse_fraction_of_life,
            self.life_scale_ah,
            self.baseline_rmse_ah
        );
        out
    }
}

/// Scores the bundle on raw windows.
pub fn evaluate(bundle: &ModelBundle, windows: &WindowSet) -> Result<EvalReport, PipelineError> {
    let predictions = bundle.predict_windows(windows)?;
    Ok(report_from_predictions(bundle, windows, &predictions))
}

pub(crate) fn report_from_predictions(bundle: &ModelBundle, windows: &WindowSet, predictions: &[f64]) -> EvalReport {
    let total = compute_metrics(predictions, &windows.targets);
    let mut by_cell: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, p) in windows.provenance.iter().enumerate() {
        let entry = by_cell.entry(p.cell_id.as_str()).or_default();
        entry.0.push(predictions[i]);
        entry.1.push(windows.targets[i]);
    }
    let per_cell = by_cell
        .into_iter()
        .map(|(id, (p, t))| CellMetrics {
            cell_id: id.to_owned(),
            metrics: compute_metrics(&p, &t),
        })
        .collect();
    let baseline = vec![bundle.train_mean_remaining_ah; windows.len()];
    let scale = bundle.norm.target_scale_ah;
    EvalReport {
        rmse_ah: total.rmse_ah,
        mae_ah: total.mae_ah,
        max_abs_err_ah: total.max_abs_err_ah,
        n_windows: total.n_windows,
        life_scale_ah: scale,
        rmse_fraction_of_life: total.rmse_ah / scale,
        mae_fraction_of_life: total.mae_ah / scale,
        baseline_rmse_ah: compute_metrics(&baseline, &windows.targets).rmse_ah,
        per_cell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero() {
        let m = compute_metrics(&[1.0, 2.5, 7.0], &[1.0, 2.5, 7.0]);
        assert_eq!((m.rmse_ah, m.mae_ah, m.max_abs_err_ah), (0.0, 0.0, 0.0));
    }

    #[test]
    fn symmetric_unit_errors() {
        let m = compute_metrics(&[11.0, 9.0], &[10.0, 10.0]);
        assert_eq!((m.mae_ah, m.rmse_ah, m.max_abs_err_ah), (1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_and_two_errors() {
        let m = compute_metrics(&[5.0, 7.0], &[5.0, 5.0]);
        assert_eq!(m.mae_ah, 1.0);
        assert_eq!(m.rmse_ah, 2f64.sqrt());
        assert_eq!(m.max_abs_err_ah, 2.0);
    }

    #[test]
    fn empty_metrics_are_zero() {
        assert_eq!(compute_metrics(&[], &[]).n_windows, 0);
    }

    proptest::proptest! {
        #[test]
        fn norm_chain_holds(pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &t);
            proptest::prop_assert!(m.mae_ah <= m.rmse_ah && m.rmse_ah <= m.max_abs_err_ah);
        }
    }
}
