//! Confusion-matrix construction and the three headline metrics (overall
//! accuracy, false positive rate, detection rate), plus the multi-model
//! comparison report.

use serde::{Deserialize, Serialize};

use crate::encode::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::train::predict_dataset;
use crate::model::Model;
use crate::packet::Label;

/// Binary confusion matrix with anomalous as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub false_neg: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.false_neg + self.fp + self.tn
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("no samples to evaluate".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::UndefinedMetric(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        false_neg: 0,
        fp: 0,
        tn: 0,
    };
    for (p, l) in predictions.iter().zip(labels) {
        match (p, l) {
            (Label::Anomalous, Label::Anomalous) => cm.tp += 1,
            (Label::Normal, Label::Anomalous) => cm.false_neg += 1,
            (Label::Anomalous, Label::Normal) => cm.fp += 1,
            (Label::Normal, Label::Normal) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// ACC, FPR, DR as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub fpr: f64,
    pub dr: f64,
}

/// Requires both classes present: FPR and DR would otherwise divide by
/// zero, and silent zeros would fake a perfect or useless detector.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let positives = cm.tp + cm.false_neg;
    let negatives = cm.fp + cm.tn;
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "detection rate undefined: no anomalous samples".into(),
        ));
    }
    if negatives == 0 {
        return Err(Error::UndefinedMetric(
            "false positive rate undefined: no normal samples".into(),
        ));
    }
    Ok(Metrics {
        acc: 100.0 * (cm.tp + cm.tn) as f64 / cm.total() as f64,
        fpr: 100.0 * cm.fp as f64 / negatives as f64,
        dr: 100.0 * cm.tp as f64 / positives as f64,
    })
}

/// One decimal place, round half to even.
pub fn format_pct(x: f64) -> String {
    format!("{:.1}", (x * 10.0).round_ties_even() / 10.0)
}

/// Accuracy is a convex combination of DR and the true negative rate
/// (100 - FPR), so any self-consistent (acc, fpr, dr) triple must have acc
/// between those two. `slack` absorbs rounding of reported figures.
pub fn table_row_feasible(acc: f64, fpr: f64, dr: f64, slack: f64) -> bool {
    let tnr = 100.0 - fpr;
    let lo = dr.min(tnr) - slack;
    let hi = dr.max(tnr) + slack;
    acc >= lo && acc <= hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arch: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arch,acc_pct,fpr_pct,dr_pct\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.arch,
                format_pct(row.metrics.acc),
                format_pct(row.metrics.fpr),
                format_pct(row.metrics.dr)
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10} {:>6} {:>6} {:>6}\n", "", "ACC%", "FPR%", "DR%");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>6}\n",
                row.arch,
                format_pct(row.metrics.acc),
                format_pct(row.metrics.fpr),
                format_pct(row.metrics.dr)
            ));
        }
        out
    }
}

/// Evaluates each model on the test set, one row per model in input order.
/// All models must share the test set's schema.
pub fn benchmark_report(
    models: &mut [(String, Model)],
    test: &EncodedDataset,
) -> Result<BenchmarkReport> {
    let truth: Vec<Label> = test
        .labels
        .iter()
        .map(|&l| if l == 0 { Label::Normal } else { Label::Anomalous })
        .collect();
    let mut rows = Vec::with_capacity(models.len());
    for (name, model) in models.iter_mut() {
        model.check_schema(&test.schema_hash)?;
        let (predictions, _) = predict_dataset(model, test)?;
        let cm = confusion(&predictions, &truth)?;
        let m = metrics(&cm)?;
        assert!(
            table_row_feasible(m.acc, m.fpr, m.dr, 1e-9),
            "metrics violate the convexity identity: {m:?}"
        );
        rows.push(ReportRow {
            arch: name.clone(),
            metrics: m,
        });
    }
    Ok(BenchmarkReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: u64, false_neg: u64, fp: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            tp,
            false_neg,
            fp,
            tn,
        }
    }

    #[test]
    fn all_correct_has_no_errors() {
        let labels = [Label::Anomalous, Label::Normal, Label::Normal];
        let m = confusion(&labels, &labels).unwrap();
        assert_eq!((m.fp, m.false_neg), (0, 0));
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn total_inversion_has_no_hits() {
        let labels = [Label::Anomalous, Label::Normal];
        let predictions = [Label::Normal, Label::Anomalous];
        let m = confusion(&predictions, &labels).unwrap();
        assert_eq!((m.tp, m.tn), (0, 0));
        assert_eq!((m.fp, m.false_neg), (1, 1));
    }

    #[test]
    fn hand_counted_six_pairs() {
        use Label::{Anomalous as A, Normal as N};
        let labels = [A, A, A, N, N, N];
        let predictions = [A, A, N, A, N, N];
        let m = confusion(&predictions, &labels).unwrap();
        assert_eq!(m, cm(2, 1, 1, 2));
    }

    #[test]
    fn split_architecture_row_from_balanced_counts() {
        let m = metrics(&cm(982, 18, 30, 970)).unwrap();
        assert_eq!(format_pct(m.acc), "97.6");
        assert_eq!(format_pct(m.fpr), "3.0");
        assert_eq!(format_pct(m.dr), "98.2");
        assert!(table_row_feasible(97.6, 3.0, 98.2, 0.15));
    }

    #[test]
    fn perfect_and_symmetric_classifiers() {
        let perfect = metrics(&cm(100, 0, 0, 100)).unwrap();
        assert_eq!((perfect.acc, perfect.fpr, perfect.dr), (100.0, 0.0, 100.0));
        let coin = metrics(&cm(50, 50, 50, 50)).unwrap();
        assert_eq!((coin.acc, coin.fpr, coin.dr), (50.0, 50.0, 50.0));
    }

    #[test]
    fn missing_class_is_undefined_not_zero() {
        assert!(metrics(&cm(0, 0, 5, 5)).is_err());
        assert!(metrics(&cm(5, 5, 0, 0)).is_err());
    }

    #[test]
    fn empty_or_mismatched_inputs_rejected() {
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[Label::Normal], &[]).is_err());
    }

    #[test]
    fn permutation_invariance() {
        use Label::{Anomalous as A, Normal as N};
        let labels = [A, N, A, N, N, A, A, N];
        let predictions = [A, A, N, N, N, A, N, N];
        let base = metrics(&confusion(&predictions, &labels).unwrap()).unwrap();
        let perm = [5usize, 2, 7, 0, 3, 6, 1, 4];
        let labels_p: Vec<Label> = perm.iter().map(|&i| labels[i]).collect();
        let preds_p: Vec<Label> = perm.iter().map(|&i| predictions[i]).collect();
        let shuffled = metrics(&confusion(&preds_p, &labels_p).unwrap()).unwrap();
        assert_eq!(base, shuffled);
    }

    #[test]
    fn accuracy_bounded_by_dr_and_tnr() {
        // brute-force sweep of matrices
        for tp in 0..6u64 {
            for false_neg in 0..6u64 {
                for fp in 0..6u64 {
                    for tn in 0..6u64 {
                        if tp + false_neg == 0 || fp + tn == 0 {
                            continue;
                        }
                        let m = metrics(&cm(tp, false_neg, fp, tn)).unwrap();
                        assert!(
                            table_row_feasible(m.acc, m.fpr, m.dr, 1e-9),
                            "{tp},{false_neg},{fp},{tn} -> {m:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn banker_rounding_one_decimal() {
        assert_eq!(format_pct(97.25), "97.2");
        assert_eq!(format_pct(97.35), "97.4");
        assert_eq!(format_pct(3.04), "3.0");
    }

    #[test]
    fn report_renders_csv_and_text() {
        let report = BenchmarkReport {
            rows: vec![
                ReportRow {
                    arch: "dnn".into(),
                    metrics: Metrics {
                        acc: 94.0,
                        fpr: 6.5,
                        dr: 94.4,
                    },
                },
                ReportRow {
                    arch: "resnest".into(),
                    metrics: Metrics {
                        acc: 97.6,
                        fpr: 3.0,
                        dr: 98.2,
                    },
                },
            ],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("arch,acc_pct,fpr_pct,dr_pct\n"));
        assert!(csv.contains("resnest,97.6,3.0,98.2"));
        let text = report.to_text();
        assert!(text.contains("ACC%") && text.contains("FPR%") && text.contains("DR%"));
        assert_eq!(text.lines().count(), 3);
    }
}
