//! Confusion counts, accuracy / precision / recall / F1, table rendering, and
//! a checker that tests whether a reported metric tuple can come from any
//! confusion matrix of the stated size.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot compute metrics over zero samples")]
    EmptyCounts,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, 0) => self.tn += 1,
            (1, 0) => self.fn_ += 1,
            other => panic!("labels must be 0 or 1, got {other:?}"),
        }
    }

    /// Counts after flipping every prediction.
    pub fn flipped(&self) -> Self {
        Self {
            tp: self.fn_,
            fp: self.tn,
            tn: self.fp,
            fn_: self.tp,
        }
    }
}

/// Tallies `(true_label, predicted_label)` pairs. Labels must be 0 or 1.
pub fn confusion<I>(pairs: I) -> ConfusionCounts
where
    I: IntoIterator<Item = (u8, u8)>,
{
    let mut c = ConfusionCounts::default();
    for (t, p) in pairs {
        c.record(t, p);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateFlag {
    /// No positive predictions (tp + fp = 0).
    PrecisionUndefined,
    /// No positive samples (tp + fn = 0).
    RecallUndefined,
    /// 2tp + fp + fn = 0.
    F1Undefined,
}

/// Metrics for one experiment cell. Undefined ratios are reported as 0 and
/// flagged, never as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Share of samples predicted vulnerable; exposes an "everything is
    /// vulnerable" bias in the classifier.
    pub predicted_positive_rate: f64,
    pub parse_fallback_rate: f64,
    pub degenerate_flags: BTreeSet<DegenerateFlag>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(counts: ConfusionCounts) -> Result<MetricsReport, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::EmptyCounts);
    }
    let mut flags = BTreeSet::new();
    let mut or_flag = |v: Option<f64>, flag| {
        v.unwrap_or_else(|| {
            flags.insert(flag);
            0.0
        })
    };
    let precision = or_flag(
        ratio(counts.tp, counts.tp + counts.fp),
        DegenerateFlag::PrecisionUndefined,
    );
    let recall = or_flag(
        ratio(counts.tp, counts.tp + counts.fn_),
        DegenerateFlag::RecallUndefined,
    );
    // 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn) reduces to this, and the
    // integer form rounds once.
    let f1 = or_flag(
        ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn_),
        DegenerateFlag::F1Undefined,
    );
    Ok(MetricsReport {
        counts,
        accuracy: (counts.tp + counts.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        predicted_positive_rate: (counts.tp + counts.fp) as f64 / total as f64,
        parse_fallback_rate: 0.0,
        degenerate_flags: flags,
    })
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Consistency {
    Consistent { residual: f64 },
    Inconsistent { residual: f64, reason: String },
}

impl Consistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Consistency::Consistent { .. })
    }

    pub fn residual(&self) -> f64 {
        match self {
            Consistency::Consistent { residual } | Consistency::Inconsistent { residual, .. } => {
                *residual
            }
        }
    }
}

/// Allowed gap between reported and reconstructed accuracy.
pub const ACCURACY_TOLERANCE: f64 = 0.005;

/// Allowed gap between a reported F1 and the F1 of the reported precision and
/// recall: 0.01 percentage points.
pub const F1_TOLERANCE: f64 = 1e-4;

fn check_unit(name: &str, v: f64) -> Result<(), MetricsError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(MetricsError::InvalidInput(format!(
            "{name} = {v} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Tests whether `(accuracy, precision, recall)` is achievable on `n_total`
/// samples of which `positives` are positive.
///
/// Rebuilds `tp = recall·positives`, `fp = tp·(1/precision − 1)` and
/// `tn = negatives − fp`, then requires every count to lie within its class
/// size and `(tp + tn) / n_total` to match `accuracy` within
/// [`ACCURACY_TOLERANCE`].
pub fn consistency_check(
    accuracy: f64,
    precision: f64,
    recall: f64,
    n_total: u64,
    positives: u64,
) -> Result<Consistency, MetricsError> {
    check_unit("accuracy", accuracy)?;
    check_unit("precision", precision)?;
    check_unit("recall", recall)?;
    if n_total == 0 {
        return Err(MetricsError::InvalidInput(
            "n_total must be positive".into(),
        ));
    }
    if positives > n_total {
        return Err(MetricsError::InvalidInput(format!(
            "positives {positives} exceeds n_total {n_total}"
        )));
    }
    let n = n_total as f64;
    let pos = positives as f64;
    let neg = n - pos;
    let tp = recall * pos;
    let fp = if precision > 0.0 {
        tp * (1.0 / precision - 1.0)
    } else if tp > 0.0 {
        return Ok(Consistency::Inconsistent {
            residual: f64::INFINITY,
            reason: "precision 0 with positive recall".into(),
        });
    } else {
        // Precision 0 and tp 0 leave fp free; take the value accuracy implies.
        neg - accuracy * n
    };
    let tn = neg - fp;
    let residual = ((tp + tn) / n - accuracy).abs();
    let slack = 1e-9 * n;
    let mut problems = Vec::new();
    if tp < -slack || tp > pos + slack {
        problems.push(format!("tp {tp:.2} outside [0, {pos}]"));
    }
    if fp < -slack || fp > neg + slack {
        problems.push(format!("fp {fp:.2} outside [0, {neg}]"));
    }
    if tn < -slack || tn > neg + slack {
        problems.push(format!("tn {tn:.2} outside [0, {neg}]"));
    }
    if residual > ACCURACY_TOLERANCE {
        problems.push(format!(
            "reconstructed accuracy {:.4} differs from reported {accuracy:.4}",
            (tp + tn) / n
        ));
    }
    Ok(if problems.is_empty() {
        Consistency::Consistent { residual }
    } else {
        Consistency::Inconsistent {
            residual,
            reason: problems.join("; "),
        }
    })
}

/// Compares a reported F1 with the harmonic mean of the reported precision
/// and recall, within [`F1_TOLERANCE`].
pub fn f1_consistency(
    precision: f64,
    recall: f64,
    reported_f1: f64,
) -> Result<Consistency, MetricsError> {
    check_unit("precision", precision)?;
    check_unit("recall", recall)?;
    check_unit("f1", reported_f1)?;
    let expected = f1_from(precision, recall);
    let residual = (expected - reported_f1).abs();
    Ok(if residual <= F1_TOLERANCE {
        Consistency::Consistent { residual }
    } else {
        Consistency::Inconsistent {
            residual,
            reason: format!(
                "F1 of reported precision/recall is {:.2}%, reported {:.2}%",
                expected * 100.0,
                reported_f1 * 100.0
            ),
        }
    })
}

/// A previously published result row, cited verbatim in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CitedRow {
    pub system: &'static str,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Baseline rows on Big-Vul, as fractions.
pub const CITED_BASELINES: [CitedRow; 2] = [
    CitedRow {
        system: "VulDeePecker",
        accuracy: 0.8119,
        precision: 0.3844,
        recall: 0.1275,
        f1: 0.1915,
    },
    CitedRow {
        system: "Reveal",
        accuracy: 0.8714,
        precision: 0.1722,
        recall: 0.3404,
        f1: 0.2287,
    },
];

/// Renders a fraction as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// One Markdown row set in the `Accuracy | Precision | Recall | F1 Score`
/// layout.
pub fn markdown_table(first_column: &str, rows: &[(String, [f64; 4])]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {first_column} | Accuracy | Precision | Recall | F1 Score |"
    );
    out.push_str("|---|---:|---:|---:|---:|\n");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} |",
            percent(m[0]),
            percent(m[1]),
            percent(m[2]),
            percent(m[3])
        );
    }
    out
}

impl MetricsReport {
    pub fn as_row(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

impl CitedRow {
    pub fn as_row(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}
