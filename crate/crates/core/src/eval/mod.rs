//! Detection metrics, curves, and dataset splits.

mod metrics;
mod report;
mod split;

pub use metrics::{
    auprc, auroc, pr_curve, precision_recall_f1, rates, roc_curve, write_curve_csv,
    ConfusionCounts, LabeledScores, PrecisionRecallF1, Rates,
};
pub use report::{average_rows, evaluate, MetricSet, Report, ReportRow, UNDEFINED};
pub use split::{kfold_split, Fold, ScenarioSplit};
