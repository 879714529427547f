//! Classification metrics and the paired Wilcoxon signed-rank test.

mod classification;
mod wilcoxon;

pub use classification::{
    auprc_macro, auroc_binary, auroc_macro, average_precision, cohens_kappa, confusion_and_f1,
    confusion_matrix, evaluate, evaluate_logits, f1_from_confusion, f1_from_counts, reports_csv,
    ConfusionReport, MetricsReport, PredictionSet, REPORT_CSV_HEADER,
};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N,
    NORMAL_MIN_N,
};
