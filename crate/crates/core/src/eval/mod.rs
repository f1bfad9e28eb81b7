//! Evaluation harness: leave-one-subject-out folds, weighted metrics, the
//! ON/OFF signed-rank analysis and report assembly.

mod metrics;
mod protocol;
mod report;
mod wilcoxon;

pub use metrics::{compute_metrics, metrics_from_confusion, weighted_f1, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use protocol::{
    extract_feature_rows, fold_class_weights, missing_inputs, participant_labels, plan_losocv, run_fold, run_splits,
    standard_cv_split, validation_size, ExcludedWalk, FoldPlan, FoldResult, Method, Pipeline, WalkPrediction, WalkRecord,
    WalkSplit, STANDARD_SPLIT,
};
pub use report::{
    classification_table, confusion_svg, format_p_value, leaderboard_table, method_figures, run_benchmark, wilcoxon_table,
    BenchmarkConfig, BenchmarkReport, ConfusionMatrices, LeaderboardRow, MethodReport, MetricsTables, Protocol, WilcoxonRow,
    GROUND_TRUTH_ROW, REPORT_SCHEMA,
};
pub use wilcoxon::{
    on_off_analysis, pair_on_off, signed_rank_of_differences, wilcoxon_signed_rank, Aggregation, OnOffAnalysis,
    ParticipantPair, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N,
};
