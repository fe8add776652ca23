//! Ground-truth scores, perturbation curves and rank correlation.

mod curves;
mod rank;
mod score;
mod stats;

pub use curves::{
    adapted_insertion_deletion, default_n_grid, insertion_deletion, pixel_order, sensitivity_n, trapezoid, CurveMode,
    CurveResult, SensitivityMode, SensitivityPlan,
};
pub use rank::{build_rank_table, MethodSummary, MetricDirection, RankTable};
pub use score::{f1, faithfulness_test, normalize_attribution, score, soft_scores, FaithfulnessVerdict, ScoreTriple};
pub use stats::{average_ranks, pearson, spearman};

/// Faithfulness threshold used by default.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Standard insertion/deletion step as a fraction of all pixels.
pub const DEFAULT_FRACTION: f64 = 0.02;
