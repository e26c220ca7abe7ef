//! Hamming-space ranking and retrieval metrics.

mod codes;
mod metrics;

pub use codes::{
    hamming_distance, load_codes, pack_code, packed_distance, read_codes, save_codes, words_for, write_codes,
    PackedCodes, CODE_MAGIC, CODE_VERSION,
};
pub use metrics::{
    average_precision, evaluate, evaluate_packed, metrics_within_radius, precision_recall_within, query_metrics,
    rank_by_distance, rank_database, shares_label, EvalReport, QueryMetrics, RelevanceMode, RelevanceOracle, RADII,
};
