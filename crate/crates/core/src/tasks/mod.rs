//! The two experiments: video-level donation prediction and user-video
//! donation recommendation, with their labeling, features and metrics.

mod metrics;
mod prediction;
mod recommendation;

pub use metrics::{
    list_metrics, rank_candidates, rank_metrics, ApMode, EvalReport, MethodRow, RankedList,
};
pub use prediction::{
    balanced_split, build_series_features, evaluate_columns, label_top_quantile, run_prediction,
    BalancedSplit, FeatureGroup, GroupResult, PredictionParams, PredictionReport, QuantileLabels,
    PAST_DONATION, PAST_POPULARITY,
};
pub use recommendation::{
    build_pair_dataset, build_queries, run_recommendation, Method, NegativeSampling, Query,
    RecParams, RecommendationRun,
};
