//! Global forecasting across databases of similar time series.
//!
//! One recurrent network is trained per group of similar series, with groups
//! found by minimum-message-length mixture clustering over interpretable
//! per-series features. Preprocessing (log stabilization, deterministic
//! seasonal-trend decomposition, moving windows with local trend
//! normalization) is fully invertible, and evaluation covers fixed- and
//! rolling-origin protocols with the usual scaled error measures and
//! nonparametric tests.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hyperopt;
pub mod lstm;
pub mod pipeline;
pub mod prep;
pub mod rng;
pub mod stats;
pub mod stl;

pub use cluster::{cluster, ClusterAssignment, ClusterOptions, MixtureModel};
pub use corpus::{
    load_corpus, load_external_forecasts, train_test_split, Corpus, DatasetFormat,
    ExternalForecastSet, TimeSeries,
};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate_fixed_origin, evaluate_rolling_origin, ForecastSet, MethodReport, SeriesScore,
};
pub use features::{feature_vector, FeatureVector};
pub use hyperopt::{SearchSpace, Trial};
pub use lstm::{LstmModel, LstmState, TrainConfig};
pub use pipeline::{
    make_grouping, run, trend_experiment, ConfigSource, Group, Grouping, GroupingStrategy,
    RunOptions, RunOutcome,
};
pub use prep::{prepare_series, PreparedSeries, PreprocessPlan, TrainingPatch};
pub use stl::StlDecomposition;
