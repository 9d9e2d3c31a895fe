//! Diagnostics for selected subsets and the learning-order experiments.

mod experiments;
mod features;
mod report;

pub use experiments::{
    learning_order_groups, mean_std, order_harm_experiment, partition_groups,
    pretrained_speed_experiment, GroupAccuracy, LearningOrderGroups, OrderHarmResult,
    PretrainedSpeedResult, SpeedCurve, SPEED_FRACTIONS,
};
pub use features::{
    class_centroids, distance_ratios, median, DistanceRatioReport, RatioGroup, RatioSample,
};
pub use report::{selection_report, SelectionReport};
