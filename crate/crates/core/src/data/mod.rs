//! Detector data: cleaning, feature extraction, windowing, scaling and
//! synthetic scenario generation.

mod clean;
mod features;
mod pipeline;
mod scaler;
mod series;
pub mod synth;
mod window;

pub use clean::{
    clean, drop_sparse_detectors, flag_outliers, impute_iterative, CleaningConfig, CleaningReport, DropReport,
    ImputeConfig, ImputeReport, CAPACITY_PER_LANE, MAX_MISSING,
};
pub use features::{
    demand, extract_demand_features, extract_regular_features, haversine_miles, ordered_population, period_of_hour,
    regular, FeatureFrame, Zone, DEMAND_FEATURES, DEMAND_LAG_HOURS, PERIODS, REGULAR_FEATURES,
};
pub use pipeline::{
    prepare, Dataset, PipelineConfig, PipelineReport, Prepared, ScenarioMeta, EVACUATION_FILE, REGULAR_FILE, SCENARIO_FILE,
    TOPOLOGY_FILE, ZONES_FILE,
};
pub use scaler::{FeatureScaler, FlowScaler};
pub use series::{parse_timestamp, DetectorSeries, SeriesSet, TIMESTAMP_FORMAT};
pub use synth::{generate_synthetic, Scenario, ScenarioConfig};
pub use window::{split_samples, window_samples, SampleSet, Split, SplitRatios};
