//! Synthetic CSI generation: cluster multipath channels, the angular-delay
//! transform, and normalized datasets.

mod dataset;
mod paths;
mod sample;
mod scenario;
mod transform;

pub use dataset::{
    build_dataset, build_dataset_with_stats, generate_raw, load_dataset, save_dataset,
    sidecar_path, ClampStats, CsiDataset, DatasetHeader, NormalizationMeta, RawCsiSplits, Split,
    SplitCounts, DATASET_MAGIC, DATASET_VERSION,
};
pub use paths::{generate_csi, sample_path_set, sample_rng, steering_vector, PathComponent, PathSet};
pub use sample::{CsiSample, Domain};
pub use scenario::ScenarioConfig;
pub use transform::{inverse_transform, to_angular_delay};
