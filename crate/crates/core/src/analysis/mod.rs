//! FLOPs accounting, NMSE evaluation, inference timing, the training-time
//! cost model, and CSV/markdown report emission.

mod flops;
mod nmse;
mod report;
mod timing;

pub use flops::{flops_conv2d, flops_dense, flops_ratio, model_flops, FlopsReport, LayerFlops};
pub use nmse::{format_db, nmse, nmse_raw, nmse_spatial_frequency, NmseResult, DEGENERATE_ENERGY};
pub use report::{emit_report, parse_f64, Cell, Table};
pub use timing::{
    host_descriptor, inference_benchmark, time_repeated, timing_stats, training_time_model, TimingReport,
    TrainingCostInputs,
};
