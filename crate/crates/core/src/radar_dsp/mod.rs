//! Raw cube → fixed-size `(x, y, z, d, intensity)` point cloud.

mod cloud;
mod detect;
mod doa;
mod fft;

pub use cloud::{
    assemble_point_cloud, frame_pipeline, read_pointclouds, write_pointclouds, PipelineOptions,
    Preprocessor, RadarPoint, RadarPointCloud, N_POINTS, TOP_BINS,
};
pub use detect::{
    gate_detections, gate_detections_with, select_top_bins, window_covariance, DetectionBin,
    GateMask, GATE_DOPPLER, GATE_RANGE,
};
pub use doa::{
    bartlett_doa, direction, spherical_to_ground, steering_vector, AngleEstimate, AngleGrid,
    BartlettScanner,
};
pub use fft::{
    mti_filter, range_doppler_fft, range_doppler_fft_with, IntensityMap, RangeDopplerMaps, Window,
};
