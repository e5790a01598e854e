//! Stochastic storm cells, clustering, MVE geometry and probability fields.

pub mod cell;
pub mod ellipse;
pub mod field;
pub mod kmeans;

pub use cell::{heading_from_north_cw, sample_cell_path, ForecastCell, StormCellState};
pub use ellipse::{min_volume_ellipse, min_volume_ellipse_padded, Ellipse, DEFAULT_MVE_TOLERANCE, MIN_SEMI_AXIS_KM};
pub use field::{
    build_storm_field, build_storm_field_from_nowcast, merge_probabilities, observed_layer, ClusterCount,
    StormField, StormOptions,
};
pub use kmeans::{kmeans, select_k, select_k_with, ClusterAssignment};
