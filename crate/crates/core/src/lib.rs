//! Intensity-aware distance maps from sparse point annotations.
//!
//! Provides Euclidean, geodesic, intensity and minimum-barrier distance
//! transforms on 2D and 3D grids, signed maps for boundary-loss training,
//! synthetic point annotations, loss terms and segmentation metrics.

pub mod error;
pub mod grid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod transforms;
pub mod weaklabels;

pub use error::{Error, Result};
pub use grid::{
    boundary_of, neighbors, Connectivity, DistanceMap, GridShape, LabelVolume, ProbabilityVolume,
    ScalarVolume, SignedDistanceMap,
};
pub use loss::{boundary_loss, boundary_loss_grad, combined_objective, partial_cross_entropy, LossConfig, Objective};
pub use metrics::{dice, evaluate, hd95, ClassMetrics, MetricReport};
pub use transforms::{
    distance_map, distance_map_exact, distance_map_raster, make_signed_map, signed_maps_for_all_classes,
    signed_maps_per_slice, DistanceKind, Engine, RasterConfig, TransformConfig,
};
pub use weaklabels::{generate_points, AbsentClassPolicy, PointAnnotationConfig};
