//! Group maps, posterior distances and geometric calibration weights.

mod distance;
mod group_map;

pub use distance::{distribution_distance, geometric_weights, DistanceMetric, WeightConfig};
pub use group_map::{
    build_group_map, emit_group_map_plot, group_map_from_posteriors, posteriors, render_csv,
    render_pgm, true_group_map, Assignment, GroupMap,
};
