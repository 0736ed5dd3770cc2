//! The sixteen anatomical validity checks and the primitives behind them.

mod components;
mod report;
mod shape;

pub use components::{
    connected_components, count_holes, count_holes_excluding, fill_holes, holes_between, touches,
    Components, Connectivity,
};
pub use report::{
    calibrate_thresholds, calibrate_thresholds_with_margin, evaluate_anatomy, is_valid,
    AnatomyReport, Check, CheckKind, Thresholds, CALIBRATION_MARGIN,
};
pub use shape::{circularity, convex_hull, convexity_ratio, exterior_edge_count};
