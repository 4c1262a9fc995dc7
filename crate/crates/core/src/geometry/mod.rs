//! Chart-level Riemannian geometry.

mod distance;
mod flow;
mod patch;

pub use distance::{riemannian_distance, DistanceEstimate};
pub use flow::{
    exp_point, geodesic_flow, Exit, ExitReason, GeodesicState, Trajectory, BLOW_UP_NORM,
    DEFAULT_STEP, MAX_SPEED_DRIFT,
};
pub use patch::{Christoffel, ChristoffelFn, ManifoldPatch, MetricFn, Point, MIN_EIGENVALUE};
