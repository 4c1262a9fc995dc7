//! Numerical Riemannian geometry on quotient spaces `M/G` presented by Lie
//! groupoid models: normal speeds and lengths of curves in the quotient, the
//! chain pseudo-distance, normal geodesics and the checks that relate them.

pub mod curves;
pub mod error;
pub mod expr;
pub mod geodesics;
pub mod geometry;
pub mod graph;
pub mod groupoid;
pub mod library;
pub mod quotient;
pub mod quadrature;
pub mod region;

pub use error::{GeoError, Result};
pub use geometry::{ManifoldPatch, Point};
pub use region::Region;
