mod curve;
mod stacky;

pub use curve::*;
pub use stacky::*;
