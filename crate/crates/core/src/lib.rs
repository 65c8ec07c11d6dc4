//! Attractors of piecewise expanding interval maps: ergodic decomposition via
//! Ulam discretization, exact boundary combinatorics, separation checks,
//! periodic orbits and combinatorial stability under perturbation.

pub mod analysis;
pub mod attractor;
pub mod error;
pub mod expr;
pub mod interval;
pub mod map;
pub mod periodic;
pub mod stability;
pub mod transfer;

pub use error::{Error, ParseError, Result};
pub use expr::Expr;
pub use interval::{hausdorff_distance, Interval, IntervalUnion};
pub use map::{distance, Branch, Distance, Formula, OrbitSegment, PeMap, Side};
