//! Coverage, association, interference and beam-training analysis of
//! indoor THz networks with APs on a square or hexagonal ceiling grid,
//! together with a Monte Carlo scene simulator that checks every closed
//! form.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod antenna;
pub mod beamtrain;
pub mod blockage;
pub mod channel;
pub mod geometry;
pub mod params;
pub mod simulate;
pub mod special;

pub use antenna::{PointingErrorDist, PointingModel};
pub use geometry::{ApIndex, Lattice, LinkGeometry, UeLocation};
pub use params::{DerivedConstants, Model, SystemParams, Topology};
