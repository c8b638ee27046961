//! Ray makeup and received power prediction inside an enclosed region from
//! power-only measurements collected along its boundary.
//!
//! The crate is split along the processing chain:
//!
//! * [`geometry`]: points, enclosures, candidate rays, array angles.
//! * [`channel_sim`]: exact multipath simulator used as ground truth.
//! * [`spectral`]: windowed spectra of boundary power and peak tables.
//! * [`ground_fit`]: two-ray mean fit for ground permittivity and gain.
//! * [`predictor`]: candidate-ray scanning and ray makeup prediction.
//! * [`config`], [`formats`], [`metrics`]: run configuration, CSV files and
//!   evaluation statistics.

pub mod channel_sim;
pub mod config;
pub mod formats;
pub mod geometry;
pub mod ground_fit;
pub mod metrics;
pub mod predictor;
pub mod spectral;

pub use channel_sim::{RayMakeup, RouteMeasurements, Scenario};
pub use geometry::{ArrayWindow, Enclosure, Point2, RayLine};
