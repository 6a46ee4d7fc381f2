//! Monocular 3D ball localization.
//!
//! Given a calibrated camera, a ball's pixel position and its apparent diameter,
//! [`geometry::localize_from_diameter`] places the ball in world coordinates. The
//! remaining modules provide the supporting pipeline: a Hough-circle diameter
//! baseline ([`imageproc`]), ballistic denoising of annotations ([`ballistic`]),
//! diameter estimators and losses ([`estimation`]), evaluation metrics
//! ([`metrics`]), and dataset handling including a synthetic generator ([`data`]).

pub mod ballistic;
pub mod data;
pub mod estimation;
pub mod geometry;
pub mod imageproc;
pub mod metrics;
pub mod pipeline;

pub use geometry::{
    CalibratedCamera, CameraIntrinsics, CameraPose, DistortionCoefficients, Pixel, PixelBall, WorldPoint,
};
