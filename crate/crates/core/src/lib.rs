//! Registration, curation and evaluation toolkit for paired RGB-thermal
//! imagery.
//!
//! The crate covers the full offline pipeline: camera geometry and fisheye
//! rectification, 16-bit to 8-bit thermal conversion, depth-based
//! RGB-to-thermal registration, dataset bookkeeping, the cross-modal
//! training losses, and the place-recognition, segmentation and depth
//! metrics.
//!
//! Data-parallel kernels take an [`Exec`] policy. With the default
//! `parallel` feature they run on rayon; disabling it gives a purely
//! sequential build with identical results.

pub mod calib;
pub mod crossmodal;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod io;
pub mod par;
pub mod raster;
pub mod registration;
pub mod thermalproc;

pub use error::{Error, Result};
pub use par::Exec;
pub use raster::{DepthMap, Gray16, Gray8, Raster, Rgb8};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
