//! Occlusion-aware lane detection toolkit.
//!
//! The crate is organised the way a frame flows through the system:
//!
//! * [`raster`], [`morph`], [`io`], [`bbox`] and [`manifest`] hold the shared
//!   image types, binary morphology, PNG I/O and the dataset index format.
//! * [`synthgen`] renders road scenes with exact lane ground truth and
//!   [`augment`] composites occluder sprites onto them.
//! * [`detect`], [`inpaint`] and [`lanes`] are the three node families of the
//!   detect → inpaint → segment pipeline, each with in-process reference
//!   implementations.
//! * [`nodeproto`] lets an external process serve any of those stages.
//! * [`metrics`] and [`pipeline`] evaluate single frames, whole datasets and
//!   the four-condition ablation.

pub mod augment;
pub mod bbox;
pub mod detect;
pub mod error;
pub mod inpaint;
pub mod io;
pub mod lanes;
pub mod manifest;
pub mod metrics;
pub mod morph;
pub mod nodeproto;
pub mod pipeline;
pub mod raster;
pub mod seed;
pub mod synthgen;

pub use bbox::{BBox, TRAFFIC_CLASSES};
pub use error::{Error, Result};
pub use manifest::{DatasetManifest, FrameRecord};
pub use raster::{Polygon, RasterImage, RasterMask, RgbaImage};
