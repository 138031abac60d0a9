pub mod classical;
pub mod dataprep;
pub mod error;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod nets;
pub mod pipeline;
pub mod training;
pub mod raster;

pub use error::{Error, Result};
pub use raster::{BinaryMask, RasterImage, ResizeMode, StructuringElement};
