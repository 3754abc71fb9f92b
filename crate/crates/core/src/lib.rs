//! Scale-adaptive and weight-adaptive heatmap regression for bottom-up
//! multi-person keypoint localization.

pub mod annotations;
pub mod cli;
pub mod codec;
pub mod decode;
pub mod error;
pub mod eval;
pub mod fit;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod loss;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{elementwise_max, AlphaField, Grid2D, HeatmapStack, ScaleField, Shape, SupportMask};
