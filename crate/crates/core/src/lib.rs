pub mod error;
pub mod dataio;
pub mod geometry;
pub mod image;
pub mod ipt;
pub mod mask;
pub mod metrics;
pub mod segnet;
pub mod strategy;
pub mod sweep;

pub use error::{Error, Result};
pub use image::{resize_canonical, ImageBuffer};
pub use mask::{BinaryPlane, ClassId, MaskSet};
pub use strategy::{apply_strategy, parse_strategy, validate_strategy, StageId, StageParams, Strategy};
