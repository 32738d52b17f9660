//! The four preprocessing stages. Every stage maps an [`ImageBuffer`] to a
//! new one of the same size and clamps its output into `[0, 1]`.
//!
//! | code | stage | method |
//! |------|-------|--------|
//! | SR | [`shadow_removal`] | external shadow-free files or luminance / blurred luminance |
//! | CN | [`color_neutralize`] | Von Kries scaling in HPE LMS, linear light |
//! | IN | [`intensity_neutralize`] | multi-scale retinex on `(R+G+B)/3` |
//! | CE | [`contrast_enhance`] | per-channel 256-bin histogram equalization |
//!
//! [`ImageBuffer`]: crate::image::ImageBuffer

pub mod blur;
mod color;
mod histeq;
mod retinex;
mod shadow;

pub use color::{
    adaptation_matrix, color_neutralize, gray_world, srgb_decode, srgb_encode, ColorParams, WhitePoint, WhiteSource,
    HPE_XYZ_TO_LMS, SRGB_TO_XYZ,
};
pub use histeq::contrast_enhance;
pub use retinex::{intensity_neutralize, intensity_neutralize_raw, MsrParams};
pub use shadow::{classic_shadow_removal_raw, shadow_removal, ShadowBackend};
