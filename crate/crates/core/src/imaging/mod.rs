//! Raster containers, affine warping, stack statistics and mask geometry.

mod affine;
pub mod io;
mod raster;
mod stack;
mod warp;

pub use affine::Affine2D;
pub use raster::{BinaryMask, GrayImage, PointF, ProbImage};
pub use stack::{barycenter, mean_stack, median_stack};
pub use warp::{warp_affine, warp_mask, warp_prob, Interpolation};
