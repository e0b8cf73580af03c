//! Parallel-beam 2-D tomography: grids, geometry, the pixel-driven Radon
//! projector and its adjoint, FBP, MLEM and phantoms.

mod fbp;
mod geometry;
mod image;
mod mlem;
mod phantom;
mod projector;

pub use fbp::{fbp_reconstruct, FbpWindow};
pub use geometry::{default_n_det, uniform_angles, Kernel, ProjectionGeometry, Sinogram};
pub use image::ImageGrid;
pub use mlem::{mlem_reconstruct, MlemResult};
pub use phantom::{make_phantom, Phantom, Rect, SHEPP_LOGAN_MODIFIED};
pub use projector::{backproject, radon_forward};
