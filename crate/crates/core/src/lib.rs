//! Projection-domain PET toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`tomo`]: discrete Radon projector, its exact adjoint, FBP and MLEM
//!   reconstruction, and synthetic phantoms.
//! * [`augment`]: random image-domain mask blocks projected into sinogram
//!   space and the positive/negative sinogram decomposition built on them.
//! * [`tma`]: parameter-free ROI attention gating in sinogram space.
//! * [`diffusion`]: noise and bridge schedules, DDPM/DDIM samplers and the
//!   diffusion-bridge SDE/ODE stepper, over the [`diffusion::Denoiser`] and
//!   [`diffusion::BridgeDenoiser`] traits.
//! * [`denoiser`]: an exact Gaussian posterior-mean denoiser and a small MLP
//!   with hand-written backpropagation.
//! * [`pacbayes`]: bounded losses, Gibbs risk, KL terms and the inverted
//!   binary-KL certificate.
//! * [`metrics`]: PSNR / SSIM / RMSE.
//! * [`io`]: the SGM1 array container, PGM export, CSV and run configuration.

pub mod augment;
pub mod denoiser;
pub mod diffusion;
mod error;
pub mod io;
pub mod metrics;
pub mod pacbayes;
pub mod rng;
pub mod tma;
pub mod tomo;

pub use error::{Error, Result};
