//! Discrete diffusion machinery over flat latent vectors.
//!
//! DDPM and DDIM share a [`NoiseSchedule`] and a [`Denoiser`]; the bridge
//! sampler uses a continuous-time [`BridgeSchedule`] and a
//! [`BridgeDenoiser`] that predicts the clean latent from `(z_t, z_T, t)`.

mod bridge;
mod ddpm;
mod latent;
mod schedule;

pub use bridge::{
    bridge_forward_simulate, bridge_h_transform, bridge_marginal, bridge_score_from_predictor,
    bridge_score_from_x0, bridge_time_grid, ddbm_sample, ddbm_step, BridgeKind, BridgeMode,
    BridgeSchedule, BridgeTable,
};
pub use ddpm::{
    ddim_sample, ddim_sigma, ddim_step, ddim_timesteps, ddpm_loss, ddpm_posterior,
    ddpm_reverse_step, ddpm_sample, forward_chain_step, forward_marginal_sample,
};
pub use latent::{compose_input, decode_latent, encode_latent, Composite, EncoderMode, LatentState};
pub use schedule::{build_linear_schedule, NoiseSchedule};

use crate::error::Result;

/// Noise-prediction network. `predict_x0` is derived from `predict_eps`
/// through `z = sqrt(abar) x0 + sqrt(1 - abar) eps`.
pub trait Denoiser: Sync {
    fn schedule(&self) -> &NoiseSchedule;

    fn predict_eps(&self, z: &[f64], t: usize) -> Result<Vec<f64>>;

    fn predict_x0(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        let eps = self.predict_eps(z, t)?;
        let ab = self.schedule().alpha_bar(t)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(z.iter().zip(&eps).map(|(z, e)| (z - sn * e) / sa).collect())
    }
}

/// Clean-latent predictor for the bridge sampler.
pub trait BridgeDenoiser: Sync {
    fn bridge_predict_x0(
        &self,
        z_t: &[f64],
        z_terminal: &[f64],
        t: f64,
        sched: &BridgeSchedule,
    ) -> Result<Vec<f64>>;
}

pub(crate) fn check_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(crate::Error::Shape(format!("{what}: length {} vs {}", a.len(), b.len())));
    }
    Ok(())
}
