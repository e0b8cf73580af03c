//! DDPM forward chain, ancestral reverse step, noise-prediction loss, and
//! the DDIM non-Markovian update.

use super::{check_len, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// `sqrt(abar_t) z0 + sqrt(1 - abar_t) noise`.
pub fn forward_marginal_sample(
    z0: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_len(z0, noise, "forward marginal")?;
    let ab = sched.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(z0.iter().zip(noise).map(|(z, e)| a * z + b * e).collect())
}

/// One forward corruption step `t-1 -> t`.
pub fn forward_chain_step(
    z_prev: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_len(z_prev, noise, "forward step")?;
    let al = sched.alpha(t)?;
    let (a, b) = (al.sqrt(), (1.0 - al).sqrt());
    Ok(z_prev.iter().zip(noise).map(|(z, e)| a * z + b * e).collect())
}

/// Reverse-step mean and standard deviation given a noise prediction.
pub fn ddpm_posterior(
    z_t: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    eps_hat: &[f64],
) -> Result<(Vec<f64>, f64)> {
    check_len(z_t, eps_hat, "ddpm posterior")?;
    let al = sched.alpha(t)?;
    let ab = sched.alpha_bar(t)?;
    let ab_prev = sched.alpha_bar(t - 1)?;
    let coef = (1.0 - al) / (1.0 - ab).sqrt();
    let inv = 1.0 / al.sqrt();
    let mean = z_t.iter().zip(eps_hat).map(|(z, e)| (z - coef * e) * inv).collect();
    let var = sched.beta(t)? * (1.0 - ab_prev) / (1.0 - ab);
    Ok((mean, var.sqrt()))
}

pub fn ddpm_reverse_step(
    z_t: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    den: &dyn Denoiser,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_len(z_t, noise, "ddpm step")?;
    let eps = den.predict_eps(z_t, t)?;
    let (mean, sigma) = ddpm_posterior(z_t, t, sched, &eps)?;
    Ok(mean.iter().zip(noise).map(|(m, n)| m + sigma * n).collect())
}

/// `|| noise - eps_theta(sqrt(abar) z0 + sqrt(1 - abar) noise, t) ||^2`.
pub fn ddpm_loss(
    z0: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    den: &dyn Denoiser,
    noise: &[f64],
) -> Result<f64> {
    sched.alpha(t)?;
    let z_t = forward_marginal_sample(z0, t, sched, noise)?;
    let eps = den.predict_eps(&z_t, t)?;
    Ok(noise.iter().zip(&eps).map(|(n, e)| (n - e).powi(2)).sum())
}

/// `eta * sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev)`;
/// `eta = 1` with `t_prev = t - 1` is the DDPM posterior deviation.
pub fn ddim_sigma(sched: &NoiseSchedule, t: usize, t_prev: usize, eta: f64) -> Result<f64> {
    if t_prev >= t {
        return Err(Error::Input(format!("DDIM needs t_prev < t, got {t_prev} >= {t}")));
    }
    let ab = sched.alpha_bar(t)?;
    let ab_prev = sched.alpha_bar(t_prev)?;
    Ok(eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).sqrt())
}

#[allow(clippy::too_many_arguments)]
pub fn ddim_step(
    z_t: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
    den: &dyn Denoiser,
    eta: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Input(format!("eta must be in [0, 1], got {eta}")));
    }
    check_len(z_t, noise, "ddim step")?;
    let sigma = ddim_sigma(sched, t, t_prev, eta)?;
    let ab = sched.alpha_bar(t)?;
    let ab_prev = sched.alpha_bar(t_prev)?;
    let eps = den.predict_eps(z_t, t)?;
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let sp = ab_prev.sqrt();
    Ok(z_t
        .iter()
        .zip(&eps)
        .zip(noise)
        .map(|((z, e), n)| {
            let x0 = (z - sn * e) / sa;
            sp * x0 + dir * e + sigma * n
        })
        .collect())
}

/// `n_steps + 1` strictly decreasing indices from `t_start` to 0, evenly
/// spread.
pub fn ddim_timesteps(t_start: usize, n_steps: usize) -> Result<Vec<usize>> {
    if n_steps == 0 || n_steps > t_start {
        return Err(Error::Input(format!("need 1 <= steps <= {t_start}, got {n_steps}")));
    }
    Ok((0..=n_steps)
        .map(|i| ((n_steps - i) as f64 * t_start as f64 / n_steps as f64).round() as usize)
        .collect())
}

/// Ancestral sampling from step `t_start` down to 0.
pub fn ddpm_sample(
    z_start: &[f64],
    t_start: usize,
    den: &dyn Denoiser,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let sched = den.schedule();
    if t_start > sched.t_max() {
        return Err(Error::Input(format!("t_start {t_start} beyond T = {}", sched.t_max())));
    }
    let mut z = z_start.to_vec();
    let mut noise = vec![0.0; z.len()];
    for t in (1..=t_start).rev() {
        rng::fill_normal(rng, &mut noise);
        z = ddpm_reverse_step(&z, t, sched, den, &noise)?;
    }
    Ok(z)
}

/// DDIM along a strictly decreasing index list ending anywhere >= 0.
pub fn ddim_sample(
    z_start: &[f64],
    timesteps: &[usize],
    eta: f64,
    den: &dyn Denoiser,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if timesteps.len() < 2 || timesteps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("DDIM timesteps must be strictly decreasing, length >= 2".into()));
    }
    let sched = den.schedule();
    let mut z = z_start.to_vec();
    let mut noise = vec![0.0; z.len()];
    for w in timesteps.windows(2) {
        if eta > 0.0 {
            rng::fill_normal(rng, &mut noise);
        }
        z = ddim_step(&z, w[0], w[1], sched, den, eta, &noise)?;
    }
    Ok(z)
}
