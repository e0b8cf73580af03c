//! Diffusion bridge: a forward SDE conditioned to end at `z_T`, sampled in
//! reverse time by Euler–Maruyama (SDE) or Heun (probability-flow ODE).
//!
//! Conventions: `z_t = alpha_t z_0 + sigma_t eps` is the unconditioned
//! marginal, `snr_t = alpha_t^2 / sigma_t^2`, `r = snr_T / snr_t` in `[0, 1]`.

use super::{check_len, BridgeDenoiser, LatentState};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeKind {
    /// `sigma_t^2` linear from `sigma_min^2` to `sigma_max^2`, `alpha = 1`.
    Ve { sigma_min: f64, sigma_max: f64 },
    /// Linear `beta(t)`, `alpha_t = exp(-B(t)/2)`, `sigma_t^2 = 1 - alpha_t^2`.
    Vp { beta_min: f64, beta_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BridgeMode {
    #[default]
    Sde,
    Ode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSchedule {
    pub kind: BridgeKind,
    pub t_end: f64,
    pub t_min: f64,
    pub clamp_eps: f64,
}

/// Coefficients tabulated on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeTable {
    pub t: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub snr: Vec<f64>,
}

impl Default for BridgeSchedule {
    fn default() -> Self {
        Self::ve(0.002, 1.0, 1.0).expect("default bridge schedule is valid")
    }
}

impl BridgeSchedule {
    /// `sigma_min == sigma_max` is accepted: it is the zero-diffusion
    /// schedule, on which [`ddbm_step`] is the identity.
    pub fn ve(sigma_min: f64, sigma_max: f64, t_end: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min <= sigma_max && sigma_max.is_finite()) {
            return Err(Error::Input(format!(
                "VE bridge needs 0 < sigma_min <= sigma_max, got {sigma_min}, {sigma_max}"
            )));
        }
        Self::build(BridgeKind::Ve { sigma_min, sigma_max }, t_end, 0.0)
    }

    /// `t_min` must be positive: `sigma_0 = 0` for VP.
    pub fn vp(beta_min: f64, beta_max: f64, t_end: f64, t_min: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max.is_finite()) {
            return Err(Error::Input(format!(
                "VP bridge needs 0 < beta_min <= beta_max, got {beta_min}, {beta_max}"
            )));
        }
        if !(t_min > 0.0) {
            return Err(Error::Input("VP bridge needs t_min > 0".into()));
        }
        Self::build(BridgeKind::Vp { beta_min, beta_max }, t_end, t_min)
    }

    fn build(kind: BridgeKind, t_end: f64, t_min: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Input(format!("t_end must be positive, got {t_end}")));
        }
        let s = Self { kind, t_end, t_min, clamp_eps: 1e-3 * t_end };
        if s.t_min >= s.t_hi() {
            return Err(Error::Input("t_min must lie below t_end - clamp_eps".into()));
        }
        Ok(s)
    }

    pub fn with_clamp_eps(mut self, clamp_eps: f64) -> Result<Self> {
        if !(clamp_eps > 0.0 && clamp_eps < self.t_end - self.t_min) {
            return Err(Error::Input(format!("clamp_eps {clamp_eps} out of range")));
        }
        self.clamp_eps = clamp_eps;
        Ok(self)
    }

    /// Latest admissible time.
    pub fn t_hi(&self) -> f64 {
        self.t_end - self.clamp_eps
    }

    fn integral_beta(&self, t: f64, beta_min: f64, beta_max: f64) -> f64 {
        beta_min * t + 0.5 * (beta_max - beta_min) * t * t / self.t_end
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self.kind {
            BridgeKind::Ve { .. } => 1.0,
            BridgeKind::Vp { beta_min, beta_max } => {
                (-0.5 * self.integral_beta(t, beta_min, beta_max)).exp()
            }
        }
    }

    pub fn sigma_sq(&self, t: f64) -> f64 {
        match self.kind {
            BridgeKind::Ve { sigma_min, sigma_max } => {
                let (a, b) = (sigma_min * sigma_min, sigma_max * sigma_max);
                a + (b - a) * t / self.t_end
            }
            BridgeKind::Vp { beta_min, beta_max } => {
                -(-self.integral_beta(t, beta_min, beta_max)).exp_m1()
            }
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_sq(t).sqrt()
    }

    pub fn snr(&self, t: f64) -> f64 {
        let a = self.alpha(t);
        a * a / self.sigma_sq(t)
    }

    /// `g(t)^2`.
    pub fn diffusion_sq(&self, t: f64) -> f64 {
        match self.kind {
            BridgeKind::Ve { sigma_min, sigma_max } => {
                (sigma_max * sigma_max - sigma_min * sigma_min) / self.t_end
            }
            BridgeKind::Vp { beta_min, beta_max } => beta_min + (beta_max - beta_min) * t / self.t_end,
        }
    }

    /// Linear drift coefficient: `f(z, t) = drift_coef(t) * z`.
    pub fn drift_coef(&self, t: f64) -> f64 {
        match self.kind {
            BridgeKind::Ve { .. } => 0.0,
            BridgeKind::Vp { .. } => -0.5 * self.diffusion_sq(t),
        }
    }

    pub fn table(&self, grid: &[f64]) -> Result<BridgeTable> {
        for &t in grid {
            self.check_time(t)?;
        }
        Ok(BridgeTable {
            t: grid.to_vec(),
            alpha: grid.iter().map(|&t| self.alpha(t)).collect(),
            sigma: grid.iter().map(|&t| self.sigma(t)).collect(),
            snr: grid.iter().map(|&t| self.snr(t)).collect(),
        })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < self.t_min - 1e-12 * self.t_end {
            return Err(Error::Input(format!("bridge time {t} below t_min = {}", self.t_min)));
        }
        if t > self.t_hi() {
            return Err(Error::Singularity(format!(
                "bridge time {t} within clamp_eps = {} of t_end = {}",
                self.clamp_eps, self.t_end
            )));
        }
        Ok(())
    }

    /// `(a, b, c^2)` of the bridge marginal
    /// `z_t | z_0, z_T ~ N(a z_T + b z_0, c^2 I)`.
    pub fn marginal_coefs(&self, t: f64) -> Result<(f64, f64, f64)> {
        self.check_time(t)?;
        let (at, a_end) = (self.alpha(t), self.alpha(self.t_end));
        let s2 = self.sigma_sq(t);
        let r = self.snr(self.t_end) / self.snr(t);
        let c2 = s2 * (1.0 - r);
        if !(c2 > 0.0) {
            return Err(Error::Singularity(format!("bridge variance vanishes at t = {t}")));
        }
        Ok((at / a_end * r, at * (1.0 - r), c2))
    }
}

/// Doob h-transform `grad_{z_t} log p(z_T | z_t)`.
pub fn bridge_h_transform(
    z_t: &[f64],
    z_terminal: &[f64],
    t: f64,
    sched: &BridgeSchedule,
) -> Result<Vec<f64>> {
    check_len(z_t, z_terminal, "h-transform")?;
    sched.check_time(t)?;
    let ratio = sched.alpha(t) / sched.alpha(sched.t_end);
    let denom = ratio * ratio * sched.sigma_sq(sched.t_end) - sched.sigma_sq(t);
    if !(denom > 0.0) {
        return Err(Error::Singularity(format!("transition variance vanishes at t = {t}")));
    }
    Ok(z_t.iter().zip(z_terminal).map(|(z, zt)| (ratio * zt - z) / denom).collect())
}

/// Mean and variance of `z_t` given `z_0 = x0` and the terminal state.
pub fn bridge_marginal(
    x0: &[f64],
    z_terminal: &[f64],
    t: f64,
    sched: &BridgeSchedule,
) -> Result<(Vec<f64>, f64)> {
    check_len(x0, z_terminal, "bridge marginal")?;
    let (a, b, c2) = sched.marginal_coefs(t)?;
    Ok((x0.iter().zip(z_terminal).map(|(x, zt)| a * zt + b * x).collect(), c2))
}

/// Bridge score with the clean latent replaced by a prediction.
pub fn bridge_score_from_x0(
    z_t: &[f64],
    z_terminal: &[f64],
    x0_hat: &[f64],
    t: f64,
    sched: &BridgeSchedule,
) -> Result<Vec<f64>> {
    check_len(z_t, x0_hat, "bridge score")?;
    let (mean, c2) = bridge_marginal(x0_hat, z_terminal, t, sched)?;
    Ok(z_t.iter().zip(&mean).map(|(z, m)| -(z - m) / c2).collect())
}

pub fn bridge_score_from_predictor(
    z_t: &[f64],
    z_terminal: &[f64],
    t: f64,
    sched: &BridgeSchedule,
    den: &dyn BridgeDenoiser,
) -> Result<Vec<f64>> {
    sched.check_time(t)?;
    let x0 = den.bridge_predict_x0(z_t, z_terminal, t, sched)?;
    bridge_score_from_x0(z_t, z_terminal, &x0, t, sched)
}

/// `n + 1` times descending from `t_end - clamp_eps` to `t_min`, with
/// `t_i = t_hi - (t_hi - t_min) (i/n)^rho`. `rho > 1` refines near `t_end`.
pub fn bridge_time_grid(sched: &BridgeSchedule, n: usize, rho: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Input("bridge grid needs at least one step".into()));
    }
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::Input(format!("grid exponent must be >= 1, got {rho}")));
    }
    let (hi, lo) = (sched.t_hi(), sched.t_min);
    let mut grid: Vec<f64> =
        (0..=n).map(|i| hi - (hi - lo) * (i as f64 / n as f64).powf(rho)).collect();
    grid[0] = hi;
    grid[n] = lo;
    Ok(grid)
}

fn reverse_drift(
    z: &[f64],
    z_terminal: &[f64],
    t: f64,
    sched: &BridgeSchedule,
    den: &dyn BridgeDenoiser,
    score_weight: f64,
) -> Result<Vec<f64>> {
    let s = bridge_score_from_predictor(z, z_terminal, t, sched, den)?;
    let h = bridge_h_transform(z, z_terminal, t, sched)?;
    let (f, g2) = (sched.drift_coef(t), sched.diffusion_sq(t));
    Ok(z.iter()
        .zip(s.iter().zip(&h))
        .map(|(z, (s, h))| f * z - g2 * (score_weight * s - h))
        .collect())
}

/// One reverse-time step. `dt` is negative.
pub fn ddbm_step(
    state: &LatentState,
    dt: f64,
    sched: &BridgeSchedule,
    den: &dyn BridgeDenoiser,
    mode: BridgeMode,
    noise: &[f64],
) -> Result<LatentState> {
    let z_terminal = state
        .z_terminal
        .as_deref()
        .ok_or_else(|| Error::Input("bridge step needs a terminal state".into()))?;
    check_len(&state.z, z_terminal, "bridge step")?;
    check_len(&state.z, noise, "bridge noise")?;
    if !(dt < 0.0) {
        return Err(Error::Input(format!("reverse bridge step needs dt < 0, got {dt}")));
    }
    let t = state.t;
    let t_next = t + dt;
    sched.check_time(t)?;
    sched.check_time(t_next)?;
    let next = |z: Vec<f64>| LatentState {
        t: t_next,
        z,
        z_terminal: state.z_terminal.clone(),
        shape: state.shape,
    };
    if sched.diffusion_sq(t) == 0.0 && sched.diffusion_sq(t_next) == 0.0 {
        return Ok(next(state.z.clone()));
    }
    let z = &state.z;
    let out: Vec<f64> = match mode {
        BridgeMode::Sde => {
            let v = reverse_drift(z, z_terminal, t, sched, den, 1.0)?;
            let g = (sched.diffusion_sq(t) * dt.abs()).sqrt();
            z.iter().zip(&v).zip(noise).map(|((z, v), n)| z + v * dt + g * n).collect()
        }
        BridgeMode::Ode => {
            let v1 = reverse_drift(z, z_terminal, t, sched, den, 0.5)?;
            let pred: Vec<f64> = z.iter().zip(&v1).map(|(z, v)| z + v * dt).collect();
            let v2 = reverse_drift(&pred, z_terminal, t_next, sched, den, 0.5)?;
            z.iter()
                .zip(v1.iter().zip(&v2))
                .map(|(z, (a, b))| z + 0.5 * (a + b) * dt)
                .collect()
        }
    };
    ensure_finite(&out, "bridge step").map_err(|_| {
        Error::Numerical(format!("bridge step from t = {t} produced non-finite values"))
    })?;
    Ok(next(out))
}

/// Reverse-time sampling from `z_T` along a descending grid. With
/// `final_denoise` the last state is replaced by the denoiser's prediction.
pub fn ddbm_sample(
    z_terminal: &[f64],
    grid: &[f64],
    sched: &BridgeSchedule,
    den: &dyn BridgeDenoiser,
    mode: BridgeMode,
    final_denoise: bool,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("bridge grid must be strictly decreasing, length >= 2".into()));
    }
    let mut state = LatentState::bridge(grid[0], z_terminal.to_vec(), z_terminal.to_vec())?;
    let mut noise = vec![0.0; z_terminal.len()];
    for w in grid.windows(2) {
        if mode == BridgeMode::Sde {
            rng::fill_normal(rng, &mut noise);
        }
        state = ddbm_step(&state, w[1] - w[0], sched, den, mode, &noise)?;
    }
    if final_denoise {
        return den.bridge_predict_x0(&state.z, z_terminal, state.t, sched);
    }
    Ok(state.z)
}

/// Forward simulation of the conditioned SDE (drift `f + g^2 h`, diffusion
/// `g`) from `z_0` along an ascending grid. Returns the state at the last
/// grid time.
pub fn bridge_forward_simulate(
    z0: &[f64],
    z_terminal: &[f64],
    grid: &[f64],
    sched: &BridgeSchedule,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_len(z0, z_terminal, "bridge forward")?;
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("forward grid must be strictly increasing, length >= 2".into()));
    }
    sched.check_time(grid[grid.len() - 1])?;
    let mut z = z0.to_vec();
    let mut noise = vec![0.0; z.len()];
    for w in grid.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let h = bridge_h_transform(&z, z_terminal, t, sched)?;
        let (f, g2) = (sched.drift_coef(t), sched.diffusion_sq(t));
        let g = (g2 * dt).sqrt();
        rng::fill_normal(rng, &mut noise);
        for ((z, h), n) in z.iter_mut().zip(&h).zip(&noise) {
            *z += (f * *z + g2 * h) * dt + g * n;
        }
    }
    Ok(z)
}
