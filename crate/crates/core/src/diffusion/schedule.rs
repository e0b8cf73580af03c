use crate::error::{Error, Result};

/// Discrete variance schedule. `beta[t-1]` is `beta_t` for `t = 1..=T`;
/// `alpha_bar[t]` is the running product with `alpha_bar[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Input("schedule needs at least one step".into()));
        }
        if let Some(i) = beta.iter().position(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::Input(format!("beta_{} = {} outside (0, 1)", i + 1, beta[i])));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha, alpha_bar })
    }

    pub fn t_max(&self) -> usize {
        self.beta.len()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max() {
            return Err(Error::Input(format!("step {t} outside 1..={}", self.t_max())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.beta[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.alpha[t - 1])
    }

    /// Defined for `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::Input(format!("step {t} outside 0..={}", self.t_max())))
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// `beta_t` linear from `beta_start` (t = 1) to `beta_end` (t = T).
pub fn build_linear_schedule(t_max: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(Error::Input("t_max must be positive".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Input(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas = (0..t_max)
        .map(|i| {
            if t_max == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (t_max - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl Default for NoiseSchedule {
    /// T = 1000, beta linear 1e-4 -> 0.02.
    fn default() -> Self {
        build_linear_schedule(1000, 1e-4, 0.02).expect("default schedule is valid")
    }
}
