use crate::diffusion::{check_len, BridgeDenoiser, BridgeSchedule, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};

/// Exact posterior-mean denoiser for data `x0 ~ N(mu0, sigma0_sq I)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    mu0: Vec<f64>,
    sigma0_sq: f64,
    sched: NoiseSchedule,
}

impl AnalyticGaussianDenoiser {
    pub fn new(mu0: Vec<f64>, sigma0_sq: f64, sched: NoiseSchedule) -> Result<Self> {
        if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
            return Err(Error::Input(format!("sigma0_sq must be positive, got {sigma0_sq}")));
        }
        crate::error::ensure_finite(&mu0, "mu0")?;
        Ok(Self { mu0, sigma0_sq, sched })
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    fn check(&self, z: &[f64], t: usize) -> Result<f64> {
        check_len(z, &self.mu0, "analytic denoiser")?;
        if t == 0 {
            return Err(Error::Input("noise prediction is undefined at t = 0".into()));
        }
        self.sched.alpha(t)?;
        self.sched.alpha_bar(t)
    }

    /// `E[x0 | z]` for `z = a x0 + c eps` with `c^2 = c2`.
    fn posterior_mean(&self, z: &[f64], a: f64, c2: f64) -> Vec<f64> {
        let gain = a * self.sigma0_sq / (a * a * self.sigma0_sq + c2);
        z.iter().zip(&self.mu0).map(|(z, m)| m + gain * (z - a * m)).collect()
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    fn predict_eps(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        let x0 = self.predict_x0(z, t)?;
        let ab = self.sched.alpha_bar(t)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(z.iter().zip(&x0).map(|(z, x)| (z - sa * x) / sn).collect())
    }

    fn predict_x0(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        let ab = self.check(z, t)?;
        Ok(self.posterior_mean(z, ab.sqrt(), 1.0 - ab))
    }
}

impl BridgeDenoiser for AnalyticGaussianDenoiser {
    /// Conditions `z_t - a z_T = b x0 + c eps` on the Gaussian prior.
    fn bridge_predict_x0(
        &self,
        z_t: &[f64],
        z_terminal: &[f64],
        t: f64,
        sched: &BridgeSchedule,
    ) -> Result<Vec<f64>> {
        check_len(z_t, &self.mu0, "analytic bridge denoiser")?;
        check_len(z_t, z_terminal, "analytic bridge denoiser")?;
        let (a, b, c2) = sched.marginal_coefs(t)?;
        let resid: Vec<f64> = z_t.iter().zip(z_terminal).map(|(z, zt)| z - a * zt).collect();
        Ok(self.posterior_mean(&resid, b, c2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::build_linear_schedule;

    #[test]
    fn scalar_example() {
        // alpha_bar = 0.25 at t = 1.
        let sched = NoiseSchedule::from_betas(vec![0.75]).unwrap();
        let den = AnalyticGaussianDenoiser::new(vec![0.0], 1.0, sched).unwrap();
        let x0 = den.predict_x0(&[1.0], 1).unwrap()[0];
        let eps = den.predict_eps(&[1.0], 1).unwrap()[0];
        assert!((x0 - 0.5).abs() < 1e-15);
        assert!((eps - 0.75 / 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(den.predict_eps(&[0.0], 1).unwrap()[0], 0.0);
        assert!(matches!(den.predict_eps(&[0.0], 0), Err(Error::Input(_))));
    }

    #[test]
    fn point_mass_limit_and_identity() {
        let sched = build_linear_schedule(50, 1e-3, 0.05).unwrap();
        let mu = vec![1.0, -2.0, 0.5];
        let den = AnalyticGaussianDenoiser::new(mu.clone(), 1e-300, sched.clone()).unwrap();
        assert_eq!(den.predict_x0(&[3.0, 3.0, 3.0], 20).unwrap(), mu);
        let den = AnalyticGaussianDenoiser::new(mu, 0.7, sched.clone()).unwrap();
        let z = [0.3, -1.7, 2.2];
        for t in [1, 7, 50] {
            let ab = sched.alpha_bar(t).unwrap();
            let x0 = den.predict_x0(&z, t).unwrap();
            let e = den.predict_eps(&z, t).unwrap();
            for i in 0..3 {
                let back = ab.sqrt() * x0[i] + (1.0 - ab).sqrt() * e[i];
                assert!((back - z[i]).abs() <= 1e-12 * z[i].abs());
            }
        }
        assert!(AnalyticGaussianDenoiser::new(vec![0.0], 0.0, sched).is_err());
    }

    #[test]
    fn bridge_prediction_at_mean_is_prior_mean() {
        let sched = BridgeSchedule::ve(0.01, 2.0, 1.0).unwrap();
        let den = AnalyticGaussianDenoiser::new(vec![0.4], 0.5, NoiseSchedule::default()).unwrap();
        let (a, b, _) = sched.marginal_coefs(0.3).unwrap();
        let zt = [a * 1.5 + b * 0.4];
        let x0 = den.bridge_predict_x0(&zt, &[1.5], 0.3, &sched).unwrap();
        assert!((x0[0] - 0.4).abs() < 1e-15);
    }
}
