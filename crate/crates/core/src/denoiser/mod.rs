//! Concrete denoisers: an exact Gaussian oracle and small trainable MLPs.

mod analytic;
mod mlp;

pub use analytic::AnalyticGaussianDenoiser;
pub use mlp::{Activation, Mlp};

use rand::Rng as _;

use crate::diffusion::{check_len, BridgeDenoiser, BridgeSchedule, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng;

/// Noise predictor on `[z, t/T]`.
#[derive(Debug, Clone)]
pub struct TinyMlpDenoiser {
    net: Mlp,
    sched: NoiseSchedule,
}

impl TinyMlpDenoiser {
    /// `d + 1 -> 4d -> d`, tanh.
    pub fn new(d: usize, sched: NoiseSchedule, seed: u64) -> Result<Self> {
        Self::with_widths(vec![d + 1, 4 * d, d], Activation::Tanh, sched, seed)
    }

    pub fn with_widths(
        widths: Vec<usize>,
        activation: Activation,
        sched: NoiseSchedule,
        seed: u64,
    ) -> Result<Self> {
        let net = Mlp::init(widths, activation, &mut rng::stream(seed, 0))?;
        Self::from_net(net, sched)
    }

    pub fn from_net(net: Mlp, sched: NoiseSchedule) -> Result<Self> {
        if net.input_dim() != net.output_dim() + 1 {
            return Err(Error::Shape(format!(
                "noise predictor needs input width d + 1, got {:?}",
                net.widths()
            )));
        }
        Ok(Self { net, sched })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn input(&self, z: &[f64], t: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(z.len() + 1);
        x.extend_from_slice(z);
        x.push(t as f64 / self.sched.t_max() as f64);
        x
    }
}

impl Denoiser for TinyMlpDenoiser {
    fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    fn predict_eps(&self, z: &[f64], t: usize) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!("denoiser dimension {} vs {}", self.dim(), z.len())));
        }
        self.sched.alpha_bar(t)?;
        self.net.forward(&self.input(z, t))
    }
}

/// Draw for batch element `i`: uniform step and standard normal noise.
fn draw(seed: u64, i: usize, t_max: usize, d: usize) -> (usize, Vec<f64>) {
    let mut r = rng::stream(seed, i as u64);
    let t = r.random_range(1..=t_max);
    (t, rng::normal_vec(&mut r, d))
}

/// Mean noise-prediction loss over the batch and its parameter gradient.
pub fn mlp_loss_and_grad(
    den: &TinyMlpDenoiser,
    batch: &[Vec<f64>],
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Input("training batch is empty".into()));
    }
    let d = den.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; den.net.params().len()];
    let mut loss = 0.0;
    for (i, z0) in batch.iter().enumerate() {
        if z0.len() != d {
            return Err(Error::Shape(format!("batch item {i} has length {}, want {d}", z0.len())));
        }
        let (t, noise) = draw(seed, i, den.sched.t_max(), d);
        let z_t = crate::diffusion::forward_marginal_sample(z0, t, &den.sched, &noise)?;
        let mut item = 0.0;
        den.net.backward(
            &den.input(&z_t, t),
            |y| {
                item = noise.iter().zip(y).map(|(n, y)| (n - y).powi(2)).sum();
                noise.iter().zip(y).map(|(n, y)| -2.0 * (n - y) * scale).collect()
            },
            &mut grad,
        )?;
        loss += item * scale;
    }
    Ok((loss, grad))
}

/// One SGD step; returns the loss before the update.
pub fn mlp_train_step(den: &mut TinyMlpDenoiser, batch: &[Vec<f64>], seed: u64, lr: f64) -> Result<f64> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Input(format!("learning rate must be >= 0, got {lr}")));
    }
    let (loss, grad) = mlp_loss_and_grad(den, batch, seed)?;
    sgd_update(den.net.params_mut(), &grad, lr)?;
    Ok(loss)
}

fn sgd_update(params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient at parameter {i}")));
    }
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(())
}

/// Largest relative deviation between backpropagated and central-difference
/// gradients of the single-sample loss, over at least 50 parameters (all of
/// them when there are fewer than 64).
pub fn mlp_gradient_check(den: &TinyMlpDenoiser, probe: &[f64], seed: u64) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let batch = [probe.to_vec()];
    let (_, grad) = mlp_loss_and_grad(den, &batch, seed)?;
    let n = grad.len();
    let idx: Vec<usize> = if n <= 64 {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut rng::stream(seed, u64::MAX), n, 64).into_vec()
    };
    let mut probe_den = den.clone();
    let mut worst = 0.0f64;
    for i in idx {
        let p = den.net.params()[i];
        probe_den.net.params_mut()[i] = p + STEP;
        let up = mlp_loss_and_grad(&probe_den, &batch, seed)?.0;
        probe_den.net.params_mut()[i] = p - STEP;
        let down = mlp_loss_and_grad(&probe_den, &batch, seed)?.0;
        probe_den.net.params_mut()[i] = p;
        let fd = (up - down) / (2.0 * STEP);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Clean-latent predictor on `[z_t, z_T, t / t_end]`.
#[derive(Debug, Clone)]
pub struct BridgeMlpDenoiser {
    net: Mlp,
}

impl BridgeMlpDenoiser {
    /// `2d + 1 -> 4d -> d`, tanh.
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        let net = Mlp::init(vec![2 * d + 1, 4 * d, d], Activation::Tanh, &mut rng::stream(seed, 0))?;
        Self::from_net(net)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.input_dim() != 2 * net.output_dim() + 1 {
            return Err(Error::Shape(format!(
                "bridge predictor needs input width 2d + 1, got {:?}",
                net.widths()
            )));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn input(z_t: &[f64], z_terminal: &[f64], t: f64, sched: &BridgeSchedule) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * z_t.len() + 1);
        x.extend_from_slice(z_t);
        x.extend_from_slice(z_terminal);
        x.push(t / sched.t_end);
        x
    }
}

impl BridgeDenoiser for BridgeMlpDenoiser {
    fn bridge_predict_x0(
        &self,
        z_t: &[f64],
        z_terminal: &[f64],
        t: f64,
        sched: &BridgeSchedule,
    ) -> Result<Vec<f64>> {
        check_len(z_t, z_terminal, "bridge predictor")?;
        self.net.forward(&Self::input(z_t, z_terminal, t, sched))
    }
}

/// One SGD step on `|| D(z_t, z_T, t) - x0 ||^2` averaged over `(x0, z_T)`
/// pairs, with `t` uniform on the admissible interval and `z_t` drawn from
/// the bridge marginal. Returns the loss before the update.
pub fn bridge_train_step(
    den: &mut BridgeMlpDenoiser,
    pairs: &[(Vec<f64>, Vec<f64>)],
    sched: &BridgeSchedule,
    seed: u64,
    lr: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("training batch is empty".into()));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Input(format!("learning rate must be >= 0, got {lr}")));
    }
    let d = den.dim();
    let scale = 1.0 / pairs.len() as f64;
    let mut grad = vec![0.0; den.net.params().len()];
    let mut loss = 0.0;
    for (i, (x0, z_end)) in pairs.iter().enumerate() {
        if x0.len() != d || z_end.len() != d {
            return Err(Error::Shape(format!("training pair {i} does not have dimension {d}")));
        }
        let mut r = rng::stream(seed, i as u64);
        let t = sched.t_min + (sched.t_hi() - sched.t_min) * r.random::<f64>();
        let noise = rng::normal_vec(&mut r, d);
        let (mean, c2) = crate::diffusion::bridge_marginal(x0, z_end, t, sched)?;
        let c = c2.sqrt();
        let z_t: Vec<f64> = mean.iter().zip(&noise).map(|(m, n)| m + c * n).collect();
        let mut item = 0.0;
        den.net.backward(
            &BridgeMlpDenoiser::input(&z_t, z_end, t, sched),
            |y| {
                item = y.iter().zip(x0).map(|(y, x)| (y - x).powi(2)).sum();
                y.iter().zip(x0).map(|(y, x)| 2.0 * (y - x) * scale).collect()
            },
            &mut grad,
        )?;
        loss += item * scale;
    }
    sgd_update(den.net.params_mut(), &grad, lr)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::build_linear_schedule;

    fn sched() -> NoiseSchedule {
        build_linear_schedule(100, 1e-3, 0.05).unwrap()
    }

    fn batch(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, 99);
        (0..n)
            .map(|_| rng::normal_vec(&mut r, d).into_iter().map(|v| 0.5 + 0.1 * v).collect())
            .collect()
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let mut den = TinyMlpDenoiser::new(4, sched(), 1).unwrap();
        let before = den.net().params().to_vec();
        let loss = mlp_train_step(&mut den, &batch(8, 4, 2), 5, 0.0).unwrap();
        assert!(loss > 0.0);
        assert_eq!(den.net().params(), &before[..]);
    }

    #[test]
    fn training_is_deterministic() {
        let b = batch(8, 4, 2);
        let run = || {
            let mut den = TinyMlpDenoiser::new(4, sched(), 1).unwrap();
            mlp_train_step(&mut den, &b, 9, 1e-2).unwrap();
            den.net().params().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradient_check_tanh_and_linear() {
        let den = TinyMlpDenoiser::new(8, sched(), 3).unwrap();
        let probe = batch(1, 8, 4).remove(0);
        assert!(mlp_gradient_check(&den, &probe, 11).unwrap() <= 1e-4);
        let lin = TinyMlpDenoiser::with_widths(vec![9, 12, 8], Activation::Identity, sched(), 3).unwrap();
        let e = mlp_gradient_check(&lin, &probe, 11).unwrap();
        assert!(e <= 1e-7, "{e}");
    }

    #[test]
    fn zero_network_output_bias_gradient() {
        let den = TinyMlpDenoiser::new(3, sched(), 1).unwrap();
        let zero = Mlp::from_params(den.net().widths().to_vec(), Activation::Tanh, vec![0.0; den.net().params().len()])
            .unwrap();
        let den = TinyMlpDenoiser::from_net(zero, sched()).unwrap();
        let b = batch(5, 3, 8);
        let (_, grad) = mlp_loss_and_grad(&den, &b, 21).unwrap();
        let mut mean = vec![0.0; 3];
        for i in 0..5 {
            let (_, noise) = draw(21, i, 100, 3);
            for k in 0..3 {
                mean[k] += noise[k] / 5.0;
            }
        }
        let tail = &grad[grad.len() - 3..];
        for k in 0..3 {
            assert!((tail[k] + 2.0 * mean[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn width_contracts() {
        let net = Mlp::init(vec![4, 4, 4], Activation::Tanh, &mut rng::stream(0, 0)).unwrap();
        assert!(TinyMlpDenoiser::from_net(net.clone(), sched()).is_err());
        assert!(BridgeMlpDenoiser::from_net(net).is_err());
        let den = TinyMlpDenoiser::new(4, sched(), 0).unwrap();
        assert!(den.predict_eps(&[0.0; 3], 1).is_err());
    }

    #[test]
    fn bridge_training_reduces_loss() {
        let sb = BridgeSchedule::ve(0.01, 1.0, 1.0).unwrap();
        let mut r = rng::stream(5, 0);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..32)
            .map(|_| {
                let x0: Vec<f64> = rng::normal_vec(&mut r, 2).iter().map(|v| 0.3 * v + 1.0).collect();
                let z_end = x0.iter().map(|x| x + rng::normal_vec(&mut r, 1)[0]).collect();
                (x0, z_end)
            })
            .collect();
        let mut den = BridgeMlpDenoiser::new(2, 1).unwrap();
        let first = bridge_train_step(&mut den, &pairs, &sb, 0, 0.0).unwrap();
        let mut last = first;
        for step in 0..500 {
            last = bridge_train_step(&mut den, &pairs, &sb, step, 0.02).unwrap();
        }
        assert!(last < 0.7 * first, "{first} -> {last}");
    }
}
