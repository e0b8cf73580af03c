use crate::error::{ensure_finite, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            _ => Err(Error::Input(format!("unknown activation code {code}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network, activation on hidden layers, linear output.
/// Parameters are one flat vector, per layer `W` (row-major, `out x in`)
/// followed by `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Input(format!("invalid layer widths {widths:?}")));
        }
        Ok(())
    }

    /// Weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(widths: Vec<usize>, activation: Activation, rng: &mut Rng) -> Result<Self> {
        Self::check_widths(&widths)?;
        let mut params = Vec::with_capacity(Self::param_count(&widths));
        for w in widths.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            params.extend(rng::normal_vec(rng, w[0] * w[1]).into_iter().map(|v| v * scale));
            params.extend(std::iter::repeat(0.0).take(w[1]));
        }
        Ok(Self { widths, activation, params })
    }

    pub fn from_params(widths: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        Self::check_widths(&widths)?;
        let want = Self::param_count(&widths);
        if params.len() != want {
            return Err(Error::Shape(format!(
                "widths {widths:?} need {want} parameters, got {}",
                params.len()
            )));
        }
        ensure_finite(&params, "network parameters")?;
        Ok(Self { widths, activation, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    /// Same architecture, different parameters.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Self::from_params(self.widths.clone(), self.activation, params.to_vec())
    }

    /// Layer outputs, input first.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_out * (n_in + 1);
            let a = &acts[l];
            let hidden = l + 1 < n_layers;
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let pre = b[o] + row.iter().zip(a).map(|(w, a)| w * a).sum::<f64>();
                    if hidden {
                        self.activation.apply(pre)
                    } else {
                        pre
                    }
                })
                .collect();
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.forward_all(x).pop().expect("at least one layer"))
    }

    /// Forward pass, then accumulate `d(grad_out . y)/d params` into `grad`.
    /// `grad_out` is produced from the network output by the caller.
    pub fn backward(
        &self,
        x: &[f64],
        grad_out: impl FnOnce(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let acts = self.forward_all(x);
        let y = acts[acts.len() - 1].clone();
        let mut delta = grad_out(&y);
        if delta.len() != self.output_dim() || grad.len() != self.params.len() {
            return Err(Error::Shape("backward buffers do not match the network".into()));
        }
        let n_layers = self.widths.len() - 1;
        let mut off = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            off -= n_out * (n_in + 1);
            let a = &acts[l];
            let (gw, gb) = grad[off..off + n_out * (n_in + 1)].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                gb[o] += delta[o];
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(a) {
                    *g += delta[o] * a;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                        back * self.activation.slope_from_output(a[i])
                    })
                    .collect();
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_counts() {
        assert_eq!(Mlp::param_count(&[3, 4, 2]), 4 * 4 + 2 * 5);
        let m = Mlp::init(vec![3, 4, 2], Activation::Tanh, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(m.params().len(), 26);
        assert!(m.params()[12..16].iter().all(|&b| b == 0.0));
        assert!(Mlp::init(vec![3], Activation::Tanh, &mut rng::stream(1, 0)).is_err());
        assert!(Mlp::from_params(vec![2, 1], Activation::Tanh, vec![0.0; 2]).is_err());
    }

    #[test]
    fn single_linear_layer() {
        let m = Mlp::from_params(vec![2, 1], Activation::Tanh, vec![2.0, -1.0, 0.5]).unwrap();
        assert_eq!(m.forward(&[3.0, 1.0]).unwrap(), vec![5.5]);
        let mut g = vec![0.0; 3];
        m.backward(&[3.0, 1.0], |_| vec![1.0], &mut g).unwrap();
        assert_eq!(g, vec![3.0, 1.0, 1.0]);
    }

    #[test]
    fn hidden_tanh_by_hand() {
        // x -> tanh(w1 x + b1) -> w2 h + b2
        let m = Mlp::from_params(vec![1, 1, 1], Activation::Tanh, vec![0.5, 0.1, 2.0, -0.3]).unwrap();
        let h = (0.5f64 * 0.8 + 0.1).tanh();
        assert!((m.forward(&[0.8]).unwrap()[0] - (2.0 * h - 0.3)).abs() < 1e-15);
        let mut g = vec![0.0; 4];
        m.backward(&[0.8], |_| vec![1.0], &mut g).unwrap();
        let s = 1.0 - h * h;
        let want = [2.0 * s * 0.8, 2.0 * s, h, 1.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
