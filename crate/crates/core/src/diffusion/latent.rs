use crate::augment::AugmentedSample;
use crate::error::{ensure_finite, Error, Result};

/// Channel-major `channels x height x width` stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl Composite {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} does not hold {} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Diffusion state. `t` is a step index for DDPM/DDIM and a continuous time
/// for the bridge; `z_terminal` is present exactly in bridge mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub t: f64,
    pub z: Vec<f64>,
    pub z_terminal: Option<Vec<f64>>,
    pub shape: [usize; 3],
}

impl LatentState {
    pub fn bridge(t: f64, z: Vec<f64>, z_terminal: Vec<f64>) -> Result<Self> {
        if z.len() != z_terminal.len() {
            return Err(Error::Shape("bridge state and terminal differ in length".into()));
        }
        ensure_finite(&z, "latent")?;
        let shape = [1, 1, z.len()];
        Ok(Self { t, z, z_terminal: Some(z_terminal), shape })
    }
}

/// `[C_pos, S_full, C_neg]` as one `3 x n_det x n_angles` stack.
pub fn compose_input(sample: &AugmentedSample) -> Result<Composite> {
    sample.c_pos.check_same(&sample.s_full, "compose c_pos")?;
    sample.c_neg.check_same(&sample.s_full, "compose c_neg")?;
    let (h, w) = sample.s_full.shape();
    let mut data = Vec::with_capacity(3 * h * w);
    data.extend_from_slice(sample.c_pos.values());
    data.extend_from_slice(sample.s_full.values());
    data.extend_from_slice(sample.c_neg.values());
    Composite::new([3, h, w], data)
}

/// Stand-in for a learned encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EncoderMode {
    #[default]
    Identity,
    /// 2x2 mean pooling per channel.
    AvgPool2,
}

pub fn encode_latent(c_all: &Composite, mode: EncoderMode) -> Result<LatentState> {
    let [c, h, w] = c_all.shape;
    match mode {
        EncoderMode::Identity => Ok(LatentState {
            t: 0.0,
            z: c_all.data.clone(),
            z_terminal: None,
            shape: c_all.shape,
        }),
        EncoderMode::AvgPool2 => {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(Error::Shape(format!("2x2 pooling needs even dims, got {h}x{w}")));
            }
            let (h2, w2) = (h / 2, w / 2);
            let mut z = Vec::with_capacity(c * h2 * w2);
            for ch in 0..c {
                let p = c_all.channel(ch);
                for r in 0..h2 {
                    for col in 0..w2 {
                        let i = 2 * r * w + 2 * col;
                        z.push((p[i] + p[i + 1] + p[i + w] + p[i + w + 1]) / 4.0);
                    }
                }
            }
            Ok(LatentState { t: 0.0, z, z_terminal: None, shape: [c, h2, w2] })
        }
    }
}

/// Inverse of [`encode_latent`]: identity, or nearest-neighbour 2x
/// upsampling back to `full_shape`.
pub fn decode_latent(z: &[f64], latent_shape: [usize; 3], mode: EncoderMode) -> Result<Composite> {
    match mode {
        EncoderMode::Identity => Composite::new(latent_shape, z.to_vec()),
        EncoderMode::AvgPool2 => {
            let [c, h2, w2] = latent_shape;
            if z.len() != c * h2 * w2 {
                return Err(Error::Shape("latent length does not match its shape".into()));
            }
            let (h, w) = (2 * h2, 2 * w2);
            let mut data = vec![0.0; c * h * w];
            for ch in 0..c {
                for r in 0..h {
                    for col in 0..w {
                        data[ch * h * w + r * w + col] = z[ch * h2 * w2 + (r / 2) * w2 + col / 2];
                    }
                }
            }
            Composite::new([c, h, w], data)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{decompose_pos_neg, SinogramMask};
    use crate::tomo::{ProjectionGeometry, Sinogram};
    use std::sync::Arc;

    fn sample(mask: f64) -> AugmentedSample {
        let g = Arc::new(ProjectionGeometry::uniform(4, 2, 1.0).unwrap());
        let s = Sinogram::new(g.clone(), (0..8).map(|i| i as f64 + 0.5).collect()).unwrap();
        let m = SinogramMask::new(Sinogram::new(g, vec![mask; 8]).unwrap());
        decompose_pos_neg(&s, &m).unwrap()
    }

    #[test]
    fn channel_order_and_identity() {
        let s = sample(0.0);
        let c = compose_input(&s).unwrap();
        assert_eq!(c.shape, [3, 2, 4]);
        assert_eq!(c.data.len(), 24);
        assert!(c.channel(0).iter().all(|&v| v == 0.0));
        assert_eq!(c.channel(1), s.s_full.values());
        assert_eq!(c.channel(2), s.s_full.values());
        let s = sample(0.3);
        let c = compose_input(&s).unwrap();
        for i in 0..8 {
            assert_eq!(c.channel(0)[i] + c.channel(2)[i], c.channel(1)[i]);
        }
        let z = encode_latent(&c, EncoderMode::Identity).unwrap();
        assert_eq!(z.z, c.data);
    }

    #[test]
    fn pooling() {
        let c = Composite::new([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(encode_latent(&c, EncoderMode::AvgPool2).unwrap().z, vec![2.5]);
        let k = Composite::new([2, 4, 6], vec![0.75; 48]).unwrap();
        let z = encode_latent(&k, EncoderMode::AvgPool2).unwrap();
        assert_eq!(z.shape, [2, 2, 3]);
        assert!(z.z.iter().all(|&v| v == 0.75));
        let back = decode_latent(&z.z, z.shape, EncoderMode::AvgPool2).unwrap();
        assert_eq!(back, k);
        let odd = Composite::new([1, 3, 2], vec![0.0; 6]).unwrap();
        assert!(matches!(encode_latent(&odd, EncoderMode::AvgPool2), Err(Error::Shape(_))));
    }
}
