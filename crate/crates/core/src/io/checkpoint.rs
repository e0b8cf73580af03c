//! Network checkpoints as one-dimensional SGM1 arrays:
//! `[n_layers_widths, widths..., activation_code, params...]`.

use std::path::Path;

use super::{sgm1_read, sgm1_write, Sgm1Array};
use crate::denoiser::{Activation, Mlp};
use crate::error::{Error, Result};

pub fn save_checkpoint(path: &Path, net: &Mlp) -> Result<()> {
    let mut v: Vec<f32> = Vec::with_capacity(2 + net.widths().len() + net.params().len());
    v.push(net.widths().len() as f32);
    v.extend(net.widths().iter().map(|&w| w as f32));
    v.push(net.activation().code() as f32);
    v.extend(net.params().iter().map(|&p| p as f32));
    sgm1_write(path, &[v.len()], &v)
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp> {
    decode_checkpoint(&sgm1_read(path)?, &path.display().to_string())
}

/// Rebuild a network from an already decoded array; `label` names the
/// source in error messages.
pub fn decode_checkpoint(a: &Sgm1Array, label: &str) -> Result<Mlp> {
    let bad = |msg: &str| Error::Format { offset: 7, msg: format!("{label}: {msg}") };
    if a.dims.len() != 1 {
        return Err(bad("checkpoint must be one-dimensional"));
    }
    let v = &a.values;
    let int = |x: f32| -> Option<usize> { (x >= 0.0 && x.fract() == 0.0 && x < 1e7).then_some(x as usize) };
    let n = v.first().copied().and_then(int).filter(|&n| n >= 2).ok_or_else(|| bad("bad layer count"))?;
    if v.len() < n + 2 {
        return Err(bad("checkpoint header truncated"));
    }
    let widths = v[1..=n].iter().map(|&x| int(x)).collect::<Option<Vec<_>>>().ok_or_else(|| bad("bad width"))?;
    let act = int(v[n + 1]).ok_or_else(|| bad("bad activation code"))?;
    let activation = Activation::from_code(act as u32)?;
    let params = v[n + 2..].iter().map(|&p| f64::from(p)).collect();
    Mlp::from_params(widths, activation, params)
}
