//! Time-conditioned 1-D U-Net predicting the velocity field.
//!
//! The state and the condition are stacked along frequency (`2K` input
//! channels over `N` frames). Each encoder stage applies a residual block
//! and halves the frame rate; the bottleneck holds residual blocks at the
//! lowest rate; each decoder stage doubles the frame rate, concatenates the
//! matching encoder features and applies a residual block. A 1×1
//! convolution maps back to `K` channels. The flow time enters every
//! residual block as a per-channel bias derived from a sinusoidal embedding.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::VelocityField;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{impl_module, Conv1d, ConvTranspose1d, LayerNorm, Linear};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocityNetConfig {
    /// Channel width of each encoder stage; one halving of the frame rate per stage.
    pub widths: Vec<usize>,
    pub bottleneck_blocks: usize,
    pub time_dim: usize,
    /// Multiplier applied to `t` before the sinusoidal embedding.
    pub time_scale: f64,
}

impl Default for VelocityNetConfig {
    fn default() -> Self {
        Self {
            widths: vec![128, 256],
            bottleneck_blocks: 2,
            time_dim: 128,
            time_scale: 1000.0,
        }
    }
}

impl VelocityNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("enhancer.network.{field}"),
                message: message.into(),
            })
        };
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths", "need at least one positive stage width");
        }
        if self.time_dim < 4 || self.time_dim % 2 != 0 {
            return bad("time_dim", "must be even and at least 4");
        }
        Ok(())
    }

    /// Product of the per-stage downsampling factors.
    pub fn frame_multiple(&self) -> usize {
        1 << self.widths.len()
    }
}

/// `[sin(s·t·ω_i), cos(s·t·ω_i)]` with `ω_i = 10000^(−i/(d/2−1))`.
pub fn sinusoidal_embedding(t: f64, dim: usize, scale: f64) -> Vec<f64> {
    let half = dim / 2;
    let step = (10000f64).ln() / (half - 1) as f64;
    let args: Vec<f64> = (0..half).map(|i| scale * t * (-(i as f64) * step).exp()).collect();
    args.iter().map(|a| a.sin()).chain(args.iter().map(|a| a.cos())).collect()
}

/// `conv → LN → GELU → (+ time bias) → conv → LN → GELU`, plus a residual.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv1d,
    pub norm1: LayerNorm,
    pub time: Linear,
    pub conv2: Conv1d,
    pub norm2: LayerNorm,
    pub skip: Option<Conv1d>,
}

impl_module!(ResBlock; conv1, norm1, time, conv2, norm2, skip);

impl ResBlock {
    pub fn new<R: Rng>(name: &str, c_in: usize, c_out: usize, time_dim: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv1d::same(&format!("{name}.conv1"), c_in, c_out, 3, rng),
            norm1: LayerNorm::new(&format!("{name}.norm1"), c_out),
            time: Linear::new(&format!("{name}.time"), time_dim, c_out, rng),
            conv2: Conv1d::same(&format!("{name}.conv2"), c_out, c_out, 3, rng),
            norm2: LayerNorm::new(&format!("{name}.norm2"), c_out),
            skip: (c_in != c_out).then(|| Conv1d::same(&format!("{name}.skip"), c_in, c_out, 1, rng)),
        }
    }

    /// `x: [B, C_in, T]`, `temb: [B, time_dim]` (already activated).
    pub fn forward(&self, g: &mut Graph, x: Var, temb: Var) -> Result<Var> {
        let mut h = self.conv1.forward(g, x)?;
        h = self.norm1.forward(g, h)?;
        h = g.gelu(h);
        let bias = self.time.forward(g, temb)?;
        h = g.add_channel_bias(h, bias)?;
        h = self.conv2.forward(g, h)?;
        h = self.norm2.forward(g, h)?;
        h = g.gelu(h);
        let res = match &self.skip {
            Some(conv) => conv.forward(g, x)?,
            None => x,
        };
        g.add(h, res)
    }
}

#[derive(Debug, Clone)]
pub struct VelocityNet {
    pub config: VelocityNetConfig,
    bins: usize,
    pub time_in: Linear,
    pub time_out: Linear,
    pub down_blocks: Vec<ResBlock>,
    pub downsample: Vec<Conv1d>,
    pub mid_blocks: Vec<ResBlock>,
    pub upsample: Vec<ConvTranspose1d>,
    pub up_blocks: Vec<ResBlock>,
    pub output: Conv1d,
}

impl_module!(VelocityNet; time_in, time_out, down_blocks, downsample, mid_blocks, upsample, up_blocks, output);

impl VelocityNet {
    /// Parameters are named under `enh.*`.
    pub fn new<R: Rng>(config: VelocityNetConfig, bins: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if bins == 0 {
            return Err(Error::InvalidArgument("velocity network needs at least one bin".into()));
        }
        let td = config.time_dim;
        let widths = &config.widths;
        let deepest = *widths.last().unwrap();
        let mut down_blocks = Vec::new();
        let mut downsample = Vec::new();
        let mut c_prev = 2 * bins;
        for (i, &c) in widths.iter().enumerate() {
            down_blocks.push(ResBlock::new(&format!("enh.down{i}.block"), c_prev, c, td, rng));
            downsample.push(Conv1d::new(&format!("enh.down{i}.resample"), c, c, 4, 2, 1, 1, rng));
            c_prev = c;
        }
        let mid_blocks = (0..config.bottleneck_blocks)
            .map(|i| ResBlock::new(&format!("enh.mid{i}"), deepest, deepest, td, rng))
            .collect();
        let mut upsample = Vec::new();
        let mut up_blocks = Vec::new();
        for (i, &c) in widths.iter().enumerate().rev() {
            upsample.push(ConvTranspose1d::new(&format!("enh.up{i}.resample"), c_prev, c_prev, 4, 2, 1, rng));
            up_blocks.push(ResBlock::new(&format!("enh.up{i}.block"), c_prev + c, c, td, rng));
            c_prev = c;
        }
        Ok(Self {
            time_in: Linear::new("enh.time.fc1", td, td, rng),
            time_out: Linear::new("enh.time.fc2", td, td, rng),
            output: Conv1d::same("enh.output", widths[0], bins, 1, rng),
            bins,
            config,
            down_blocks,
            downsample,
            mid_blocks,
            upsample,
            up_blocks,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `x_t, condition: [B, N, K]`, one flow time per batch entry; returns `[B, N, K]`.
    pub fn forward(&self, g: &mut Graph, x_t: Var, t: &[f64], condition: Var) -> Result<Var> {
        let shape = g.shape(x_t).to_vec();
        if shape.len() != 3 || shape[2] != self.bins || g.shape(condition) != shape.as_slice() {
            return Err(Error::shape(
                "velocity_field",
                format!("state {shape:?}, condition {:?}, bins {}", g.shape(condition), self.bins),
            ));
        }
        let (b, n) = (shape[0], shape[1]);
        if t.len() != b {
            return Err(Error::shape("velocity_field", format!("{} times for batch {b}", t.len())));
        }
        let td = self.config.time_dim;
        let emb: Vec<f64> = t.iter().flat_map(|&t| sinusoidal_embedding(t, td, self.config.time_scale)).collect();
        let emb = g.constant(&[b, td], emb)?;
        let temb = self.time_in.forward(g, emb)?;
        let temb = g.gelu(temb);
        let temb = self.time_out.forward(g, temb)?;
        let temb = g.gelu(temb);

        let stacked = g.concat(&[x_t, condition], 2)?;
        let mut h = g.transpose12(stacked)?;
        let multiple = self.config.frame_multiple();
        let padded = n.div_ceil(multiple) * multiple;
        if padded != n {
            h = g.pad_last(h, padded - n);
        }
        let mut skips = Vec::with_capacity(self.down_blocks.len());
        for (block, down) in self.down_blocks.iter().zip(&self.downsample) {
            h = block.forward(g, h, temb)?;
            skips.push(h);
            h = down.forward(g, h)?;
        }
        for block in &self.mid_blocks {
            h = block.forward(g, h, temb)?;
        }
        for (up, block) in self.upsample.iter().zip(&self.up_blocks) {
            h = up.forward(g, h)?;
            let skip = skips.pop().expect("one skip per stage");
            h = g.concat(&[h, skip], 1)?;
            h = block.forward(g, h, temb)?;
        }
        h = self.output.forward(g, h)?;
        if padded != n {
            h = g.slice_last(h, 0, n)?;
        }
        g.transpose12(h)
    }
}

impl VelocityField for VelocityNet {
    fn velocity(&self, x: &Array2<f64>, t: f64, condition: &Array2<f64>) -> Result<Array2<f64>> {
        let (n, k) = x.dim();
        let mut g = Graph::new();
        let xv = g.constant(&[1, n, k], x.iter().copied().collect())?;
        let cv = g.constant(&[1, n, k], condition.iter().copied().collect())?;
        let v = self.forward(&mut g, xv, &[t], cv)?;
        Ok(Array2::from_shape_vec((n, k), g.value(v).to_vec()).expect("velocity shape"))
    }
}
