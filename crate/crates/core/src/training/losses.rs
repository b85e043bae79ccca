//! Loss terms as graph operations. Every norm is mean-reduced over elements.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::signal::{mel_filterbank, MelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mdct: f64,
    pub mel1: f64,
    pub mel2: f64,
    pub code: f64,
    pub commit: f64,
    pub cfm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mdct: 250.0,
            mel1: 20.0,
            mel2: 10.0,
            code: 10.0,
            commit: 2.5,
            cfm: 100.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("mdct", self.mdct),
            ("mel1", self.mel1),
            ("mel2", self.mel2),
            ("code", self.code),
            ("commit", self.commit),
            ("cfm", self.cfm),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config {
                    field: format!("loss.{name}"),
                    message: "must be finite and non-negative".into(),
                });
            }
        }
        Ok(())
    }
}

/// Differentiable `log(max(fb · |STFT(IMDCT(X))|, floor))`.
#[derive(Debug, Clone)]
pub struct MelFrontend {
    config: MelConfig,
    filterbank: Vec<f64>,
}

impl MelFrontend {
    pub fn new(sample_rate: u32, config: MelConfig) -> Self {
        let fb = mel_filterbank(sample_rate, config.fft_length, config.n_mels);
        Self {
            config,
            filterbank: fb.into_raw_vec_and_offset().0,
        }
    }

    /// `[B, N, K]` MDCT coefficients to `[B, frames, n_mels]` log-mel values.
    pub fn forward(&self, g: &mut Graph, coeffs: Var) -> Result<Var> {
        let wave = g.imdct(coeffs)?;
        let mag = g.stft_magnitude(wave, self.config.fft_length, self.config.hop)?;
        let bins = self.config.fft_length / 2 + 1;
        let fb = g.constant(&[self.config.n_mels, bins], self.filterbank.clone())?;
        let mel = g.linear(mag, fb, None)?;
        Ok(g.log_clamp(mel, self.config.log_floor))
    }
}

/// Unweighted reconstruction terms.
#[derive(Debug, Clone, Copy)]
pub struct SpectralTerms {
    pub mdct: Var,
    pub mel1: Var,
    pub mel2: Var,
}

pub fn spectral_terms(g: &mut Graph, mel: &MelFrontend, coarse: Var, target: Var) -> Result<SpectralTerms> {
    let mdct = g.mse(coarse, target)?;
    let a = mel.forward(g, coarse)?;
    let b = mel.forward(g, target)?;
    Ok(SpectralTerms {
        mdct,
        mel1: g.mae(a, b)?,
        mel2: g.mse(a, b)?,
    })
}

/// `λ_MDCT·mdct + λ_mel1·mel1 + λ_mel2·mel2`.
pub fn weighted_spectral(g: &mut Graph, t: &SpectralTerms, w: &LossWeights) -> Result<Var> {
    let a = g.scale(t.mdct, w.mdct);
    let b = g.scale(t.mel1, w.mel1);
    let c = g.scale(t.mel2, w.mel2);
    let ab = g.add(a, b)?;
    g.add(ab, c)
}

/// Codebook term `mse(sg[H], H̃)` and commitment term `mse(H, sg[H̃])`.
pub fn vq_terms(g: &mut Graph, latents: Var, quantized: Var) -> Result<(Var, Var)> {
    let h_stop = g.detach(latents);
    let q_stop = g.detach(quantized);
    Ok((g.mse(h_stop, quantized)?, g.mse(latents, q_stop)?))
}

/// `H + sg[H̃ − H]`: the value of `H̃` with the gradient of `H`.
pub fn straight_through(g: &mut Graph, latents: Var, quantized: Var) -> Result<Var> {
    let diff = g.sub(quantized, latents)?;
    let diff = g.detach(diff);
    g.add(latents, diff)
}

/// Multiplies batch entry `b` of `x` by `factors[b]`.
pub fn scale_per_example(g: &mut Graph, x: Var, factors: &[f64]) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.first() != Some(&factors.len()) {
        return Err(Error::shape("scale_per_example", format!("{shape:?} with {} factors", factors.len())));
    }
    let per = g.value(x).len() / factors.len();
    let data = factors.iter().flat_map(|&f| std::iter::repeat(f).take(per)).collect();
    let f = g.constant(&shape, data)?;
    g.mul(x, f)
}

/// Linear path `X_t = X_0 + t·(X^norm − X_0)` with one `t` per example, and
/// its time-independent velocity `U = X^norm − X_0`.
pub fn cfm_path(g: &mut Graph, x0: Var, target: Var, t: &[f64]) -> Result<(Var, Var)> {
    let u = g.sub(target, x0)?;
    let step = scale_per_example(g, u, t)?;
    Ok((g.add(x0, step)?, u))
}

pub fn cfm_loss(g: &mut Graph, predicted: Var, target: Var) -> Result<Var> {
    g.mse(predicted, target)
}
