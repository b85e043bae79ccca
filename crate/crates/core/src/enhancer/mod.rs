//! Flow-matching refinement of the coarse decoded spectrum.
//!
//! The coarse spectrum is range-normalised (sign-preserving power
//! compression divided by its maximum), a per-bin noise scale is derived
//! from its smoothed magnitudes, and an initial state `X_0 = X̃ + τ·σ⊙δ` is
//! integrated along a learned velocity field with explicit Euler steps.
//! The result is denormalised with the coarse spectrum's own scale.

mod velocity;

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::avg_pool2d_values;
use crate::error::{Error, Result};
use crate::signal::MdctSpectrum;

pub use velocity::{sinusoidal_embedding, ResBlock, VelocityNet, VelocityNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub epsilon: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Percentile of the compressed magnitudes used as loudness reference.
    pub percentile: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kernel_time: 3,
            kernel_freq: 5,
            epsilon: 1e-8,
            sigma_min: 1e-3,
            sigma_max: 1.0,
            percentile: 99.0,
        }
    }
}

/// Floor on the loudness reference.
pub const ETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancerConfig {
    /// Compression exponent of the range normalisation.
    pub alpha: f64,
    pub prior: PriorConfig,
    /// Noise temperature at inference.
    pub tau: f64,
    pub ode_steps: usize,
    pub network: VelocityNetConfig,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            prior: PriorConfig::default(),
            tau: 1.0,
            ode_steps: 6,
            network: VelocityNetConfig::default(),
        }
    }
}

impl EnhancerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("enhancer.{field}"),
                message: message.into(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", "must lie in (0, 1]");
        }
        let p = &self.prior;
        if p.kernel_time % 2 == 0 || p.kernel_freq % 2 == 0 {
            return bad("prior.kernel_*", "pooling kernels must be odd");
        }
        if !(p.sigma_min > 0.0 && p.sigma_min <= p.sigma_max) {
            return bad("prior.sigma_min", "need 0 < sigma_min <= sigma_max");
        }
        if !(p.epsilon >= 0.0) {
            return bad("prior.epsilon", "must be non-negative");
        }
        if !(p.percentile > 0.0 && p.percentile <= 100.0) {
            return bad("prior.percentile", "must lie in (0, 100]");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad("tau", "must be finite and non-negative");
        }
        if self.ode_steps == 0 {
            return bad("ode_steps", "must be at least 1");
        }
        self.network.validate()
    }
}

/// Range-normalised spectrum with the scale needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSpectrum {
    pub values: Array2<f64>,
    /// `max |X|^α` of the source spectrum.
    pub scale: f64,
    pub alpha: f64,
    /// Set when the source spectrum was all zeros and `scale` defaulted to 1.
    pub silent: bool,
}

pub fn range_normalize(spectrum: &MdctSpectrum, alpha: f64) -> Result<NormalizedSpectrum> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")));
    }
    let compressed = spectrum.coeffs.mapv(|x| x.signum() * x.abs().powf(alpha));
    let max = compressed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !max.is_finite() {
        return Err(Error::NonFinite {
            context: "range normalisation".into(),
        });
    }
    if max == 0.0 {
        log::warn!("range normalisation of an all-zero spectrum; using scale 1");
        return Ok(NormalizedSpectrum {
            values: Array2::zeros(spectrum.coeffs.raw_dim()),
            scale: 1.0,
            alpha,
            silent: true,
        });
    }
    Ok(NormalizedSpectrum {
        values: compressed.mapv(|v| v / max),
        scale: max,
        alpha,
        silent: false,
    })
}

/// `sign(v)·(scale·|v|)^(1/α)` elementwise.
pub fn range_denormalize(normed: &NormalizedSpectrum) -> Result<MdctSpectrum> {
    if !(normed.scale > 0.0 && normed.alpha > 0.0 && normed.alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "denormalisation needs scale > 0 and alpha in (0, 1], got {} and {}",
            normed.scale, normed.alpha
        )));
    }
    let inv = 1.0 / normed.alpha;
    let s = normed.scale;
    let coeffs = normed.values.mapv(|v| v.signum() * (s * v.abs()).powf(inv));
    let bins = coeffs.ncols();
    MdctSpectrum::new(coeffs, bins)
}

/// Per-bin standard deviation of the initial noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePrior {
    pub sigma: Array2<f64>,
    /// Loudness reference the compressed magnitudes were divided by.
    pub eta: f64,
}

/// Nearest-rank percentile (`p` in `(0, 100]`) of `values`.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn noise_prior(normalized: &Array2<f64>, cfg: &PriorConfig) -> NoisePrior {
    let (n, k) = normalized.dim();
    let magnitude: Vec<f64> = normalized.iter().map(|v| v.abs()).collect();
    let pooled = avg_pool2d_values(&magnitude, &[n, k], cfg.kernel_time, cfg.kernel_freq);
    let comp: Vec<f64> = pooled.iter().map(|m| (m + cfg.epsilon).sqrt()).collect();
    let eta = nearest_rank_percentile(&comp, cfg.percentile).max(ETA_FLOOR);
    let sigma = comp.iter().map(|c| (c / eta).clamp(cfg.sigma_min, cfg.sigma_max)).collect();
    NoisePrior {
        sigma: Array2::from_shape_vec((n, k), sigma).expect("prior shape"),
        eta,
    }
}

/// State of the flow at time `t`, with the spectrum it is conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Array2<f64>,
    pub t: f64,
    pub condition: NormalizedSpectrum,
}

/// `X_0 = X̃ + τ·σ⊙δ` with `δ ~ N(0, I)`.
pub fn sample_initial_state<R: Rng>(
    normed: &NormalizedSpectrum,
    prior: &NoisePrior,
    tau: f64,
    rng: &mut R,
) -> Result<FlowState> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be non-negative")));
    }
    if prior.sigma.dim() != normed.values.dim() {
        return Err(Error::shape("sample_initial_state", "prior and spectrum shapes differ"));
    }
    let mut x = normed.values.clone();
    Zip::from(&mut x).and(&prior.sigma).for_each(|x, &s| {
        let d: f64 = StandardNormal.sample(rng);
        *x += tau * s * d;
    });
    Ok(FlowState {
        x,
        t: 0.0,
        condition: normed.clone(),
    })
}

/// A velocity field `V(X_t, t, condition)` over `N × K` states.
pub trait VelocityField {
    fn velocity(&self, x: &Array2<f64>, t: f64, condition: &Array2<f64>) -> Result<Array2<f64>>;
}

/// Explicit Euler integration from `state.t = 0` to `t = 1` in `steps`
/// uniform steps. The result carries the condition's scale.
pub fn euler_solve(state: FlowState, field: &dyn VelocityField, steps: usize) -> Result<NormalizedSpectrum> {
    if steps == 0 {
        return Err(Error::InvalidArgument("ODE solver needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let FlowState { mut x, condition, .. } = state;
    for i in 0..steps {
        let t = i as f64 * dt;
        let v = field.velocity(&x, t, &condition.values)?;
        if v.dim() != x.dim() {
            return Err(Error::shape("euler_solve", format!("velocity {:?} for state {:?}", v.dim(), x.dim())));
        }
        if let Some(pos) = v.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / x.ncols(), pos % x.ncols());
            return Err(Error::NonFinite {
                context: format!("velocity field at step {i} (t = {t}), frame {r}, bin {c}"),
            });
        }
        x.scaled_add(dt, &v);
    }
    Ok(NormalizedSpectrum { values: x, ..condition })
}

/// Normalise, build the prior, draw the initial state, integrate, and
/// denormalise with the coarse spectrum's scale.
pub fn enhance<R: Rng>(
    coarse: &MdctSpectrum,
    field: &dyn VelocityField,
    cfg: &EnhancerConfig,
    tau: f64,
    steps: usize,
    rng: &mut R,
) -> Result<MdctSpectrum> {
    let normed = range_normalize(coarse, cfg.alpha)?;
    let prior = noise_prior(&normed.values, &cfg.prior);
    let state = sample_initial_state(&normed, &prior, tau, rng)?;
    let out = euler_solve(state, field, steps)?;
    range_denormalize(&out)
}

#[cfg(test)]
mod tests;
