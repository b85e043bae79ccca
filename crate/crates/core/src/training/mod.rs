//! Joint training of the codec, codebook and velocity network.
//!
//! One step: MDCT of a batch of segments → encode → quantize with a
//! straight-through path → decode → reconstruction and quantization
//! losses; then range-normalise coarse and target with the coarse scale,
//! draw `X_0` from the noise prior, evaluate the velocity network once at a
//! random flow time and add the flow-matching loss. A single backward pass
//! updates every parameter with AdamW, after which the codebook's
//! assignment probabilities and forced update are applied.

mod corpus;
mod losses;
mod optim;

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use corpus::{speech_like_clip, toy_corpus};
pub use losses::{
    cfm_loss, cfm_path, scale_per_example, spectral_terms, straight_through, vq_terms, weighted_spectral, LossWeights,
    MelFrontend, SpectralTerms,
};
pub use optim::{AdamW, AdamWConfig};

use crate::autodiff::{Graph, Module, Var};
use crate::enhancer::noise_prior;
use crate::error::{Error, Result};
use crate::model::{CfmdctModel, ModelConfig};
use crate::quantizer::{distinct_codes, perplexity};
use crate::signal::{mdct, Waveform};

/// Derivative floor of the power compression inside the flow-matching
/// branch, where `|x|^(α−1)` is unbounded at zero.
pub const COMPRESSION_GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub batch_size: usize,
    pub segment_seconds: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Steps between checkpoints written by the command-line trainer (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamWConfig::default(),
            batch_size: 8,
            segment_seconds: 1.0,
            max_steps: 20_000,
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("train.{field}"),
                message: message.into(),
            })
        };
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad("optimizer.learning_rate", "must be positive");
        }
        if !(o.lr_decay > 0.0 && o.lr_decay <= 1.0) {
            return bad("optimizer.lr_decay", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer.beta1", "betas must lie in [0, 1)");
        }
        if !(o.weight_decay >= 0.0) || !(o.eps > 0.0) {
            return bad("optimizer.weight_decay", "weight_decay >= 0 and eps > 0 required");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.segment_seconds > 0.0) {
            return bad("segment_seconds", "must be positive");
        }
        Ok(())
    }
}

/// Everything a training run needs, as read from a TOML file with
/// `[model]`, `[train]` and `[loss]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map_or_else(|| "<file>".to_string(), |s| format!("bytes {}..{}", s.start, s.end)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Reduced widths for single-machine experiments on a handful of clips.
    /// The learning rate is held constant: on a few clips an epoch is only a
    /// couple of steps, so per-epoch decay would shrink it a hundredfold
    /// within 10k steps, while a full-corpus run barely decays at all.
    pub fn desk_scale() -> Self {
        let mut cfg = Config::default();
        cfg.model.codec.width = 32;
        cfg.model.codec.latent_dim = 16;
        cfg.model.enhancer.network.widths = vec![64, 128];
        cfg.model.enhancer.network.bottleneck_blocks = 1;
        cfg.model.enhancer.network.time_dim = 32;
        cfg.train.optimizer.lr_decay = 1.0;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()
    }
}

/// Graph handles for every term of one joint forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub spectral: SpectralTerms,
    pub code: Var,
    pub commit: Var,
    pub cfm: Var,
    pub spec_total: Var,
    pub vq_total: Var,
    pub total: Var,
}

/// A recorded forward pass.
pub struct ForwardPass {
    pub graph: Graph,
    pub terms: LossTerms,
    /// Token ids of every latent frame in the batch.
    pub tokens: Vec<usize>,
    /// Pre-quantization latents, `tokens.len() × Cq`, row-major.
    pub latents: Vec<f64>,
}

/// Runs the joint objective on `[B, N, K]` target spectra. `rng` supplies
/// the flow times and the initial-state noise.
pub fn joint_forward<R: Rng>(
    model: &CfmdctModel,
    mel: &MelFrontend,
    weights: &LossWeights,
    spectra: &[Array2<f64>],
    rng: &mut R,
) -> Result<ForwardPass> {
    let b = spectra.len();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let (n, k) = spectra[0].dim();
    if spectra.iter().any(|s| s.dim() != (n, k)) {
        return Err(Error::shape("joint_forward", "batch spectra differ in shape"));
    }
    let cfg = &model.config;
    let alpha = cfg.enhancer.alpha;
    let tau = cfg.enhancer.tau;
    let mut g = Graph::new();
    let target = g.constant(&[b, n, k], spectra.iter().flat_map(|s| s.iter().copied()).collect())?;

    let h = model.codec.encoder.forward(&mut g, target)?;
    let hshape = g.shape(h).to_vec();
    let latents = g.value(h).to_vec();
    let tokens = model.codebook.nearest(&latents)?;
    let table = g.param(&model.codebook.vectors);
    let q = g.gather_rows(table, &tokens)?;
    let q = g.reshape(q, &hshape)?;
    let hq = straight_through(&mut g, h, q)?;
    let coarse = model.codec.decoder.forward(&mut g, hq)?;

    let spectral = spectral_terms(&mut g, mel, coarse, target)?;
    let spec_total = weighted_spectral(&mut g, &spectral, weights)?;
    let (code, commit) = vq_terms(&mut g, h, q)?;
    let wc = g.scale(code, weights.code);
    let wm = g.scale(commit, weights.commit);
    let vq_total = g.add(wc, wm)?;

    // Flow-matching branch. Scales and the prior are constants.
    let coarse_vals = g.value(coarse).to_vec();
    let per = n * k;
    let mut inv_scale = Vec::with_capacity(b);
    let mut noise = Vec::with_capacity(b * per);
    let mut target_norm = Vec::with_capacity(b * per);
    for (bi, spec) in spectra.iter().enumerate() {
        let c = &coarse_vals[bi * per..(bi + 1) * per];
        let max = c.iter().fold(0.0f64, |m, v| m.max(v.abs().powf(alpha)));
        let scale = if max > 0.0 { max } else { 1.0 };
        inv_scale.push(1.0 / scale);
        let normed = Array2::from_shape_fn((n, k), |(i, j)| {
            let v = c[i * k + j];
            v.signum() * v.abs().powf(alpha) / scale
        });
        let prior = noise_prior(&normed, &cfg.enhancer.prior);
        for s in prior.sigma.iter() {
            let d: f64 = StandardNormal.sample(rng);
            noise.push(tau * s * d);
        }
        target_norm.extend(spec.iter().map(|v| v.signum() * v.abs().powf(alpha) / scale));
    }
    let t: Vec<f64> = (0..b).map(|_| rng.gen_range(0.0..1.0)).collect();
    let compressed = g.signed_pow(coarse, alpha, COMPRESSION_GRAD_FLOOR);
    let cond = scale_per_example(&mut g, compressed, &inv_scale)?;
    let noise = g.constant(&[b, n, k], noise)?;
    let x0 = g.add(cond, noise)?;
    let x_target = g.constant(&[b, n, k], target_norm)?;
    let (x_t, u) = cfm_path(&mut g, x0, x_target, &t)?;
    let v = model.velocity.forward(&mut g, x_t, &t, cond)?;
    let cfm = cfm_loss(&mut g, v, u)?;

    let wf = g.scale(cfm, weights.cfm);
    let sv = g.add(spec_total, vq_total)?;
    let total = g.add(sv, wf)?;
    Ok(ForwardPass {
        graph: g,
        terms: LossTerms {
            spectral,
            code,
            commit,
            cfm,
            spec_total,
            vq_total,
            total,
        },
        tokens,
        latents,
    })
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub total: f64,
    pub spec: f64,
    pub vq: f64,
    pub mdct: f64,
    pub mel1: f64,
    pub mel2: f64,
    pub code: f64,
    pub commit: f64,
    pub cfm: f64,
    pub lr: f64,
    pub perplexity: f64,
    pub used_codes: usize,
    pub batch_seed: u64,
}

/// Holds the model, optimizer, data and sampling state of a run.
pub struct Trainer {
    pub model: CfmdctModel,
    pub optimizer: AdamW,
    pub config: TrainConfig,
    pub weights: LossWeights,
    mel: MelFrontend,
    clips: Vec<Waveform>,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: CfmdctModel, config: TrainConfig, weights: LossWeights, clips: Vec<Waveform>) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        if clips.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one clip".into()));
        }
        if let Some(c) = clips.iter().find(|c| c.sample_rate != model.config.sample_rate) {
            return Err(Error::InvalidArgument(format!(
                "clip at {} Hz, model expects {} Hz",
                c.sample_rate, model.config.sample_rate
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            mel: MelFrontend::new(model.config.sample_rate, model.config.mel),
            optimizer: AdamW::new(config.optimizer),
            model,
            config,
            weights,
            clips,
            order,
            cursor: 0,
            step: 0,
            rng,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Optimizer steps per pass over the clip list.
    pub fn steps_per_epoch(&self) -> usize {
        self.clips.len().div_ceil(self.config.batch_size)
    }

    /// Segment length in samples, rounded down to whole tokens.
    pub fn segment_samples(&self) -> usize {
        let per = self.model.config.samples_per_token();
        let raw = (self.config.segment_seconds * self.model.config.sample_rate as f64) as usize;
        (raw / per).max(1) * per
    }

    fn next_batch(&mut self) -> Result<Vec<Array2<f64>>> {
        let seg = self.segment_samples();
        let mut spectra = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let clip = &self.clips[self.order[self.cursor]];
            self.cursor += 1;
            let start = if clip.len() > seg { self.rng.gen_range(0..=clip.len() - seg) } else { 0 };
            let mut samples: Vec<f64> = clip.samples[start..(start + seg).min(clip.len())].to_vec();
            samples.resize(seg, 0.0);
            let spec = mdct(&Waveform::new(samples, clip.sample_rate), self.model.config.hop_size)?;
            spectra.push(spec.coeffs);
        }
        Ok(spectra)
    }

    /// One optimization step.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let spectra = self.next_batch()?;
        let batch_seed: u64 = self.rng.gen();
        let mut batch_rng = ChaCha8Rng::seed_from_u64(batch_seed);
        let pass = joint_forward(&self.model, &self.mel, &self.weights, &spectra, &mut batch_rng)?;
        let g = &pass.graph;
        let t = &pass.terms;
        let metrics = StepMetrics {
            step: self.step + 1,
            total: g.scalar(t.total),
            spec: g.scalar(t.spec_total),
            vq: g.scalar(t.vq_total),
            mdct: g.scalar(t.spectral.mdct),
            mel1: g.scalar(t.spectral.mel1),
            mel2: g.scalar(t.spectral.mel2),
            code: g.scalar(t.code),
            commit: g.scalar(t.commit),
            cfm: g.scalar(t.cfm),
            lr: self.optimizer.learning_rate(),
            perplexity: perplexity(&pass.tokens, self.model.codebook.size())?,
            used_codes: distinct_codes(&pass.tokens),
            batch_seed,
        };
        if !metrics.total.is_finite() {
            return Err(Error::NonFinite {
                context: format!("training loss at step {} (batch seed {batch_seed}): {metrics:?}", metrics.step),
            });
        }
        let grads = g.backward(t.total)?;
        self.model.zero_grad();
        self.model.accumulate(&grads);
        let mut bad = None;
        self.model.visit(&mut |p| {
            if bad.is_none() && p.grad().iter().any(|v| !v.is_finite()) {
                bad = Some(p.name().to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite {
                context: format!("gradient of `{name}` at step {} (batch seed {batch_seed})", metrics.step),
            });
        }
        self.optimizer.step(&mut self.model);
        self.model.codebook.update_assignment_probs(&pass.tokens)?;
        self.model.codebook.forced_update(&pass.latents, &mut batch_rng)?;
        self.step += 1;
        if self.step % self.steps_per_epoch() == 0 {
            self.optimizer.end_epoch();
        }
        Ok(metrics)
    }

    /// Runs `steps` steps, appending each record as a JSON line to `log`.
    pub fn run(&mut self, steps: usize, mut log: Option<&mut dyn Write>) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let m = self.step()?;
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&m).expect("metrics serialise");
                writeln!(w, "{line}").map_err(|e| Error::io("<metrics log>", e))?;
            }
            out.push(m);
        }
        Ok(out)
    }
}

/// Mean of `values[end - window .. end]`.
pub fn trailing_mean(values: &[f64], end: usize, window: usize) -> f64 {
    let start = end.saturating_sub(window);
    values[start..end].iter().sum::<f64>() / (end - start) as f64
}
