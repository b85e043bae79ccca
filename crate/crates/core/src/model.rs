//! The complete coder: spectral codec, codebook and velocity network
//! behind one configuration and one checkpoint.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Module, Parameter};
use crate::codec::{CodecConfig, SpectralCodec};
use crate::enhancer::{enhance, EnhancerConfig, VelocityNet};
use crate::error::{Error, Result};
use crate::quantizer::{bitrate, frame_rate, Codebook, QuantizerConfig, TokenSequence};
use crate::signal::{imdct, mdct, MdctSpectrum, MelConfig, Waveform};

const CONFIG_KEY: &str = "config";
const KIND_KEY: &str = "kind";
const KIND: &str = "cfmdct-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub hop_size: usize,
    pub codec: CodecConfig,
    pub quantizer: QuantizerConfig,
    pub enhancer: EnhancerConfig,
    pub mel: MelConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            hop_size: 40,
            codec: CodecConfig::default(),
            quantizer: QuantizerConfig::default(),
            enhancer: EnhancerConfig::default(),
            mel: MelConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config {
                field: "model.sample_rate".into(),
                message: "must be positive".into(),
            });
        }
        if self.hop_size == 0 || self.hop_size != self.codec.bins {
            return Err(Error::Config {
                field: "model.hop_size".into(),
                message: format!("must be positive and equal codec.bins ({})", self.codec.bins),
            });
        }
        if self.mel.hop == 0 || self.mel.fft_length < self.mel.hop || self.mel.n_mels == 0 {
            return Err(Error::Config {
                field: "model.mel".into(),
                message: "need n_mels > 0 and fft_length >= hop > 0".into(),
            });
        }
        self.codec.validate()?;
        self.quantizer.validate()?;
        self.enhancer.validate()
    }

    /// Samples per token.
    pub fn samples_per_token(&self) -> usize {
        self.hop_size * self.codec.rate
    }

    pub fn token_rate(&self) -> f64 {
        frame_rate(self.sample_rate, self.hop_size, self.codec.rate)
    }

    pub fn bitrate(&self) -> f64 {
        bitrate(self.sample_rate, self.hop_size, self.codec.rate, self.quantizer.size)
    }
}

/// Settings for one enhancement pass at decode time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceOptions {
    pub tau: f64,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CfmdctModel {
    pub config: ModelConfig,
    pub codec: SpectralCodec,
    pub codebook: Codebook,
    pub velocity: VelocityNet,
}

impl Module for CfmdctModel {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.codec.visit(f);
        self.codebook.visit(f);
        self.velocity.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.codec.visit_mut(f);
        self.codebook.visit_mut(f);
        self.velocity.visit_mut(f);
    }
}

impl CfmdctModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codec = SpectralCodec::new(config.codec.clone(), &mut rng)?;
        let codebook = Codebook::new(&config.quantizer, config.codec.latent_dim, &mut rng)?;
        let velocity = VelocityNet::new(config.enhancer.network.clone(), config.codec.bins, &mut rng)?;
        Ok(Self {
            config,
            codec,
            codebook,
            velocity,
        })
    }

    fn check_rate(&self, waveform: &Waveform) -> Result<()> {
        if waveform.sample_rate != self.config.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "input is {} Hz, model expects {} Hz",
                waveform.sample_rate, self.config.sample_rate
            )));
        }
        Ok(())
    }

    /// MDCT of `waveform` zero-padded to a whole number of tokens.
    pub fn analyze(&self, waveform: &Waveform) -> Result<MdctSpectrum> {
        self.check_rate(waveform)?;
        mdct(&waveform.padded_to_multiple(self.config.samples_per_token()), self.config.hop_size)
    }

    pub fn encode(&self, waveform: &Waveform) -> Result<TokenSequence> {
        let spectrum = self.analyze(waveform)?;
        let latents = self.codec.encode(&spectrum)?;
        Ok(self.codebook.quantize(&latents)?.0)
    }

    pub fn decode_coarse(&self, tokens: &TokenSequence) -> Result<MdctSpectrum> {
        if tokens.ids.is_empty() {
            return Err(Error::InvalidArgument("no tokens to decode".into()));
        }
        let latents = self.codebook.lookup(tokens)?;
        self.codec.decode(&latents)
    }

    pub fn enhance(&self, coarse: &MdctSpectrum, opts: EnhanceOptions) -> Result<MdctSpectrum> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        enhance(coarse, &self.velocity, &self.config.enhancer, opts.tau, opts.steps, &mut rng)
    }

    /// Tokens to samples; `enhance = None` returns the coarse reconstruction.
    pub fn decode(&self, tokens: &TokenSequence, enhance: Option<EnhanceOptions>) -> Result<Waveform> {
        let mut spectrum = self.decode_coarse(tokens)?;
        if let Some(opts) = enhance {
            spectrum = self.enhance(&spectrum, opts)?;
        }
        imdct(&spectrum, self.config.sample_rate)
    }

    /// Default enhancement settings from the configuration.
    pub fn default_enhance(&self, seed: u64) -> EnhanceOptions {
        EnhanceOptions {
            tau: self.config.enhancer.tau,
            steps: self.config.enhancer.ode_steps,
            seed,
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new();
        let config = toml::to_string(&self.config).map_err(|e| Error::Format(format!("serialising config: {e}")))?;
        ckpt.meta.insert(KIND_KEY.into(), KIND.into());
        ckpt.meta.insert(CONFIG_KEY.into(), config);
        ckpt.add_module(&self.codec);
        self.codebook.save_into(&mut ckpt);
        ckpt.add_module(&self.velocity);
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta.get(KIND_KEY).map(String::as_str) != Some(KIND) {
            return Err(Error::Format("checkpoint does not hold a model".into()));
        }
        let text = ckpt
            .meta
            .get(CONFIG_KEY)
            .ok_or_else(|| Error::Format("checkpoint has no configuration".into()))?;
        let config: ModelConfig =
            toml::from_str(text).map_err(|e| Error::Format(format!("checkpoint configuration: {e}")))?;
        let mut model = Self::new(config, 0)?;
        ckpt.load_into(&mut model.codec)?;
        model.codebook.load_from(ckpt)?;
        ckpt.load_into(&mut model.velocity)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
