//! Spectral encoder and decoder.
//!
//! The encoder maps an `N × K` MDCT spectrum to `L = N / R` latent vectors
//! of dimension `Cq`; the decoder maps latents back to a coarse spectrum.
//!
//! ```text
//! encoder: conv(K→C, k) → LN → 8 × ConvNeXt → LN → linear → conv(k=2R, s=R) → conv(C→Cq, k)
//! decoder: conv(Cq→C, k) → LN → 8 × ConvNeXt → LN → linear → convT(k=2R, s=R) → conv(C→K, k)
//! ```

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{impl_module, Conv1d, ConvNextBlock, ConvTranspose1d, LayerNorm};
use crate::signal::MdctSpectrum;

/// Number of residual blocks in each backbone.
pub const BACKBONE_BLOCKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// MDCT bins per frame (equals the hop size).
    pub bins: usize,
    pub latent_dim: usize,
    /// Temporal down/upsampling factor between frames and latents.
    pub rate: usize,
    pub width: usize,
    pub block_kernel: usize,
    pub expansion: usize,
    /// Kernel of the first and last convolution of each network.
    pub edge_kernel: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            bins: 40,
            latent_dim: 32,
            rate: 8,
            width: 256,
            block_kernel: 7,
            expansion: 3,
            edge_kernel: 7,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("codec.{field}"),
                message: message.into(),
            })
        };
        if self.rate < 2 || self.rate % 2 != 0 {
            return bad("rate", "must be an even number >= 2");
        }
        for (field, v) in [
            ("bins", self.bins),
            ("latent_dim", self.latent_dim),
            ("width", self.width),
            ("expansion", self.expansion),
        ] {
            if v == 0 {
                return bad(field, "must be positive");
            }
        }
        for (field, v) in [("block_kernel", self.block_kernel), ("edge_kernel", self.edge_kernel)] {
            if v % 2 == 0 {
                return bad(field, "must be odd");
            }
        }
        Ok(())
    }
}

/// Continuous latents `H`, one row per latent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub values: Array2<f64>,
}

impl LatentSequence {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major data, contiguous.
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("latents are stored in standard layout")
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub front: Conv1d,
    pub norm_in: LayerNorm,
    pub blocks: Vec<ConvNextBlock>,
    pub norm_out: LayerNorm,
    pub linear: Conv1d,
    pub down: Conv1d,
    pub back: Conv1d,
    rate: usize,
}

impl_module!(Encoder; front, norm_in, blocks, norm_out, linear, down, back);

impl Encoder {
    pub fn new<R: Rng>(name: &str, cfg: &CodecConfig, rng: &mut R) -> Self {
        let c = cfg.width;
        let r = cfg.rate;
        Self {
            front: Conv1d::same(&format!("{name}.front"), cfg.bins, c, cfg.edge_kernel, rng),
            norm_in: LayerNorm::new(&format!("{name}.norm_in"), c),
            blocks: (0..BACKBONE_BLOCKS)
                .map(|i| ConvNextBlock::new(&format!("{name}.block{i}"), c, cfg.block_kernel, cfg.expansion, rng))
                .collect(),
            norm_out: LayerNorm::new(&format!("{name}.norm_out"), c),
            linear: Conv1d::same(&format!("{name}.linear"), c, c, 1, rng),
            down: Conv1d::new(&format!("{name}.down"), c, c, 2 * r, r, r / 2, 1, rng),
            back: Conv1d::same(&format!("{name}.back"), c, cfg.latent_dim, cfg.edge_kernel, rng),
            rate: r,
        }
    }

    /// `[B, N, K]` spectra to `[B, N / R, Cq]` latents.
    pub fn forward(&self, g: &mut Graph, spectra: Var) -> Result<Var> {
        let n = g.shape(spectra)[1];
        if n == 0 || n % self.rate != 0 {
            return Err(Error::shape(
                "encode",
                format!("frame count {n} is not a positive multiple of rate {}", self.rate),
            ));
        }
        let x = g.transpose12(spectra)?;
        let mut h = self.front.forward(g, x)?;
        h = self.norm_in.forward(g, h)?;
        for block in &self.blocks {
            h = block.forward(g, h)?;
        }
        h = self.norm_out.forward(g, h)?;
        h = self.linear.forward(g, h)?;
        h = self.down.forward(g, h)?;
        h = self.back.forward(g, h)?;
        g.transpose12(h)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub front: Conv1d,
    pub norm_in: LayerNorm,
    pub blocks: Vec<ConvNextBlock>,
    pub norm_out: LayerNorm,
    pub linear: Conv1d,
    pub up: ConvTranspose1d,
    pub back: Conv1d,
}

impl_module!(Decoder; front, norm_in, blocks, norm_out, linear, up, back);

impl Decoder {
    pub fn new<R: Rng>(name: &str, cfg: &CodecConfig, rng: &mut R) -> Self {
        let c = cfg.width;
        let r = cfg.rate;
        Self {
            front: Conv1d::same(&format!("{name}.front"), cfg.latent_dim, c, cfg.edge_kernel, rng),
            norm_in: LayerNorm::new(&format!("{name}.norm_in"), c),
            blocks: (0..BACKBONE_BLOCKS)
                .map(|i| ConvNextBlock::new(&format!("{name}.block{i}"), c, cfg.block_kernel, cfg.expansion, rng))
                .collect(),
            norm_out: LayerNorm::new(&format!("{name}.norm_out"), c),
            linear: Conv1d::same(&format!("{name}.linear"), c, c, 1, rng),
            up: ConvTranspose1d::new(&format!("{name}.up"), c, c, 2 * r, r, r / 2, rng),
            back: Conv1d::same(&format!("{name}.back"), c, cfg.bins, cfg.edge_kernel, rng),
        }
    }

    /// `[B, L, Cq]` latents to `[B, L·R, K]` spectra.
    pub fn forward(&self, g: &mut Graph, latents: Var) -> Result<Var> {
        let x = g.transpose12(latents)?;
        let mut h = self.front.forward(g, x)?;
        h = self.norm_in.forward(g, h)?;
        for block in &self.blocks {
            h = block.forward(g, h)?;
        }
        h = self.norm_out.forward(g, h)?;
        h = self.linear.forward(g, h)?;
        h = self.up.forward(g, h)?;
        h = self.back.forward(g, h)?;
        g.transpose12(h)
    }
}

/// Encoder and decoder pair with its configuration.
#[derive(Debug, Clone)]
pub struct SpectralCodec {
    pub config: CodecConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl_module!(SpectralCodec; encoder, decoder);

impl SpectralCodec {
    /// Parameters are named under `codec.encoder.*` and `codec.decoder.*`.
    pub fn new<R: Rng>(config: CodecConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            encoder: Encoder::new("codec.encoder", &config, rng),
            decoder: Decoder::new("codec.decoder", &config, rng),
            config,
        })
    }

    pub fn encode(&self, spectrum: &MdctSpectrum) -> Result<LatentSequence> {
        if spectrum.bins() != self.config.bins {
            return Err(Error::shape(
                "encode",
                format!("spectrum has {} bins, codec expects {}", spectrum.bins(), self.config.bins),
            ));
        }
        let mut g = Graph::new();
        let x = g.constant(&[1, spectrum.frames(), spectrum.bins()], spectrum.coeffs.iter().copied().collect())?;
        let h = self.encoder.forward(&mut g, x)?;
        let shape = g.shape(h).to_vec();
        let values = Array2::from_shape_vec((shape[1], shape[2]), g.value(h).to_vec()).expect("encoder output shape");
        Ok(LatentSequence::new(values))
    }

    pub fn decode(&self, latents: &LatentSequence) -> Result<MdctSpectrum> {
        if latents.dim() != self.config.latent_dim || latents.is_empty() {
            return Err(Error::shape(
                "decode",
                format!(
                    "latents are {}×{}, codec expects L×{}",
                    latents.len(),
                    latents.dim(),
                    self.config.latent_dim
                ),
            ));
        }
        let mut g = Graph::new();
        let x = g.constant(&[1, latents.len(), latents.dim()], latents.as_slice().to_vec())?;
        let y = self.decoder.forward(&mut g, x)?;
        let shape = g.shape(y).to_vec();
        let coeffs = Array2::from_shape_vec((shape[1], shape[2]), g.value(y).to_vec()).expect("decoder output shape");
        MdctSpectrum::new(coeffs, self.config.bins)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::gradcheck::check_module;
    use crate::autodiff::Module;
    use crate::layers::randomize;

    fn small(rate: usize) -> CodecConfig {
        CodecConfig {
            width: 12,
            rate,
            ..CodecConfig::default()
        }
    }

    fn random_spectrum(rng: &mut ChaCha8Rng, frames: usize, bins: usize) -> MdctSpectrum {
        let coeffs = Array2::from_shape_fn((frames, bins), |_| rng.gen_range(-1.0..1.0));
        MdctSpectrum::new(coeffs, bins).unwrap()
    }

    #[test]
    fn shape_laws_for_both_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (rate, latents) in [(8, 50), (4, 100)] {
            let codec = SpectralCodec::new(small(rate), &mut rng).unwrap();
            let x = random_spectrum(&mut rng, 400, 40);
            let h = codec.encode(&x).unwrap();
            assert_eq!((h.len(), h.dim()), (latents, 32));
            let y = codec.decode(&h).unwrap();
            assert_eq!((y.frames(), y.bins()), (400, 40));
        }
    }

    #[test]
    fn default_width_encodes_one_second() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let codec = SpectralCodec::new(CodecConfig::default(), &mut rng).unwrap();
        let h = codec.encode(&random_spectrum(&mut rng, 400, 40)).unwrap();
        assert_eq!((h.len(), h.dim()), (50, 32));
    }

    #[test]
    fn rejects_indivisible_frame_count_and_bad_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let codec = SpectralCodec::new(small(8), &mut rng).unwrap();
        assert!(codec.encode(&random_spectrum(&mut rng, 401, 40)).is_err());
        assert!(codec.encode(&random_spectrum(&mut rng, 400, 20)).is_err());
        let bad = LatentSequence::new(Array2::zeros((5, 31)));
        assert!(codec.decode(&bad).is_err());
        let cfg = CodecConfig { rate: 3, ..small(8) };
        assert!(matches!(SpectralCodec::new(cfg, &mut rng), Err(Error::Config { .. })));
    }

    #[test]
    fn zero_latents_decode_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let codec = SpectralCodec::new(small(8), &mut rng).unwrap();
        let y = codec.decode(&LatentSequence::new(Array2::zeros((50, 32)))).unwrap();
        assert!(y.coeffs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_is_shift_equivariant_on_interior() {
        // Zero biases keep silent regions exactly zero, so a pattern shifted
        // by R frames inside wide silent margins yields latents shifted by one.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = CodecConfig {
            bins: 6,
            latent_dim: 5,
            rate: 4,
            width: 8,
            ..CodecConfig::default()
        };
        let codec = SpectralCodec::new(cfg, &mut rng).unwrap();
        let n = 160;
        let pattern: Vec<f64> = (0..12 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let place = |start: usize| {
            let mut c = Array2::zeros((n, 6));
            for (i, v) in pattern.iter().enumerate() {
                c[[start + i / 6, i % 6]] = *v;
            }
            MdctSpectrum::new(c, 6).unwrap()
        };
        let a = codec.encode(&place(72)).unwrap();
        let b = codec.encode(&place(76)).unwrap();
        for l in 1..a.len() - 1 {
            for d in 0..a.dim() {
                assert!((a.values[[l, d]] - b.values[[l + 1, d]]).abs() < 1e-12, "latent {l}, dim {d}");
            }
        }
    }

    fn tiny() -> CodecConfig {
        CodecConfig {
            bins: 3,
            latent_dim: 2,
            rate: 2,
            width: 4,
            block_kernel: 3,
            expansion: 2,
            edge_kernel: 3,
        }
    }

    #[test]
    fn full_networks_pass_gradient_check() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut codec = SpectralCodec::new(tiny(), &mut rng).unwrap();
            randomize(&mut codec, 0.5, &mut rng);
            let x: Vec<f64> = (0..2 * 4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..2 * 3 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let enc = check_module(&mut codec.encoder, 1e-5, None, &mut rng, |g, m| {
                let x = g.constant(&[2, 4, 3], x.clone())?;
                let y = m.forward(g, x)?;
                let y = g.gelu(y);
                Ok(g.mean(y))
            })
            .unwrap();
            assert!(enc.max_rel_error < 1e-4, "encoder seed {seed}: {}", enc.worst);
            let dec = check_module(&mut codec.decoder, 1e-5, None, &mut rng, |g, m| {
                let h = g.constant(&[2, 3, 2], h.clone())?;
                let y = m.forward(g, h)?;
                let y = g.gelu(y);
                Ok(g.mean(y))
            })
            .unwrap();
            assert!(dec.max_rel_error < 1e-4, "decoder seed {seed}: {}", dec.worst);
        }
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut codec = SpectralCodec::new(small(4), &mut rng).unwrap();
        let x = random_spectrum(&mut rng, 16, 40);
        let mut g = Graph::new();
        let xv = g.constant(&[1, 16, 40], x.coeffs.iter().copied().collect()).unwrap();
        let h = codec.encoder.forward(&mut g, xv).unwrap();
        let y = codec.decoder.forward(&mut g, h).unwrap();
        let loss = g.mse(y, xv).unwrap();
        let grads = g.backward(loss).unwrap();
        codec.accumulate(&grads);
        codec.visit(&mut |p| {
            assert!(p.grad().iter().any(|&v| v != 0.0), "{} has no gradient", p.name());
        });
    }
}
