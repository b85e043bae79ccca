//! Token file format.
//!
//! ```text
//! magic          4 bytes  "CFMD"
//! version        u8       = 1
//! sample_rate    u32
//! hop_size       u16
//! rate           u8       frames per token (R)
//! codebook_bits  u8
//! token_count    u32
//! payload        token_count × codebook_bits bits, MSB first, zero-padded to a byte
//! ```
//!
//! All integers are little-endian. Nothing else is stored: the decoder
//! derives the enhancer's scale from the coarse spectrum itself.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::quantizer::{bitrate, frame_rate, pack_tokens, unpack_tokens, TokenSequence};

pub const BITSTREAM_MAGIC: &[u8; 4] = b"CFMD";
pub const BITSTREAM_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub sample_rate: u32,
    pub hop_size: u16,
    pub rate: u8,
    pub codebook_bits: u8,
    pub tokens: Vec<usize>,
}

impl Bitstream {
    /// Wraps `tokens` with the header fields implied by `config`.
    pub fn for_model(config: &ModelConfig, tokens: &TokenSequence) -> Result<Self> {
        let narrow = |what: &str, v: usize| Error::InvalidArgument(format!("{what} {v} does not fit the header"));
        Ok(Self {
            sample_rate: config.sample_rate,
            hop_size: u16::try_from(config.hop_size).map_err(|_| narrow("hop size", config.hop_size))?,
            rate: u8::try_from(config.codec.rate).map_err(|_| narrow("rate", config.codec.rate))?,
            codebook_bits: config.quantizer.bits(),
            tokens: tokens.ids.clone(),
        })
    }

    pub fn token_sequence(&self) -> TokenSequence {
        TokenSequence {
            ids: self.tokens.clone(),
        }
    }

    pub fn frame_rate(&self) -> f64 {
        frame_rate(self.sample_rate, self.hop_size as usize, self.rate as usize)
    }

    pub fn bitrate(&self) -> f64 {
        bitrate(self.sample_rate, self.hop_size as usize, self.rate as usize, 1usize << self.codebook_bits)
    }

    pub fn duration_secs(&self) -> f64 {
        self.tokens.len() as f64 / self.frame_rate()
    }

    pub fn payload_len(count: usize, bits: u8) -> usize {
        (count * bits as usize).div_ceil(8)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.tokens.len())
            .map_err(|_| Error::InvalidArgument(format!("{} tokens exceed the header limit", self.tokens.len())))?;
        let mut out = Vec::with_capacity(HEADER_LEN + Self::payload_len(self.tokens.len(), self.codebook_bits));
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&self.hop_size.to_le_bytes());
        out.push(self.rate);
        out.push(self.codebook_bits);
        out.extend_from_slice(&count.to_le_bytes());
        out.extend(pack_tokens(&self.tokens, self.codebook_bits)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "bitstream is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != BITSTREAM_MAGIC {
            return Err(Error::Format("not a bitstream (bad magic)".into()));
        }
        if bytes[4] != BITSTREAM_VERSION {
            return Err(Error::Format(format!("unsupported bitstream version {}", bytes[4])));
        }
        let sample_rate = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
        let hop_size = u16::from_le_bytes(bytes[9..11].try_into().expect("2 bytes"));
        let (rate, codebook_bits) = (bytes[11], bytes[12]);
        let count = u32::from_le_bytes(bytes[13..17].try_into().expect("4 bytes")) as usize;
        if sample_rate == 0 || hop_size == 0 || rate == 0 || codebook_bits == 0 || codebook_bits > 32 {
            return Err(Error::Format(format!(
                "invalid header: sample_rate {sample_rate}, hop {hop_size}, R {rate}, bits {codebook_bits}"
            )));
        }
        let payload = &bytes[HEADER_LEN..];
        let expected = Self::payload_len(count, codebook_bits);
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes but {count} tokens of {codebook_bits} bits need {expected}",
                payload.len()
            )));
        }
        Ok(Self {
            sample_rate,
            hop_size,
            rate,
            codebook_bits,
            tokens: unpack_tokens(payload, count, codebook_bits)?,
        })
    }

    /// Fails unless the header describes a stream produced by `config`.
    pub fn check_model(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::for_model(config, &TokenSequence { ids: Vec::new() })?;
        let fields = [
            ("sample_rate", self.sample_rate as usize, expected.sample_rate as usize),
            ("hop_size", self.hop_size as usize, expected.hop_size as usize),
            ("R", self.rate as usize, expected.rate as usize),
            ("codebook_bits", self.codebook_bits as usize, expected.codebook_bits as usize),
        ];
        for (name, got, want) in fields {
            if got != want {
                return Err(Error::Format(format!("bitstream {name} = {got} but the checkpoint expects {want}")));
            }
        }
        if self.tokens.is_empty() {
            return Err(Error::Format("bitstream holds no tokens".into()));
        }
        Ok(())
    }
}
