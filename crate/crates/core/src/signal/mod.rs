//! Time–frequency transforms and waveform I/O.
//!
//! The MDCT here uses circular framing: a waveform of `T` samples (right
//! zero-padded to a multiple of the hop size `h`) yields exactly `T / h`
//! frames, and frame `j` spans samples `[(j - 1) h, (j + 1) h)` modulo the
//! padded length. Every sample is therefore covered by two frames and the
//! inverse transform reconstructs the whole signal.

mod mdct;
mod mel;
mod stft;
mod wav;

pub use mdct::{imdct, imdct_into, mdct, mdct_into, sine_window, MdctKernel};
pub use mel::{mel_filterbank, mel_spectrogram, MelConfig, MelSpectrogram};
pub use stft::{hann_window, stft_frame_count, stft_magnitude, StftPlan};
pub use wav::{read_wav, write_wav};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mono audio samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Zero-pads on the right to a multiple of `block`.
    pub fn padded_to_multiple(&self, block: usize) -> Waveform {
        let mut samples = self.samples.clone();
        let rem = samples.len() % block;
        if rem != 0 {
            samples.resize(samples.len() + block - rem, 0.0);
        }
        Waveform::new(samples, self.sample_rate)
    }

    pub fn truncated(mut self, len: usize) -> Waveform {
        self.samples.truncate(len);
        self
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("waveform sample {i}"),
            });
        }
        Ok(())
    }
}

/// `N × K` MDCT coefficients with `K` equal to the hop size.
#[derive(Debug, Clone, PartialEq)]
pub struct MdctSpectrum {
    pub coeffs: Array2<f64>,
    pub hop_size: usize,
}

impl MdctSpectrum {
    pub fn new(coeffs: Array2<f64>, hop_size: usize) -> Result<Self> {
        if hop_size == 0 || coeffs.ncols() != hop_size {
            return Err(Error::shape(
                "MdctSpectrum::new",
                format!("bins {} != hop size {hop_size}", coeffs.ncols()),
            ));
        }
        Ok(Self { coeffs, hop_size })
    }

    pub fn zeros(frames: usize, hop_size: usize) -> Self {
        Self {
            coeffs: Array2::zeros((frames, hop_size)),
            hop_size,
        }
    }

    pub fn frames(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn bins(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn frame_length(&self) -> usize {
        2 * self.hop_size
    }
}
