use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Frames are left-aligned (no centering) and the tail is zero-padded so
/// that every sample falls in at least one frame.
pub fn stft_frame_count(len: usize, fft_length: usize, hop: usize) -> usize {
    if len <= fft_length {
        1
    } else {
        1 + (len - fft_length).div_ceil(hop)
    }
}

/// Reusable forward/adjoint STFT machinery for one `(fft_length, hop)` pair.
pub struct StftPlan {
    fft_length: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(fft_length: usize, hop: usize) -> Result<Self> {
        if hop == 0 || fft_length < hop {
            return Err(Error::InvalidArgument(format!(
                "invalid STFT parameters: fft_length {fft_length}, hop {hop}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            fft_length,
            hop,
            window: hann_window(fft_length),
            forward: planner.plan_fft_forward(fft_length),
            inverse: planner.plan_fft_inverse(fft_length),
        })
    }

    pub fn fft_length(&self) -> usize {
        self.fft_length
    }

    pub fn bins(&self) -> usize {
        self.fft_length / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        stft_frame_count(len, self.fft_length, self.hop)
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided complex spectrum, `frames × bins`, row-major.
    pub fn complex(&self, samples: &[f64]) -> Vec<Complex64> {
        let frames = self.frames(samples.len());
        let bins = self.bins();
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_length];
        for f in 0..frames {
            let start = f * self.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                let x = samples.get(start + n).copied().unwrap_or(0.0);
                *b = Complex64::new(x * self.window[n], 0.0);
            }
            self.forward.process(&mut buf);
            out.extend_from_slice(&buf[..bins]);
        }
        out
    }

    /// Adjoint of [`complex`](Self::complex) with respect to the real input:
    /// given cotangents on the real and imaginary parts of every one-sided
    /// bin, accumulates the resulting sample cotangent into `grad`.
    pub fn adjoint_accumulate(&self, grad_re: &[f64], grad_im: &[f64], grad: &mut [f64]) {
        let bins = self.bins();
        let frames = grad_re.len() / bins;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_length];
        for f in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for k in 0..bins {
                buf[k] = Complex64::new(grad_re[f * bins + k], grad_im[f * bins + k]);
            }
            // Re(sum_k G_k e^{+i 2 pi k n / N}) is d/dx of sum_k (gre Re X_k + gim Im X_k).
            self.inverse.process(&mut buf);
            let start = f * self.hop;
            for n in 0..self.fft_length {
                if let Some(g) = grad.get_mut(start + n) {
                    *g += buf[n].re * self.window[n];
                }
            }
        }
    }

    /// `|STFT|`, `frames × bins`, row-major.
    pub fn magnitude(&self, samples: &[f64]) -> Vec<f64> {
        self.complex(samples).iter().map(|c| c.norm()).collect()
    }
}

/// Magnitude STFT with a periodic Hann window of length `fft_length`.
pub fn stft_magnitude(waveform: &Waveform, fft_length: usize, hop: usize) -> Result<Array2<f64>> {
    let plan = StftPlan::new(fft_length, hop)?;
    let frames = plan.frames(waveform.len());
    let mag = plan.magnitude(&waveform.samples);
    Ok(Array2::from_shape_vec((frames, plan.bins()), mag).expect("shape"))
}
