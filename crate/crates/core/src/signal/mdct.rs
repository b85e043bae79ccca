use ndarray::Array2;

use super::{MdctSpectrum, Waveform};
use crate::error::{Error, Result};
use crate::linalg::gemm;

/// Sine window of length `2h`; satisfies `w[n]^2 + w[n+h]^2 = 1`.
pub fn sine_window(hop: usize) -> Vec<f64> {
    let len = 2 * hop;
    (0..len)
        .map(|n| (std::f64::consts::PI * (n as f64 + 0.5) / len as f64).sin())
        .collect()
}

/// Precomputed window and DCT-IV kernel for one hop size.
///
/// Forward and inverse share the scale `sqrt(2/h)`, so the analysis operator
/// is exactly the transpose of the synthesis operator.
#[derive(Debug, Clone)]
pub struct MdctKernel {
    hop: usize,
    window: Vec<f64>,
    /// `2h × h`, row-major: `cos(pi/h (n + 1/2 + h/2)(k + 1/2)) * sqrt(2/h)`.
    basis: Vec<f64>,
}

impl MdctKernel {
    pub fn new(hop: usize) -> Self {
        assert!(hop > 0, "hop size must be positive");
        let h = hop as f64;
        let scale = (2.0 / h).sqrt();
        let mut basis = vec![0.0; 2 * hop * hop];
        for n in 0..2 * hop {
            for k in 0..hop {
                let arg = std::f64::consts::PI / h * (n as f64 + 0.5 + h / 2.0) * (k as f64 + 0.5);
                basis[n * hop + k] = scale * arg.cos();
            }
        }
        Self {
            hop,
            window: sine_window(hop),
            basis,
        }
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Analysis on raw buffers. `samples.len()` must be a multiple of the hop;
    /// `out` receives `frames × hop` coefficients.
    pub fn forward(&self, samples: &[f64], out: &mut [f64]) {
        let h = self.hop;
        let len = samples.len();
        debug_assert_eq!(len % h, 0);
        let frames = len / h;
        debug_assert_eq!(out.len(), frames * h);
        let mut windowed = vec![0.0; frames * 2 * h];
        for j in 0..frames {
            let start = (j * h + len - h) % len;
            let row = &mut windowed[j * 2 * h..(j + 1) * 2 * h];
            for (n, r) in row.iter_mut().enumerate() {
                *r = self.window[n] * samples[(start + n) % len];
            }
        }
        gemm(frames, 2 * h, h, &windowed, false, &self.basis, false, out, 0.0);
    }

    /// Synthesis with overlap-add. `coeffs.len()` must be a multiple of the
    /// hop; `out` receives `coeffs.len()` samples (overwritten).
    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        let h = self.hop;
        let frames = coeffs.len() / h;
        let len = frames * h;
        debug_assert_eq!(out.len(), len);
        let mut segments = vec![0.0; frames * 2 * h];
        gemm(frames, h, 2 * h, coeffs, false, &self.basis, true, &mut segments, 0.0);
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..frames {
            let start = (j * h + len - h) % len;
            let row = &segments[j * 2 * h..(j + 1) * 2 * h];
            for (n, r) in row.iter().enumerate() {
                out[(start + n) % len] += self.window[n] * r;
            }
        }
    }
}

/// Raw-buffer analysis; see [`MdctKernel::forward`].
pub fn mdct_into(samples: &[f64], hop: usize, out: &mut [f64]) {
    MdctKernel::new(hop).forward(samples, out);
}

/// Raw-buffer synthesis; see [`MdctKernel::inverse`].
pub fn imdct_into(coeffs: &[f64], hop: usize, out: &mut [f64]) {
    MdctKernel::new(hop).inverse(coeffs, out);
}

/// Forward MDCT. The waveform is right zero-padded to a multiple of
/// `hop_size`, giving `ceil(T / h)` frames of `h` bins.
pub fn mdct(waveform: &Waveform, hop_size: usize) -> Result<MdctSpectrum> {
    if hop_size == 0 {
        return Err(Error::InvalidArgument("hop size must be positive".into()));
    }
    if waveform.is_empty() {
        return Err(Error::InvalidArgument("empty waveform".into()));
    }
    waveform.check_finite()?;
    let padded = waveform.padded_to_multiple(hop_size);
    let frames = padded.len() / hop_size;
    let mut coeffs = vec![0.0; frames * hop_size];
    MdctKernel::new(hop_size).forward(&padded.samples, &mut coeffs);
    let coeffs = Array2::from_shape_vec((frames, hop_size), coeffs).expect("shape");
    Ok(MdctSpectrum { coeffs, hop_size })
}

/// Inverse MDCT producing `N · h` samples.
pub fn imdct(spectrum: &MdctSpectrum, sample_rate: u32) -> Result<Waveform> {
    let h = spectrum.hop_size;
    if h == 0 || spectrum.bins() != h {
        return Err(Error::shape(
            "imdct",
            format!("bins {} != hop size {h}", spectrum.bins()),
        ));
    }
    let coeffs = spectrum.coeffs.as_standard_layout();
    let coeffs = coeffs.as_slice().expect("standard layout");
    let mut out = vec![0.0; coeffs.len()];
    MdctKernel::new(h).inverse(coeffs, &mut out);
    Ok(Waveform::new(out, sample_rate))
}
