//! Differentiable MDCT synthesis and STFT magnitude for the mel loss.

use rustfft::num_complex::Complex64;

use super::graph::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::signal::{MdctKernel, StftPlan};

impl Graph {
    /// Inverse MDCT of `[B, N, K]` coefficients (hop `K`) into `[B, N·K]`
    /// samples.
    pub fn imdct(&mut self, x: Var) -> Result<Var> {
        let (b, n, k) = match self.shape(x) {
            &[b, n, k] => (b, n, k),
            s => return Err(Error::shape("imdct", format!("expected [B, N, K], got {s:?}"))),
        };
        let kernel = MdctKernel::new(k);
        let xv = self.value(x);
        let mut y = vec![0.0; b * n * k];
        for (src, dst) in xv.chunks(n * k).zip(y.chunks_mut(n * k)) {
            kernel.inverse(src, dst);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(vec![b, n * k], y, Op::Imdct { x, hop: k }, rg))
    }

    /// `|STFT|` of `[B, T]` samples, giving `[B, frames, fft_length/2 + 1]`.
    pub fn stft_magnitude(&mut self, x: Var, fft_length: usize, hop: usize) -> Result<Var> {
        let (b, t) = match self.shape(x) {
            &[b, t] => (b, t),
            s => return Err(Error::shape("stft_magnitude", format!("expected [B, T], got {s:?}"))),
        };
        let plan = StftPlan::new(fft_length, hop)?;
        let frames = plan.frames(t);
        let bins = plan.bins();
        let mut spectrum = Vec::with_capacity(b * frames * bins);
        for row in self.value(x).chunks(t) {
            spectrum.extend(plan.complex(row));
        }
        let mag = spectrum.iter().map(|c| c.norm()).collect();
        let rg = self.requires_grad(x);
        Ok(self.push(
            vec![b, frames, bins],
            mag,
            Op::StftMag {
                x,
                fft_length,
                hop,
                spectrum,
            },
            rg,
        ))
    }
}

/// The synthesis operator's transpose is the analysis operator, applied to
/// each batch row separately (framing is circular per row).
pub(crate) fn imdct_adjoint(g: &[f64], hop: usize, batch: usize) -> Vec<f64> {
    let kernel = MdctKernel::new(hop);
    let len = g.len() / batch;
    let mut out = vec![0.0; g.len()];
    for (src, dst) in g.chunks(len).zip(out.chunks_mut(len)) {
        kernel.forward(src, dst);
    }
    out
}

pub(crate) fn stft_mag_adjoint(
    g: &[f64],
    spectrum: &[Complex64],
    batch: usize,
    len: usize,
    fft_length: usize,
    hop: usize,
) -> Vec<f64> {
    let plan = StftPlan::new(fft_length, hop).expect("validated in forward");
    let per = spectrum.len() / batch;
    let mut gx = vec![0.0; batch * len];
    for bi in 0..batch {
        let spec = &spectrum[bi * per..(bi + 1) * per];
        let gm = &g[bi * per..(bi + 1) * per];
        let mut gre = vec![0.0; per];
        let mut gim = vec![0.0; per];
        for i in 0..per {
            let mag = spec[i].norm();
            if mag > 0.0 {
                gre[i] = gm[i] * spec[i].re / mag;
                gim[i] = gm[i] * spec[i].im / mag;
            }
        }
        plan.adjoint_accumulate(&gre, &gim, &mut gx[bi * len..(bi + 1) * len]);
    }
    gx
}
