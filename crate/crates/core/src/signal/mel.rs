use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{StftPlan, Waveform};
use crate::error::Result;
use crate::linalg::gemm;

/// Mel front end used by the reconstruction loss and the mel metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub fft_length: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            fft_length: 1024,
            hop: 256,
            n_mels: 80,
            log_floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// `frames × n_mels` natural-log mel energies.
    pub values: Array2<f64>,
    pub config: MelConfig,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters (HTK mel scale) spanning `0 .. sample_rate / 2`,
/// `n_mels × (fft_length / 2 + 1)`, unnormalized peak height 1.
pub fn mel_filterbank(sample_rate: u32, fft_length: usize, n_mels: usize) -> Array2<f64> {
    let bins = fft_length / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_length as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// `log(max(fb · |STFT(x)|, floor))`.
pub fn mel_spectrogram(waveform: &Waveform, config: &MelConfig) -> Result<MelSpectrogram> {
    let plan = StftPlan::new(config.fft_length, config.hop)?;
    let frames = plan.frames(waveform.len());
    let bins = plan.bins();
    let mag = plan.magnitude(&waveform.samples);
    let fb = mel_filterbank(waveform.sample_rate, config.fft_length, config.n_mels);
    let fb = fb.as_slice().expect("standard layout");
    let mut mel = vec![0.0; frames * config.n_mels];
    gemm(frames, bins, config.n_mels, &mag, false, fb, true, &mut mel, 0.0);
    for v in mel.iter_mut() {
        *v = v.max(config.log_floor).ln();
    }
    Ok(MelSpectrogram {
        values: Array2::from_shape_vec((frames, config.n_mels), mel).expect("shape"),
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stft_magnitude;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn silence_hits_the_floor() {
        let cfg = MelConfig::default();
        let mel = mel_spectrogram(&Waveform::new(vec![0.0; 16000], 16000), &cfg).unwrap();
        assert_eq!(mel.values.ncols(), 80);
        let floor = cfg.log_floor.ln();
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn filters_are_triangular_with_positive_mass() {
        for sr in [16000, 48000] {
            let fb = mel_filterbank(sr, 1024, 80);
            for row in fb.rows() {
                assert!(row.sum() > 0.0);
                let nz: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(i, _)| i)
                    .collect();
                // contiguous support, rising then falling
                assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
                let peak = nz
                    .iter()
                    .copied()
                    .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                    .unwrap();
                for w in nz.windows(2) {
                    if w[1] <= peak {
                        assert!(row[w[1]] >= row[w[0]]);
                    } else {
                        assert!(row[w[1]] <= row[w[0]]);
                    }
                }
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn white_noise_matches_elementwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..8000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.1 * z }).collect();
        let w = Waveform::new(samples, 16000);
        let cfg = MelConfig::default();
        let mel = mel_spectrogram(&w, &cfg).unwrap();
        let mag = stft_magnitude(&w, cfg.fft_length, cfg.hop).unwrap();
        let fb = mel_filterbank(16000, cfg.fft_length, cfg.n_mels);
        for f in 0..mag.nrows() {
            for m in 0..cfg.n_mels {
                let mut acc = 0.0;
                for k in 0..mag.ncols() {
                    acc += fb[[m, k]] * mag[[f, k]];
                }
                let want = acc.max(cfg.log_floor).ln();
                assert!((mel.values[[f, m]] - want).abs() < 1e-8);
            }
        }
    }
}
