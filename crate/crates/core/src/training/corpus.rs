//! Synthetic speech-like clips for desk-scale training and tests.
//!
//! Each clip is a harmonic source with a wandering pitch contour, shaped by
//! three formant resonances, gated by a syllable-rate envelope, with short
//! noise bursts between voiced segments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::signal::Waveform;

/// Gain of a resonance with centre `fc` and bandwidth `bw` at `f`.
fn resonance(f: f64, fc: f64, bw: f64) -> f64 {
    let x = (f - fc) / (bw / 2.0);
    1.0 / (1.0 + x * x)
}

pub fn speech_like_clip<R: Rng>(rng: &mut R, sample_rate: u32, seconds: f64) -> Waveform {
    let sr = sample_rate as f64;
    let n = (seconds * sr).round() as usize;
    let f0_base = rng.gen_range(90.0..240.0);
    let f0_depth = rng.gen_range(0.05..0.2);
    let f0_rate = rng.gen_range(0.5..2.0);
    let formants = [
        (rng.gen_range(300.0..900.0), 90.0),
        (rng.gen_range(900.0..2400.0), 120.0),
        (rng.gen_range(2400.0..3500.0), 200.0),
    ];
    let syllable_rate = rng.gen_range(3.0..6.0);
    let syllable_phase = rng.gen_range(0.0..2.0 * PI);
    let nyquist = sr / 2.0;
    let harmonics = (nyquist * 0.9 / f0_base) as usize;
    let gains: Vec<f64> = (1..=harmonics)
        .map(|h| {
            let f = h as f64 * f0_base;
            let env: f64 = formants.iter().map(|&(fc, bw)| resonance(f, fc, bw)).sum();
            (0.15 + env) / h as f64
        })
        .collect();
    let norm: f64 = gains.iter().sum();

    let mut phase = vec![0.0f64; harmonics];
    let mut noise_state = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f0 = f0_base * (1.0 + f0_depth * (2.0 * PI * f0_rate * t).sin());
            let gate = (2.0 * PI * syllable_rate * t + syllable_phase).sin();
            let voiced = gate.max(0.0).powf(0.7);
            let mut s = 0.0;
            for (h, (ph, g)) in phase.iter_mut().zip(&gains).enumerate() {
                let f = (h + 1) as f64 * f0;
                if f < nyquist {
                    *ph = (*ph + 2.0 * PI * f / sr) % (2.0 * PI);
                    s += g * ph.sin();
                }
            }
            let z: f64 = StandardNormal.sample(rng);
            // first-order high-pass tilt for fricative-like bursts
            let hp = z - 0.7 * noise_state;
            noise_state = z;
            let unvoiced = (-gate).max(0.0).powi(4);
            0.35 * voiced * s / norm + 0.02 * unvoiced * hp + 1e-4 * z
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

/// `count` independent clips from one seed.
pub fn toy_corpus(count: usize, sample_rate: u32, seconds: f64, seed: u64) -> Vec<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| speech_like_clip(&mut rng, sample_rate, seconds)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_are_bounded_nonsilent_and_deterministic() {
        let a = toy_corpus(3, 16000, 1.0, 5);
        assert_eq!(a, toy_corpus(3, 16000, 1.0, 5));
        for clip in &a {
            assert_eq!(clip.len(), 16000);
            let peak = clip.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak > 0.05 && peak < 1.0, "peak {peak}");
        }
        assert_ne!(a[0], a[1]);
    }
}
