//! Scores progressively noisier copies of an utterance with SI-SDR, LSD and
//! mel distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use cfmdct::eval::compare;
use cfmdct::signal::{MelConfig, Waveform};
use cfmdct::training::speech_like_clip;

fn main() -> cfmdct::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean = speech_like_clip(&mut rng, 16_000, 1.0);
    let mel = MelConfig::default();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let noise: Vec<f64> = (0..clean.len()).map(|_| unit.sample(&mut rng)).collect();
    let rms = (clean.samples.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();

    println!("{:>8} {:>9} {:>8} {:>8}", "snr dB", "si_sdr", "lsd", "mel_l1");
    for snr in [40.0, 20.0, 10.0, 0.0] {
        let g = rms * 10f64.powf(-snr / 20.0);
        let noisy = Waveform::new(
            clean.samples.iter().zip(&noise).map(|(s, n)| s + g * n).collect(),
            clean.sample_rate,
        );
        let m = compare("noisy", &clean, &noisy, &mel)?;
        println!("{snr:>8.0} {:>9.2} {:>8.4} {:>8.4}", m.si_sdr, m.lsd, m.mel_l1);
    }
    Ok(())
}
