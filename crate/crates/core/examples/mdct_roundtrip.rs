//! Analyses a chirp with the MDCT, resynthesises it, and reports the
//! reconstruction error and frame layout.

use cfmdct::signal::{imdct, mdct, Waveform};

fn main() -> cfmdct::Result<()> {
    let sr = 16_000;
    let hop = 40;
    let samples: Vec<f64> = (0..sr)
        .map(|i| {
            let t = i as f64 / sr as f64;
            0.5 * (2.0 * std::f64::consts::PI * (200.0 * t + 900.0 * t * t)).sin()
        })
        .collect();
    let input = Waveform::new(samples, sr as u32);

    let spectrum = mdct(&input, hop)?;
    let output = imdct(&spectrum, input.sample_rate)?;
    let max_err = input
        .samples
        .iter()
        .zip(&output.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    println!("samples      {}", input.len());
    println!("frames       {} x {} bins", spectrum.frames(), spectrum.bins());
    println!("max |error|  {max_err:.3e}");
    let energy_t: f64 = input.samples.iter().map(|v| v * v).sum();
    let energy_f: f64 = spectrum.coeffs.iter().map(|v| v * v).sum();
    println!("energy       time {energy_t:.6}  mdct {energy_f:.6}");
    Ok(())
}
