//! Overfits the desk-scale model on synthetic speech-like clips and compares
//! coarse and enhanced reconstructions of the training clips.
//!
//! `cargo run --release --example train_overfit -- [steps] [clips]`

use std::time::Instant;

use cfmdct::eval::{lsd, reconstruct, si_sdr};
use cfmdct::model::CfmdctModel;
use cfmdct::training::{toy_corpus, trailing_mean, Config, Trainer};

fn main() -> cfmdct::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(6000, |s| s.parse().expect("steps"));
    let clips: usize = args.next().map_or(10, |s| s.parse().expect("clips"));

    let cfg = Config::desk_scale();
    let corpus = toy_corpus(clips, cfg.model.sample_rate, 1.0, 7);
    let model = CfmdctModel::new(cfg.model.clone(), 0)?;
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.loss, corpus.clone())?;

    let started = Instant::now();
    let mut totals = Vec::with_capacity(steps);
    for _ in 0..steps {
        let m = trainer.step()?;
        totals.push(m.total);
        if m.step % 100 == 0 {
            println!(
                "step {:>6}  total {:>10.4}  spec {:>9.4}  vq {:>8.4}  cfm {:>7.4}  ppl {:>7.1}  used {:>5}  {:.2}s/step",
                m.step,
                trailing_mean(&totals, totals.len(), 100),
                m.spec,
                m.vq,
                m.cfm,
                m.perplexity,
                m.used_codes,
                started.elapsed().as_secs_f64() / m.step as f64
            );
        }
    }

    let model = &trainer.model;
    let mel = model.config.mel;
    let (mut coarse_lsd, mut enh_lsd, mut coarse_sdr, mut enh_sdr) = (0.0, 0.0, 0.0, 0.0);
    for (i, clip) in corpus.iter().enumerate() {
        let coarse = reconstruct(model, clip, None)?;
        let enhanced = reconstruct(model, clip, Some(model.default_enhance(i as u64)))?;
        coarse_lsd += lsd(clip, &coarse, &mel)?;
        enh_lsd += lsd(clip, &enhanced, &mel)?;
        coarse_sdr += si_sdr(clip, &coarse)?;
        enh_sdr += si_sdr(clip, &enhanced)?;
    }
    let n = corpus.len() as f64;
    println!("coarse   LSD {:.4}  SI-SDR {:.2} dB", coarse_lsd / n, coarse_sdr / n);
    println!("enhanced LSD {:.4}  SI-SDR {:.2} dB", enh_lsd / n, enh_sdr / n);
    Ok(())
}
