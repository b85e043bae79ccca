//! Encodes a synthetic utterance with a freshly initialised model, writes
//! the token bitstream, reads it back and decodes it with and without the
//! enhancer. Pass a checkpoint path to use trained weights instead.

use cfmdct::bitstream::Bitstream;
use cfmdct::model::{CfmdctModel, ModelConfig};
use cfmdct::training::speech_like_clip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cfmdct::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => CfmdctModel::load(path)?,
        None => {
            let mut cfg = ModelConfig::default();
            cfg.codec.width = 32;
            cfg.enhancer.network.widths = vec![16, 32];
            cfg.enhancer.network.time_dim = 16;
            CfmdctModel::new(cfg, 0)?
        }
    };
    let clip = speech_like_clip(&mut ChaCha8Rng::seed_from_u64(1), model.config.sample_rate, 2.0);

    let tokens = model.encode(&clip)?;
    let bytes = Bitstream::for_model(&model.config, &tokens)?.to_bytes()?;
    let stream = Bitstream::from_bytes(&bytes)?;
    stream.check_model(&model.config)?;
    println!(
        "{} samples -> {} tokens -> {} bytes ({} bps, {} Hz tokens)",
        clip.len(),
        stream.tokens.len(),
        bytes.len(),
        stream.bitrate(),
        stream.frame_rate()
    );
    println!("first tokens: {:?}", &stream.tokens[..8.min(stream.tokens.len())]);

    let coarse = model.decode(&stream.token_sequence(), None)?;
    let enhanced = model.decode(&stream.token_sequence(), Some(model.default_enhance(0)))?;
    let rms = |w: &cfmdct::signal::Waveform| (w.samples.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    println!("rms input {:.4}, coarse {:.4}, enhanced {:.4}", rms(&clip), rms(&coarse), rms(&enhanced));
    Ok(())
}
