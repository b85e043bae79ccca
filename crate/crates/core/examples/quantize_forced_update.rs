//! Trains a codebook on clustered data with plain gradient steps on the
//! codebook loss, with and without the forced update of rarely used
//! codevectors, and compares how many codes end up in use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cfmdct::codec::LatentSequence;
use cfmdct::quantizer::{perplexity, Codebook, QuantizerConfig};

const DIM: usize = 8;
const BATCH: usize = 64;
const LR: f64 = 0.1;

fn run(forced: bool, seed: u64, steps: usize) -> cfmdct::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..DIM).map(|_| 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>())
        .collect();
    let cfg = QuantizerConfig {
        size: 256,
        ..QuantizerConfig::default()
    };
    let mut book = Codebook::new(&cfg, DIM, &mut rng)?;
    let mut last = 0.0;
    for _ in 0..steps {
        let mut batch = Vec::with_capacity(BATCH * DIM);
        for _ in 0..BATCH {
            let c = &centres[rng.gen_range(0..centres.len())];
            batch.extend(c.iter().map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + 0.5 * z
            }));
        }
        let latents = LatentSequence::new(ndarray::Array2::from_shape_vec((BATCH, DIM), batch.clone()).unwrap());
        let (tokens, _) = book.quantize(&latents)?;
        // gradient step on mean ‖e_k − h‖² for every selected codevector
        let mut grad = vec![0.0; book.size() * DIM];
        for (i, &k) in tokens.ids.iter().enumerate() {
            for d in 0..DIM {
                grad[k * DIM + d] += 2.0 * (book.row(k)[d] - batch[i * DIM + d]) / BATCH as f64;
            }
        }
        let mut data: Vec<f64> = (0..book.size()).flat_map(|m| book.row(m).to_vec()).collect();
        data.iter_mut().zip(&grad).for_each(|(v, g)| *v -= LR * g);
        let probs = book.probs().to_vec();
        book = Codebook::from_vectors(&cfg, DIM, data)?;
        book.set_probs(probs)?;
        book.update_assignment_probs(&tokens.ids)?;
        if forced {
            book.forced_update(&batch, &mut rng)?;
        }
        last = perplexity(&tokens.ids, book.size())?;
    }
    Ok(last)
}

fn main() -> cfmdct::Result<()> {
    let steps = 1000;
    println!("{:>4} {:>12} {:>12}", "seed", "plain", "forced");
    for seed in 0..3 {
        println!("{seed:>4} {:>12.2} {:>12.2}", run(false, seed, steps)?, run(true, seed, steps)?);
    }
    Ok(())
}
