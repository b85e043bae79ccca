//! Token rate and bitrate for the sample-rate / downsampling combinations
//! the codec is usually run at.

use cfmdct::quantizer::{bitrate, frame_rate, CODEBOOK_BITS};

fn main() {
    let hop = 40;
    let size = 1usize << CODEBOOK_BITS;
    println!("{:>11} {:>3} {:>10} {:>10}", "sample_rate", "R", "tokens/s", "bps");
    for (sr, r) in [(16_000, 8), (16_000, 4), (48_000, 8), (48_000, 4)] {
        println!(
            "{sr:>11} {r:>3} {:>10} {:>10}",
            frame_rate(sr, hop, r),
            bitrate(sr, hop, r, size)
        );
    }
}
