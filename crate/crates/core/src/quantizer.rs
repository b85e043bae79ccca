//! Single-codebook vector quantization with forced codebook updating,
//! bitrate accounting and token bit-packing.
//!
//! Assignment is cosine-nearest: both the latent and every codevector are
//! L2-normalised before the Euclidean argmin, while the quantized output is
//! the raw codevector. Underused codevectors are pulled toward randomly
//! drawn encoder outputs with probability-like weights
//! `η_m = exp(−10·p_m·|E|/(1−γ) − ζ)`, where `p_m` is an exponential moving
//! average of each code's share of the assignments.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, Module, Parameter, Record};
use crate::codec::LatentSequence;
use crate::error::{Error, Result};

/// Bits per token for the default 8192-entry codebook.
pub const CODEBOOK_BITS: u8 = 13;
/// Added to vector norms before normalising.
pub const NORM_EPS: f64 = 1e-12;

const VECTORS_NAME: &str = "vq.codebook";
const PROBS_NAME: &str = "vq.assignment_probs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerConfig {
    pub size: usize,
    /// Moving-average factor of the assignment probabilities.
    pub gamma: f64,
    /// Offset inside the update-weight exponent.
    pub zeta: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            size: 8192,
            gamma: 0.99,
            zeta: 1e-3,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || !self.size.is_power_of_two() {
            return Err(Error::Config {
                field: "quantizer.size".into(),
                message: "must be a power of two >= 2".into(),
            });
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config {
                field: "quantizer.gamma".into(),
                message: "must lie in (0, 1)".into(),
            });
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::Config {
                field: "quantizer.zeta".into(),
                message: "must be finite and non-negative".into(),
            });
        }
        Ok(())
    }

    pub fn bits(&self) -> u8 {
        self.size.trailing_zeros() as u8
    }
}

/// Discrete token ids, one per latent frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Codebook {
    /// `[|E|, Cq]`, trainable.
    pub vectors: Parameter,
    probs: Vec<f64>,
    pub gamma: f64,
    pub zeta: f64,
}

impl Module for Codebook {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.vectors)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.vectors)
    }
}

impl Codebook {
    /// Rows drawn from `N(0, 1) / sqrt(dim)`; probabilities uniform.
    pub fn new<R: Rng>(config: &QuantizerConfig, dim: usize, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (dim as f64).sqrt();
        let data = (0..config.size * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        Self::from_vectors(config, dim, data)
    }

    pub fn from_vectors(config: &QuantizerConfig, dim: usize, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if dim == 0 || data.len() != config.size * dim {
            return Err(Error::InvalidArgument(format!(
                "codebook data has {} values, expected {}×{dim}",
                data.len(),
                config.size
            )));
        }
        Ok(Self {
            vectors: Parameter::new(VECTORS_NAME, &[config.size, dim], data),
            probs: vec![1.0 / config.size as f64; config.size],
            gamma: config.gamma,
            zeta: config.zeta,
        })
    }

    pub fn size(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let d = self.dim();
        &self.vectors.value()[m * d..(m + 1) * d]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn set_probs(&mut self, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.size() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("assignment probabilities must be |E| values in [0, 1]".into()));
        }
        self.probs = probs;
        Ok(())
    }

    /// Cosine-nearest codevector index for each row of `rows` (`n × Cq`).
    /// Ties resolve to the lowest index.
    pub fn nearest(&self, rows: &[f64]) -> Result<Vec<usize>> {
        let (e, d) = (self.size(), self.dim());
        if rows.len() % d != 0 {
            return Err(Error::shape("quantize", format!("{} values are not rows of dim {d}", rows.len())));
        }
        let n = rows.len() / d;
        let q = normalize_rows(rows, d);
        let c = normalize_rows(self.vectors.value(), d);
        let c_sq: Vec<f64> = c.chunks(d).map(|r| r.iter().map(|v| v * v).sum()).collect();
        // ‖q̂ − ĉ‖² = ‖q̂‖² + ‖ĉ‖² − 2 q̂·ĉ; the first term does not affect the argmin.
        let mut dots = vec![0.0; n * e];
        crate::linalg::gemm(n, d, e, &q, false, &c, true, &mut dots, 0.0);
        Ok(dots
            .chunks(e)
            .map(|row| {
                let mut best = (0, f64::INFINITY);
                for (m, dot) in row.iter().enumerate() {
                    let dist = c_sq[m] - 2.0 * dot;
                    if dist < best.1 {
                        best = (m, dist);
                    }
                }
                best.0
            })
            .collect())
    }

    /// Token ids and the raw codevectors they select.
    pub fn quantize(&self, latents: &LatentSequence) -> Result<(TokenSequence, LatentSequence)> {
        if latents.dim() != self.dim() {
            return Err(Error::shape(
                "quantize",
                format!("latent dim {} vs codevector dim {}", latents.dim(), self.dim()),
            ));
        }
        let ids = self.nearest(latents.as_slice())?;
        let tokens = TokenSequence { ids };
        let quantized = self.lookup(&tokens)?;
        Ok((tokens, quantized))
    }

    pub fn lookup(&self, tokens: &TokenSequence) -> Result<LatentSequence> {
        let d = self.dim();
        let mut data = Vec::with_capacity(tokens.ids.len() * d);
        for &id in &tokens.ids {
            if id >= self.size() {
                return Err(Error::Format(format!("token {id} outside codebook of size {}", self.size())));
            }
            data.extend_from_slice(self.row(id));
        }
        let values = Array2::from_shape_vec((tokens.ids.len(), d), data).expect("lookup shape");
        Ok(LatentSequence::new(values))
    }

    /// `p_m ← γ·p_m + (1−γ)·ū_m` with `ū_m` the share of `tokens` equal to `m`.
    pub fn update_assignment_probs(&mut self, tokens: &[usize]) -> Result<()> {
        let usage = usage_shares(tokens, self.size())?;
        let g = self.gamma;
        self.probs.iter_mut().zip(&usage).for_each(|(p, u)| *p = g * *p + (1.0 - g) * u);
        Ok(())
    }

    /// `η_m` for every codevector.
    pub fn update_weights(&self) -> Vec<f64> {
        let e = self.size() as f64;
        let k = 10.0 * e / (1.0 - self.gamma);
        self.probs.iter().map(|p| (-k * p - self.zeta).exp()).collect()
    }

    /// Blends every codevector toward an anchor row drawn uniformly (with
    /// replacement) from `anchors`: `e_m ← (1−η_m)·e_m + η_m·f_m`.
    /// Returns the weights used.
    pub fn forced_update<R: Rng>(&mut self, anchors: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let d = self.dim();
        if anchors.is_empty() || anchors.len() % d != 0 {
            return Err(Error::InvalidArgument(format!(
                "anchor pool of {} values is empty or not rows of dim {d}",
                anchors.len()
            )));
        }
        let pool = anchors.len() / d;
        let eta = self.update_weights();
        for (row, &w) in self.vectors.value_mut().chunks_mut(d).zip(&eta) {
            let j = rng.gen_range(0..pool);
            let f = &anchors[j * d..(j + 1) * d];
            row.iter_mut().zip(f).for_each(|(e, f)| *e = (1.0 - w) * *e + w * f);
        }
        Ok(eta)
    }

    /// Adds the codevectors and assignment probabilities to `ckpt`.
    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        ckpt.add_module(self);
        ckpt.records.push(Record {
            name: PROBS_NAME.into(),
            shape: vec![self.size()],
            data: self.probs.clone(),
        });
    }

    pub fn load_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.load_into(self)?;
        let rec = ckpt
            .record(PROBS_NAME)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing `{PROBS_NAME}`")))?;
        if rec.shape != [self.size()] {
            return Err(Error::Format(format!("`{PROBS_NAME}` has shape {:?}", rec.shape)));
        }
        self.set_probs(rec.data.clone())
    }
}

fn normalize_rows(rows: &[f64], d: usize) -> Vec<f64> {
    let mut out = rows.to_vec();
    for r in out.chunks_mut(d) {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
        r.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Fraction of `tokens` equal to each id in `0..size`.
pub fn usage_shares(tokens: &[usize], size: usize) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch of tokens".into()));
    }
    let mut counts = vec![0usize; size];
    for &t in tokens {
        if t >= size {
            return Err(Error::InvalidArgument(format!("token {t} outside codebook of size {size}")));
        }
        counts[t] += 1;
    }
    let n = tokens.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// `exp` of the entropy (nats) of the token histogram.
pub fn perplexity(tokens: &[usize], size: usize) -> Result<f64> {
    let shares = usage_shares(tokens, size)?;
    let h: f64 = shares.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
    Ok(h.exp())
}

/// Number of distinct codes appearing in `tokens`.
pub fn distinct_codes(tokens: &[usize]) -> usize {
    let mut v = tokens.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Tokens per second.
pub fn frame_rate(sample_rate: u32, hop_size: usize, rate: usize) -> f64 {
    sample_rate as f64 / (hop_size * rate) as f64
}

/// Bits per second of the token stream.
pub fn bitrate(sample_rate: u32, hop_size: usize, rate: usize, codebook_size: usize) -> f64 {
    frame_rate(sample_rate, hop_size, rate) * (codebook_size as f64).log2()
}

/// Packs ids MSB-first at `bits` bits each, zero-padding the final byte.
pub fn pack_tokens(ids: &[usize], bits: u8) -> Result<Vec<u8>> {
    if bits == 0 || bits > 32 {
        return Err(Error::InvalidArgument(format!("token width {bits} bits")));
    }
    let mut out = vec![0u8; (ids.len() * bits as usize).div_ceil(8)];
    let mut pos = 0usize;
    for &id in ids {
        if id >> bits != 0 {
            return Err(Error::InvalidArgument(format!("token {id} does not fit in {bits} bits")));
        }
        for b in (0..bits).rev() {
            if (id >> b) & 1 == 1 {
                out[pos / 8] |= 0x80 >> (pos % 8);
            }
            pos += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`pack_tokens`]. `bytes` must hold exactly the packed length.
pub fn unpack_tokens(bytes: &[u8], count: usize, bits: u8) -> Result<Vec<usize>> {
    if bits == 0 || bits > 32 {
        return Err(Error::InvalidArgument(format!("token width {bits} bits")));
    }
    let need = (count * bits as usize).div_ceil(8);
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "payload holds {} bytes, {count} tokens of {bits} bits need {need}",
            bytes.len()
        )));
    }
    let mut pos = 0usize;
    Ok((0..count)
        .map(|_| {
            let mut id = 0usize;
            for _ in 0..bits {
                let bit = (bytes[pos / 8] >> (7 - pos % 8)) & 1;
                id = (id << 1) | bit as usize;
                pos += 1;
            }
            id
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cfg(size: usize) -> QuantizerConfig {
        QuantizerConfig {
            size,
            ..QuantizerConfig::default()
        }
    }

    fn latents(rows: usize, dim: usize, data: Vec<f64>) -> LatentSequence {
        LatentSequence::new(Array2::from_shape_vec((rows, dim), data).unwrap())
    }

    #[test]
    fn cosine_nearest_returns_raw_codevector() {
        let cb = Codebook::from_vectors(&cfg(2), 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (t, q) = cb.quantize(&latents(1, 2, vec![0.9, 0.1])).unwrap();
        assert_eq!(t.ids, [0]);
        assert_eq!(q.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn scaled_codevector_maps_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cb = Codebook::new(&cfg(64), 8, &mut rng).unwrap();
        for m in [0, 17, 63] {
            let h: Vec<f64> = cb.row(m).iter().map(|v| 5.0 * v).collect();
            let (t, q) = cb.quantize(&latents(1, 8, h)).unwrap();
            assert_eq!(t.ids, [m]);
            assert_eq!(q.as_slice(), cb.row(m));
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let cb = Codebook::from_vectors(&cfg(4), 2, vec![0.0, 1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(cb.nearest(&[3.0, 0.0]).unwrap(), [1]);
    }

    #[test]
    fn zero_latent_is_assigned_without_nan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cb = Codebook::new(&cfg(16), 4, &mut rng).unwrap();
        assert_eq!(cb.nearest(&[0.0; 4]).unwrap().len(), 1);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cb = Codebook::new(&cfg(8192), 32, &mut rng).unwrap();
        let h: Vec<f64> = (0..50 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ids = cb.nearest(&h).unwrap();
        for (l, q) in h.chunks(32).enumerate() {
            let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
            let mut best = (0, f64::INFINITY);
            for m in 0..8192 {
                let e = cb.row(m);
                let en = e.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
                let d: f64 = q.iter().zip(e).map(|(a, b)| (a / qn - b / en).powi(2)).sum();
                if d < best.1 {
                    best = (m, d);
                }
            }
            assert_eq!(ids[l], best.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cb = Codebook::new(&cfg(16), 4, &mut rng).unwrap();
        assert!(cb.quantize(&latents(1, 3, vec![1.0; 3])).is_err());
    }

    #[test]
    fn initial_rows_are_nonzero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cb = Codebook::new(&cfg(8192), 32, &mut rng).unwrap();
        assert!((0..8192).all(|m| cb.row(m).iter().any(|&v| v != 0.0)));
        assert!(cb.probs().iter().all(|&p| p == 1.0 / 8192.0));
    }

    #[test]
    fn assignment_probs_follow_moving_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = 8192;
        let mut cb = Codebook::new(&cfg(e), 4, &mut rng).unwrap();
        cb.update_assignment_probs(&[0; 40]).unwrap();
        let u = 1.0 / e as f64;
        assert!((cb.probs()[0] - (0.99 * u + 0.01)).abs() < 1e-15);
        assert!((cb.probs()[1] - 0.99 * u).abs() < 1e-15);

        let mut cb = Codebook::new(&cfg(4), 2, &mut rng).unwrap();
        cb.update_assignment_probs(&[0, 1, 2, 3, 3, 2, 1, 0]).unwrap();
        assert!(cb.probs().iter().all(|&p| (p - 0.25).abs() < 1e-16));
        assert!(cb.update_assignment_probs(&[]).is_err());
    }

    #[test]
    fn assignment_probs_match_formula_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cb = Codebook::new(&cfg(32), 2, &mut rng).unwrap();
        let p0: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..0.1)).collect();
        cb.set_probs(p0.clone()).unwrap();
        let tokens: Vec<usize> = (0..300).map(|_| rng.gen_range(0..32)).collect();
        cb.update_assignment_probs(&tokens).unwrap();
        for m in 0..32 {
            let count = tokens.iter().filter(|&&t| t == m).count() as f64;
            let expected = 0.99 * p0[m] + 0.01 * (count / 300.0);
            assert!((cb.probs()[m] - expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn update_weight_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cb = Codebook::new(&cfg(8192), 4, &mut rng).unwrap();
        // uniform usage freezes every code
        assert!(cb.update_weights().iter().all(|&w| w < 1e-300));
        let mut p = vec![1.0 / 8192.0; 8192];
        p[5] = 0.0;
        cb.set_probs(p).unwrap();
        assert!((cb.update_weights()[5] - (-1e-3f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn forced_update_is_convex_blend_toward_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = 16;
        let mut cb = Codebook::new(&cfg(e), 3, &mut rng).unwrap();
        let p: Vec<f64> = (0..e).map(|_| rng.gen_range(0.0..2e-4)).collect();
        cb.set_probs(p.clone()).unwrap();
        let before = cb.vectors.value().to_vec();
        let anchors: Vec<f64> = (0..5 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta = cb.forced_update(&anchors, &mut rng).unwrap();
        for m in 0..e {
            let expected = (-10.0 * p[m] * e as f64 / (1.0 - 0.99) - 1e-3).exp();
            assert!((eta[m] - expected).abs() <= 1e-15);
            assert!(eta[m] > 0.0 && eta[m] < 1.0);
            let hit = (0..5).any(|j| {
                (0..3).all(|i| {
                    let blend = (1.0 - eta[m]) * before[m * 3 + i] + eta[m] * anchors[j * 3 + i];
                    (cb.row(m)[i] - blend).abs() <= 1e-15
                })
            });
            assert!(hit, "codevector {m} is not a blend with any anchor");
        }
        assert!(cb.forced_update(&[], &mut rng).is_err());
    }

    #[test]
    fn bitrates_and_frame_rates() {
        assert_eq!(bitrate(16000, 40, 8, 8192), 650.0);
        assert_eq!(bitrate(16000, 40, 4, 8192), 1300.0);
        assert_eq!(bitrate(48000, 40, 8, 8192), 1950.0);
        assert_eq!(bitrate(48000, 40, 4, 8192), 3900.0);
        assert_eq!(frame_rate(16000, 40, 8), 50.0);
    }

    #[test]
    fn packing_examples() {
        assert_eq!(pack_tokens(&[0], 13).unwrap(), [0, 0]);
        assert_eq!(pack_tokens(&[8191], 13).unwrap(), [0xff, 0xf8]);
        let t = [8191, 0, 8191];
        assert_eq!(unpack_tokens(&pack_tokens(&t, 13).unwrap(), 3, 13).unwrap(), t);
        assert!(pack_tokens(&[8192], 13).is_err());
        assert!(unpack_tokens(&[0], 1, 13).is_err());
    }

    #[test]
    fn thousand_tokens_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..8192)).collect();
        let bytes = pack_tokens(&t, 13).unwrap();
        assert_eq!(bytes.len(), 13000usize.div_ceil(8));
        assert_eq!(unpack_tokens(&bytes, 1000, 13).unwrap(), t);
    }

    #[test]
    fn perplexity_of_uniform_and_single_use() {
        assert!((perplexity(&[0, 1, 2, 3], 8).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(perplexity(&[3, 3, 3], 8).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_roundtrip_keeps_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cb = Codebook::new(&cfg(8), 2, &mut rng).unwrap();
        cb.update_assignment_probs(&[1, 1, 2]).unwrap();
        let mut ckpt = Checkpoint::new();
        cb.save_into(&mut ckpt);
        let mut other = Codebook::new(&cfg(8), 2, &mut rng).unwrap();
        other.load_from(&Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap()).unwrap();
        assert_eq!(other.vectors.value(), cb.vectors.value());
        assert_eq!(other.probs(), cb.probs());
    }

    proptest! {
        #[test]
        fn pack_unpack_is_identity(ids in proptest::collection::vec(0usize..8192, 0..200)) {
            let bytes = pack_tokens(&ids, 13).unwrap();
            prop_assert_eq!(unpack_tokens(&bytes, ids.len(), 13).unwrap(), ids);
        }

        #[test]
        fn positive_scaling_keeps_token(seed in 0u64..1000, c in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cb = Codebook::new(&cfg(128), 6, &mut rng).unwrap();
            let h: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = h.iter().map(|v| v * c).collect();
            prop_assert_eq!(cb.nearest(&h).unwrap(), cb.nearest(&scaled).unwrap());
        }

        #[test]
        fn probs_and_weights_stay_in_range(seed in 0u64..1000, steps in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cb = Codebook::new(&cfg(32), 2, &mut rng).unwrap();
            for _ in 0..steps {
                let n = rng.gen_range(1..50);
                let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
                cb.update_assignment_probs(&t).unwrap();
                let anchors: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let eta = cb.forced_update(&anchors, &mut rng).unwrap();
                prop_assert!(eta.iter().all(|&w| (0.0..1.0).contains(&w)));
                prop_assert!(cb.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
