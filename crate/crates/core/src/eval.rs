//! Objective metrics: SI-SDR, log-spectral distance and mel distance, and a
//! corpus runner that pushes files through the coder.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CfmdctModel, EnhanceOptions};
use crate::signal::{mel_spectrogram, read_wav, stft_magnitude, MelConfig, Waveform};

/// Upper (and lower) bound of reported SI-SDR values, dB.
pub const SI_SDR_CAP: f64 = 100.0;
/// Magnitude floor before taking log10 in the LSD.
pub const LSD_FLOOR: f64 = 1e-8;

fn same_length(op: &'static str, a: &Waveform, b: &Waveform) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(op, format!("lengths {} and {} (must be equal and non-zero)", a.len(), b.len())));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to `±100`.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    same_length("si_sdr", reference, estimate)?;
    let r = &reference.samples;
    let e = &estimate.samples;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::InvalidArgument("SI-SDR reference is all zeros".into()));
    }
    let a = r.iter().zip(e).map(|(r, e)| r * e).sum::<f64>() / rr;
    let (mut target, mut noise) = (0.0, 0.0);
    for (r, e) in r.iter().zip(e) {
        let s = a * r;
        target += s * s;
        noise += (e - s) * (e - s);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP);
    }
    Ok((10.0 * (target / noise).log10()).clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

/// Mean over frames of the RMS over frequency of `log10|A| − log10|B|`.
pub fn lsd(reference: &Waveform, estimate: &Waveform, mel: &MelConfig) -> Result<f64> {
    same_length("lsd", reference, estimate)?;
    let a = stft_magnitude(reference, mel.fft_length, mel.hop)?;
    let b = stft_magnitude(estimate, mel.fft_length, mel.hop)?;
    let total: f64 = a
        .outer_iter()
        .zip(b.outer_iter())
        .map(|(fa, fb)| {
            let ms = fa
                .iter()
                .zip(fb.iter())
                .map(|(x, y)| (x.max(LSD_FLOOR).log10() - y.max(LSD_FLOOR).log10()).powi(2))
                .sum::<f64>()
                / fa.len() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / a.nrows() as f64)
}

/// Mean absolute difference of log-mel spectrograms.
pub fn mel_l1(reference: &Waveform, estimate: &Waveform, mel: &MelConfig) -> Result<f64> {
    same_length("mel_l1", reference, estimate)?;
    let a = mel_spectrogram(reference, mel)?.values;
    let b = mel_spectrogram(estimate, mel)?.values;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub si_sdr: f64,
    pub lsd: f64,
    pub mel_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<UtteranceMetrics>,
    /// Files that could not be evaluated, with the reason.
    pub failures: Vec<(String, String)>,
    /// Identifies the model configuration (or `bypass`).
    pub fingerprint: String,
}

impl MetricsReport {
    fn mean(&self, f: impl Fn(&UtteranceMetrics) -> f64) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64)
    }

    pub fn mean_si_sdr(&self) -> Option<f64> {
        self.mean(|r| r.si_sdr)
    }

    pub fn mean_lsd(&self) -> Option<f64> {
        self.mean(|r| r.lsd)
    }

    pub fn mean_mel_l1(&self) -> Option<f64> {
        self.mean(|r| r.mel_l1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing CSV: {e}"));
        w.write_record(["id", "si_sdr", "lsd", "mel_l1"]).map_err(io)?;
        for r in &self.rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        format!(
            "files={} failed={} si_sdr={} lsd={} mel_l1={} config={}",
            self.rows.len(),
            self.failures.len(),
            fmt(self.mean_si_sdr()),
            fmt(self.mean_lsd()),
            fmt(self.mean_mel_l1()),
            self.fingerprint
        )
    }
}

/// 64-bit FNV-1a of `bytes`, hex encoded.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Metrics of one reference against its reconstruction.
pub fn compare(id: &str, reference: &Waveform, estimate: &Waveform, mel: &MelConfig) -> Result<UtteranceMetrics> {
    Ok(UtteranceMetrics {
        id: id.to_string(),
        si_sdr: si_sdr(reference, estimate)?,
        lsd: lsd(reference, estimate, mel)?,
        mel_l1: mel_l1(reference, estimate, mel)?,
    })
}

/// Encodes and decodes a waveform, trimming the result to the input length.
pub fn reconstruct(model: &CfmdctModel, input: &Waveform, enhance: Option<EnhanceOptions>) -> Result<Waveform> {
    let tokens = model.encode(input)?;
    Ok(model.decode(&tokens, enhance)?.truncated(input.len()))
}

/// Evaluates every file. With `model = None` each reference is compared with
/// itself. Errors are recorded per file and do not stop the run.
pub fn evaluate_corpus(model: Option<&CfmdctModel>, files: &[PathBuf], enhance: Option<EnhanceOptions>) -> MetricsReport {
    let mel = model.map(|m| m.config.mel).unwrap_or_default();
    let fingerprint = match model {
        Some(m) => fingerprint(toml::to_string(&m.config).unwrap_or_default().as_bytes()),
        None => "bypass".into(),
    };
    let mut report = MetricsReport {
        fingerprint,
        ..MetricsReport::default()
    };
    for path in files {
        let id = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let result = read_wav(path).and_then(|reference| {
            let estimate = match model {
                Some(m) => reconstruct(m, &reference, enhance)?,
                None => reference.clone(),
            };
            compare(&id, &reference, &estimate, &mel)
        });
        match result {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                report.failures.push((id, e.to_string()));
            }
        }
    }
    report
}

/// Sorted `*.wav` files directly inside `dir`.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::signal::write_wav;

    fn noise(seed: u64, n: usize) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000)
    }

    #[test]
    fn si_sdr_caps_and_scale_invariance() {
        let x = noise(1, 4000);
        assert_eq!(si_sdr(&x, &x).unwrap(), 100.0);
        let half = Waveform::new(x.samples.iter().map(|v| 0.5 * v).collect(), 16000);
        assert_eq!(si_sdr(&x, &half).unwrap(), 100.0);
        let y = noise(2, 4000);
        let a = si_sdr(&x, &y).unwrap();
        let scaled = Waveform::new(y.samples.iter().map(|v| 3.7 * v).collect(), 16000);
        assert!((si_sdr(&x, &scaled).unwrap() - a).abs() < 1e-9);
    }

    #[test]
    fn si_sdr_of_orthogonal_mixture() {
        // sine and cosine at a bin-centred frequency are exactly orthogonal
        let n = 16000;
        let w = 2.0 * std::f64::consts::PI * 50.0 / n as f64;
        let s: Vec<f64> = (0..n).map(|i| (w * i as f64).sin()).collect();
        let c: Vec<f64> = (0..n).map(|i| (w * i as f64).cos()).collect();
        for rho in [0.5f64, 4.0, 100.0] {
            let g = (1.0 / rho).sqrt();
            let est = Waveform::new(s.iter().zip(&c).map(|(s, c)| s + g * c).collect(), 16000);
            let got = si_sdr(&Waveform::new(s.clone(), 16000), &est).unwrap();
            assert!((got - 10.0 * rho.log10()).abs() < 1e-6, "rho {rho}: {got}");
        }
    }

    #[test]
    fn si_sdr_errors() {
        let x = noise(1, 100);
        assert!(si_sdr(&x, &noise(1, 99)).is_err());
        assert!(si_sdr(&Waveform::new(vec![0.0; 100], 16000), &x).is_err());
    }

    #[test]
    fn lsd_examples() {
        let mel = MelConfig::default();
        let x = noise(3, 8000);
        assert_eq!(lsd(&x, &x, &mel).unwrap(), 0.0);
        let loud = Waveform::new(x.samples.iter().map(|v| 10.0 * v).collect(), 16000);
        assert!((lsd(&x, &loud, &mel).unwrap() - 1.0).abs() < 1e-9);
        let y = noise(4, 8000);
        assert_eq!(lsd(&x, &y, &mel).unwrap(), lsd(&y, &x, &mel).unwrap());
        assert!(lsd(&x, &noise(4, 10), &mel).is_err());
    }

    #[test]
    fn lsd_matches_explicit_loops() {
        let mel = MelConfig::default();
        let (x, y) = (noise(5, 5000), noise(6, 5000));
        let a = stft_magnitude(&x, 1024, 256).unwrap();
        let b = stft_magnitude(&y, 1024, 256).unwrap();
        let mut total = 0.0;
        for f in 0..a.nrows() {
            let mut acc = 0.0;
            for k in 0..a.ncols() {
                let d = a[[f, k]].max(1e-8).log10() - b[[f, k]].max(1e-8).log10();
                acc += d * d;
            }
            total += (acc / a.ncols() as f64).sqrt();
        }
        assert!((lsd(&x, &y, &mel).unwrap() - total / a.nrows() as f64).abs() < 1e-10);
    }

    #[test]
    fn bypass_corpus_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        write_wav(dir.path().join("a.wav"), &noise(7, 3000)).unwrap();
        write_wav(dir.path().join("b.wav"), &noise(8, 3000)).unwrap();
        std::fs::write(dir.path().join("c.wav"), b"not audio").unwrap();
        let files = wav_files(dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let report = evaluate_corpus(None, &files, None);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.failures.len(), 1);
        assert!(report.rows.iter().all(|r| r.si_sdr == 100.0 && r.lsd == 0.0 && r.mel_l1 == 0.0));
        assert_eq!(report.mean_lsd(), Some(0.0));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("id,si_sdr,lsd,mel_l1\na.wav,100.0,0.0,0.0"));

        let empty = evaluate_corpus(None, &[], None);
        assert!(empty.rows.is_empty() && empty.mean_lsd().is_none());
        assert!(empty.summary_line().starts_with("files=0 failed=0"));
    }
}
