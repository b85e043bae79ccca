//! End-to-end tests of the `cfmd` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfmdct::signal::write_wav;
use cfmdct::training::speech_like_clip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TINY: &str = r#"
[model.codec]
width = 8
latent_dim = 8

[model.enhancer.network]
widths = [8, 8]
bottleneck_blocks = 1
time_dim = 8

[train]
batch_size = 2
checkpoint_every = 1
"#;

fn cfmd(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cfmd"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("spawn cfmd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn clip(path: &Path, seconds: f64, seed: u64) {
    write_wav(path, &speech_like_clip(&mut ChaCha8Rng::seed_from_u64(seed), 16_000, seconds)).unwrap();
}

/// Directory holding a tiny config, an untrained checkpoint and two clips.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
        std::fs::create_dir(dir.path().join("data")).unwrap();
        clip(&dir.path().join("data/a.wav"), 1.0, 1);
        clip(&dir.path().join("data/b.wav"), 1.0, 2);
        let f = Fixture { dir };
        let o = cfmd(&[&"train", &"--config", &f.path("tiny.toml"), &"--data", &f.path("data"), &"--out", &f.path("run"), &"--steps", &"0"]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn ckpt(&self) -> PathBuf {
        self.path("run/model.ckpt")
    }
}

#[test]
fn train_with_zero_steps_writes_initial_checkpoint() {
    let f = Fixture::new();
    assert!(f.ckpt().is_file());
    assert!(f.path("run/config.toml").is_file());
    assert!(!f.path("run/metrics.jsonl").exists());
}

#[test]
fn short_training_run_logs_and_checkpoints() {
    let f = Fixture::new();
    let o = cfmd(&[&"train", &"--config", &f.path("tiny.toml"), &"--data", &f.path("data"), &"--out", &f.path("run2"), &"--steps", &"2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(f.path("run2/metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 1);
    assert!(first["total"].as_f64().unwrap().is_finite());
    assert!(f.path("run2/step_0000001.ckpt").is_file());
    assert!(f.path("run2/step_0000002.ckpt").is_file());
    assert!(f.path("run2/model.ckpt").is_file());
}

#[test]
fn encode_reports_bitrate_and_token_count() {
    let f = Fixture::new();
    let o = cfmd(&[&"encode", &f.path("data/a.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("a.cfmd")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("50 tokens"), "{}", stdout(&o));
    assert!(stdout(&o).contains("bitrate=650 bps"));
    assert_eq!(std::fs::metadata(f.path("a.cfmd")).unwrap().len(), 17 + (50 * 13_u64).div_ceil(8));

    clip(&f.path("long.wav"), 2.0, 3);
    let o = cfmd(&[&"encode", &f.path("long.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("long.cfmd")]);
    assert!(stdout(&o).contains("100 tokens") && stdout(&o).contains("bitrate=650 bps"), "{}", stdout(&o));
}

#[test]
fn inspect_shows_header_and_model_summary() {
    let f = Fixture::new();
    cfmd(&[&"encode", &f.path("data/a.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("a.cfmd")]);
    let o = cfmd(&[&"inspect", &f.path("a.cfmd")]);
    assert!(o.status.success());
    let text = stdout(&o);
    for line in ["sample_rate=16000", "hop=40", "R=8", "|E|=8192", "tokens=50", "bitrate=650 bps"] {
        assert!(text.lines().any(|l| l == line), "missing {line} in\n{text}");
    }
    let o = cfmd(&[&"inspect", &f.ckpt()]);
    let text = stdout(&o);
    assert!(text.contains("kind=checkpoint") && text.contains("params.codec=") && text.contains("params.enh="));
    assert!(text.contains("codebook_perplexity="));
}

#[test]
fn decode_is_deterministic_under_a_seed() {
    let f = Fixture::new();
    cfmd(&[&"encode", &f.path("data/a.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("a.cfmd")]);
    let mut outputs = Vec::new();
    for (name, extra) in [("x1.wav", None), ("x2.wav", None), ("c1.wav", Some("--no-enhance")), ("c2.wav", Some("--no-enhance"))] {
        let mut args: Vec<&dyn AsRef<std::ffi::OsStr>> = vec![&"decode"];
        let (input, ckpt, out) = (f.path("a.cfmd"), f.ckpt(), f.path(name));
        args.extend([&input as &dyn AsRef<_>, &"--checkpoint", &ckpt, &"-o", &out, &"--seed", &"7"]);
        if let Some(flag) = &extra {
            args.push(flag);
        }
        let o = cfmd(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(f.path(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[2], outputs[3]);
    assert_ne!(outputs[0], outputs[2]);
}

#[test]
fn roundtrip_twice_gives_identical_payloads() {
    let f = Fixture::new();
    for name in ["r1", "r2"] {
        let (out, bits) = (f.path(&format!("{name}.wav")), f.path(&format!("{name}.cfmd")));
        let o = cfmd(&[&"roundtrip", &f.path("data/b.wav"), &"--checkpoint", &f.ckpt(), &"-o", &out, &"--bitstream", &bits, &"--no-enhance"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(f.path("r1.cfmd")).unwrap(), std::fs::read(f.path("r2.cfmd")).unwrap());
    assert_eq!(std::fs::read(f.path("r1.wav")).unwrap(), std::fs::read(f.path("r2.wav")).unwrap());
    let back = cfmdct::signal::read_wav(f.path("r1.wav")).unwrap();
    assert_eq!(back.len(), 16_000);
}

#[test]
fn corrupt_inputs_exit_with_format_code() {
    let f = Fixture::new();
    cfmd(&[&"encode", &f.path("data/a.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("a.cfmd")]);
    let bytes = std::fs::read(f.path("a.cfmd")).unwrap();

    std::fs::write(f.path("short.cfmd"), &bytes[..bytes.len() - 3]).unwrap();
    let o = cfmd(&[&"decode", &f.path("short.cfmd"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("x.wav")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("payload"), "{}", stderr(&o));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(f.path("bad.cfmd"), &bad).unwrap();
    let o = cfmd(&[&"decode", &f.path("bad.cfmd"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("x.wav")]);
    assert_eq!(o.status.code(), Some(3));

    // header written for R = 4 against an R = 8 checkpoint
    let mut other = bytes.clone();
    other[11] = 4;
    std::fs::write(f.path("other.cfmd"), &other).unwrap();
    let o = cfmd(&[&"decode", &f.path("other.cfmd"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("x.wav")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("R = 4"), "{}", stderr(&o));

    let stereo = f.path("stereo.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
    for i in 0..3200 {
        w.write_sample((i % 100) as i16).unwrap();
    }
    w.finalize().unwrap();
    let o = cfmd(&[&"encode", &stereo, &"--checkpoint", &f.ckpt(), &"-o", &f.path("s.cfmd")]);
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(f.path("junk.ckpt"), b"CFMDCKPT\x01").unwrap();
    let o = cfmd(&[&"encode", &f.path("data/a.wav"), &"--checkpoint", &f.path("junk.ckpt"), &"-o", &f.path("j.cfmd")]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_config_and_io_errors() {
    let f = Fixture::new();
    assert_eq!(cfmd(&[]).status.code(), Some(2));
    assert_eq!(cfmd(&[&"decode"]).status.code(), Some(2));

    std::fs::write(f.path("bad.toml"), "[train]\nbatch_size = 0\n").unwrap();
    let o = cfmd(&[&"train", &"--config", &f.path("bad.toml"), &"--data", &f.path("data"), &"--out", &f.path("x")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.batch_size"), "{}", stderr(&o));

    std::fs::write(f.path("typo.toml"), "[train]\nbatch_sise = 4\n").unwrap();
    let o = cfmd(&[&"train", &"--config", &f.path("typo.toml"), &"--data", &f.path("data"), &"--out", &f.path("x")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_sise"), "{}", stderr(&o));

    let o = cfmd(&[&"encode", &f.path("missing.wav"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("m.cfmd")]);
    assert_eq!(o.status.code(), Some(1));

    let o = cfmd(&[&"decode", &f.path("missing.cfmd"), &"--checkpoint", &f.ckpt(), &"-o", &f.path("m.wav"), &"--ode-steps", &"0"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn eval_reports_csv_and_summary() {
    let f = Fixture::new();
    std::fs::create_dir(f.path("empty")).unwrap();
    let o = cfmd(&[&"eval", &"--checkpoint", &f.ckpt(), &"--data", &f.path("empty")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("files=0 failed=0"));

    let o = cfmd(&[&"eval", &"--bypass", &"--data", &f.path("data")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("id,si_sdr,lsd,mel_l1\na.wav,100.0,0.0,0.0\nb.wav,100.0,0.0,0.0\n"), "{text}");
    assert!(text.contains("config=bypass"));

    let run = |csv: &str| {
        let o = cfmd(&[&"eval", &"--checkpoint", &f.ckpt(), &"--data", &f.path("data"), &"--csv", &f.path(csv), &"--seed", &"3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(f.path(csv)).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
}
