//! The `cfmd` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::autodiff::{Checkpoint, Module, CHECKPOINT_MAGIC};
use crate::bitstream::{Bitstream, BITSTREAM_MAGIC};
use crate::error::{Error, Result};
use crate::eval::{evaluate_corpus, wav_files};
use crate::model::{CfmdctModel, EnhanceOptions};
use crate::quantizer::{distinct_codes, perplexity};
use crate::signal::{read_wav, write_wav, Waveform};
use crate::training::{Config, Trainer};

/// Environment variable holding the log filter (`error`, `info`, `debug`, ...).
pub const LOG_ENV: &str = "CFMD_LOG";

#[derive(Debug, Parser)]
#[command(name = "cfmd", version, about = "MDCT speech codec with a flow-matching enhancer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on the WAV files of a directory.
    Train {
        /// TOML configuration with [model], [train] and [loss] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.max_steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compress a WAV file to a token bitstream.
    Encode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct a WAV file from a bitstream.
    Decode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Encode and decode in one go, optionally keeping the bitstream.
    Roundtrip {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        bitstream: Option<PathBuf>,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Score reconstructions of every WAV file in a directory.
    Eval {
        #[arg(long, required_unless_present = "bypass")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Per-utterance CSV destination; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Compare each reference with itself instead of a reconstruction.
        #[arg(long, conflicts_with = "checkpoint")]
        bypass: bool,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Describe a bitstream or checkpoint.
    Inspect { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct EnhanceArgs {
    /// Noise temperature of the initial flow state (config default when omitted).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Euler steps of the flow solve (config default when omitted).
    #[arg(long)]
    pub ode_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output the coarse decoder reconstruction.
    #[arg(long)]
    pub no_enhance: bool,
}

impl EnhanceArgs {
    pub fn options(&self, model: &CfmdctModel) -> Result<Option<EnhanceOptions>> {
        if self.no_enhance {
            return Ok(None);
        }
        let mut opts = model.default_enhance(self.seed);
        if let Some(tau) = self.tau {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::InvalidArgument(format!("--tau must be a finite non-negative number, got {tau}")));
            }
            opts.tau = tau;
        }
        if let Some(steps) = self.ode_steps {
            if steps == 0 {
                return Err(Error::InvalidArgument("--ode-steps must be positive".into()));
            }
            opts.steps = steps;
        }
        Ok(Some(opts))
    }
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = Cli::parse();
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            data,
            out: dir,
            steps,
            seed,
        } => {
            let mut cfg = match config {
                Some(path) => Config::load(path)?,
                None => Config::default(),
            };
            if let Some(s) = steps {
                cfg.train.max_steps = s;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            train(&cfg, &data, &dir, out)
        }
        Command::Encode {
            input,
            checkpoint,
            output,
        } => {
            let model = CfmdctModel::load(&checkpoint)?;
            let stream = encode(&model, &read_wav(&input)?)?;
            write_file(&output, &stream.to_bytes()?)?;
            say(out, format_args!(
                "{}: {} tokens, {:.3} s, bitrate={} bps",
                output.display(),
                stream.tokens.len(),
                stream.duration_secs(),
                stream.bitrate()
            ))
        }
        Command::Decode {
            input,
            checkpoint,
            output,
            enhance,
        } => {
            let model = CfmdctModel::load(&checkpoint)?;
            let stream = read_bitstream(&input)?;
            let wave = decode(&model, &stream, enhance.options(&model)?)?;
            write_wav(&output, &wave)?;
            say(out, format_args!("{}: {} samples at {} Hz", output.display(), wave.len(), wave.sample_rate))
        }
        Command::Roundtrip {
            input,
            checkpoint,
            output,
            bitstream,
            enhance,
        } => {
            let model = CfmdctModel::load(&checkpoint)?;
            let reference = read_wav(&input)?;
            let bytes = encode(&model, &reference)?.to_bytes()?;
            if let Some(path) = &bitstream {
                write_file(path, &bytes)?;
            }
            // parse the serialized form so the roundtrip exercises the file format
            let stream = Bitstream::from_bytes(&bytes)?;
            let wave = decode(&model, &stream, enhance.options(&model)?)?.truncated(reference.len());
            write_wav(&output, &wave)?;
            say(out, format_args!(
                "{}: {} tokens ({} bytes), bitrate={} bps",
                output.display(),
                stream.tokens.len(),
                bytes.len(),
                stream.bitrate()
            ))
        }
        Command::Eval {
            checkpoint,
            data,
            csv,
            bypass: _,
            enhance,
        } => {
            let model = checkpoint.as_ref().map(CfmdctModel::load).transpose()?;
            let opts = match &model {
                Some(m) => enhance.options(m)?,
                None => None,
            };
            let files = wav_files(&data)?;
            let report = evaluate_corpus(model.as_ref(), &files, opts);
            match csv {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    report.write_csv(file)?;
                }
                None => report.write_csv(&mut *out)?,
            }
            say(out, format_args!("{}", report.summary_line()))
        }
        Command::Inspect { path } => inspect(&path, out),
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{args}").map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bitstream(path: &Path) -> Result<Bitstream> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Bitstream::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn encode(model: &CfmdctModel, input: &Waveform) -> Result<Bitstream> {
    Bitstream::for_model(&model.config, &model.encode(input)?)
}

pub fn decode(model: &CfmdctModel, stream: &Bitstream, enhance: Option<EnhanceOptions>) -> Result<Waveform> {
    stream.check_model(&model.config)?;
    model.decode(&stream.token_sequence(), enhance)
}

/// Runs `cfg.train.max_steps` steps on the WAV files in `data`, writing
/// `metrics.jsonl`, `config.toml`, periodic `step_<n>.ckpt` and a final
/// `model.ckpt` into `dir`.
pub fn train(cfg: &Config, data: &Path, dir: &Path, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let clips = wav_files(data)?
        .iter()
        .map(read_wav)
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let model = CfmdctModel::new(cfg.model.clone(), cfg.train.seed)?;
    let final_path = dir.join("model.ckpt");
    if cfg.train.max_steps == 0 {
        model.save(&final_path)?;
        return say(out, format_args!("{}: initial checkpoint", final_path.display()));
    }
    let mut trainer = Trainer::new(model, cfg.train.clone(), cfg.loss, clips)?;
    let log_path = dir.join("metrics.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let every = cfg.train.checkpoint_every;
    while trainer.steps_done() < cfg.train.max_steps {
        let chunk = match every {
            0 => cfg.train.max_steps - trainer.steps_done(),
            n => (n - trainer.steps_done() % n).min(cfg.train.max_steps - trainer.steps_done()),
        };
        let metrics = trainer.run(chunk, Some(&mut log))?;
        let last = metrics.last().expect("at least one step");
        log::info!("step {} total {:.5} perplexity {:.1}", last.step, last.total, last.perplexity);
        if every > 0 && trainer.steps_done() % every == 0 {
            trainer.model.save(dir.join(format!("step_{:07}.ckpt", trainer.steps_done())))?;
        }
    }
    trainer.model.save(&final_path)?;
    say(out, format_args!("{}: {} steps", final_path.display(), trainer.steps_done()))
}

pub fn inspect(path: &Path, out: &mut dyn Write) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let model = CfmdctModel::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?;
        return describe_model(&model, out);
    }
    if bytes.starts_with(BITSTREAM_MAGIC) {
        let s = Bitstream::from_bytes(&bytes)?;
        let size = 1usize << s.codebook_bits;
        let lines = [
            format!("kind=bitstream version={}", bytes[4]),
            format!("sample_rate={}", s.sample_rate),
            format!("hop={}", s.hop_size),
            format!("R={}", s.rate),
            format!("codebook_bits={}", s.codebook_bits),
            format!("|E|={size}"),
            format!("tokens={}", s.tokens.len()),
            format!("duration={:.3} s", s.duration_secs()),
            format!("frame_rate={} Hz", s.frame_rate()),
            format!("bitrate={} bps", s.bitrate()),
        ];
        for l in lines {
            say(out, format_args!("{l}"))?;
        }
        if !s.tokens.is_empty() {
            say(out, format_args!("distinct_codes={}", distinct_codes(&s.tokens)))?;
            say(out, format_args!("token_perplexity={:.2}", perplexity(&s.tokens, size)?))?;
        }
        return Ok(());
    }
    Err(Error::Format(format!("{}: neither a bitstream nor a checkpoint", path.display())))
}

fn describe_model(model: &CfmdctModel, out: &mut dyn Write) -> Result<()> {
    let c = &model.config;
    let count = |m: &dyn Module| {
        let mut n = 0;
        m.visit(&mut |p| n += p.len());
        n
    };
    let (codec, vq, enh) = (count(&model.codec), count(&model.codebook), count(&model.velocity));
    let probs = model.codebook.probs();
    let total: f64 = probs.iter().sum();
    let entropy: f64 = probs
        .iter()
        .map(|p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    let floor = 0.1 / probs.len() as f64;
    let lines = [
        "kind=checkpoint".to_string(),
        format!("sample_rate={}", c.sample_rate),
        format!("hop={}", c.hop_size),
        format!("R={}", c.codec.rate),
        format!("|E|={}", c.quantizer.size),
        format!("latent_dim={} width={}", c.codec.latent_dim, c.codec.width),
        format!("bitrate={} bps", c.bitrate()),
        format!("params.codec={codec}"),
        format!("params.vq={vq}"),
        format!("params.enh={enh}"),
        format!("params.total={}", codec + vq + enh),
        format!("codebook_perplexity={:.2}", entropy.exp()),
        format!(
            "codes_above_tenth_of_uniform={}",
            probs.iter().filter(|&&p| p / total > floor).count()
        ),
    ];
    for l in lines {
        say(out, format_args!("{l}"))?;
    }
    Ok(())
}
