//! `aigm`: beat analysis, training, evaluation and prediction for the
//! two-stage AI-generated-music detector.

mod commands;
mod error;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use error::{usage, CliResult};

#[derive(Debug, Parser)]
#[command(name = "aigm", version, about = "Two-stage AI-generated music detection")]
struct Cli {
    /// Seed for splits, initialization and training order [env: AIGM_SEED]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-file feature extraction
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `key=value` file; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    /// Cut every track into 4-bar segments with the beat tracker
    Segments,
    /// Use every manifest entry as one clip
    Clips,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Segments => "segments",
            Units::Clips => "clips",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Stage-1 score of a single clip
    Segment,
    /// Beats, 4-bar segments, stage 1, then stage 2 over the whole track
    Full,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track beats and write the quantized bar grid
    Beats {
        audio: PathBuf,
        /// CSV of bars: index,start_s,end_s
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a stage-1 or stage-2 detector
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// audiocat | fxseg (stage 1), segtr (stage 2)
        #[arg(long)]
        arch: String,
        #[arg(long)]
        manifest: PathBuf,
        /// paper-s1-bce | paper-s1-focal | paper-s2
        #[arg(long)]
        preset: Option<String>,
        /// Checkpoint to write
        #[arg(long)]
        out: PathBuf,
        /// Stage-1 checkpoint (required for stage 2)
        #[arg(long)]
        stage1: Option<PathBuf>,
        /// Feature extractor preset (stage 1)
        #[arg(long)]
        extractor: Option<String>,
        /// How manifest entries become stage-1 examples
        #[arg(long, value_enum)]
        units: Option<Units>,
        #[arg(long)]
        d_model: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        ffn: Option<usize>,
        /// Training-history CSV [default: <out>.history.csv]
        #[arg(long)]
        history: Option<PathBuf>,
        /// Training override, e.g. `--set epochs=2`
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Score a manifest split and print the six metrics
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// train | val | test | all
        #[arg(long, default_value = "test")]
        split: String,
        /// Stage-1 checkpoint (required for stage-2 checkpoints)
        #[arg(long)]
        stage1: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Also write the header and metric row here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability that one file is AI-generated
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        audio: PathBuf,
        #[arg(long, value_enum, default_value = "segment")]
        mode: Mode,
        /// Stage-1 checkpoint (full mode)
        #[arg(long)]
        stage1: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Self-similarity matrix of an embedding file or a track's segments
    Ssm {
        input: PathBuf,
        /// Output prefix; writes <out>.csv and <out>.pgm
        #[arg(long)]
        out: PathBuf,
        /// Embed segments with this stage-1 model instead of the 2048-d DSP embedding
        #[arg(long)]
        stage1: Option<PathBuf>,
    },
    /// Write a synthetic two-class dataset with a split manifest
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        per_class: usize,
        #[arg(long, default_value_t = 64.0)]
        duration: f64,
        /// Leave the split column empty
        #[arg(long)]
        no_split: bool,
    },
    /// Assign stratified train/val/test splits to a manifest
    Split {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "8,1,1")]
        ratios: String,
    },
}

/// Parsed command plus everything resolved from flags, config file and environment.
#[derive(Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    /// Remaining `key=value` pairs from the config file.
    pub file: BTreeMap<String, String>,
}

impl RunConfig {
    /// Takes `key` out of the config file, parsing it.
    pub fn take<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.file.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config: bad value {v:?} for {key}"))),
        }
    }
}

fn read_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| error::CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let file = match &cli.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    let mut rc = RunConfig { seed: 0, jobs: 1, file };
    let env_seed = match std::env::var("AIGM_SEED") {
        Ok(s) => Some(s.trim().parse().map_err(|_| usage(format!("AIGM_SEED={s:?} is not an integer")))?),
        Err(_) => None,
    };
    let file_seed = rc.take("seed")?;
    rc.seed = cli.seed.or(file_seed).or(env_seed).unwrap_or(0);
    let file_jobs = rc.take("jobs")?;
    rc.jobs = cli.jobs.or(file_jobs).unwrap_or(1).max(1);
    Ok(rc)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut rc = resolve(&cli)?;
    match cli.command {
        Command::Beats { audio, out } => commands::beats(&audio, out.as_deref()),
        Command::Train {
            stage,
            arch,
            manifest,
            preset,
            out,
            stage1,
            extractor,
            units,
            d_model,
            heads,
            ffn,
            history,
            sets,
        } => {
            let args = commands::TrainArgs {
                stage,
                arch,
                manifest,
                preset,
                out,
                stage1,
                extractor,
                units,
                d_model,
                heads,
                ffn,
                history,
                sets,
            };
            commands::train(args, &mut rc)
        }
        Command::Eval {
            ckpt,
            manifest,
            split,
            stage1,
            threshold,
            out,
        } => commands::eval(&ckpt, &manifest, &split, stage1.as_deref(), threshold, out.as_deref(), &rc),
        Command::Predict {
            ckpt,
            audio,
            mode,
            stage1,
            threshold,
        } => commands::predict(&ckpt, &audio, mode, stage1.as_deref(), threshold),
        Command::Ssm { input, out, stage1 } => commands::ssm(&input, &out, stage1.as_deref()),
        Command::Synth {
            out,
            per_class,
            duration,
            no_split,
        } => commands::synth(&out, per_class, duration, !no_split, &rc),
        Command::Split { manifest, out, ratios } => commands::split(&manifest, &out, &ratios, &rc),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aigm: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
