mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

/// Bilateral speech enhancement with trained gain tables.
///
/// Any flag may also come from a `--config` file of `key=value` lines;
/// flags given on the command line win.
#[derive(Debug, Parser)]
#[command(name = "bilateral", version)]
struct Cli {
    /// key=value file with defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every stochastic step
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a gain table and HRTF gains on a clean and a noise corpus
    Train(TrainArgs),
    /// Enhance a stereo recording
    Enhance(EnhanceArgs),
    /// Per-frame noise class decisions
    Classify(ClassifyArgs),
    /// Per-frame voice/noise/quiet decisions
    Vad(VadArgs),
    /// Objective measures of an enhanced recording
    Eval(EvalArgs),
    /// Time the bilateral pipeline against two unilateral enhancers
    Bench(BenchArgs),
    /// Write a spherical-head HRIR pair
    GenHrir(GenHrirArgs),
    /// Train a GMM classifier bundle from labelled recordings
    TrainGmm(TrainGmmArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    We,
    Le,
    Wc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Quasistatic,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HrtfArg {
    Tdoa,
    Ipd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Segsnr,
    We,
    Le,
    Wc,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of clean speech WAV files
    #[arg(long, value_name = "DIR")]
    clean_dir: PathBuf,
    /// Directory of noise WAV files
    #[arg(long, value_name = "DIR")]
    noise_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = CriterionArg::We)]
    criterion: CriterionArg,
    /// Defaults to quasistatic for we and gradient otherwise
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum, default_value_t = HrtfArg::Tdoa)]
    hrtf: HrtfArg,
    /// Weight of the non-reference ear in the objective
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Amplitude weighting exponent
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Overrides the criterion's default step size
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Source azimuths in degrees for synthesized HRIRs
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-60,-30,0,30,60")]
    azimuths: Vec<f64>,
    /// `synth` or a directory of `<name>_left.txt`/`<name>_right.txt` pairs
    #[arg(long, default_value = "synth", value_name = "synth|DIR")]
    hrir: String,
    /// Accumulate-and-train passes; later passes run the decision-directed
    /// recursion with the previous pass's gains
    #[arg(long, default_value_t = 4)]
    passes: usize,
    /// Weight of the previous gains when blending between passes
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// Label stored in the model file
    #[arg(long, default_value = "default")]
    noise_class: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Loss trace CSV of the last pass
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    /// Model file; repeat for one model per noise class
    #[arg(long = "model", value_name = "FILE", required = true)]
    models: Vec<PathBuf>,
    /// Classifier bundle selecting among the models
    #[arg(long, value_name = "DIR")]
    gmm_bundle: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Decision log CSV
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = bilateral::pipeline::DEFAULT_VOTE_WINDOW)]
    vote: usize,
    /// Quiet threshold factor of the VAD
    #[arg(long, default_value_t = bilateral::environment::vad::DEFAULT_KQ)]
    kq: f64,
    /// Suppress quiet and music frames too
    #[arg(long)]
    no_bypass: bool,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long, value_name = "DIR")]
    gmm_bundle: PathBuf,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value_t = bilateral::pipeline::DEFAULT_VOTE_WINDOW)]
    vote: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VadArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value_t = bilateral::environment::vad::DEFAULT_KQ)]
    kq: f64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    clean: PathBuf,
    #[arg(long, value_name = "FILE")]
    noisy: PathBuf,
    #[arg(long, value_name = "FILE")]
    enhanced: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "segsnr,we,le,wc")]
    metrics: Vec<MetricArg>,
    /// Amplitude weighting exponent of the distortion measures
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    p: f64,
    /// Label written to the noise_class column
    #[arg(long, default_value = "")]
    noise_class: String,
    /// Label written to the azimuth column
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    azimuth: String,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenHrirArgs {
    #[arg(long, allow_negative_numbers = true)]
    azimuth: f64,
    #[arg(long, default_value_t = bilateral::audio_io::DEFAULT_SAMPLE_RATE)]
    rate: u32,
    #[arg(long, default_value_t = bilateral::audio_io::DEFAULT_HEAD_RADIUS_M)]
    head_radius: f64,
    #[arg(long, value_name = "FILE")]
    out_left: PathBuf,
    #[arg(long, value_name = "FILE")]
    out_right: PathBuf,
}

#[derive(Debug, Args)]
struct TrainGmmArgs {
    /// LABEL=DIR of recordings for one noise class; repeat per class
    #[arg(long = "class", value_name = "LABEL=DIR", required = true)]
    classes: Vec<String>,
    /// Music recordings for the music/non-music pair
    #[arg(long, value_name = "DIR", requires = "nonmusic_dir")]
    music_dir: Option<PathBuf>,
    #[arg(long, value_name = "DIR", requires = "music_dir")]
    nonmusic_dir: Option<PathBuf>,
    /// Fuse the features of both channels of stereo recordings
    #[arg(long)]
    fused: bool,
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<bilateral::Error> for Failure {
    fn from(e: bilateral::Error) -> Self {
        match e {
            bilateral::Error::Diverged { .. } => Failure::Numerical(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

fn run(argv: Vec<std::ffi::OsString>) -> Result<(), Failure> {
    let argv = config::merge(argv, &Cli::command()).map_err(|e| match e {
        config::ConfigError::Read(m) => Failure::Data(format!("cannot read config file {m}")),
        config::ConfigError::Syntax(m) => Failure::Usage(format!("bad config file {m}")),
    })?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(Failure::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Enhance(a) => commands::enhance(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Vad(a) => commands::vad(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::GenHrir(a) => commands::gen_hrir(&a),
        Command::TrainGmm(a) => commands::train_gmm(&a, cli.seed),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.message().trim_end();
            match f {
                Failure::Usage(_) => eprintln!("{msg}"),
                _ => eprintln!("error: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
