//! `relight` — decompose, enhance, train priors, and evaluate results from
//! the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 config, 4 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use relight_core::CoreError;

#[derive(Parser)]
#[command(
    name = "relight",
    version,
    about = "Low-light image enhancement via unfolded decomposition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorKindArg {
    Illumination,
    Noise,
}

#[derive(Subcommand)]
enum Command {
    /// Split an image into illumination, reflectance, and noise.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        /// Prefix for the output PNG previews and tensor files.
        #[arg(long)]
        out_prefix: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured stage count.
        #[arg(long)]
        stages: Option<usize>,
        /// Learned illumination prior (.cuep); selects the learned proximal
        /// operator.
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Brighten an image; the target level comes from --ratio or a
    /// reference image.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train an illumination or noise prior on a directory of PNGs.
    TrainPrior {
        #[arg(long, value_enum)]
        kind: PriorKindArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare prediction and ground-truth directories; write a PSNR/SSIM
    /// CSV.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the oriented-gradient descriptor of an image as a tensor file.
    Hog {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Failures with their process exit codes.
pub enum CliError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(CoreError::Io(_)) => 2,
            CliError::Core(CoreError::Format(_)) => 2,
            CliError::Core(CoreError::Config { .. }) => 3,
            CliError::Core(CoreError::Argument(_)) => 4,
            CliError::Core(CoreError::Numeric(_)) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Decompose {
            input,
            out_prefix,
            config,
            stages,
            prior,
        } => commands::decompose(
            &input,
            &out_prefix,
            config.as_deref(),
            stages,
            prior.as_deref(),
        ),
        Command::Enhance {
            input,
            ratio,
            reference,
            out,
            config,
        } => commands::enhance(&input, ratio, reference.as_deref(), &out, config.as_deref()),
        Command::TrainPrior {
            kind,
            data,
            epochs,
            seed,
            out,
            config,
        } => commands::train_prior(kind, &data, epochs, seed, &out, config.as_deref()),
        Command::Eval { pred, gt, out } => commands::eval(&pred, &gt, &out),
        Command::Hog { input, out, config } => commands::hog(&input, &out, config.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relight: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
