//! `cvxattn`: synthesize gestures, train, evaluate, predict, verify,
//! benchmark and export convexified attention models.
//!
//! Exit status: 0 on success, 1 when a check fails, 2 on usage,
//! configuration or input errors.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cvxattn_core::{GestureKind, LossKind, Precision};

use commands::{
    BenchArgs, EvalArgs, EvalMode, ExportArgs, Globals, PredictArgs, SynthArgs, TrainArgs,
    VerifyArgs,
};
use config::{CliConfig, TrainFlags};
use error::{CliError, CliResult};

const PRESETS: [&str; 4] = ["tap", "swipe", "tap-appxB", "swipe-appxB"];

#[derive(Parser, Debug)]
#[command(
    name = "cvxattn",
    version,
    about = "Convexified attention gesture classifier"
)]
struct Cli {
    /// Seed from which every random stream of the command is derived.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fold and trial parallelism.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,

    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Tap,
    Swipe,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Hinge,
    Squared,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Hinge => LossKind::Hinge,
            LossArg::Squared => LossKind::Squared,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Kfold,
    Split,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

#[derive(clap::Args, Debug)]
struct TrainOpts {
    /// Hyperparameter preset.
    #[arg(long, value_parser = PRESETS)]
    preset: Option<String>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl TrainOpts {
    fn flags(self) -> TrainFlags {
        TrainFlags {
            preset: self.preset,
            loss: self.loss.map(LossKind::from),
            epochs: self.epochs,
            seed: None,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic gesture dataset (CSV plus metadata sidecar).
    Synth {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        n_per_class: Option<usize>,
        /// Noise standard deviation (signal amplitude is 1).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its bundle.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long)]
        out_model: PathBuf,
        /// Per-epoch records as JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cross-validate or split-evaluate a training configuration.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "kfold")]
        mode: ModeArg,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Classify every gesture of a dataset; writes label and scores as CSV.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the convexity, nonexpansiveness and softmax checks.
    Verify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Loss to probe; defaults to the loss the model was trained with.
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
    },
    /// Measure single-gesture inference latency.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Fail when the mean latency reaches this many microseconds.
        #[arg(long, default_value_t = 1000.0)]
        max_mean_us: f64,
    },
    /// Re-encode a model, by default as the compact 32-bit bundle.
    Export {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, alias = "bits", value_enum, default_value = "32")]
        precision: PrecisionArg,
        /// Dataset on which exported and original labels must agree.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let globals = Globals {
        seed: cli.seed,
        config: CliConfig::load_opt(cli.config.as_deref())?,
    };
    let g = &globals;
    match cli.command {
        Command::Synth {
            kind,
            n_per_class,
            noise,
            out,
        } => commands::synth(
            g,
            SynthArgs {
                kind: kind.map(|k| match k {
                    KindArg::Tap => GestureKind::Tap,
                    KindArg::Swipe => GestureKind::Swipe,
                }),
                n_per_class,
                noise,
                out,
            },
        ),
        Command::Train {
            data,
            opts,
            out_model,
            report,
        } => commands::train_cmd(
            g,
            TrainArgs {
                data,
                flags: opts.flags(),
                out_model,
                report,
            },
        ),
        Command::Eval {
            data,
            mode,
            folds,
            opts,
        } => commands::eval(
            g,
            EvalArgs {
                data,
                flags: opts.flags(),
                mode: match mode {
                    ModeArg::Kfold => EvalMode::KFold,
                    ModeArg::Split => EvalMode::Split,
                },
                folds,
                parallel: cli.jobs > 1,
            },
        ),
        Command::Predict { model, data, out } => {
            commands::predict_cmd(g, PredictArgs { model, data, out })
        }
        Command::Verify {
            model,
            data,
            trials,
            noise,
            pairs,
            loss,
        } => commands::verify(
            g,
            VerifyArgs {
                model,
                data,
                trials,
                noise,
                pairs,
                loss: loss.map(LossKind::from),
            },
        ),
        Command::Bench {
            model,
            data,
            iters,
            max_mean_us,
        } => commands::bench(
            g,
            BenchArgs {
                model,
                data,
                iters,
                max_mean_us,
            },
        ),
        Command::Export {
            model,
            out,
            precision,
            data,
        } => commands::export(
            g,
            ExportArgs {
                model,
                out,
                precision: match precision {
                    PrecisionArg::F32 => Precision::F32,
                    PrecisionArg::F64 => Precision::F64,
                },
                data,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
