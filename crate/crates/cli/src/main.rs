//! `csikd`: dataset generation, every training regime, evaluation, FLOPs,
//! benchmarks and the full desk-scale report from one binary.

mod commands;
mod exit;
mod subprocess;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Knowledge distillation for lightweight CSI-feedback encoders.
#[derive(Debug, Parser)]
#[command(name = "csikd", version, about)]
pub struct Cli {
    /// Directory every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and normalize a dataset from an experiment config.
    GenData {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to `<output>/data.csid`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an autoencoder from scratch on reconstruction MSE.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Encoder architecture to train.
        #[arg(long, value_enum, default_value_t = EncoderArg::Student)]
        encoder: EncoderArg,
    },
    /// Autoencoder distillation of a student from a trained teacher.
    Distill {
        #[command(flatten)]
        run: RunArgs,
        /// Teacher autoencoder bundle stem (`<stem>.ckpt` plus spec files).
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Encoder distillation onto the teacher's codewords, then end-to-end
    /// fine-tuning with the teacher decoder.
    EncoderDistill {
        #[command(flatten)]
        run: RunArgs,
        /// Teacher autoencoder bundle stem.
        #[arg(long)]
        teacher: PathBuf,
    },
    /// Steps of the pair-exchange protocol, one side per invocation.
    VariantDistill {
        #[command(subcommand)]
        step: VariantStep,
    },
    /// Sequential training: the deployed encoder learns the codewords of a
    /// base-station autoencoder, whose decoder is kept as is.
    SeqTrain {
        #[command(flatten)]
        run: RunArgs,
        /// Pretrained base-station autoencoder bundle; trained from scratch
        /// (student architecture) when absent.
        #[arg(long)]
        bs: Option<PathBuf>,
    },
    /// Test NMSE of an autoencoder bundle on a dataset file.
    Eval {
        /// Autoencoder bundle stem.
        #[arg(long)]
        model: PathBuf,
        /// Dataset file written by `gen-data`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Inference FLOPs of one network.
    Flops {
        #[command(flatten)]
        net: NetworkArgs,
        /// Print every conv/dense layer, not only the total.
        #[arg(long)]
        layers: bool,
    },
    /// Batch-1 inference timing of one network.
    Bench {
        #[command(flatten)]
        net: NetworkArgs,
        #[arg(long, default_value_t = 200)]
        repetitions: usize,
        #[arg(long, default_value_t = 20)]
        warmups: usize,
        /// Weight initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the multi-seed suite and write every table, checkpoint and pair
    /// file under `--out`. Seeds run in parallel when CSIKD_THREADS > 1.
    Reproduce {
        /// Preset size: `desk` or `smoke`.
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Comma-separated seeds, overriding the preset.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Full suite config (JSON) replacing the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Run the variant steps in this process instead of child processes.
        #[arg(long)]
        in_process: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset file; generated from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, value_enum)]
    pub model: NetworkArg,
    /// Compression ratio as a fraction.
    #[arg(long, default_value = "1/16")]
    pub gamma: String,
    #[arg(long, default_value_t = 32)]
    pub nt: usize,
    #[arg(long, default_value_t = 32)]
    pub nc: usize,
    /// CRBlock channel width (decoder only).
    #[arg(long, default_value_t = 8)]
    pub width: usize,
}

#[derive(Debug, Subcommand)]
pub enum VariantStep {
    /// Base station: write teacher-encoder pairs for the training and
    /// validation splits.
    BsExport {
        /// Teacher autoencoder bundle stem.
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Exchange directory.
        #[arg(long)]
        pairs: PathBuf,
    },
    /// User equipment: train the student encoder on the teacher pairs and
    /// write its own pairs back. Reads nothing but the pairs and the student.
    UeTrain {
        /// Initial student encoder bundle stem.
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Training schedule (JSON).
        #[arg(long)]
        train_config: PathBuf,
        /// Output encoder bundle stem.
        #[arg(long)]
        out: PathBuf,
        /// Also write the training report (JSON, includes wall-clock).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Base station: fine-tune the teacher decoder on the student pairs.
    BsFinetune {
        /// Decoder bundle stem.
        #[arg(long, conflicts_with = "teacher", required_unless_present = "teacher")]
        decoder: Option<PathBuf>,
        /// Teacher autoencoder bundle stem; its decoder is used.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        train_config: PathBuf,
        /// Fine-tuning epochs.
        #[arg(long)]
        epochs: usize,
        /// Output decoder bundle stem.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Join an encoder bundle and a decoder bundle into an autoencoder bundle.
    Combine {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        decoder: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncoderArg {
    Student,
    Teacher,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NetworkArg {
    StudentEncoder,
    TeacherEncoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
