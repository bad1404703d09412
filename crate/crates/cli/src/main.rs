//! `bucketzip`: compress, decompress, calibrate, analyze and simulate.
//!
//! Exit codes: 0 success, 2 decoded but integrity-flagged, 3 bad usage,
//! 4 I/O, 5 malformed container or model mismatch, 6 decode failure,
//! 7 anything else.

mod commands;
mod error;
mod simulate;
mod values;

use std::path::PathBuf;
use std::process::ExitCode;

use bucketzip::{CodecParams, LongformTable, MismatchCertificate, Rational};
use clap::{Args, Parser, Subcommand};

use error::{CliResult, EXIT_OK, EXIT_USAGE};
use values::{AlphabetSpec, BucketsSpec, CodeSpec, ModelSpec, PerturbSpec};

#[derive(Parser, Debug)]
#[command(
    name = "bucketzip",
    version,
    about = "Model-driven lossless compression that tolerates bounded prediction mismatch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a file into a container
    Compress(CompressArgs),
    /// Reconstruct the original file from a container
    Decompress(DecompressArgs),
    /// Train an n-gram model file
    Train(TrainArgs),
    /// Fit a Huffman bucket code to the bucket frequencies of a corpus
    Calibrate(CalibrateArgs),
    /// Fit power-law exponents to a model's distributions and estimate code length
    Analyze(AnalyzeArgs),
    /// Choose the geometric bucket ratio for a power-law exponent and mismatch
    OptimizeBuckets(OptimizeArgs),
    /// Sweep q over a corpus directory and report ratio and decode accuracy
    Simulate(simulate::SimulateArgs),
}

/// Parameters encoder and decoder must share; all are recorded in the container.
#[derive(Args, Debug, Clone)]
pub struct CodecOpts {
    /// Certified mismatch factor c >= 1 (rational, e.g. 10/3)
    #[arg(long, conflicts_with = "q")]
    c: Option<Rational>,
    /// q = 1/c, e.g. 0.3
    #[arg(long)]
    q: Option<Rational>,
    /// geometric:<gamma>:<K> or file:<boundaries>
    #[arg(long, default_value = "geometric:1/8:33")]
    buckets: BucketsSpec,
    /// unary or huffman:<code file from calibrate>
    #[arg(long, default_value = "unary")]
    code: CodeSpec,
    /// Master seed for the per-token random strings
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CodecOpts {
    pub fn mismatch(&self) -> CliResult<Rational> {
        values::mismatch(self.c, self.q)
    }

    pub fn params_with(&self, alphabet_size: u32, c: Rational) -> CliResult<CodecParams> {
        let partition = self.buckets.load()?;
        let code = self.code.load(partition.len())?;
        Ok(CodecParams::new(
            partition,
            code,
            LongformTable::new(self.seed, alphabet_size),
            MismatchCertificate::new(c)?,
        )?)
    }

    pub fn params(&self, alphabet_size: u32) -> CliResult<CodecParams> {
        self.params_with(alphabet_size, self.mismatch()?)
    }
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    input: PathBuf,
    /// Container path [default: <input>.bkz]
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// ngram:<path> or replay:<path>
    #[arg(long)]
    model: ModelSpec,
    /// byte, words:<dictionary> or ids:<size> (little-endian u32 ids)
    #[arg(long, default_value = "byte")]
    alphabet: AlphabetSpec,
    #[command(flatten)]
    codec: CodecOpts,
    /// Also write the bare payload bytes, without header or checksum
    #[arg(long, value_name = "PATH")]
    raw_bits: Option<PathBuf>,
    /// Write the run report as JSON
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// ngram:<path> or replay:<path>
    #[arg(long)]
    model: ModelSpec,
    /// Dictionary for containers that use a word alphabet
    #[arg(long)]
    alphabet: Option<AlphabetSpec>,
    /// Simulate decoder-side mismatch: <c_sim>:<certified|stress>:<seed>
    #[arg(long)]
    perturb: Option<PerturbSpec>,
    /// Write the integrity report as JSON
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "byte")]
    alphabet: AlphabetSpec,
    #[arg(long, default_value_t = 3)]
    order: u8,
    /// Additive smoothing constant
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Calibration files
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Code file to write, usable as --code huffman:<path>
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    model: ModelSpec,
    #[arg(long, default_value = "byte")]
    alphabet: AlphabetSpec,
    #[command(flatten)]
    codec: CodecOpts,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    model: ModelSpec,
    /// Token sequence supplying contexts; required for n-gram models
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "byte")]
    alphabet: AlphabetSpec,
    /// Rank window lo:hi for the regression [default: 6:<alphabet/10>]
    #[arg(long)]
    window: Option<String>,
    /// Fit at most this many positions, evenly spaced
    #[arg(long, default_value_t = 2000)]
    max_positions: usize,
    #[command(flatten)]
    codec: CodecOpts,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    /// Power-law exponent of the rank body
    #[arg(long)]
    alpha: f64,
    /// Certified mismatch factor in probability space
    #[arg(long, default_value = "10/3")]
    c: Rational,
    /// Bucket count for the suggested partition
    #[arg(long, default_value_t = 33)]
    count: u16,
    /// Largest denominator in the suggested rational ratio
    #[arg(long, default_value_t = 1000)]
    max_den: u32,
    /// Write the exact boundaries, usable as --buckets file:<path>
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_USAGE as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let result = match cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::Decompress(a) => commands::decompress(a),
        Command::Train(a) => commands::train(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::OptimizeBuckets(a) => commands::optimize_buckets(a),
        Command::Simulate(a) => simulate::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("bucketzip: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
