use std::fmt::Write as _;
use std::path::PathBuf;

use bucketzip::alphabet::mix64;
use bucketzip::bits::{BitCursor, BitReader};
use bucketzip::codec::decode_token;
use bucketzip::{
    encode_sequence, CodecParams, LongformTable, MismatchCertificate, NGramModel, Perturbed, Predictor, Rational,
    TokenId,
};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{read, write, CliError, CliResult, EXIT_OK};
use crate::values::{AlphabetSpec, BucketsSpec, CodeSpec, Model, ModelSpec, PerturbSpec};

const DEFAULT_Q: &str = "0.02,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Directory of corpus files; each file is one sequence, ordered by name
    corpus: PathBuf,
    /// ngram:<path>; if omitted an n-gram is trained on the corpus itself
    #[arg(long)]
    model: Option<ModelSpec>,
    #[arg(long, default_value_t = 3)]
    order: u8,
    #[arg(long, default_value_t = 0.02)]
    delta: f64,
    #[arg(long, default_value = "byte")]
    alphabet: AlphabetSpec,
    /// Comma-separated q = 1/c values
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_Q)]
    q: Vec<Rational>,
    /// Decoder-side perturbation draws per sequence
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Decoder-side mismatch <c_sim>:<certified|stress>:<seed>; none means identical models
    #[arg(long)]
    perturb: Option<PerturbSpec>,
    /// Truncate each file to this many bytes
    #[arg(long)]
    max_bytes: Option<usize>,
    #[arg(long, default_value = "geometric:1/8:33")]
    buckets: BucketsSpec,
    #[arg(long, default_value = "unary")]
    code: CodeSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub q: String,
    pub c: String,
    pub sequences: usize,
    pub trials: u32,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub token_accuracy: f64,
    pub exact_fraction: f64,
    pub failed_decodes: u64,
    pub mean_bits_per_token: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    schema: &'static str,
    sequences: Vec<String>,
    perturb: Option<String>,
    rows: Vec<SweepRow>,
}

struct SeqOutcome {
    ratio: f64,
    bits: u64,
    tokens: u64,
    /// Correct tokens per trial, and whether decoding ran to the end.
    trials: Vec<(u64, bool)>,
}

/// Decodes as far as possible; a failure keeps the tokens decoded so far.
fn decode_partial<P: Predictor>(
    model: &P,
    payload: &[u8],
    bits: u64,
    count: usize,
    params: &CodecParams,
) -> (Vec<TokenId>, bool) {
    let mut cursor = BitCursor::new(BitReader::new(payload, bits));
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let step = model
            .next_distribution(i, &out)
            .and_then(|d| decode_token(&d, &mut cursor, params, i));
        match step {
            Ok(d) => out.push(d.token),
            Err(_) => return (out, false),
        }
    }
    (out, cursor.remaining() == 0)
}

pub fn run(args: SimulateArgs) -> CliResult<i32> {
    let alphabet = args.alphabet.load()?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.corpus)
        .map_err(|source| CliError::Io {
            path: args.corpus.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut names = Vec::new();
    let mut sequences = Vec::new();
    for f in &files {
        let mut raw = read(f)?;
        if let Some(m) = args.max_bytes {
            raw.truncate(m);
        }
        if raw.is_empty() {
            continue;
        }
        sequences.push((alphabet.tokenize(&raw)?, raw.len()));
        names.push(
            f.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    if sequences.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no nonempty corpus files",
            args.corpus.display()
        )));
    }
    let model = match &args.model {
        Some(spec @ ModelSpec::NGram(_)) => spec.load()?,
        Some(ModelSpec::Replay(_)) => {
            return Err(CliError::Usage(
                "simulate needs a context model; replay files cover one sequence".into(),
            ))
        }
        None => {
            let m = NGramModel::train(
                alphabet.size(),
                args.order,
                args.delta,
                sequences.iter().map(|(t, _)| t.as_slice()),
            )?;
            let sha256 = m.content_hash();
            Model::NGram { model: m, sha256 }
        }
    };
    if model.alphabet_size() != alphabet.size() {
        return Err(CliError::ModelBinding(format!(
            "model predicts {} tokens, alphabet has {}",
            model.alphabet_size(),
            alphabet.size()
        )));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }

    let partition = args.buckets.load()?;
    let code = args.code.load(partition.len())?;
    let mut rows = Vec::new();
    for &q in &args.q {
        if q.num() == 0 || q.num() > q.den() {
            return Err(CliError::Usage(format!("q = {q} must be in (0, 1]")));
        }
        let c = q.recip();
        let params = CodecParams::new(
            partition.clone(),
            code.clone(),
            LongformTable::new(args.seed, alphabet.size()),
            MismatchCertificate::new(c)?,
        )?;
        let outcomes = sequences
            .par_iter()
            .enumerate()
            .map(|(id, (tokens, raw_len))| -> CliResult<SeqOutcome> {
                let enc = encode_sequence(&model, tokens, &params)?;
                let (payload, bits) = enc.payload.into_parts();
                let trials = (0..args.trials)
                    .map(|t| {
                        let (got, ok) = match args.perturb {
                            None => decode_partial(&model, &payload, bits, tokens.len(), &params),
                            Some(p) => {
                                let seed = mix64(p.seed ^ mix64((id as u64) << 32 | t as u64));
                                let q_model = Perturbed::new(&model, p.c_sim, seed, p.mode);
                                decode_partial(&q_model, &payload, bits, tokens.len(), &params)
                            }
                        };
                        let correct = got.iter().zip(tokens).filter(|(a, b)| a == b).count() as u64;
                        (correct, ok && got.len() == tokens.len())
                    })
                    .collect();
                Ok(SeqOutcome {
                    ratio: *raw_len as f64 / payload.len().max(1) as f64,
                    bits,
                    tokens: tokens.len() as u64,
                    trials,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(aggregate(q, c, args.trials, &outcomes));
    }

    let mut table = String::from(
        "q\tc\tsequences\ttrials\tmean_ratio\tstd_ratio\ttoken_accuracy\texact_fraction\tfailed_decodes\tbits_per_token\n",
    );
    for r in &rows {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.6}\t{:.4}\t{}\t{:.4}",
            r.q,
            r.c,
            r.sequences,
            r.trials,
            r.mean_ratio,
            r.std_ratio,
            r.token_accuracy,
            r.exact_fraction,
            r.failed_decodes,
            r.mean_bits_per_token
        );
    }
    print!("{table}");
    if let Some(p) = &args.json {
        let report = SimulateReport {
            schema: "bucketzip.simulate.v1",
            sequences: names,
            perturb: args
                .perturb
                .map(|p| format!("{}:{:?}:{}", p.c_sim, p.mode, p.seed).to_lowercase()),
            rows,
        };
        write(
            p,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    Ok(EXIT_OK)
}

fn aggregate(q: Rational, c: Rational, trials: u32, outcomes: &[SeqOutcome]) -> SweepRow {
    let n = outcomes.len() as f64;
    let mean_ratio = outcomes.iter().map(|o| o.ratio).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.ratio - mean_ratio).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let runs = n * trials as f64;
    let mut accuracy = 0.0;
    let (mut exact, mut failed) = (0u64, 0u64);
    for o in outcomes {
        for &(correct, ok) in &o.trials {
            accuracy += correct as f64 / o.tokens as f64;
            exact += (ok && correct == o.tokens) as u64;
            failed += !ok as u64;
        }
    }
    let tokens: u64 = outcomes.iter().map(|o| o.tokens).sum();
    let bits: u64 = outcomes.iter().map(|o| o.bits).sum();
    SweepRow {
        q: q.to_string(),
        c: c.to_string(),
        sequences: outcomes.len(),
        trials,
        mean_ratio,
        std_ratio: var.sqrt(),
        token_accuracy: accuracy / runs,
        exact_fraction: exact as f64 / runs,
        failed_decodes: failed,
        mean_bits_per_token: bits as f64 / tokens as f64,
    }
}
