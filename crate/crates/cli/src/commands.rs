use std::cell::Cell;
use std::fmt::Write as _;
use std::path::PathBuf;

use bucketzip::analysis::{
    default_window, estimate_expected_length, fit_power_law, optimize_gamma, power_law_entropy, rank_mismatch,
    summarize_run, RunSummary,
};
use bucketzip::buckets::entropy_bits;
use bucketzip::codec::IntegrityFlag;
use bucketzip::predictor::worst_log_ratio;
use bucketzip::{
    calibrate_huffman, decode_sequence, encode_sequence, perturb, BucketCode, BucketPartition, Container, Header,
    NGramModel, PartitionSpec, Perturbed, PredictiveDistribution, Predictor, Rational, TokenId,
};
use serde::Serialize;

use crate::error::{read, write, CliError, CliResult, EXIT_FLAGGED, EXIT_OK};
use crate::values::{format_boundaries, AlphabetSpec, Model, PerturbSpec};
use crate::{AnalyzeArgs, CalibrateArgs, CompressArgs, DecompressArgs, OptimizeArgs, TrainArgs};

fn write_json(path: &Option<PathBuf>, value: &impl Serialize) -> CliResult<()> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        write(p, text + "\n")?;
    }
    Ok(())
}

fn check_alphabet(model: &Model, size: u32) -> CliResult<()> {
    if model.alphabet_size() != size {
        return Err(CliError::ModelBinding(format!(
            "model predicts {} tokens, alphabet has {size}",
            model.alphabet_size()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CompressReport {
    schema: &'static str,
    input: String,
    container_bytes: u64,
    payload_bits: u64,
    c: String,
    seed: u64,
    buckets: usize,
    code: String,
    summary: RunSummary,
}

pub fn compress(args: CompressArgs) -> CliResult<i32> {
    let raw = read(&args.input)?;
    let alphabet = args.alphabet.load()?;
    let tokens = alphabet.tokenize(&raw)?;
    let model = args.model.load()?;
    check_alphabet(&model, alphabet.size())?;
    let params = args.codec.params(alphabet.size())?;

    let enc = encode_sequence(&model, &tokens, &params)?;
    let (payload, bits) = enc.payload.into_parts();
    if let Some(p) = &args.raw_bits {
        write(p, &payload)?;
    }
    let header = Header::from_params(&params, alphabet.kind(), model.binding(), tokens.len() as u64, bits);
    let file = Container::new(header, payload)?.to_bytes();
    let out = args.output.clone().unwrap_or_else(|| {
        let mut p = args.input.clone().into_os_string();
        p.push(".bkz");
        p.into()
    });
    write(&out, &file)?;

    let mut kv = format!(
        "container={}\ncontainer_bytes={}\npayload_bits={bits}\n",
        out.display(),
        file.len()
    );
    if tokens.is_empty() {
        kv.push_str("tokens=0\n");
        print!("{kv}");
        return Ok(EXIT_OK);
    }
    let summary = summarize_run(&enc.stats, params.partition().len(), raw.len() as u64 * 8)?;
    kv.push_str(&summary.to_kv());
    print!("{kv}");
    write_json(
        &args.json,
        &CompressReport {
            schema: "bucketzip.compress.v1",
            input: args.input.display().to_string(),
            container_bytes: file.len() as u64,
            payload_bits: bits,
            c: params.certificate().c().to_string(),
            seed: args.codec.seed,
            buckets: params.partition().len(),
            code: format!("{:?}", params.code().kind()).to_lowercase(),
            summary,
        },
    )?;
    Ok(EXIT_OK)
}

/// Perturbs the wrapped model and remembers the largest log-ratio it produced.
struct Measured<'a> {
    inner: Perturbed<&'a Model>,
    worst: Cell<f64>,
}

impl Predictor for Measured<'_> {
    fn alphabet_size(&self) -> u32 {
        self.inner.alphabet_size()
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> bucketzip::Result<PredictiveDistribution> {
        let base = self.inner.inner.next_distribution(position, context)?;
        let q = perturb(
            &base,
            self.inner.c_sim,
            self.inner.position_seed(position),
            self.inner.mode,
        )?;
        self.worst.set(self.worst.get().max(worst_log_ratio(&base, &q)));
        Ok(q)
    }
}

#[derive(Serialize)]
struct PerturbReport {
    c_sim: String,
    mode: String,
    seed: u64,
    worst_ratio: f64,
    within_certificate: bool,
}

#[derive(Serialize)]
struct DecompressReport {
    schema: &'static str,
    tokens: u64,
    output_bytes: u64,
    certified_c: String,
    flags: Vec<IntegrityFlag>,
    unconsumed_bits: u64,
    perturb: Option<PerturbReport>,
}

pub fn decompress(args: DecompressArgs) -> CliResult<i32> {
    let file = Container::from_bytes(&read(&args.input)?)?;
    let h = &file.header;
    let params = h.codec_params()?;
    let alphabet = AlphabetSpec::for_header(args.alphabet.as_ref(), h.alphabet_kind, h.alphabet_size)?;
    let model = args.model.load()?;
    check_alphabet(&model, h.alphabet_size)?;
    model.check_binding(&h.model, h.token_count)?;
    let count = usize::try_from(h.token_count).map_err(|_| CliError::Usage("token count too large".into()))?;

    let (outcome, perturb_report) = match args.perturb {
        None => (
            decode_sequence(&model, &file.payload, h.payload_bits, count, &params)?,
            None,
        ),
        Some(PerturbSpec { c_sim, mode, seed }) => {
            let measured = Measured {
                inner: Perturbed::new(&model, c_sim, seed, mode),
                worst: Cell::new(0.0),
            };
            let out = decode_sequence(&measured, &file.payload, h.payload_bits, count, &params)?;
            let worst = measured.worst.get();
            let report = PerturbReport {
                c_sim: c_sim.to_string(),
                mode: format!("{mode:?}").to_lowercase(),
                seed,
                worst_ratio: worst.exp(),
                within_certificate: worst == 0.0 || worst < h.c.ln(),
            };
            (out, Some(report))
        }
    };
    let bytes = alphabet.detokenize(&outcome.tokens)?;
    write(&args.output, &bytes)?;

    let report = DecompressReport {
        schema: "bucketzip.decompress.v1",
        tokens: outcome.tokens.len() as u64,
        output_bytes: bytes.len() as u64,
        certified_c: h.c.to_string(),
        flags: outcome.flags,
        unconsumed_bits: outcome.unconsumed_bits,
        perturb: perturb_report,
    };
    let mut kv = String::new();
    let _ = writeln!(kv, "output={}", args.output.display());
    let _ = writeln!(kv, "tokens={}", report.tokens);
    let _ = writeln!(kv, "output_bytes={}", report.output_bytes);
    let _ = writeln!(kv, "certified_c={}", report.certified_c);
    let _ = writeln!(kv, "integrity_flags={}", report.flags.len());
    for f in &report.flags {
        let _ = writeln!(kv, "flag=position:{},tied:{}", f.position, f.tied);
    }
    let _ = writeln!(kv, "unconsumed_bits={}", report.unconsumed_bits);
    if let Some(p) = &report.perturb {
        let _ = writeln!(kv, "perturb={}:{}:{}", p.c_sim, p.mode, p.seed);
        let _ = writeln!(kv, "worst_ratio={:.6}", p.worst_ratio);
        let _ = writeln!(kv, "within_certificate={}", p.within_certificate);
    }
    print!("{kv}");
    write_json(&args.json, &report)?;
    Ok(if report.flags.is_empty() && report.unconsumed_bits == 0 {
        EXIT_OK
    } else {
        EXIT_FLAGGED
    })
}

pub fn train(args: TrainArgs) -> CliResult<i32> {
    let alphabet = args.alphabet.load()?;
    let corpora = args
        .inputs
        .iter()
        .map(|p| Ok(alphabet.tokenize(&read(p)?)?))
        .collect::<CliResult<Vec<_>>>()?;
    let model = NGramModel::train(
        alphabet.size(),
        args.order,
        args.delta,
        corpora.iter().map(Vec::as_slice),
    )?;
    let bytes = model.to_bytes();
    write(&args.output, &bytes)?;
    let hash: String = model.content_hash().iter().map(|b| format!("{b:02x}")).collect();
    println!("model={}", args.output.display());
    println!("alphabet_size={}", alphabet.size());
    println!("order={}", args.order);
    println!("contexts={}", model.context_count());
    println!("training_tokens={}", corpora.iter().map(Vec::len).sum::<usize>());
    println!("sha256={hash}");
    Ok(EXIT_OK)
}

pub fn calibrate(args: CalibrateArgs) -> CliResult<i32> {
    let alphabet = args.alphabet.load()?;
    let model = args.model.load()?;
    check_alphabet(&model, alphabet.size())?;
    let params = args.codec.params(alphabet.size())?;
    let buckets = params.partition().len();
    let mut counts = vec![0u64; buckets];
    for p in &args.inputs {
        let tokens = alphabet.tokenize(&read(p)?)?;
        for s in encode_sequence(&model, &tokens, &params)?.stats {
            counts[s.bucket as usize] += 1;
        }
    }
    let code = calibrate_huffman(&counts)?;
    let unary = BucketCode::unary(buckets)?;
    let h = entropy_bits(&counts);
    let (eh, eu) = (code.expected_length(&counts), unary.expected_length(&counts));

    let mut text = String::from("# bucket code calibrated by bucketzip; use with --code huffman:<this file>\n");
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
    let _ = writeln!(text, "buckets={buckets}");
    let _ = writeln!(text, "lengths={}", join(&mut code.lengths().iter().map(u8::to_string)));
    let _ = writeln!(text, "counts={}", join(&mut counts.iter().map(u64::to_string)));
    let _ = writeln!(text, "bucket_entropy={h:.6}");
    let _ = writeln!(text, "mean_codeword_bits={eh:.6}");
    let _ = writeln!(text, "kappa={:.6}", eh - h);
    let _ = writeln!(text, "unary_mean_codeword_bits={eu:.6}");
    write(&args.output, &text)?;
    print!("{}", text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AnalyzeReport {
    schema: &'static str,
    positions: usize,
    window: (usize, usize),
    alpha_mean: f64,
    alpha_median: f64,
    mean_r_squared: f64,
    c: String,
    c_star: f64,
    gamma_star: f64,
    gamma: f64,
    at_domain_edge: bool,
    h_t: f64,
    kappa: Option<f64>,
    estimate_constant: f64,
    estimated_bits_per_token: f64,
    measured_bits_per_token: Option<f64>,
}

pub fn analyze(args: AnalyzeArgs) -> CliResult<i32> {
    let model = args.model.load()?;
    let size = model.alphabet_size();
    let tokens: Option<Vec<TokenId>> = match &args.input {
        Some(p) => {
            let alphabet = args.alphabet.load()?;
            check_alphabet(&model, alphabet.size())?;
            Some(alphabet.tokenize(&read(p)?)?)
        }
        None => None,
    };
    let positions = match (&model, &tokens) {
        (_, Some(t)) => t.len(),
        (Model::Replay(r), None) => r.records(),
        (Model::NGram { .. }, None) => {
            return Err(CliError::Usage(
                "analyze needs --input to supply contexts for an n-gram model".into(),
            ))
        }
    };
    if positions == 0 {
        return Err(CliError::Usage("nothing to analyze".into()));
    }
    let window = match &args.window {
        Some(w) => {
            let (lo, hi) = w
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("bad window {w:?}")))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad window {w:?}")))
            };
            (parse(lo)?, parse(hi)?)
        }
        None => default_window(size as usize),
    };

    let stride = positions.div_ceil(args.max_positions.max(1));
    let empty = Vec::new();
    let ctx = tokens.as_ref().unwrap_or(&empty);
    let mut alphas = Vec::new();
    let mut r2 = 0.0;
    for i in (0..positions).step_by(stride) {
        let dist = model.next_distribution(i, &ctx[..i.min(ctx.len())])?;
        let fit = fit_power_law(&dist, window)?;
        alphas.push(fit.alpha);
        r2 += fit.r2;
    }
    let n = alphas.len();
    let alpha_mean = alphas.iter().sum::<f64>() / n as f64;
    alphas.sort_by(f64::total_cmp);
    let alpha_median = if n % 2 == 1 {
        alphas[n / 2]
    } else {
        0.5 * (alphas[n / 2 - 1] + alphas[n / 2])
    };

    let c = args.codec.mismatch()?;
    let (kappa, measured) = match &tokens {
        Some(t) => {
            let params = args.codec.params_with(size, c)?;
            let enc = encode_sequence(&model, t, &params)?;
            let s = summarize_run(&enc.stats, params.partition().len(), 0)?;
            (Some(s.kappa), Some(s.mean_bits))
        }
        None => (None, None),
    };
    let h_t = power_law_entropy(alpha_mean)?;
    let est = estimate_expected_length(alpha_mean, c.to_f64(), kappa.unwrap_or(0.0), h_t)?;
    let report = AnalyzeReport {
        schema: "bucketzip.analyze.v1",
        positions: n,
        window,
        alpha_mean,
        alpha_median,
        mean_r_squared: r2 / n as f64,
        c: c.to_string(),
        c_star: est.c_star,
        gamma_star: est.design.gamma_star,
        gamma: est.design.gamma,
        at_domain_edge: est.design.at_domain_edge,
        h_t,
        kappa,
        estimate_constant: est.constant,
        estimated_bits_per_token: est.bits,
        measured_bits_per_token: measured,
    };
    println!("positions={}", report.positions);
    println!("window={}:{}", window.0, window.1);
    println!("alpha_mean={:.6}", report.alpha_mean);
    println!("alpha_median={:.6}", report.alpha_median);
    println!("mean_r_squared={:.6}", report.mean_r_squared);
    println!("c={}", report.c);
    println!("c_star={:.6}", report.c_star);
    println!("gamma_star={:.6}", report.gamma_star);
    println!("gamma={:.6}", report.gamma);
    println!("h_t={:.6}", report.h_t);
    println!("estimate_constant={:.6}", report.estimate_constant);
    match kappa {
        Some(k) => println!("kappa={k:.6}"),
        None => println!("kappa=unmeasured"),
    }
    println!("estimated_bits_per_token={:.6}", report.estimated_bits_per_token);
    if let Some(m) = measured {
        println!("measured_bits_per_token={m:.6}");
    }
    write_json(&args.json, &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct OptimizeReport {
    schema: &'static str,
    alpha: f64,
    c: String,
    c_star: f64,
    gamma_star: f64,
    gamma: f64,
    zeta: f64,
    at_domain_edge: bool,
    suggested_buckets: String,
}

pub fn optimize_buckets(args: OptimizeArgs) -> CliResult<i32> {
    if args.count < 2 {
        return Err(CliError::Usage("need at least 2 buckets".into()));
    }
    let c_star = rank_mismatch(args.c.to_f64(), args.alpha);
    let design = optimize_gamma(args.alpha, c_star)?;
    let gamma = Rational::approximate(design.gamma, args.max_den)?;
    let suggested = format!("geometric:{gamma}:{}", args.count);
    // Valid only if the rounded ratio still yields a partition.
    BucketPartition::new(PartitionSpec::Geometric {
        gamma,
        count: args.count,
    })?;
    println!("alpha={}", args.alpha);
    println!("c={}", args.c);
    println!("c_star={c_star:.6}");
    println!("gamma_star={:.6}", design.gamma_star);
    println!("gamma={:.6}", design.gamma);
    println!("zeta={:.6}", design.objective_value);
    println!("at_domain_edge={}", design.at_domain_edge);
    println!("suggested_buckets={suggested}");
    if let Some(p) = &args.output {
        let mut boundaries: Vec<f64> = (1..args.count)
            .scan(1.0f64, |v, _| {
                *v *= design.gamma;
                Some(*v)
            })
            .collect();
        boundaries.reverse();
        let comment = format!(
            "gamma = {} over {} buckets; use with --buckets file:<this file>",
            design.gamma, args.count
        );
        write(p, format_boundaries(&boundaries, &comment))?;
        println!("boundaries={}", p.display());
    }
    write_json(
        &args.json,
        &OptimizeReport {
            schema: "bucketzip.optimize.v1",
            alpha: args.alpha,
            c: args.c.to_string(),
            c_star,
            gamma_star: design.gamma_star,
            gamma: design.gamma,
            zeta: design.objective_value,
            at_domain_edge: design.at_domain_edge,
            suggested_buckets: suggested,
        },
    )?;
    Ok(EXIT_OK)
}
