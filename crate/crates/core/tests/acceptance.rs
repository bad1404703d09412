//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::time::Instant;

use bucketzip::analysis::{
    estimate_expected_length, eta_expected, eta_monte_carlo, optimize_gamma, power_law_entropy, summarize_run,
};
use bucketzip::buckets::entropy_bits;
use bucketzip::{
    calibrate_huffman, decode_sequence, encode_sequence, AlphabetKind, BucketCode, CodecParams, Container, Header,
    ModelBinding, NGramModel, PerturbMode, Perturbed, Rational, TokenAlphabet, TokenId, TokenStats,
};
use common::{default_params, markov_corpus, rat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C_VALUES: [(u32, u32); 3] = [(3, 2), (2, 1), (10, 3)];

// Criterion 1
const CERTIFIED_TRIALS: usize = 1200;
const MAX_ALPHABET: u32 = 64;
const MAX_LEN: usize = 256;

// Criterion 2
const CORPUS_BYTES: usize = 1 << 20;
const ROUNDTRIP_SECONDS: f64 = 60.0;

// Criterion 3
const ETA_TRIALS: u64 = 100_000;
const ETA_SERIES_TOL: f64 = 0.05;
const ETA_EXCESS_MAX: f64 = 0.45;
const ETA_DOUBLING_TOL: f64 = 0.05;

// Criterion 4
const GAMMA_STAR_EXPECTED: f64 = 3.748;
const GAMMA_STAR_TOL: f64 = 0.01;
const GAMMA_EXPECTED: f64 = 0.0922;
const GAMMA_TOL: f64 = 0.0005;

// Criterion 7
const CONSTANT_EXPECTED: f64 = 5.01;
const CONSTANT_TOL: f64 = 0.02;

// Criterion 8
const STRESS_SEQUENCES: usize = 100;
const STRESS_C: (u32, u32) = (3, 2);

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn line(&mut self, n: u32, pass: bool, detail: String) {
        println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(n);
        }
    }
}

/// Tally for the token-by-token length check.
#[derive(Default)]
struct Accounting {
    tokens: u64,
    mismatches: u64,
}

impl Accounting {
    fn check(&mut self, code: &BucketCode, stats: &[TokenStats], consumed: &[u32]) {
        for (s, &used) in stats.iter().zip(consumed) {
            let a = code.lengths()[s.bucket as usize] as i64;
            let expected = if s.m >= 0 { a + s.m + 2 } else { a + 1 };
            self.tokens += 1;
            if used as i64 != expected || s.bits as i64 != expected {
                self.mismatches += 1;
            }
        }
        if stats.len() != consumed.len() {
            self.mismatches += 1;
        }
    }
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    let mut accounting = Accounting::default();

    certified_trials(&mut report, &mut accounting);
    let counts = mixed_corpus_roundtrip(&mut report, &mut accounting);
    eta_bound(&mut report);
    optimizer(&mut report);
    report.line(
        5,
        accounting.mismatches == 0 && accounting.tokens > 0,
        format!(
            "{} tokens checked, {} mismatches",
            accounting.tokens, accounting.mismatches
        ),
    );
    huffman_gap(&mut report, &counts);
    estimator(&mut report);
    stress(&mut report);

    if report.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {:?}", report.failed);
        std::process::exit(1);
    }
}

/// An n-gram model trained on one stretch of a random Markov source and a
/// test sequence drawn from the rest.
fn ngram_trial(rng: &mut ChaCha8Rng, size: u32, len: usize) -> (NGramModel, Vec<TokenId>) {
    let order = rng.gen_range(1..=3u8);
    let corpus = markov_corpus(size, 4000 + len, rng);
    let (train, test) = corpus.split_at(4000);
    let model = NGramModel::train(size, order, 0.5, [train]).unwrap();
    (model, test.to_vec())
}

fn certified_trials(report: &mut Report, accounting: &mut Accounting) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut tokens, mut correct, mut flagged, mut errors) = (0u64, 0u64, 0u64, 0u64);
    for trial in 0..CERTIFIED_TRIALS {
        let (n, d) = C_VALUES[trial % C_VALUES.len()];
        let c = rat(n, d);
        let size = rng.gen_range(2..=MAX_ALPHABET);
        let len = rng.gen_range(1..=MAX_LEN);
        let (model, seq) = ngram_trial(&mut rng, size, len);
        let params = default_params(size, c, rng.gen());
        let enc = encode_sequence(&model, &seq, &params).unwrap();
        let decoder = Perturbed::new(&model, c, rng.gen(), PerturbMode::Certified);
        let (bytes, bits) = enc.payload.into_parts();
        tokens += len as u64;
        match decode_sequence(&decoder, &bytes, bits, len, &params) {
            Ok(out) => {
                correct += out.tokens.iter().zip(&seq).filter(|(a, b)| a == b).count() as u64;
                flagged += out.flags.len() as u64;
                accounting.check(params.code(), &enc.stats, &out.consumed);
            }
            Err(_) => errors += 1,
        }
    }
    let accuracy = correct as f64 / tokens as f64;
    report.line(
        1,
        correct == tokens && flagged == 0 && errors == 0,
        format!(
            "{CERTIFIED_TRIALS} trials, c in {{3/2, 2, 10/3}}: accuracy {accuracy:.6} ({correct}/{tokens}), \
             {flagged} flags, {errors} decode errors"
        ),
    );
}

/// Deterministic mix of prose, tabular numbers, log lines and binary noise.
fn mixed_corpus(len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let syllables = [
        "ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "an", "er", "is", "on", "th", "qu", "st", "br",
    ];
    let vocab: Vec<String> = (0..3000)
        .map(|_| {
            (0..rng.gen_range(1..=4))
                .map(|_| syllables[rng.gen_range(0..syllables.len())])
                .collect()
        })
        .collect();
    let zipf = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.gen();
        ((vocab.len() as f64).powf(u) as usize).min(vocab.len()) - 1
    };
    let mut out = Vec::with_capacity(len + 4096);
    let mut line = 0u64;
    while out.len() < len {
        match rng.gen_range(0..100) {
            0..=59 => {
                for w in 0..rng.gen_range(5..40) {
                    if w > 0 {
                        out.push(b' ');
                    }
                    out.extend_from_slice(vocab[zipf(&mut rng)].as_bytes());
                }
                out.extend_from_slice(b".\n");
            }
            60..=79 => {
                let cols: Vec<String> = (0..6)
                    .map(|_| format!("{:.3}", rng.gen_range(-1000.0..1000.0)))
                    .collect();
                out.extend_from_slice(format!("{line},{}\n", cols.join(",")).as_bytes());
            }
            80..=97 => {
                let level = ["INFO", "WARN", "DEBUG", "ERROR"][rng.gen_range(0..4)];
                out.extend_from_slice(
                    format!(
                        "2024-03-{:02}T{:02}:{:02}:{:02}Z {level} worker={} {}\n",
                        rng.gen_range(1..29),
                        rng.gen_range(0..24),
                        rng.gen_range(0..60),
                        rng.gen_range(0..60),
                        rng.gen_range(0..16),
                        vocab[zipf(&mut rng)]
                    )
                    .as_bytes(),
                );
            }
            _ => out.extend((0..rng.gen_range(16..256)).map(|_| rng.gen::<u8>())),
        }
        line += 1;
    }
    out.truncate(len);
    out
}

fn mixed_corpus_roundtrip(report: &mut Report, accounting: &mut Accounting) -> Vec<u64> {
    let raw = mixed_corpus(CORPUS_BYTES);
    let alphabet = TokenAlphabet::bytes();
    let tokens = alphabet.tokenize(&raw).unwrap();
    let model = NGramModel::train(256, 3, 0.5, [tokens.as_slice()]).unwrap();
    let params = default_params(256, rat(10, 3), 0x6b75_636b);

    let start = Instant::now();
    let enc = encode_sequence(&model, &tokens, &params).unwrap();
    let (bytes, bits) = enc.payload.into_parts();
    let header = Header::from_params(
        &params,
        AlphabetKind::Byte,
        ModelBinding::NGram {
            sha256: model.content_hash(),
        },
        tokens.len() as u64,
        bits,
    );
    let file = Container::new(header, bytes).unwrap().to_bytes();
    let parsed = Container::from_bytes(&file).unwrap();
    let dparams: CodecParams = parsed.header.codec_params().unwrap();
    let out = decode_sequence(
        &model,
        &parsed.payload,
        parsed.header.payload_bits,
        parsed.header.token_count as usize,
        &dparams,
    )
    .unwrap();
    let restored = alphabet.detokenize(&out.tokens).unwrap();
    let secs = start.elapsed().as_secs_f64();

    accounting.check(params.code(), &enc.stats, &out.consumed);
    let summary = summarize_run(&enc.stats, params.partition().len(), raw.len() as u64 * 8).unwrap();
    let exact = restored == raw && out.flags.is_empty() && out.unconsumed_bits == 0;
    report.line(
        2,
        exact && secs <= ROUNDTRIP_SECONDS,
        format!(
            "{} bytes, order-3 byte n-gram: identical={exact}, {secs:.1}s (limit {ROUNDTRIP_SECONDS}s), \
             ratio {:.3}, {:.3} bits/token",
            raw.len(),
            summary.compression_ratio,
            summary.mean_bits
        ),
    );
    summary.bucket_counts
}

/// `sum_i [1 - (1 - 2^-i)^n]` by direct powers.
fn eta_series(n: u64) -> f64 {
    (1..=200).map(|i| 1.0 - (1.0 - 0.5f64.powi(i)).powf(n as f64)).sum()
}

fn eta_bound(report: &mut Report) {
    let exps = [8u32, 9, 10, 11, 12];
    let mut means = Vec::new();
    let mut ok = true;
    let mut detail = Vec::new();
    for &e in &exps {
        let u = 1u64 << e;
        let est = eta_monte_carlo(u, ETA_TRIALS, 3 + e as u64).unwrap();
        let series = eta_series(u) - e as f64;
        ok &= (est.excess - series).abs() <= ETA_SERIES_TOL && est.excess <= ETA_EXCESS_MAX;
        ok &= (eta_expected(u) - eta_series(u)).abs() < 1e-9;
        detail.push(format!("2^{e}: excess {:.4} (series {series:.4})", est.excess));
        means.push(est.mean_eta);
    }
    let steps: Vec<f64> = means.windows(2).map(|w| w[1] - w[0]).collect();
    ok &= steps.iter().all(|s| (s - 1.0).abs() <= ETA_DOUBLING_TOL);
    let steps: Vec<String> = steps.iter().map(|s| format!("{s:.4}")).collect();
    report.line(
        3,
        ok,
        format!(
            "{ETA_TRIALS} trials each; {}; doubling steps [{}]",
            detail.join(", "),
            steps.join(", ")
        ),
    );
}

fn optimizer(report: &mut Report) {
    let d = optimize_gamma(1.804, 1.95).unwrap();
    report.line(
        4,
        (d.gamma_star - GAMMA_STAR_EXPECTED).abs() <= GAMMA_STAR_TOL
            && (d.gamma - GAMMA_EXPECTED).abs() <= GAMMA_TOL
            && !d.at_domain_edge,
        format!(
            "alpha 1.804, c* 1.95: gamma* {:.4}, gamma {:.6}, zeta {:.5}",
            d.gamma_star, d.gamma, d.objective_value
        ),
    );
}

fn huffman_gap(report: &mut Report, counts: &[u64]) {
    let code = calibrate_huffman(counts).unwrap();
    let gap = code.expected_length(counts) - entropy_bits(counts);
    report.line(
        6,
        (0.0..1.0).contains(&gap),
        format!(
            "calibrated on the mixed corpus: E|A| {:.5}, H {:.5}, gap {gap:.5}",
            code.expected_length(counts),
            entropy_bits(counts)
        ),
    );
}

fn estimator(report: &mut Report) {
    let c = Rational::new(10, 3).unwrap().to_f64();
    let h_t = power_law_entropy(1.804).unwrap();
    let est = estimate_expected_length(1.804, c, 0.0, h_t).unwrap();
    report.line(
        7,
        (est.constant - CONSTANT_EXPECTED).abs() <= CONSTANT_TOL,
        format!(
            "alpha 1.804, c 10/3: c* {:.4}, constant {:.4}, h[T] {h_t:.4}, kappa + {:.3}",
            est.c_star, est.constant, est.bits
        ),
    );
}

/// Sequences that decode to anything other than the input, or fail to decode.
fn failures(mode: PerturbMode, c_sim: Rational, c: Rational) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    for _ in 0..STRESS_SEQUENCES {
        let (model, seq) = ngram_trial(&mut rng, MAX_ALPHABET, MAX_LEN);
        let params = default_params(MAX_ALPHABET, c, rng.gen());
        let enc = encode_sequence(&model, &seq, &params).unwrap();
        let decoder = Perturbed::new(&model, c_sim, rng.gen(), mode);
        let (bytes, bits) = enc.payload.into_parts();
        match decode_sequence(&decoder, &bytes, bits, seq.len(), &params) {
            Ok(out) if out.tokens == seq => {}
            _ => bad += 1,
        }
    }
    bad
}

fn stress(report: &mut Report) {
    let c = rat(STRESS_C.0, STRESS_C.1);
    let double = rat(2 * STRESS_C.0, STRESS_C.1);
    let certified = failures(PerturbMode::Certified, c, c);
    let stressed = failures(PerturbMode::Stress, double, c);
    report.line(
        8,
        certified == 0 && stressed >= 1,
        format!(
            "{STRESS_SEQUENCES} sequences at c {c}: certified c_sim {c} -> {certified} failures, \
             stress c_sim {double} -> {stressed} failures"
        ),
    );
}
