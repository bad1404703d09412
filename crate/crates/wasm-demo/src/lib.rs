//! Browser bindings for three interactive views of the codec. Each binding
//! returns a JSON string; the plain-Rust functions behind them are what the
//! tests exercise.

use std::collections::BTreeMap;

use bucketzip::analysis::{eta_expected, eta_monte_carlo, optimize_gamma, rank_mismatch, zeta_objective};
use bucketzip::{
    decode_sequence, encode_sequence, BucketCode, BucketPartition, CodecParams, LongformTable, MismatchCertificate,
    NGramModel, PartitionSpec, Rational, TokenAlphabet,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_ETA_WORK: u64 = 1 << 28;
const MAX_TEXT_BYTES: usize = 1 << 20;

#[derive(Debug, Serialize)]
pub struct ZetaCurve {
    pub alpha: f64,
    pub c: f64,
    pub c_star: f64,
    pub gamma_star: Vec<f64>,
    pub zeta: Vec<f64>,
    pub best_gamma_star: f64,
    pub best_gamma: f64,
    pub best_zeta: f64,
    pub at_domain_edge: bool,
}

/// Objective sampled on a log grid of rank ratios in `[1.1, 100]`, plus the
/// optimizer's answer.
pub fn zeta_curve(alpha: f64, c: f64, points: usize) -> Result<ZetaCurve, String> {
    let points = points.clamp(2, 2000);
    let c_star = rank_mismatch(c, alpha);
    let design = optimize_gamma(alpha, c_star).map_err(|e| e.to_string())?;
    let (lo, hi) = (1.1f64.ln(), 100f64.ln());
    let mut gamma_star = Vec::with_capacity(points);
    let mut zeta = Vec::with_capacity(points);
    for i in 0..points {
        let g = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
        if let Ok(z) = zeta_objective(g, alpha, c_star) {
            gamma_star.push(g);
            zeta.push(z);
        }
    }
    Ok(ZetaCurve {
        alpha,
        c,
        c_star,
        gamma_star,
        zeta,
        best_gamma_star: design.gamma_star,
        best_gamma: design.gamma,
        best_zeta: design.objective_value,
        at_domain_edge: design.at_domain_edge,
    })
}

#[derive(Debug, Serialize)]
pub struct EtaPoint {
    pub u_size: u64,
    pub trials: u64,
    pub mean_eta: f64,
    pub expected_eta: f64,
    pub excess: f64,
    pub expected_excess: f64,
    pub std_error: f64,
}

/// Monte Carlo prefix-length experiment beside the exact expectation.
pub fn eta_point(log2_u: u32, trials: u64, seed: u64) -> Result<EtaPoint, String> {
    if log2_u > 20 {
        return Err("competitor set above 2^20".into());
    }
    let u = 1u64 << log2_u;
    if u.saturating_mul(trials) > MAX_ETA_WORK {
        return Err(format!(
            "{trials} trials at 2^{log2_u} is too much work for a page; lower one of them"
        ));
    }
    let est = eta_monte_carlo(u, trials, seed).map_err(|e| e.to_string())?;
    let exact = eta_expected(u);
    Ok(EtaPoint {
        u_size: u,
        trials,
        mean_eta: est.mean_eta,
        expected_eta: exact,
        excess: est.excess,
        expected_excess: exact - log2_u as f64,
        std_error: est.std_error,
    })
}

#[derive(Debug, Serialize)]
pub struct TextRun {
    pub bytes: usize,
    pub payload_bits: u64,
    pub bits_per_token: f64,
    pub compression_ratio: f64,
    pub two_bit_fraction: f64,
    pub histogram: BTreeMap<u32, u64>,
    pub per_token_bits: Vec<u32>,
    pub roundtrip: bool,
}

/// Trains a byte n-gram on `text`, encodes it at mismatch `c = 1/q`, and
/// decodes it again.
pub fn encode_text(text: &str, q: f64, order: u8) -> Result<TextRun, String> {
    let raw = text.as_bytes();
    if raw.is_empty() {
        return Err("type something first".into());
    }
    if raw.len() > MAX_TEXT_BYTES {
        return Err(format!("at most {MAX_TEXT_BYTES} bytes"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(format!("q = {q} must be in (0, 1]"));
    }
    let err = |e: bucketzip::Error| e.to_string();
    let c = Rational::approximate(1.0 / q, 1000).map_err(err)?;
    let alphabet = TokenAlphabet::bytes();
    let tokens = alphabet.tokenize(raw).map_err(err)?;
    let model = NGramModel::train(256, order.clamp(1, 6), 0.02, [tokens.as_slice()]).map_err(err)?;
    let partition = BucketPartition::new(PartitionSpec::default_geometric()).map_err(err)?;
    let code = BucketCode::unary(partition.len()).map_err(err)?;
    let params = CodecParams::new(
        partition,
        code,
        LongformTable::new(0, 256),
        MismatchCertificate::new(c).map_err(err)?,
    )
    .map_err(err)?;
    let enc = encode_sequence(&model, &tokens, &params).map_err(err)?;
    let per_token_bits: Vec<u32> = enc.stats.iter().map(|s| s.bits).collect();
    let mut histogram = BTreeMap::new();
    for &b in &per_token_bits {
        *histogram.entry(b).or_insert(0u64) += 1;
    }
    let (bytes, bits) = enc.payload.into_parts();
    let out = decode_sequence(&model, &bytes, bits, tokens.len(), &params).map_err(err)?;
    let n = tokens.len() as f64;
    Ok(TextRun {
        bytes: raw.len(),
        payload_bits: bits,
        bits_per_token: bits as f64 / n,
        compression_ratio: (raw.len() * 8) as f64 / bits as f64,
        two_bit_fraction: histogram.get(&2).copied().unwrap_or(0) as f64 / n,
        histogram,
        per_token_bits,
        roundtrip: out.tokens == tokens,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = zetaCurve)]
pub fn zeta_curve_js(alpha: f64, c: f64, points: usize) -> Result<String, JsValue> {
    to_js(zeta_curve(alpha, c, points))
}

#[wasm_bindgen(js_name = etaPoint)]
pub fn eta_point_js(log2_u: u32, trials: u32, seed: u32) -> Result<String, JsValue> {
    to_js(eta_point(log2_u, trials as u64, seed as u64))
}

#[wasm_bindgen(js_name = encodeText)]
pub fn encode_text_js(text: &str, q: f64, order: u8) -> Result<String, JsValue> {
    to_js(encode_text(text, q, order))
}
