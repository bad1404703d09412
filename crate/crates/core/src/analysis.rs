//! Length analysis and bucket design.
//!
//! Under a continuous power-law body `p*(t) = (alpha - 1) t^-alpha` with
//! every bucket spanning the same rank ratio `gamma*`, the per-token excess
//! over `log2(alpha - 1) + h[T]` is
//!
//! ```text
//! zeta(gamma*) = alpha * g log2(gamma*) / (1 - g) + log2((gamma* - c*^-4) / (1 - g)),
//! g = gamma*^(1 - alpha),  c* = c^(1/alpha)
//! ```
//!
//! and the probability-space bucket ratio is `gamma = gamma*^-alpha`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::buckets::entropy_bits;
use crate::codec::TokenStats;
use crate::error::{Error, Result};
use crate::predictor::PredictiveDistribution;

/// Limiting excess of `E[eta] - log2 |U|` for large competitor sets.
pub const ETA_LIMIT_EXCESS: f64 = 0.33276;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub r2: f64,
    /// Inclusive 1-based rank bounds.
    pub rank_window: (usize, usize),
}

/// Ranks 6 through a tenth of the alphabet: the body of the distribution.
pub fn default_window(alphabet_size: usize) -> (usize, usize) {
    (6, alphabet_size / 10)
}

/// Least-squares line through `(ln t, ln p(t))` over the rank window;
/// `alpha` is the negated slope.
pub fn fit_power_law(dist: &PredictiveDistribution, window: (usize, usize)) -> Result<PowerLawFit> {
    fit_ranked(&dist.ranked(), window)
}

/// As [`fit_power_law`], on probabilities already sorted in descending order.
pub fn fit_ranked(ranked: &[f64], window: (usize, usize)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    if lo < 1 || hi > ranked.len() || hi < lo {
        return Err(Error::Fit(format!(
            "window {lo}..={hi} outside ranks 1..={}",
            ranked.len()
        )));
    }
    if hi - lo + 1 < 3 {
        return Err(Error::Fit(format!("window {lo}..={hi} has fewer than 3 points")));
    }
    let n = (hi - lo + 1) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for t in lo..=hi {
        let p = ranked[t - 1];
        if !(p > 0.0) {
            return Err(Error::Fit(format!("rank {t} has probability {p}")));
        }
        sx += (t as f64).ln();
        sy += p.ln();
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for t in lo..=hi {
        let dx = (t as f64).ln() - mx;
        let dy = ranked[t - 1].ln() - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if syy <= 1e-300 * n {
        return Err(Error::Fit("probabilities are constant over the window".into()));
    }
    let slope = sxy / sxx;
    Ok(PowerLawFit {
        alpha: -slope,
        r2: (sxy * sxy) / (sxx * syy),
        rank_window: window,
    })
}

/// Rank-space mismatch factor `c^(1/alpha)`.
pub fn rank_mismatch(c: f64, alpha: f64) -> f64 {
    c.powf(1.0 / alpha)
}

/// Per-token excess bits as a function of the bucket rank ratio.
pub fn zeta_objective(gamma_star: f64, alpha: f64, c_star: f64) -> Result<f64> {
    zeta_at_excess(gamma_star - 1.0, alpha, c_star)
}

/// [`zeta_objective`] at `gamma* = 1 + d`, accurate for small `d`.
fn zeta_at_excess(d: f64, alpha: f64, c_star: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha = {alpha} must exceed 1")));
    }
    if !(c_star > 0.0 && c_star.is_finite()) {
        return Err(Error::Domain(format!("c* = {c_star} must be positive")));
    }
    // gamma* - c*^-4 = d + (1 - c*^-4)
    let slack = -(-4.0 * c_star.ln()).exp_m1();
    if !(d > 0.0 && d + slack > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("gamma* = {} must exceed max(1, c*^-4)", 1.0 + d)));
    }
    let ln_gamma = d.ln_1p();
    let one_minus_g = -((1.0 - alpha) * ln_gamma).exp_m1();
    let g = 1.0 - one_minus_g;
    Ok(alpha * g * (ln_gamma / std::f64::consts::LN_2) / one_minus_g + ((d + slack) / one_minus_g).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketDesign {
    pub alpha: f64,
    /// Rank-space ratio between bucket edges.
    pub gamma_star: f64,
    /// Probability-space ratio, `gamma_star^-alpha`.
    pub gamma: f64,
    pub c_star: f64,
    pub objective_value: f64,
    /// The objective kept falling toward `gamma* -> 1`; there is no interior
    /// minimum and `gamma_star` is the edge of the search.
    pub at_domain_edge: bool,
}

const PHI: f64 = 1.618_033_988_749_895;
const RESPHI: f64 = 2.0 - PHI;
/// Search is over `s = ln(gamma* - 1)`; below this the domain edge is reached.
const S_MIN: f64 = -25.0;
const S_MAX: f64 = 12.0;

/// Minimizes [`zeta_objective`] over `gamma*` with a downhill bracket search
/// from `gamma* = 4` followed by golden-section refinement.
pub fn optimize_gamma(alpha: f64, c_star: f64) -> Result<BucketDesign> {
    optimize_gamma_from(alpha, c_star, 4.0)
}

pub fn optimize_gamma_from(alpha: f64, c_star: f64, start: f64) -> Result<BucketDesign> {
    if !(c_star >= 1.0) {
        return Err(Error::Domain(format!("c* = {c_star} must be at least 1")));
    }
    if !(start > 1.0) {
        return Err(Error::Domain(format!("start {start} must exceed 1")));
    }
    let to_gamma = |s: f64| 1.0 + s.exp();
    let f = |s: f64| zeta_at_excess(s.exp(), alpha, c_star);

    let mut a = (start - 1.0).ln();
    let mut b = a + 0.25;
    let fa = f(a)?;
    let mut fb = f(b)?;
    if fb > fa {
        (a, b, fb) = (b, a, fa);
    }
    let mut c = b + PHI * (b - a);
    let mut fc = f(c)?;
    let mut steps = 0;
    while fc <= fb {
        if c <= S_MIN {
            return design(alpha, c_star, to_gamma(c), fc, true);
        }
        if c >= S_MAX || steps > 200 {
            return Err(Error::Optimizer(format!(
                "no bracket: objective still decreasing at gamma* = {:.6e} (alpha {alpha}, c* {c_star})",
                to_gamma(c)
            )));
        }
        (a, b, fb) = (b, c, fc);
        c = (b + PHI * (b - a)).clamp(S_MIN, S_MAX);
        fc = f(c)?;
        steps += 1;
    }

    // Golden-section on [lo, hi] with an interior point known to be lower.
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let mut x1 = hi - (hi - lo) * (1.0 - RESPHI);
    let mut x2 = lo + (hi - lo) * (1.0 - RESPHI);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while to_gamma(hi) - to_gamma(lo) > 1e-10 {
        if f1 < f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - (hi - lo) * (1.0 - RESPHI);
            f1 = f(x1)?;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + (hi - lo) * (1.0 - RESPHI);
            f2 = f(x2)?;
        }
    }
    let (s, fs) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    design(alpha, c_star, to_gamma(s), fs, false)
}

fn design(alpha: f64, c_star: f64, gamma_star: f64, value: f64, edge: bool) -> Result<BucketDesign> {
    Ok(BucketDesign {
        alpha,
        gamma_star,
        gamma: gamma_star.powf(-alpha),
        c_star,
        objective_value: value,
        at_domain_edge: edge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaEstimate {
    pub u_size: u64,
    pub trials: u64,
    pub mean_eta: f64,
    /// `mean_eta - log2(u_size)`.
    pub excess: f64,
    pub std_error: f64,
}

/// Samples `eta`, the longest prefix a random target shares with any of
/// `u_size` independent random strings. Both sides are generated 64 bits at
/// a time, only as far as needed.
pub fn eta_monte_carlo(u_size: u64, trials: u64, seed: u64) -> Result<EtaEstimate> {
    if u_size == 0 {
        return Err(Error::Domain("competitor set must be nonempty".into()));
    }
    if trials < 1000 {
        return Err(Error::Domain(format!("{trials} trials; at least 1000 required")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut target: Vec<u64> = Vec::with_capacity(4);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        target.clear();
        target.push(rng.next_u64());
        let mut eta = 0u64;
        for _ in 0..u_size {
            let mut shared = 0u64;
            let mut j = 0;
            loop {
                if j == target.len() {
                    target.push(rng.next_u64());
                }
                let diff = target[j] ^ rng.next_u64();
                if diff != 0 {
                    shared += diff.leading_zeros() as u64;
                    break;
                }
                shared += 64;
                j += 1;
            }
            eta = eta.max(shared);
        }
        let e = eta as f64;
        sum += e;
        sum_sq += e * e;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(EtaEstimate {
        u_size,
        trials,
        mean_eta: mean,
        excess: mean - (u_size as f64).log2(),
        std_error: (var / n).sqrt(),
    })
}

/// `E[eta] = sum_{i>=1} [1 - (1 - 2^-i)^|U|]`, summed until the terms vanish.
pub fn eta_expected(u_size: u64) -> f64 {
    let n = u_size as f64;
    let mut total = 0.0;
    for i in 1..=1100 {
        let term = -(n * (-(0.5f64).powi(i)).ln_1p()).exp_m1();
        total += term;
        if term < 1e-18 {
            break;
        }
    }
    total
}

/// Differential entropy in bits of `p*(t) = (alpha - 1) t^-alpha` on `[1, inf)`.
pub fn power_law_entropy(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must exceed 1")));
    }
    Ok(-(alpha - 1.0).log2() + alpha / ((alpha - 1.0) * std::f64::consts::LN_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthEstimate {
    /// `kappa + h[T] + constant`.
    pub bits: f64,
    /// Everything except `kappa` and `h[T]`.
    pub constant: f64,
    pub c_star: f64,
    pub design: BucketDesign,
}

/// Expected bits per token under the power-law body model:
/// `kappa + 2 + eta_excess + 2 log2 c* + log2(alpha-1) + h[T] - alpha/((alpha-1) ln 2) + zeta`.
pub fn estimate_expected_length(alpha: f64, c: f64, kappa: f64, h_t: f64) -> Result<LengthEstimate> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must exceed 1")));
    }
    if !(c >= 1.0) {
        return Err(Error::Domain(format!("c = {c} must be at least 1")));
    }
    let c_star = rank_mismatch(c, alpha);
    let design = optimize_gamma(alpha, c_star)?;
    let constant = 2.0 + ETA_LIMIT_EXCESS + 2.0 * c_star.log2() + (alpha - 1.0).log2()
        - alpha / ((alpha - 1.0) * std::f64::consts::LN_2)
        + design.objective_value;
    Ok(LengthEstimate {
        bits: kappa + h_t + constant,
        constant,
        c_star,
        design,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub tokens: u64,
    pub total_bits: u64,
    pub mean_bits: f64,
    pub bucket_counts: Vec<u64>,
    /// Empirical entropy of the bucket sequence.
    pub bucket_entropy: f64,
    pub mean_codeword_bits: f64,
    /// Mean codeword length minus bucket entropy.
    pub kappa: f64,
    pub mean_m: f64,
    /// Over tokens with a nonempty competitor set.
    pub mean_log2_u: f64,
    pub empty_u_fraction: f64,
    /// Encoded length in bits -> number of tokens.
    pub histogram: BTreeMap<u32, u64>,
    pub two_bit_fraction: f64,
    pub raw_bits: u64,
    /// `raw_bits / total_bits`.
    pub compression_ratio: f64,
}

pub fn summarize_run(stats: &[TokenStats], buckets: usize, raw_bits: u64) -> Result<RunSummary> {
    if stats.is_empty() {
        return Err(Error::Domain("no tokens to summarize".into()));
    }
    let n = stats.len() as f64;
    let mut bucket_counts = vec![0u64; buckets];
    let mut histogram = BTreeMap::new();
    let (mut total_bits, mut codeword_bits, mut m_sum) = (0u64, 0u64, 0i64);
    let (mut log_u, mut nonempty) = (0.0f64, 0u64);
    for s in stats {
        let k = s.bucket as usize;
        if k >= buckets {
            return Err(Error::InvalidBucket {
                index: k,
                count: buckets,
            });
        }
        bucket_counts[k] += 1;
        *histogram.entry(s.bits).or_insert(0) += 1;
        total_bits += s.bits as u64;
        codeword_bits += (s.bits as i64 - s.m - 2) as u64;
        m_sum += s.m;
        if s.u_size > 0 {
            nonempty += 1;
            log_u += (s.u_size as f64).log2();
        }
    }
    let bucket_entropy = entropy_bits(&bucket_counts);
    let mean_codeword_bits = codeword_bits as f64 / n;
    Ok(RunSummary {
        tokens: stats.len() as u64,
        total_bits,
        mean_bits: total_bits as f64 / n,
        bucket_entropy,
        mean_codeword_bits,
        kappa: mean_codeword_bits - bucket_entropy,
        mean_m: m_sum as f64 / n,
        mean_log2_u: if nonempty > 0 { log_u / nonempty as f64 } else { 0.0 },
        empty_u_fraction: 1.0 - nonempty as f64 / n,
        two_bit_fraction: histogram.get(&2).copied().unwrap_or(0) as f64 / n,
        histogram,
        bucket_counts,
        raw_bits,
        compression_ratio: raw_bits as f64 / total_bits as f64,
    })
}

impl RunSummary {
    /// Line-oriented `key=value` report.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tokens={}", self.tokens);
        let _ = writeln!(s, "total_bits={}", self.total_bits);
        let _ = writeln!(s, "raw_bits={}", self.raw_bits);
        let _ = writeln!(s, "compression_ratio={:.6}", self.compression_ratio);
        let _ = writeln!(s, "mean_bits_per_token={:.6}", self.mean_bits);
        let _ = writeln!(s, "bucket_entropy={:.6}", self.bucket_entropy);
        let _ = writeln!(s, "mean_codeword_bits={:.6}", self.mean_codeword_bits);
        let _ = writeln!(s, "kappa={:.6}", self.kappa);
        let _ = writeln!(s, "mean_m={:.6}", self.mean_m);
        let _ = writeln!(s, "mean_log2_u={:.6}", self.mean_log2_u);
        let _ = writeln!(s, "empty_u_fraction={:.6}", self.empty_u_fraction);
        let _ = writeln!(s, "two_bit_fraction={:.6}", self.two_bit_fraction);
        let hist: Vec<String> = self.histogram.iter().map(|(b, c)| format!("{b}:{c}")).collect();
        let _ = writeln!(s, "histogram={}", hist.join(","));
        let counts: Vec<String> = self.bucket_counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "bucket_counts={}", counts.join(","));
        s
    }
}
