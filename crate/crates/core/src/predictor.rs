//! Next-token predictors: the interface the codec consumes, a Laplace-smoothed
//! n-gram model, replay of externally produced distributions, and a
//! simulator for bounded multiplicative mismatch.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::alphabet::{mix64, TokenId};
use crate::error::{Error, Result};
use crate::rational::Rational;

/// Tolerance on the total mass of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!("{} entries", probs.len())));
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("mass {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(size: u32) -> Self {
        Self {
            probs: vec![1.0 / size as f64; size as usize],
        }
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidDistribution(format!("weight sum {sum}")));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    #[inline]
    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs[token as usize]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probabilities sorted in descending order; entry `t - 1` is the
    /// probability at rank `t`.
    pub fn ranked(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Rank (1-based) of `token`; ties go to the lower token id.
    pub fn rank_of(&self, token: TokenId) -> usize {
        let p = self.prob(token);
        1 + self
            .probs
            .iter()
            .enumerate()
            .filter(|&(i, &q)| q > p || (q == p && (i as TokenId) < token))
            .count()
    }
}

/// Largest `|ln p(x) - ln p'(x)|` over the alphabet. Tokens at zero on both
/// sides are ignored; a one-sided zero is infinite.
pub fn worst_log_ratio(p: &PredictiveDistribution, q: &PredictiveDistribution) -> f64 {
    p.probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, false) => 0.0,
            (true, true) => (a.ln() - b.ln()).abs(),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Certified bound `c` on multiplicative mismatch between the encoder's and
/// decoder's distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MismatchCertificate {
    c: Rational,
}

impl MismatchCertificate {
    pub fn new(c: Rational) -> Result<Self> {
        if c.num() < c.den() {
            return Err(Error::Domain(format!("mismatch factor {c} is below 1")));
        }
        Ok(Self { c })
    }

    /// From `q = 1/c`.
    pub fn from_q(q: Rational) -> Result<Self> {
        Self::new(q.recip())
    }

    pub fn c(&self) -> Rational {
        self.c
    }

    pub fn q(&self) -> Rational {
        self.c.recip()
    }

    /// Whether `|ln p(x) - ln p'(x)| < ln c` for every token. Identical
    /// distributions are accepted at any `c`, including `c = 1`.
    pub fn verify(&self, p: &PredictiveDistribution, q: &PredictiveDistribution) -> bool {
        if p.len() != q.len() {
            return false;
        }
        if p == q {
            return true;
        }
        worst_log_ratio(p, q) < self.c.ln()
    }
}

/// A source of next-token distributions.
pub trait Predictor {
    fn alphabet_size(&self) -> u32;

    /// Distribution for the token at `position` (0-based) given the tokens
    /// before it.
    fn next_distribution(&self, position: usize, context: &[TokenId]) -> Result<PredictiveDistribution>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn alphabet_size(&self) -> u32 {
        (**self).alphabet_size()
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> Result<PredictiveDistribution> {
        (**self).next_distribution(position, context)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn alphabet_size(&self) -> u32 {
        (**self).alphabet_size()
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> Result<PredictiveDistribution> {
        (**self).next_distribution(position, context)
    }
}

/// Same uniform distribution at every step.
#[derive(Debug, Clone, Copy)]
pub struct UniformModel {
    pub size: u32,
}

impl Predictor for UniformModel {
    fn alphabet_size(&self) -> u32 {
        self.size
    }

    fn next_distribution(&self, _: usize, _: &[TokenId]) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::uniform(self.size))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    // Sorted by token id.
    next: Vec<(TokenId, u32)>,
}

/// Order-`n` Markov model with additive smoothing and backoff.
///
/// The distribution after context `h` uses the longest suffix of `h` (at most
/// `n` tokens) seen in training:
/// `p(x | s) = (count(s, x) + delta) / (count(s) + delta * |alphabet|)`.
/// The empty suffix is always available, so an empty or unseen context falls
/// back to unigram statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    size: u32,
    order: u8,
    delta: f64,
    tables: HashMap<Vec<TokenId>, ContextCounts>,
}

const NGRAM_MAGIC: &[u8; 4] = b"BZNG";
const NGRAM_VERSION: u8 = 1;

impl NGramModel {
    pub fn train<'a>(
        alphabet_size: u32,
        order: u8,
        delta: f64,
        corpora: impl IntoIterator<Item = &'a [TokenId]>,
    ) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(Error::Domain(format!("alphabet size {alphabet_size}")));
        }
        if order == 0 {
            return Err(Error::Domain("n-gram order must be at least 1".into()));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Domain(format!("smoothing constant {delta} must be positive")));
        }
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u32>> = HashMap::new();
        raw.entry(Vec::new()).or_default();
        for corpus in corpora {
            for (i, &tok) in corpus.iter().enumerate() {
                if tok >= alphabet_size {
                    return Err(Error::InvalidToken {
                        token: tok,
                        size: alphabet_size,
                    });
                }
                for len in 0..=(order as usize).min(i) {
                    let ctx = &corpus[i - len..i];
                    let slot = match raw.get_mut(ctx) {
                        Some(m) => m,
                        None => raw.entry(ctx.to_vec()).or_default(),
                    };
                    *slot.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let tables = raw
            .into_iter()
            .map(|(ctx, m)| {
                let mut next: Vec<(TokenId, u32)> = m.into_iter().collect();
                next.sort_unstable();
                let total = next.iter().map(|&(_, c)| c as u64).sum();
                (ctx, ContextCounts { total, next })
            })
            .collect();
        Ok(Self {
            size: alphabet_size,
            order,
            delta,
            tables,
        })
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn context_count(&self) -> usize {
        self.tables.len()
    }

    fn lookup(&self, context: &[TokenId]) -> &ContextCounts {
        let max = (self.order as usize).min(context.len());
        for len in (0..=max).rev() {
            if let Some(c) = self.tables.get(&context[context.len() - len..]) {
                return c;
            }
        }
        unreachable!("unigram table is always present")
    }

    pub fn distribution(&self, context: &[TokenId]) -> PredictiveDistribution {
        let counts = self.lookup(context);
        let denom = counts.total as f64 + self.delta * self.size as f64;
        let floor = self.delta / denom;
        let mut probs = vec![floor; self.size as usize];
        for &(tok, c) in &counts.next {
            probs[tok as usize] = (c as f64 + self.delta) / denom;
        }
        PredictiveDistribution { probs }
    }

    /// Versioned binary form: magic, version, alphabet size, order, delta,
    /// then the context tables sorted by context.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(NGRAM_MAGIC);
        out.push(NGRAM_VERSION);
        out.extend_from_slice(&self.size.to_le_bytes());
        out.push(self.order);
        out.extend_from_slice(&self.delta.to_le_bytes());
        let mut ctxs: Vec<&Vec<TokenId>> = self.tables.keys().collect();
        ctxs.sort();
        out.extend_from_slice(&(ctxs.len() as u64).to_le_bytes());
        for ctx in ctxs {
            let counts = &self.tables[ctx];
            out.push(ctx.len() as u8);
            for t in ctx {
                out.extend_from_slice(&t.to_le_bytes());
            }
            out.extend_from_slice(&(counts.next.len() as u32).to_le_bytes());
            for &(t, c) in &counts.next {
                out.extend_from_slice(&t.to_le_bytes());
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader {
            bytes,
            pos: 0,
            what: "n-gram model",
        };
        if r.take(4)? != NGRAM_MAGIC {
            return Err(Error::format("n-gram model", "bad magic"));
        }
        let version = r.u8()?;
        if version != NGRAM_VERSION {
            return Err(Error::format("n-gram model", format!("unsupported version {version}")));
        }
        let size = r.u32()?;
        let order = r.u8()?;
        let delta = f64::from_bits(r.u64()?);
        if size < 2 || order == 0 || !(delta.is_finite() && delta > 0.0) {
            return Err(Error::format("n-gram model", "invalid parameters"));
        }
        let n = r.u64()?;
        let mut tables = HashMap::new();
        for _ in 0..n {
            let len = r.u8()? as usize;
            if len > order as usize {
                return Err(Error::format("n-gram model", "context longer than order"));
            }
            let ctx = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let entries = r.u32()? as usize;
            let mut next = Vec::with_capacity(entries.min(size as usize));
            for _ in 0..entries {
                let tok = r.u32()?;
                let c = r.u32()?;
                if tok >= size {
                    return Err(Error::InvalidToken { token: tok, size });
                }
                next.push((tok, c));
            }
            let total = next.iter().map(|&(_, c)| c as u64).sum();
            tables.insert(ctx, ContextCounts { total, next });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("n-gram model", "trailing bytes"));
        }
        if !tables.contains_key(&Vec::new()) {
            return Err(Error::format("n-gram model", "missing unigram table"));
        }
        Ok(Self {
            size,
            order,
            delta,
            tables,
        })
    }

    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

impl Predictor for NGramModel {
    fn alphabet_size(&self) -> u32 {
        self.size
    }

    fn next_distribution(&self, _: usize, context: &[TokenId]) -> Result<PredictiveDistribution> {
        for &t in context.iter().rev().take(self.order as usize) {
            if t >= self.size {
                return Err(Error::InvalidToken {
                    token: t,
                    size: self.size,
                });
            }
        }
        Ok(self.distribution(context))
    }
}

/// Per-position distributions recorded from an external model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySource {
    size: u32,
    values: Vec<f64>,
}

const REPLAY_MAGIC: &[u8; 4] = b"BZRP";
const REPLAY_VERSION: u8 = 1;

impl ReplaySource {
    pub fn new(size: u32, records: Vec<PredictiveDistribution>) -> Result<Self> {
        let mut values = Vec::with_capacity(size as usize * records.len());
        for (i, r) in records.into_iter().enumerate() {
            if r.len() != size as usize {
                return Err(Error::InvalidDistribution(format!(
                    "record {i} has {} entries, expected {size}",
                    r.len()
                )));
            }
            values.extend(r.probs);
        }
        Ok(Self { size, values })
    }

    pub fn records(&self) -> usize {
        self.values.len() / self.size as usize
    }

    pub fn record(&self, i: usize) -> Option<&[f64]> {
        let n = self.size as usize;
        self.values.get(i * n..(i + 1) * n)
    }

    /// Magic, version, alphabet size (u32), record count (u64), then each
    /// record as `size` little-endian f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.values.len() * 8);
        out.extend_from_slice(REPLAY_MAGIC);
        out.push(REPLAY_VERSION);
        out.extend_from_slice(&self.size.to_le_bytes());
        out.extend_from_slice(&(self.records() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader {
            bytes,
            pos: 0,
            what: "replay file",
        };
        if r.take(4)? != REPLAY_MAGIC {
            return Err(Error::format("replay file", "bad magic"));
        }
        let version = r.u8()?;
        if version != REPLAY_VERSION {
            return Err(Error::format("replay file", format!("unsupported version {version}")));
        }
        let size = r.u32()?;
        let count = r.u64()?;
        if size < 2 {
            return Err(Error::format("replay file", format!("alphabet size {size}")));
        }
        let expected = (count as u128) * (size as u128) * 8;
        if expected != (bytes.len() - r.pos) as u128 {
            return Err(Error::format("replay file", "record section length mismatch"));
        }
        let values: Vec<f64> = bytes[r.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let replay = Self { size, values };
        for i in 0..replay.records() {
            PredictiveDistribution::new(replay.record(i).unwrap().to_vec())
                .map_err(|e| Error::format("replay file", format!("record {i}: {e}")))?;
        }
        Ok(replay)
    }
}

impl Predictor for ReplaySource {
    fn alphabet_size(&self) -> u32 {
        self.size
    }

    fn next_distribution(&self, position: usize, _: &[TokenId]) -> Result<PredictiveDistribution> {
        let rec = self.record(position).ok_or(Error::ReplayUnderrun {
            position,
            records: self.records(),
        })?;
        Ok(PredictiveDistribution { probs: rec.to_vec() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Output is guaranteed to be within the stated factor of the input.
    Certified,
    /// Factors are applied and renormalized without any check.
    Stress,
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "certified" => Ok(PerturbMode::Certified),
            "stress" => Ok(PerturbMode::Stress),
            _ => Err(Error::Domain(format!("unknown perturbation mode {s:?}"))),
        }
    }
}

const PERTURB_ROUNDS: usize = 64;
const PERTURB_RESTARTS: usize = 32;

/// Multiplies each probability by an independent `e^u`, `u` uniform on
/// `(-ln c_sim, ln c_sim)`, then renormalizes.
///
/// Renormalization alone can push a ratio past `c_sim`. In certified mode the
/// factors of offending tokens are redrawn until every ratio is strictly
/// within `c_sim`; if that does not settle, the whole draw restarts, and a
/// bounded number of restarts ends in a certification error.
pub fn perturb(
    dist: &PredictiveDistribution,
    c_sim: Rational,
    seed: u64,
    mode: PerturbMode,
) -> Result<PredictiveDistribution> {
    if c_sim.num() < c_sim.den() {
        return Err(Error::Domain(format!("simulated mismatch {c_sim} is below 1")));
    }
    if c_sim.is_one() {
        return Ok(dist.clone());
    }
    let lc = c_sim.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dist.len();
    let mut factors = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];

    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        loop {
            let u = rng.gen_range(-lc..lc);
            if u > -lc {
                return u.exp();
            }
        }
    };
    let normalize = |factors: &[f64], out: &mut [f64]| {
        let mut sum = 0.0;
        for ((o, &p), &f) in out.iter_mut().zip(&dist.probs).zip(factors) {
            *o = p * f;
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    };

    for _ in 0..PERTURB_RESTARTS {
        for f in factors.iter_mut() {
            *f = draw(&mut rng);
        }
        normalize(&factors, &mut out);
        if mode == PerturbMode::Stress {
            return Ok(PredictiveDistribution { probs: out });
        }
        for _ in 0..PERTURB_ROUNDS {
            let mut clean = true;
            for i in 0..n {
                let p = dist.probs[i];
                if p > 0.0 && !((p.ln() - out[i].ln()).abs() < lc) {
                    factors[i] = draw(&mut rng);
                    clean = false;
                }
            }
            if clean {
                return Ok(PredictiveDistribution { probs: out });
            }
            normalize(&factors, &mut out);
        }
    }
    Err(Error::CertificationFailure(format!(
        "no draw within factor {c_sim} after {PERTURB_RESTARTS} restarts"
    )))
}

/// Wraps a predictor and perturbs each of its distributions with a seed
/// derived from the position, so replays are reproducible.
#[derive(Debug, Clone)]
pub struct Perturbed<P> {
    pub inner: P,
    pub c_sim: Rational,
    pub seed: u64,
    pub mode: PerturbMode,
}

impl<P> Perturbed<P> {
    pub fn new(inner: P, c_sim: Rational, seed: u64, mode: PerturbMode) -> Self {
        Self {
            inner,
            c_sim,
            seed,
            mode,
        }
    }

    pub fn position_seed(&self, position: usize) -> u64 {
        mix64(self.seed ^ mix64(position as u64))
    }
}

impl<P: Predictor> Predictor for Perturbed<P> {
    fn alphabet_size(&self) -> u32 {
        self.inner.alphabet_size()
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> Result<PredictiveDistribution> {
        let base = self.inner.next_distribution(position, context)?;
        perturb(&base, self.c_sim, self.position_seed(position), self.mode)
    }
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.what, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u32, d: u32) -> Rational {
        Rational::new(n, d).unwrap()
    }

    #[test]
    fn laplace_counts() {
        // "abab" over {a=0, b=1}.
        let m = NGramModel::train(2, 1, 1.0, [&[0u32, 1, 0, 1][..]]).unwrap();
        let d = m.next_distribution(1, &[0]).unwrap();
        assert_eq!(d.prob(1), 0.75);
        assert_eq!(d.prob(0), 0.25);
    }

    #[test]
    fn empty_context_backs_off_to_unigram() {
        let corpus = [0u32, 1, 2, 1, 1, 3];
        let m = NGramModel::train(4, 3, 0.5, [&corpus[..]]).unwrap();
        let d = m.next_distribution(0, &[]).unwrap();
        // unigram counts [1, 3, 1, 1], total 6, denominator 6 + 0.5 * 4.
        assert_eq!(d.probs(), &[1.5 / 8.0, 3.5 / 8.0, 1.5 / 8.0, 1.5 / 8.0]);
        // unseen trigram context falls back to the longest seen suffix ([3]
        // never precedes anything, so the unigram again).
        assert_eq!(m.next_distribution(0, &[2, 2, 3]).unwrap(), d);
        // [1] is followed by 2, 1, 3.
        let after_one = m.next_distribution(0, &[3, 3, 1]).unwrap();
        assert_eq!(after_one.prob(2), 1.5 / 5.0);
    }

    #[test]
    fn model_bytes_roundtrip() {
        let corpus: Vec<u32> = (0..500u32).map(|i| (i * i + 7 * i) % 13).collect();
        let m = NGramModel::train(13, 3, 0.25, [&corpus[..]]).unwrap();
        let bytes = m.to_bytes();
        let back = NGramModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        assert!(NGramModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let retrained = NGramModel::train(13, 3, 0.25, [&corpus[..]]).unwrap();
        assert_eq!(retrained.content_hash(), m.content_hash());
    }

    #[test]
    fn ngram_rejects_bad_parameters() {
        assert!(NGramModel::train(4, 0, 1.0, [&[0u32][..]]).is_err());
        assert!(NGramModel::train(4, 1, 0.0, [&[0u32][..]]).is_err());
        assert!(NGramModel::train(4, 1, 1.0, [&[4u32][..]]).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(PredictiveDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(PredictiveDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PredictiveDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(PredictiveDistribution::new(vec![f64::NAN, 1.0]).is_err());
        let d = PredictiveDistribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(d.ranked(), vec![0.6, 0.3, 0.1]);
        assert_eq!(d.rank_of(1), 1);
        assert_eq!(d.rank_of(0), 3);
    }

    #[test]
    fn certificate_semantics() {
        let p = PredictiveDistribution::new(vec![0.5, 0.5, 0.0]).unwrap();
        let q = PredictiveDistribution::new(vec![0.6, 0.4, 0.0]).unwrap();
        let c2 = MismatchCertificate::new(r(2, 1)).unwrap();
        assert!(c2.verify(&p, &q));
        assert!(!MismatchCertificate::new(r(6, 5)).unwrap().verify(&p, &q));
        let z = PredictiveDistribution::new(vec![0.5, 0.4, 0.1]).unwrap();
        assert!(!c2.verify(&p, &z));
        assert!(MismatchCertificate::new(Rational::ONE).unwrap().verify(&p, &p));
        assert!(MismatchCertificate::new(r(1, 2)).is_err());
        assert_eq!(MismatchCertificate::from_q(r(3, 10)).unwrap().c(), r(10, 3));
    }

    #[test]
    fn unit_mismatch_is_identity() {
        let d = PredictiveDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(perturb(&d, Rational::ONE, 9, PerturbMode::Stress).unwrap(), d);
        assert_eq!(perturb(&d, Rational::ONE, 9, PerturbMode::Certified).unwrap(), d);
    }

    #[test]
    fn certified_perturbation_holds_its_bound() {
        let m = NGramModel::train(
            40,
            2,
            0.1,
            [&(0..4000u32).map(|i| (i * 7 + i / 3) % 40).collect::<Vec<_>>()[..]],
        )
        .unwrap();
        for c in [r(3, 2), r(2, 1), r(10, 3)] {
            let cert = MismatchCertificate::new(c).unwrap();
            for seed in 0..200u64 {
                let ctx = [(seed % 40) as u32, (seed * 3 % 40) as u32];
                let d = m.next_distribution(0, &ctx).unwrap();
                let q = perturb(&d, c, seed, PerturbMode::Certified).unwrap();
                assert!(cert.verify(&d, &q), "c {c} seed {seed}");
                assert_ne!(q, d);
            }
        }
    }

    #[test]
    fn stress_mode_can_exceed_the_factor() {
        let d = PredictiveDistribution::uniform(64);
        let cert = MismatchCertificate::new(r(2, 1)).unwrap();
        let violations = (0..50)
            .filter(|&s| !cert.verify(&d, &perturb(&d, r(2, 1), s, PerturbMode::Stress).unwrap()))
            .count();
        assert!(violations > 0);
    }

    #[test]
    fn perturbation_is_seeded() {
        let d = PredictiveDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = perturb(&d, r(2, 1), 5, PerturbMode::Certified).unwrap();
        let b = perturb(&d, r(2, 1), 5, PerturbMode::Certified).unwrap();
        let c = perturb(&d, r(2, 1), 6, PerturbMode::Certified).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zeros_stay_zero() {
        let d = PredictiveDistribution::new(vec![0.0, 0.25, 0.75]).unwrap();
        let q = perturb(&d, r(3, 2), 1, PerturbMode::Certified).unwrap();
        assert_eq!(q.prob(0), 0.0);
    }

    #[test]
    fn replay_roundtrip_and_underrun() {
        let recs = vec![
            PredictiveDistribution::new(vec![0.25, 0.75]).unwrap(),
            PredictiveDistribution::new(vec![0.1 + 0.2, 0.7]).unwrap(),
        ];
        let src = ReplaySource::new(2, recs.clone()).unwrap();
        let bytes = src.to_bytes();
        assert_eq!(&bytes[..4], b"BZRP");
        let back = ReplaySource::from_bytes(&bytes).unwrap();
        for (i, rec) in recs.iter().enumerate() {
            let got = back.next_distribution(i, &[]).unwrap();
            let same_bits = got
                .probs()
                .iter()
                .zip(rec.probs())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits);
        }
        assert!(matches!(
            back.next_distribution(2, &[]),
            Err(Error::ReplayUnderrun {
                position: 2,
                records: 2
            })
        ));
        assert!(ReplaySource::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
