#![allow(dead_code)]

use bucketzip::alphabet::mix64;
use bucketzip::bits::BitWriter;
use bucketzip::{
    BucketCode, BucketPartition, CodecParams, LongformTable, MismatchCertificate, PredictiveDistribution, Predictor,
    Rational, Result, TokenId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rat(num: u32, den: u32) -> Rational {
    Rational::new(num, den).unwrap()
}

pub fn default_params(size: u32, c: Rational, seed: u64) -> CodecParams {
    let partition = BucketPartition::new(bucketzip::PartitionSpec::default_geometric()).unwrap();
    let code = BucketCode::unary(partition.len()).unwrap();
    CodecParams::new(
        partition,
        code,
        LongformTable::new(seed, size),
        MismatchCertificate::new(c).unwrap(),
    )
    .unwrap()
}

/// Distributions drawn fresh from a hash of (seed, position, context), with
/// log-uniform weights over `spread` nats and an optional share of zeros.
#[derive(Debug, Clone, Copy)]
pub struct HashModel {
    pub size: u32,
    pub seed: u64,
    pub spread: f64,
    pub zero_share: f64,
}

impl Predictor for HashModel {
    fn alphabet_size(&self) -> u32 {
        self.size
    }

    fn next_distribution(&self, position: usize, context: &[TokenId]) -> Result<PredictiveDistribution> {
        let h = context
            .iter()
            .fold(mix64(self.seed ^ position as u64), |h, &t| mix64(h ^ t as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut w: Vec<f64> = (0..self.size)
            .map(|_| {
                if rng.gen_bool(self.zero_share) {
                    0.0
                } else {
                    (-self.spread * rng.gen::<f64>()).exp()
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        PredictiveDistribution::from_weights(&w)
    }
}

/// Order-1 Markov source with Dirichlet-ish rows, used to make corpora that
/// an n-gram model can learn something from.
pub fn markov_corpus(size: u32, len: usize, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let rows: Vec<Vec<f64>> = (0..size)
        .map(|_| {
            let w: Vec<f64> = (0..size).map(|_| rng.gen::<f64>().powi(4)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(len);
    let mut cur = rng.gen_range(0..size) as usize;
    for _ in 0..len {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = size as usize - 1;
        for (t, &p) in rows[cur].iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        out.push(next as TokenId);
        cur = next;
    }
    out
}

/// Straight-line decoder over explicit bit vectors: codeword match by
/// comparison against every bucket's codeword, candidates by plain interval
/// tests, agreement by bit-by-bit comparison with the longform.
pub fn reference_decode(dists: &[PredictiveDistribution], bits: &[bool], params: &CodecParams) -> Option<Vec<TokenId>> {
    let c = params.certificate().c().to_f64();
    let part = params.partition();
    let code = params.code();
    let lf = params.longforms();
    let words: Vec<Vec<bool>> = (0..part.len()).map(|k| code.codeword_bits(k)).collect();
    let mut pos = 0usize;
    let mut out = Vec::new();
    for dist in dists {
        let k = (0..words.len()).find(|&k| bits[pos..].starts_with(&words[k]))?;
        pos += words[k].len();
        let (lo, hi) = part.bounds(k).unwrap();
        let mut best: Option<(usize, TokenId)> = None;
        for (t, &p) in dist.probs().iter().enumerate() {
            let inside = p <= hi * c && (p > lo / c || (k == 0 && p >= 0.0));
            if !inside {
                continue;
            }
            let mut agree = 0usize;
            while pos + agree < bits.len() && lf.bit(t as TokenId, agree as u64 + 1).unwrap() == bits[pos + agree] {
                agree += 1;
            }
            if best.is_none_or(|(b, _)| agree > b) {
                best = Some((agree, t as TokenId));
            }
        }
        let (agree, tok) = best?;
        if agree >= bits.len() - pos {
            return None;
        }
        pos += agree + 1;
        out.push(tok);
    }
    Some(out)
}

pub fn bools(w: &BitWriter) -> Vec<bool> {
    w.to_bools()
}
