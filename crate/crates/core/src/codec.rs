//! The mismatch-tolerant token codec.
//!
//! Each token is sent as its bucket codeword, then just enough of its
//! longform to tell it apart from every competitor the decoder could
//! possibly confuse it with, then one inverted bit marking the end:
//!
//! ```text
//! y = A(bucket) ++ B(x)[1..=m+1] ++ !B(x)[m+2]
//! ```
//!
//! `m` is the longest longform prefix `x` shares with any other token whose
//! encoder-side probability falls in the bucket expanded by `c^2`, or `-1` if
//! there is none. The decoder only sees its own distribution `p'`, expands
//! the bucket by `c`, and picks the candidate whose longform agrees longest
//! with the remaining payload. When `p` and `p'` are within a factor `c` of
//! each other, every decoder candidate other than `x` is an encoder
//! competitor, so none of them can reach `m + 1` agreeing bits while `x`
//! reaches exactly `m + 1`.

use serde::{Deserialize, Serialize};

use crate::alphabet::{LongformTable, TokenId};
use crate::bits::{BitCursor, BitReader, BitWriter};
use crate::buckets::{BucketCode, BucketPartition, Interval};
use crate::error::{Error, Result};
use crate::predictor::{MismatchCertificate, PredictiveDistribution, Predictor};

/// Everything encoder and decoder must agree on in advance.
#[derive(Debug, Clone)]
pub struct CodecParams {
    partition: BucketPartition,
    code: BucketCode,
    longforms: LongformTable,
    certificate: MismatchCertificate,
    encoder_intervals: Vec<Interval>,
    decoder_intervals: Vec<Interval>,
}

impl CodecParams {
    pub fn new(
        partition: BucketPartition,
        code: BucketCode,
        longforms: LongformTable,
        certificate: MismatchCertificate,
    ) -> Result<Self> {
        if code.len() != partition.len() {
            return Err(Error::InvalidCode(format!(
                "code has {} words for {} buckets",
                code.len(),
                partition.len()
            )));
        }
        let c = certificate.c();
        let encoder_intervals = (0..partition.len())
            .map(|k| partition.encoder_expansion(k, c))
            .collect::<Result<_>>()?;
        let decoder_intervals = (0..partition.len())
            .map(|k| partition.decoder_expansion(k, c))
            .collect::<Result<_>>()?;
        Ok(Self {
            partition,
            code,
            longforms,
            certificate,
            encoder_intervals,
            decoder_intervals,
        })
    }

    pub fn partition(&self) -> &BucketPartition {
        &self.partition
    }

    pub fn code(&self) -> &BucketCode {
        &self.code
    }

    pub fn longforms(&self) -> &LongformTable {
        &self.longforms
    }

    pub fn certificate(&self) -> MismatchCertificate {
        self.certificate
    }

    pub fn alphabet_size(&self) -> u32 {
        self.longforms.alphabet_size()
    }

    fn check_dist(&self, dist: &PredictiveDistribution) -> Result<()> {
        if dist.len() != self.alphabet_size() as usize {
            return Err(Error::InvalidDistribution(format!(
                "{} entries for an alphabet of {}",
                dist.len(),
                self.alphabet_size()
            )));
        }
        Ok(())
    }
}

/// Per-token accounting recorded by the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    pub bucket: u16,
    /// Longest shared prefix with a competitor; -1 when there is none.
    pub m: i64,
    pub u_size: u32,
    /// `|y| = |A(bucket)| + m + 2`.
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedToken {
    pub bits: BitWriter,
    pub stats: TokenStats,
}

/// Every token whose probability lies in the encoder-side expansion of
/// bucket `k`. The caller removes the true token.
pub fn compute_u(dist: &PredictiveDistribution, k: usize, params: &CodecParams) -> Result<Vec<TokenId>> {
    params.check_dist(dist)?;
    let iv = params.encoder_intervals.get(k).ok_or(Error::InvalidBucket {
        index: k,
        count: params.partition.len(),
    })?;
    Ok(dist
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &p)| iv.contains(p))
        .map(|(t, _)| t as TokenId)
        .collect())
}

pub fn encode_token(dist: &PredictiveDistribution, token: TokenId, params: &CodecParams) -> Result<EncodedToken> {
    let mut bits = BitWriter::new();
    let stats = encode_token_into(dist, token, params, &mut bits)?;
    Ok(EncodedToken { bits, stats })
}

fn encode_token_into(
    dist: &PredictiveDistribution,
    token: TokenId,
    params: &CodecParams,
    out: &mut BitWriter,
) -> Result<TokenStats> {
    params.check_dist(dist)?;
    if token >= params.alphabet_size() {
        return Err(Error::InvalidToken {
            token,
            size: params.alphabet_size(),
        });
    }
    let k = params.partition.bucket_of(dist.prob(token))?;
    let iv = params.encoder_intervals[k];
    let lf = &params.longforms;

    let mut m: i64 = -1;
    let mut u_size = 0u32;
    for (t, &p) in dist.probs().iter().enumerate() {
        let t = t as TokenId;
        if t != token && iv.contains(p) {
            u_size += 1;
            let shared = lf
                .shared_prefix(t, token)
                .ok_or_else(|| Error::Domain(format!("longforms of tokens {t} and {token} collide")))?;
            m = m.max(shared as i64);
        }
    }

    let before = out.len();
    params.code.write(k, out);
    let prefix = (m + 1) as u64;
    lf.for_each_chunk(token, prefix, |word, n| out.push_bits(word >> (64 - n), n));
    out.push(!lf.bit(token, prefix + 1)?);

    Ok(TokenStats {
        bucket: k as u16,
        m,
        u_size,
        bits: (out.len() - before) as u32,
    })
}

/// Something the decoder noticed that cannot happen under the certificate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityFlag {
    pub position: usize,
    /// Number of candidates sharing the winning prefix length.
    pub tied: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedToken {
    pub token: TokenId,
    /// Bits consumed, bucket codeword included.
    pub bits: u32,
    pub tied: u32,
}

impl DecodedToken {
    pub fn flagged(&self) -> bool {
        self.tied > 1
    }
}

/// Decodes one token starting at the cursor and advances past it.
/// `position` only labels errors.
pub fn decode_token(
    dist: &PredictiveDistribution,
    cursor: &mut BitCursor<'_>,
    params: &CodecParams,
    position: usize,
) -> Result<DecodedToken> {
    params.check_dist(dist)?;
    let start = cursor.position();
    let (k, _) = params.code.read_bucket(cursor)?;
    let iv = params.decoder_intervals[k];
    let z = cursor.position();
    let reader: BitReader<'_> = cursor.reader();
    let lf = &params.longforms;

    let mut best: Option<(u64, TokenId)> = None;
    let mut tied = 0u32;
    for (t, &p) in dist.probs().iter().enumerate() {
        if !iv.contains(p) {
            continue;
        }
        let t = t as TokenId;
        let agree = lf.prefix_with_stream(t, |j| reader.peek64(z + 64 * j));
        match best {
            Some((b, _)) if agree < b => {}
            Some((b, _)) if agree == b => tied += 1,
            _ => {
                best = Some((agree, t));
                tied = 1;
            }
        }
    }
    let (agree, token) = best.ok_or_else(|| Error::DecodeIntegrity {
        position,
        reason: format!("no candidate in bucket {k}"),
    })?;
    if agree >= cursor.remaining() {
        return Err(Error::TruncatedStream { position: reader.len() });
    }
    cursor.advance(agree + 1)?;
    Ok(DecodedToken {
        token,
        bits: (cursor.position() - start) as u32,
        tied,
    })
}

#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub payload: BitWriter,
    pub stats: Vec<TokenStats>,
}

/// Encodes `tokens`, asking the model for each distribution given the true
/// prefix.
pub fn encode_sequence<P: Predictor + ?Sized>(
    model: &P,
    tokens: &[TokenId],
    params: &CodecParams,
) -> Result<EncodedSequence> {
    let mut payload = BitWriter::new();
    let mut stats = Vec::with_capacity(tokens.len());
    for (i, &tok) in tokens.iter().enumerate() {
        let dist = model.next_distribution(i, &tokens[..i])?;
        stats.push(encode_token_into(&dist, tok, params, &mut payload)?);
    }
    Ok(EncodedSequence { payload, stats })
}

#[derive(Debug, Clone, Default)]
pub struct DecodeOutcome {
    pub tokens: Vec<TokenId>,
    /// Bits consumed per token.
    pub consumed: Vec<u32>,
    pub flags: Vec<IntegrityFlag>,
    /// Payload bits left after the last token; nonzero means the stream and
    /// the decoder disagreed somewhere.
    pub unconsumed_bits: u64,
}

/// Decodes exactly `count` tokens from a payload of `payload_bits` bits,
/// feeding the decoded prefix back to the model.
pub fn decode_sequence<P: Predictor + ?Sized>(
    model: &P,
    payload: &[u8],
    payload_bits: u64,
    count: usize,
    params: &CodecParams,
) -> Result<DecodeOutcome> {
    let mut cursor = BitCursor::new(BitReader::new(payload, payload_bits));
    let mut out = DecodeOutcome {
        tokens: Vec::with_capacity(count),
        consumed: Vec::with_capacity(count),
        ..Default::default()
    };
    for i in 0..count {
        let dist = model.next_distribution(i, &out.tokens)?;
        let d = decode_token(&dist, &mut cursor, params, i)?;
        if d.flagged() {
            out.flags.push(IntegrityFlag {
                position: i,
                tied: d.tied,
            });
        }
        out.tokens.push(d.token);
        out.consumed.push(d.bits);
    }
    out.unconsumed_bits = cursor.remaining();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buckets::PartitionSpec;
    use crate::predictor::UniformModel;
    use crate::rational::Rational;

    fn params(alpha: u32, gamma: (u32, u32), count: u16, c: Rational, seed: u64) -> CodecParams {
        let partition = BucketPartition::new(PartitionSpec::Geometric {
            gamma: Rational::new(gamma.0, gamma.1).unwrap(),
            count,
        })
        .unwrap();
        let code = BucketCode::unary(partition.len()).unwrap();
        CodecParams::new(
            partition,
            code,
            LongformTable::new(seed, alpha),
            MismatchCertificate::new(c).unwrap(),
        )
        .unwrap()
    }

    fn dist(p: &[f64]) -> PredictiveDistribution {
        PredictiveDistribution::new(p.to_vec()).unwrap()
    }

    /// Hand check of every token against the interval `(lo, hi)`.
    fn brute_u(p: &[f64], lo: f64, hi: f64, skip: usize) -> Vec<TokenId> {
        (0..p.len())
            .filter(|&t| t != skip && p[t] > lo && p[t] < hi)
            .map(|t| t as TokenId)
            .collect()
    }

    #[test]
    fn competitor_sets() {
        let p = [0.5, 0.3, 0.15, 0.05];
        let prm = params(4, (1, 2), 8, Rational::ONE, 1);
        let k = prm.partition().bucket_of(0.5).unwrap();
        assert_eq!(prm.partition().bounds(k).unwrap(), (0.25, 0.5));
        let mut u = compute_u(&dist(&p), k, &prm).unwrap();
        u.retain(|&t| t != 0);
        assert_eq!(u, brute_u(&p, 0.25, 0.5, 0));
        assert_eq!(u, vec![1]);

        let prm2 = params(4, (1, 2), 8, Rational::new(2, 1).unwrap(), 1);
        let mut u2 = compute_u(&dist(&p), k, &prm2).unwrap();
        u2.retain(|&t| t != 0);
        assert_eq!(u2, brute_u(&p, 0.25 / 4.0, 0.5 * 4.0, 0));
        assert!(u2.contains(&1) && u2.contains(&2));
    }

    #[test]
    fn empty_competitor_set_costs_one_bit_after_the_bucket() {
        let prm = params(4, (1, 8), 33, Rational::ONE, 3);
        let d = dist(&[0.97, 0.01, 0.01, 0.01]);
        assert!(compute_u(&d, 32, &prm).unwrap() == vec![0]);
        let e = encode_token(&d, 0, &prm).unwrap();
        assert_eq!(e.stats.m, -1);
        assert_eq!(e.stats.u_size, 0);
        assert_eq!(e.bits.len(), 2);
        let b1 = prm.longforms().bit(0, 1).unwrap();
        assert_eq!(e.bits.to_bools(), vec![false, !b1]);
    }

    #[test]
    fn bit_layout_matches_definition() {
        let prm = params(16, (1, 2), 10, Rational::new(3, 2).unwrap(), 77);
        let d = PredictiveDistribution::uniform(16);
        for x in 0..16 {
            let e = encode_token(&d, x, &prm).unwrap();
            let lf = prm.longforms();
            let m = (0..16)
                .filter(|&t| t != x)
                .map(|t| lf.shared_prefix(t, x).unwrap())
                .max()
                .unwrap();
            assert_eq!(e.stats.m, m as i64);
            let k = e.stats.bucket as usize;
            let mut want = prm.code().codeword_bits(k);
            want.extend((1..=m + 1).map(|i| lf.bit(x, i).unwrap()));
            want.push(!lf.bit(x, m + 2).unwrap());
            assert_eq!(e.bits.to_bools(), want);
            assert_eq!(e.stats.bits as u64, prm.code().codeword(k).1 as u64 + m + 2);
        }
    }

    #[test]
    fn identical_distributions_roundtrip_token() {
        let prm = params(16, (1, 4), 12, Rational::new(2, 1).unwrap(), 5);
        let d =
            PredictiveDistribution::from_weights(&(1..=16).map(|i| 1.0 / (i * i) as f64).collect::<Vec<_>>()).unwrap();
        for x in 0..16 {
            let e = encode_token(&d, x, &prm).unwrap();
            let (bytes, len) = e.bits.clone().into_parts();
            let mut cur = BitCursor::new(BitReader::new(&bytes, len));
            let got = decode_token(&d, &mut cur, &prm, 0).unwrap();
            assert_eq!(got.token, x);
            assert_eq!(got.bits as u64, len);
            assert!(!got.flagged());
        }
    }

    #[test]
    fn single_token_uniform_model() {
        let prm = params(4, (1, 2), 8, Rational::ONE, 2);
        let model = UniformModel { size: 4 };
        let seq = encode_sequence(&model, &[2], &prm).unwrap();
        let direct = encode_token(&PredictiveDistribution::uniform(4), 2, &prm).unwrap();
        assert_eq!(seq.payload, direct.bits);
    }

    #[test]
    fn empty_sequence() {
        let prm = params(4, (1, 2), 8, Rational::ONE, 2);
        let seq = encode_sequence(&UniformModel { size: 4 }, &[], &prm).unwrap();
        assert!(seq.payload.is_empty());
        let out = decode_sequence(&UniformModel { size: 4 }, &[], 0, 0, &prm).unwrap();
        assert!(out.tokens.is_empty());
    }

    #[test]
    fn decoder_never_reads_out_of_bounds() {
        let prm = params(8, (1, 2), 6, Rational::ONE, 9);
        let d = PredictiveDistribution::uniform(8);
        for len in 0..24u64 {
            let bytes = [0xa5u8, 0x5a, 0xff];
            let mut cur = BitCursor::new(BitReader::new(&bytes, len));
            match decode_token(&d, &mut cur, &prm, 0) {
                Ok(t) => assert!(t.bits as u64 <= len),
                Err(Error::TruncatedStream { .. } | Error::DecodeIntegrity { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn empty_candidate_set_is_an_integrity_error() {
        let prm = params(4, (1, 2), 8, Rational::ONE, 2);
        let enc_dist = dist(&[0.97, 0.01, 0.01, 0.01]);
        let e = encode_token(&enc_dist, 0, &prm).unwrap();
        let (bytes, len) = e.bits.into_parts();
        let dec_dist = PredictiveDistribution::uniform(4);
        let mut cur = BitCursor::new(BitReader::new(&bytes, len));
        assert!(matches!(
            decode_token(&dec_dist, &mut cur, &prm, 7),
            Err(Error::DecodeIntegrity { position: 7, .. })
        ));
    }

    #[test]
    fn wrong_alphabet_size_rejected() {
        let prm = params(4, (1, 2), 8, Rational::ONE, 2);
        assert!(encode_token(&PredictiveDistribution::uniform(5), 0, &prm).is_err());
        assert!(encode_token(&PredictiveDistribution::uniform(4), 4, &prm).is_err());
    }
}
