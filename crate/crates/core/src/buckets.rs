//! Probability buckets: the partition of [0, 1], its mismatch-expanded
//! intervals, and the prefix-free code naming each bucket.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bits::{BitCursor, BitWriter};
use crate::error::{Error, Result};
use crate::rational::Rational;

/// Codeword lengths must fit in a `u64`, which bounds the bucket count.
pub const MAX_BUCKETS: usize = 64;

/// Relative outward widening applied to expanded intervals. Absorbs the
/// rounding in `r / c^2`, `c * r` and in log-space certificate checks, all of
/// which are orders of magnitude below it.
pub const GUARD: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    /// Boundaries `gamma^(count-1) < ... < gamma < 1`.
    Geometric { gamma: Rational, count: u16 },
    /// Interior boundaries `b_1 < ... < b_{K-1}`, strictly inside (0, 1).
    Explicit(Vec<f64>),
}

impl PartitionSpec {
    pub fn default_geometric() -> Self {
        PartitionSpec::Geometric {
            gamma: Rational::new(1, 8).unwrap(),
            count: 33,
        }
    }
}

/// Buckets `[0, b_1], (b_1, b_2], ..., (b_{K-1}, 1]`, indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPartition {
    spec: PartitionSpec,
    boundaries: Vec<f64>,
}

/// An interval with an open lower end; the upper end is open or closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    #[inline]
    pub fn contains(&self, p: f64) -> bool {
        p > self.lo && if self.hi_closed { p <= self.hi } else { p < self.hi }
    }

    /// Whether `self` lies inside `other`, endpoints included.
    pub fn within(&self, other: &Interval) -> bool {
        other.lo <= self.lo && (self.hi < other.hi || (self.hi == other.hi && (other.hi_closed || !self.hi_closed)))
    }
}

fn geometric_boundaries(gamma: Rational, count: u16) -> Result<Vec<f64>> {
    let k = count as usize;
    if !(2..=MAX_BUCKETS).contains(&k) {
        return Err(Error::InvalidPartition(format!(
            "bucket count {k} outside 2..={MAX_BUCKETS}"
        )));
    }
    if gamma.num() >= gamma.den() {
        return Err(Error::InvalidPartition(format!("ratio {gamma} must be below 1")));
    }
    let g = gamma.to_f64();
    let mut b = vec![0.0; k + 1];
    b[k] = 1.0;
    let mut v = 1.0f64;
    for j in 1..k {
        v *= g;
        b[k - j] = v;
    }
    Ok(b)
}

impl BucketPartition {
    pub fn new(spec: PartitionSpec) -> Result<Self> {
        let boundaries = match &spec {
            PartitionSpec::Geometric { gamma, count } => geometric_boundaries(*gamma, *count)?,
            PartitionSpec::Explicit(inner) => {
                let mut b = Vec::with_capacity(inner.len() + 2);
                b.push(0.0);
                b.extend_from_slice(inner);
                b.push(1.0);
                if b.len() - 1 > MAX_BUCKETS {
                    return Err(Error::InvalidPartition(format!(
                        "{} buckets exceed {MAX_BUCKETS}",
                        b.len() - 1
                    )));
                }
                b
            }
        };
        if boundaries.len() < 3 {
            return Err(Error::InvalidPartition("need at least two buckets".into()));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPartition(
                "boundaries must be strictly increasing in [0, 1]".into(),
            ));
        }
        Ok(Self { spec, boundaries })
    }

    pub fn geometric(gamma: Rational, count: u16) -> Result<Self> {
        Self::new(PartitionSpec::Geometric { gamma, count })
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    /// `0 = b_0 < b_1 < ... < b_K = 1`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(lower, upper)` boundaries of bucket `k`.
    pub fn bounds(&self, k: usize) -> Result<(f64, f64)> {
        self.check(k)?;
        Ok((self.boundaries[k], self.boundaries[k + 1]))
    }

    fn check(&self, k: usize) -> Result<()> {
        if k < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidBucket {
                index: k,
                count: self.len(),
            })
        }
    }

    /// Index of the bucket containing `p`.
    #[inline]
    pub fn bucket_of(&self, p: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(self.boundaries[1..].partition_point(|&b| b < p))
    }

    /// Tokens the decoder might place in bucket `k`: `(r_lo / c^2, c^2 * r_hi)`,
    /// widened outward by two guard steps.
    pub fn encoder_expansion(&self, k: usize, c: Rational) -> Result<Interval> {
        let (lo, hi) = self.bounds(k)?;
        let c2 = c.squared_f64();
        Ok(Interval {
            lo: widen_lo(lo / c2, 2.0),
            hi: widen_hi(hi * c2, 2.0),
            hi_closed: false,
        })
    }

    /// Decoder candidate interval `(r_lo / c, c * r_hi]`, widened outward by
    /// one guard step.
    pub fn decoder_expansion(&self, k: usize, c: Rational) -> Result<Interval> {
        let (lo, hi) = self.bounds(k)?;
        let c1 = c.to_f64();
        Ok(Interval {
            lo: widen_lo(lo / c1, 1.0),
            hi: widen_hi(hi * c1, 1.0),
            hi_closed: true,
        })
    }
}

/// The bucket that is closed at zero maps its lower end below zero so that
/// zero-probability tokens stay inside it.
fn widen_lo(lo: f64, steps: f64) -> f64 {
    if lo == 0.0 {
        -1.0
    } else {
        lo * (1.0 - steps * GUARD)
    }
}

fn widen_hi(hi: f64, steps: f64) -> f64 {
    hi * (1.0 + steps * GUARD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Unary,
    Huffman,
}

/// Canonical prefix-free code over bucket indices.
///
/// Codewords are assigned in order of (length, bucket index), so the code is
/// fully determined by its length table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketCode {
    kind: CodeKind,
    lengths: Vec<u8>,
    codes: Vec<u64>,
    // Canonical decoding tables, indexed by length.
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
    sorted: Vec<usize>,
}

impl BucketCode {
    /// `0, 10, 110, ...` with the shortest word on the highest-probability
    /// bucket; the two lowest buckets share the longest length.
    pub fn unary(buckets: usize) -> Result<Self> {
        if !(2..=MAX_BUCKETS).contains(&buckets) {
            return Err(Error::InvalidCode(format!("{buckets} buckets")));
        }
        let lengths = (0..buckets)
            .map(|i| {
                let rank = buckets - 1 - i;
                (rank + 1).min(buckets - 1) as u8
            })
            .collect();
        Self::from_lengths(CodeKind::Unary, lengths)
    }

    pub fn from_lengths(kind: CodeKind, lengths: Vec<u8>) -> Result<Self> {
        let n = lengths.len();
        if !(2..=MAX_BUCKETS).contains(&n) {
            return Err(Error::InvalidCode(format!("{n} codewords")));
        }
        if lengths.iter().any(|&l| l == 0 || l as usize >= MAX_BUCKETS) {
            return Err(Error::InvalidCode("codeword lengths must be in 1..64".into()));
        }
        let kraft: u128 = lengths.iter().map(|&l| 1u128 << (64 - l)).sum();
        if kraft != 1u128 << 64 {
            return Err(Error::InvalidCode("length table is not a complete prefix code".into()));
        }
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by_key(|&i| (lengths[i], i));

        let max_len = *lengths.iter().max().unwrap() as usize;
        let mut count = vec![0usize; max_len + 1];
        for &l in &lengths {
            count[l as usize] += 1;
        }
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0usize; max_len + 1];
        let mut code = 0u64;
        let mut index = 0usize;
        for len in 1..=max_len {
            first_code[len] = code;
            first_index[len] = index;
            code = (code + count[len] as u64) << 1;
            index += count[len];
        }
        let mut codes = vec![0u64; n];
        for (pos, &sym) in sorted.iter().enumerate() {
            let len = lengths[sym] as usize;
            codes[sym] = first_code[len] + (pos - first_index[len]) as u64;
        }
        Ok(Self {
            kind,
            lengths,
            codes,
            first_code,
            first_index,
            count,
            sorted,
        })
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(codeword, length)` for bucket `k`, right-aligned.
    pub fn codeword(&self, k: usize) -> (u64, u8) {
        (self.codes[k], self.lengths[k])
    }

    pub fn codeword_bits(&self, k: usize) -> Vec<bool> {
        let (code, len) = self.codeword(k);
        (0..len).rev().map(|i| (code >> i) & 1 == 1).collect()
    }

    pub fn write(&self, k: usize, out: &mut BitWriter) {
        let (code, len) = self.codeword(k);
        out.push_bits(code, len as u32);
    }

    /// Reads one codeword; returns the bucket and the bits consumed.
    pub fn read_bucket(&self, cursor: &mut BitCursor<'_>) -> Result<(usize, u32)> {
        let mut code = 0u64;
        for len in 1..self.count.len() {
            code = (code << 1) | cursor.read_bit()? as u64;
            let offset = code.wrapping_sub(self.first_code[len]);
            if code >= self.first_code[len] && (offset as usize) < self.count[len] {
                return Ok((self.sorted[self.first_index[len] + offset as usize], len as u32));
            }
        }
        // Unreachable for a complete code.
        Err(Error::InvalidCode("no codeword matched".into()))
    }

    /// Mean codeword length under the empirical bucket counts.
    pub fn expected_length(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        counts
            .iter()
            .zip(&self.lengths)
            .map(|(&c, &l)| c as f64 * l as f64)
            .sum::<f64>()
            / total as f64
    }
}

/// Shannon entropy in bits of the empirical distribution given by `counts`.
pub fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

/// Huffman code for per-bucket frequencies.
///
/// Every bucket keeps a codeword. Observed counts are scaled by `K^2` and
/// empty buckets weigh 1, so the empty buckets together can never outweigh a
/// single observation: the result has the least expected length on `counts`
/// among all complete codes.
pub fn calibrate_huffman(counts: &[u64]) -> Result<BucketCode> {
    if counts.len() < 2 || counts.len() > MAX_BUCKETS {
        return Err(Error::Calibration(format!("{} buckets", counts.len())));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Calibration("all bucket counts are zero".into()));
    }
    let n = counts.len();
    let scale = (n * n) as u128;
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u128, usize)>> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Reverse((if c == 0 { 1 } else { c as u128 * scale }, i)))
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u8; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    BucketCode::from_lengths(CodeKind::Huffman, depth[..n].to_vec())
}
