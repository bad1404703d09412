//! Token alphabets and per-token longform bit strings.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphabetKind {
    /// Raw bytes, 256 tokens.
    Byte,
    /// Space-separated words looked up in a dictionary.
    Word,
    /// Pre-tokenized input: little-endian `u32` token ids.
    External,
}

impl AlphabetKind {
    pub fn tag(self) -> u8 {
        match self {
            AlphabetKind::Byte => 0,
            AlphabetKind::Word => 1,
            AlphabetKind::External => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(AlphabetKind::Byte),
            1 => Ok(AlphabetKind::Word),
            2 => Ok(AlphabetKind::External),
            t => Err(Error::format("alphabet", format!("unknown kind tag {t}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TokenAlphabet {
    kind: AlphabetKind,
    size: u32,
    dictionary: Option<Vec<String>>,
    lookup: HashMap<String, TokenId>,
}

impl TokenAlphabet {
    pub fn bytes() -> Self {
        Self {
            kind: AlphabetKind::Byte,
            size: 256,
            dictionary: None,
            lookup: HashMap::new(),
        }
    }

    pub fn external(size: u32) -> Result<Self> {
        if size < 2 {
            return Err(Error::format("alphabet", format!("size {size} < 2")));
        }
        Ok(Self {
            kind: AlphabetKind::External,
            size,
            dictionary: None,
            lookup: HashMap::new(),
        })
    }

    pub fn words(dictionary: Vec<String>) -> Result<Self> {
        if dictionary.len() < 2 || dictionary.len() > u32::MAX as usize {
            return Err(Error::format("dictionary", format!("{} entries", dictionary.len())));
        }
        let mut lookup = HashMap::with_capacity(dictionary.len());
        for (id, word) in dictionary.iter().enumerate() {
            if word.contains(' ') {
                return Err(Error::format("dictionary", format!("entry {id} contains a space")));
            }
            if lookup.insert(word.clone(), id as TokenId).is_some() {
                return Err(Error::format("dictionary", format!("duplicate entry {word:?}")));
            }
        }
        Ok(Self {
            kind: AlphabetKind::Word,
            size: dictionary.len() as u32,
            dictionary: Some(dictionary),
            lookup,
        })
    }

    /// Parses a dictionary file: UTF-8, one token per line, line number = id.
    pub fn from_dictionary_text(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let words = body
            .split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::words(words)
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn dictionary(&self) -> Option<&[String]> {
        self.dictionary.as_deref()
    }

    /// `ceil(log2 |alphabet|)`, the length of a fixed-width token id.
    pub fn base_len(&self) -> u32 {
        32 - (self.size - 1).leading_zeros()
    }

    pub fn check(&self, token: TokenId) -> Result<()> {
        if token < self.size {
            Ok(())
        } else {
            Err(Error::InvalidToken { token, size: self.size })
        }
    }

    pub fn tokenize(&self, raw: &[u8]) -> Result<Vec<TokenId>> {
        match self.kind {
            AlphabetKind::Byte => Ok(raw.iter().map(|&b| b as TokenId).collect()),
            AlphabetKind::External => {
                if !raw.len().is_multiple_of(4) {
                    return Err(Error::format(
                        "token id stream",
                        format!("length {} not a multiple of 4", raw.len()),
                    ));
                }
                raw.chunks_exact(4)
                    .map(|c| {
                        let id = u32::from_le_bytes(c.try_into().unwrap());
                        self.check(id).map(|_| id)
                    })
                    .collect()
            }
            AlphabetKind::Word => {
                if raw.is_empty() {
                    return Ok(Vec::new());
                }
                let text = std::str::from_utf8(raw).map_err(|e| Error::format("word input", e.to_string()))?;
                text.split(' ')
                    .map(|w| {
                        self.lookup
                            .get(w)
                            .copied()
                            .ok_or_else(|| Error::UnknownToken { word: w.to_string() })
                    })
                    .collect()
            }
        }
    }

    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<Vec<u8>> {
        for &t in tokens {
            self.check(t)?;
        }
        match self.kind {
            AlphabetKind::Byte => Ok(tokens.iter().map(|&t| t as u8).collect()),
            AlphabetKind::External => Ok(tokens.iter().flat_map(|t| t.to_le_bytes()).collect()),
            AlphabetKind::Word => {
                let dict = self.dictionary.as_ref().expect("word alphabet has a dictionary");
                let words: Vec<&str> = tokens.iter().map(|&t| dict[t as usize].as_str()).collect();
                Ok(words.join(" ").into_bytes())
            }
        }
    }
}

/// Identifies the longform bit generator in container headers.
pub const LONGFORM_SPLITMIX_CTR: u8 = 1;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const COUNTER_STEP: u64 = 0xd1b5_4a32_d192_ed03;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lazily generated infinite bit string per token.
///
/// Block `j` (0-based) of token `x` is
/// `mix64(mix64(key(x) ^ (j + 1) * COUNTER_STEP))` with
/// `key(x) = mix64(seed + (x + 1) * GOLDEN)` (wrapping arithmetic). Bit
/// position `i` (1-based) is bit `63 - (i - 1) % 64` of block `(i - 1) / 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LongformTable {
    master_seed: u64,
    size: u32,
}

/// Shared prefixes longer than this many blocks are treated as a generator
/// collision.
const MAX_PREFIX_BLOCKS: u64 = 1 << 12;

impl LongformTable {
    pub fn new(master_seed: u64, alphabet_size: u32) -> Self {
        Self {
            master_seed,
            size: alphabet_size,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn alphabet_size(&self) -> u32 {
        self.size
    }

    /// `ceil(log2 |alphabet|)`; informational only.
    pub fn base_len(&self) -> u32 {
        32 - (self.size.max(2) - 1).leading_zeros()
    }

    #[inline]
    fn key(&self, token: TokenId) -> u64 {
        mix64(self.master_seed.wrapping_add((token as u64 + 1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    fn block_with_key(key: u64, index: u64) -> u64 {
        mix64(mix64(key ^ (index + 1).wrapping_mul(COUNTER_STEP)))
    }

    /// 64-bit block `index` (0-based) of the token's longform.
    #[inline]
    pub fn block(&self, token: TokenId, index: u64) -> u64 {
        Self::block_with_key(self.key(token), index)
    }

    /// Bit `position` (1-based) of the token's longform.
    pub fn bit(&self, token: TokenId, position: u64) -> Result<bool> {
        if token >= self.size {
            return Err(Error::InvalidToken { token, size: self.size });
        }
        if position == 0 {
            return Err(Error::Domain("longform positions are 1-based".into()));
        }
        let idx = position - 1;
        Ok((self.block(token, idx / 64) >> (63 - idx % 64)) & 1 == 1)
    }

    /// Length of the shared prefix of two tokens' longforms. `None` for
    /// identical tokens (infinite) or an implausibly long collision.
    pub fn shared_prefix(&self, a: TokenId, b: TokenId) -> Option<u64> {
        if a == b {
            return None;
        }
        let (ka, kb) = (self.key(a), self.key(b));
        for j in 0..MAX_PREFIX_BLOCKS {
            let diff = Self::block_with_key(ka, j) ^ Self::block_with_key(kb, j);
            if diff != 0 {
                return Some(j * 64 + diff.leading_zeros() as u64);
            }
        }
        None
    }

    /// Calls `f(word, nbits)` with the first `len` bits of the longform,
    /// in left-aligned chunks of at most 64 bits.
    pub fn for_each_chunk(&self, token: TokenId, len: u64, mut f: impl FnMut(u64, u32)) {
        let key = self.key(token);
        let mut done = 0;
        let mut j = 0;
        while done < len {
            let take = (len - done).min(64) as u32;
            f(Self::block_with_key(key, j), take);
            done += take as u64;
            j += 1;
        }
    }

    /// Longest shared prefix between the token's longform and a stream of
    /// left-aligned 64-bit windows; `window(j)` returns the `j`-th window and
    /// how many of its bits exist. Stops at the end of the stream.
    pub fn prefix_with_stream(&self, token: TokenId, mut window: impl FnMut(u64) -> (u64, u32)) -> u64 {
        let key = self.key(token);
        let mut total = 0u64;
        for j in 0..MAX_PREFIX_BLOCKS {
            let (word, avail) = window(j);
            if avail == 0 {
                return total;
            }
            let diff = Self::block_with_key(key, j) ^ word;
            let agree = (diff.leading_zeros()).min(avail);
            total += agree as u64;
            if agree < 64 {
                return total;
            }
        }
        total
    }
}

/// Length of the longest common prefix of two bit sequences, capped by the
/// shorter one.
pub fn shared_prefix_len(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}
