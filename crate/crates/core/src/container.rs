//! Self-describing compressed file.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        4   "BKTZ"
//! version      1   1
//! alphabet     1+4 kind tag (0 byte, 1 word, 2 external), size
//! longforms    1+8 generator tag (1 = SplitMix counter mode), master seed
//! mismatch c   4+4 numerator, denominator
//! partition    1   0 = geometric: ratio num u32, den u32, bucket count u16
//!                  1 = explicit: bucket count u16, then count-1 interior
//!                      boundaries as f64
//! bucket code  1   0 = unary; 1 = huffman followed by one length byte per bucket
//! model        1   0 = none; 1 = n-gram + 32-byte SHA-256 of the model file;
//!                  2 = replay + alphabet size u32 + record count u64
//! tokens       8   M
//! payload bits 8
//! payload      ceil(bits / 8) bytes, zero padded
//! checksum     4   CRC-32 of everything above
//! ```

use crate::alphabet::{AlphabetKind, LongformTable, LONGFORM_SPLITMIX_CTR};
use crate::buckets::{BucketCode, BucketPartition, CodeKind, PartitionSpec};
use crate::codec::CodecParams;
use crate::error::{Error, Result};
use crate::predictor::{ByteReader, MismatchCertificate};
use crate::rational::Rational;

pub const MAGIC: &[u8; 4] = b"BKTZ";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelBinding {
    None,
    NGram { sha256: [u8; 32] },
    Replay { alphabet_size: u32, records: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub alphabet_kind: AlphabetKind,
    pub alphabet_size: u32,
    pub longform_tag: u8,
    pub master_seed: u64,
    pub c: Rational,
    pub partition: PartitionSpec,
    pub code_kind: CodeKind,
    /// Canonical code lengths; always present, written only for Huffman.
    pub code_lengths: Vec<u8>,
    pub model: ModelBinding,
    pub token_count: u64,
    pub payload_bits: u64,
}

impl Header {
    pub fn from_params(
        params: &CodecParams,
        alphabet_kind: AlphabetKind,
        model: ModelBinding,
        token_count: u64,
        payload_bits: u64,
    ) -> Self {
        Self {
            alphabet_kind,
            alphabet_size: params.alphabet_size(),
            longform_tag: LONGFORM_SPLITMIX_CTR,
            master_seed: params.longforms().master_seed(),
            c: params.certificate().c(),
            partition: params.partition().spec().clone(),
            code_kind: params.code().kind(),
            code_lengths: params.code().lengths().to_vec(),
            model,
            token_count,
            payload_bits,
        }
    }

    /// Rebuilds the codec parameters from header fields alone.
    pub fn codec_params(&self) -> Result<CodecParams> {
        if self.longform_tag != LONGFORM_SPLITMIX_CTR {
            return Err(Error::format(
                "container",
                format!("unknown longform generator {}", self.longform_tag),
            ));
        }
        let partition = BucketPartition::new(self.partition.clone())?;
        let code = match self.code_kind {
            CodeKind::Unary => BucketCode::unary(partition.len())?,
            CodeKind::Huffman => BucketCode::from_lengths(CodeKind::Huffman, self.code_lengths.clone())?,
        };
        CodecParams::new(
            partition,
            code,
            LongformTable::new(self.master_seed, self.alphabet_size),
            MismatchCertificate::new(self.c)?,
        )
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.alphabet_kind.tag());
        out.extend_from_slice(&self.alphabet_size.to_le_bytes());
        out.push(self.longform_tag);
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        out.extend_from_slice(&self.c.num().to_le_bytes());
        out.extend_from_slice(&self.c.den().to_le_bytes());
        match &self.partition {
            PartitionSpec::Geometric { gamma, count } => {
                out.push(0);
                out.extend_from_slice(&gamma.num().to_le_bytes());
                out.extend_from_slice(&gamma.den().to_le_bytes());
                out.extend_from_slice(&count.to_le_bytes());
            }
            PartitionSpec::Explicit(inner) => {
                out.push(1);
                out.extend_from_slice(&((inner.len() + 1) as u16).to_le_bytes());
                for b in inner {
                    out.extend_from_slice(&b.to_le_bytes());
                }
            }
        }
        match self.code_kind {
            CodeKind::Unary => out.push(0),
            CodeKind::Huffman => {
                out.push(1);
                out.extend_from_slice(&self.code_lengths);
            }
        }
        match self.model {
            ModelBinding::None => out.push(0),
            ModelBinding::NGram { sha256 } => {
                out.push(1);
                out.extend_from_slice(&sha256);
            }
            ModelBinding::Replay { alphabet_size, records } => {
                out.push(2);
                out.extend_from_slice(&alphabet_size.to_le_bytes());
                out.extend_from_slice(&records.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.token_count.to_le_bytes());
        out.extend_from_slice(&self.payload_bits.to_le_bytes());
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        if r.take(4)? != MAGIC {
            return Err(Error::format("container", "bad magic"));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::format("container", format!("unsupported version {version}")));
        }
        let alphabet_kind = AlphabetKind::from_tag(r.u8()?)?;
        let alphabet_size = r.u32()?;
        let longform_tag = r.u8()?;
        let master_seed = r.u64()?;
        let c = Rational::new(r.u32()?, r.u32()?)?;
        let partition = match r.u8()? {
            0 => {
                let gamma = Rational::new(r.u32()?, r.u32()?)?;
                PartitionSpec::Geometric { gamma, count: r.u16()? }
            }
            1 => {
                let count = r.u16()? as usize;
                if count < 2 {
                    return Err(Error::format(
                        "container",
                        "explicit partition with fewer than 2 buckets",
                    ));
                }
                let inner = (0..count - 1)
                    .map(|_| r.u64().map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()?;
                PartitionSpec::Explicit(inner)
            }
            t => return Err(Error::format("container", format!("unknown partition tag {t}"))),
        };
        let buckets = match &partition {
            PartitionSpec::Geometric { count, .. } => *count as usize,
            PartitionSpec::Explicit(inner) => inner.len() + 1,
        };
        let (code_kind, code_lengths) = match r.u8()? {
            0 => (CodeKind::Unary, BucketCode::unary(buckets)?.lengths().to_vec()),
            1 => (CodeKind::Huffman, r.take(buckets)?.to_vec()),
            t => return Err(Error::format("container", format!("unknown code tag {t}"))),
        };
        let model = match r.u8()? {
            0 => ModelBinding::None,
            1 => ModelBinding::NGram {
                sha256: r.take(32)?.try_into().unwrap(),
            },
            2 => ModelBinding::Replay {
                alphabet_size: r.u32()?,
                records: r.u64()?,
            },
            t => return Err(Error::format("container", format!("unknown model tag {t}"))),
        };
        let token_count = r.u64()?;
        let payload_bits = r.u64()?;
        Ok(Self {
            alphabet_kind,
            alphabet_size,
            longform_tag,
            master_seed,
            c,
            partition,
            code_kind,
            code_lengths,
            model,
            token_count,
            payload_bits,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Container {
    pub fn new(header: Header, payload: Vec<u8>) -> Result<Self> {
        let bits = header.payload_bits;
        if payload.len() as u64 != bits.div_ceil(8) {
            return Err(Error::format(
                "container",
                format!("{} payload bytes for {bits} bits", payload.len()),
            ));
        }
        Ok(Self { header, payload })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + self.payload.len());
        self.header.write(&mut out);
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Verifies the checksum, then parses.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format("container", "too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = ByteReader {
            bytes: body,
            pos: 0,
            what: "container",
        };
        let header = Header::read(&mut r)?;
        let payload = body[r.pos..].to_vec();
        Self::new(header, payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_header(partition: PartitionSpec, code_kind: CodeKind, lengths: Vec<u8>, model: ModelBinding) -> Header {
        Header {
            alphabet_kind: AlphabetKind::Byte,
            alphabet_size: 256,
            longform_tag: LONGFORM_SPLITMIX_CTR,
            master_seed: 0xdead_beef_0000_0001,
            c: Rational::new(10, 3).unwrap(),
            partition,
            code_kind,
            code_lengths: lengths,
            model,
            token_count: 3,
            payload_bits: 19,
        }
    }

    #[test]
    fn header_roundtrip_field_exact() {
        let headers = [
            sample_header(
                PartitionSpec::default_geometric(),
                CodeKind::Unary,
                BucketCode::unary(33).unwrap().lengths().to_vec(),
                ModelBinding::NGram { sha256: [7; 32] },
            ),
            sample_header(
                PartitionSpec::Explicit(vec![1e-30, 0.001, 0.1]),
                CodeKind::Huffman,
                vec![3, 3, 2, 1],
                ModelBinding::Replay {
                    alphabet_size: 256,
                    records: 3,
                },
            ),
            sample_header(
                PartitionSpec::default_geometric(),
                CodeKind::Unary,
                BucketCode::unary(33).unwrap().lengths().to_vec(),
                ModelBinding::None,
            ),
        ];
        for h in headers {
            let c = Container::new(h.clone(), vec![0xab, 0xcd, 0xe0]).unwrap();
            let bytes = c.to_bytes();
            let back = Container::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert!(back.header.codec_params().is_ok());
        }
    }

    #[test]
    fn checksum_catches_corruption() {
        let h = sample_header(
            PartitionSpec::default_geometric(),
            CodeKind::Unary,
            BucketCode::unary(33).unwrap().lengths().to_vec(),
            ModelBinding::None,
        );
        let bytes = Container::new(h, vec![1, 2, 3]).unwrap().to_bytes();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(Container::from_bytes(&bad).is_err(), "flip at byte {i} went unnoticed");
        }
        assert!(matches!(
            Container::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn payload_length_must_match_bits() {
        let h = sample_header(
            PartitionSpec::default_geometric(),
            CodeKind::Unary,
            BucketCode::unary(33).unwrap().lengths().to_vec(),
            ModelBinding::None,
        );
        assert!(Container::new(h.clone(), vec![1, 2]).is_err());
        assert!(Container::new(h, vec![1, 2, 3, 4]).is_err());
    }
}
